"""Chain-topology model profiling.

Given a conv/pool/dense layer chain, computes for every candidate cut layer
the quantities that drive the latency model: device-side model size, smashed
data size, smashed-data-gradient size, and the forward/backward compute
workloads on each side of the cut.

Conventions (see README):
  * FLOPs are MAC counts; convolutions use valid (no) padding; pooling is
    free; a dense layer with ``n_in`` inputs and ``n_out`` units costs
    ``n_in * n_out``.
  * Backward workload per layer equals forward workload.
  * Spatial dims never drop below 1x1 inside the chain walk: a convolution
    whose kernel exceeds the input clips the kernel to the input window.
  * The smashed-data gradient is a per-minibatch total: ``batch`` gradient
    rows of the same width as the smashed data.
  * 1 KB = 1e3 bytes, 1 MB = 1e6 bytes; sizes are reported in bits.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, replace
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

from .errors import ConfigError

LAYER_KINDS = ("conv", "maxpool", "dense")

# CutProfile fields that an override block may replace.
OVERRIDE_FIELDS = (
    "xi_d_bits",
    "xi_s_bits",
    "xi_g_bits",
    "gamma_d_f",
    "gamma_d_b",
    "gamma_s_f",
    "gamma_s_b",
)


@dataclass(frozen=True)
class LayerSpec:
    """One layer of a chain-topology network."""

    index: int
    kind: str
    name: str = ""
    filters: int | None = None
    kernel: tuple[int, int] | None = None
    window: tuple[int, int] | None = None
    units: int | None = None
    activation: str | None = None

    def label(self) -> str:
        return self.name or f"{self.kind.upper()}{self.index}"


@dataclass(frozen=True)
class CutProfile:
    """Communication sizes (bits) and compute workloads (FLOPs) for one cut.

    ``xi_s_bits`` is per data sample; ``xi_g_bits`` is per minibatch;
    ``xi_d_bits`` is the device-side model size. Workloads are per sample.
    """

    cut: int
    xi_d_bits: float
    xi_s_bits: float
    xi_g_bits: float
    gamma_d_f: float
    gamma_d_b: float
    gamma_s_f: float
    gamma_s_b: float
    source: str = "computed"


@dataclass(frozen=True)
class ModelConfig:
    """Parsed model config: layer chain plus profiling parameters."""

    layers: tuple[LayerSpec, ...]
    input_shape: tuple[int, int, int]
    bytes_per_value: int
    overrides: dict[int, dict[str, float]]
    name: str = "model"


def _require(condition: bool, message: str) -> None:
    if not condition:
        raise ConfigError(message)


def load_layer_specs(config: dict) -> list[LayerSpec]:
    """Parse the ``layers`` list of a model config into LayerSpec objects.

    Raises ConfigError naming the offending field on malformed entries, and
    on non-contiguous layer indices.
    """
    raw_layers = config.get("layers")
    _require(isinstance(raw_layers, list), "model config field 'layers' must be a list")
    _require(len(raw_layers) > 0, "model config field 'layers' must not be empty")

    layers = []
    for pos, entry in enumerate(raw_layers):
        _require(isinstance(entry, dict), f"layers[{pos}] must be an object")
        kind = entry.get("kind")
        _require(kind in LAYER_KINDS, f"layers[{pos}].kind must be one of {LAYER_KINDS}, got {kind!r}")
        index = entry.get("index", pos + 1)
        _require(isinstance(index, int) and index >= 1, f"layers[{pos}].index must be a positive integer")
        name = entry.get("name", "")
        activation = entry.get("activation")

        filters = kernel = window = units = None
        if kind == "conv":
            filters = entry.get("filters")
            _require(isinstance(filters, int) and filters >= 1, f"layers[{pos}].filters must be a positive integer")
            kernel = _parse_pair(entry.get("kernel"), f"layers[{pos}].kernel")
        elif kind == "maxpool":
            window = _parse_pair(entry.get("window"), f"layers[{pos}].window")
        else:
            units = entry.get("units")
            _require(isinstance(units, int) and units >= 1, f"layers[{pos}].units must be a positive integer")

        layers.append(
            LayerSpec(
                index=index,
                kind=kind,
                name=name,
                filters=filters,
                kernel=kernel,
                window=window,
                units=units,
                activation=activation,
            )
        )

    layers.sort(key=lambda l: l.index)
    indices = [l.index for l in layers]
    _require(
        indices == list(range(1, len(layers) + 1)),
        f"layer indices must be contiguous 1..{len(layers)}, got {indices}",
    )

    first_dense = next((l.index for l in layers if l.kind == "dense"), None)
    if first_dense is not None:
        for l in layers:
            _require(
                l.kind == "dense" or l.index < first_dense,
                f"conv/maxpool layer {l.index} appears after the first dense layer {first_dense}",
            )
    return layers


def _parse_pair(value, field_name: str) -> tuple[int, int]:
    _require(
        isinstance(value, (list, tuple)) and len(value) == 2 and all(isinstance(v, int) and v >= 1 for v in value),
        f"{field_name} must be a pair of positive integers",
    )
    return (value[0], value[1])


def load_model_config(source: dict | str | Path) -> ModelConfig:
    """Load a model config from a parsed dict or a JSON file path."""
    if isinstance(source, (str, Path)):
        path = Path(source)
        if not path.exists():
            raise ConfigError(f"model config file not found: {path}")
        try:
            data = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"model config {path} is not valid JSON: {exc}") from exc
    else:
        data = source

    layers = load_layer_specs(data)
    shape = data.get("input_shape", [28, 28, 1])
    _require(
        isinstance(shape, (list, tuple)) and len(shape) == 3 and all(isinstance(v, int) and v >= 1 for v in shape),
        "model config field 'input_shape' must be [h, w, c] of positive integers",
    )
    bytes_per_value = data.get("bytes_per_value", 4)
    _require(
        isinstance(bytes_per_value, int) and bytes_per_value >= 1,
        "model config field 'bytes_per_value' must be a positive integer",
    )

    overrides: dict[int, dict[str, float]] = {}
    for key, block in (data.get("overrides") or {}).items():
        try:
            cut = int(key)
        except (TypeError, ValueError):
            raise ConfigError(f"overrides key {key!r} is not a layer index") from None
        _require(1 <= cut <= len(layers), f"overrides key {cut} outside 1..{len(layers)}")
        _require(isinstance(block, dict), f"overrides[{key}] must be an object")
        clean = {}
        for field_name, value in block.items():
            _require(field_name in OVERRIDE_FIELDS, f"overrides[{key}].{field_name} is not a profile field")
            _require(isinstance(value, (int, float)) and value >= 0, f"overrides[{key}].{field_name} must be >= 0")
            clean[field_name] = float(value)
        overrides[cut] = clean

    return ModelConfig(
        layers=tuple(layers),
        input_shape=tuple(shape),
        bytes_per_value=bytes_per_value,
        overrides=overrides,
        name=data.get("name", "model"),
    )


def lenet_config() -> ModelConfig:
    """The bundled 12-layer LeNet variant used as the default model."""
    data = json.loads(resources.files("cpsl_sim.configs").joinpath("lenet.json").read_text())
    return load_model_config(data)


def _chain_step(layer: LayerSpec, shape: tuple[int, int, int]) -> tuple[tuple[int, int, int], float, int]:
    """Advance the shape chain one layer; returns (out_shape, flops, params).

    Degenerate convolutions (input smaller than the kernel) clip the kernel
    to the input window and emit a 1x1 output, so every cut of a deep chain
    stays profileable.
    """
    h, w, c = shape
    if layer.kind == "conv":
        kh, kw = layer.kernel
        eff_kh, eff_kw = min(kh, h), min(kw, w)
        out_h, out_w = max(h - kh + 1, 1), max(w - kw + 1, 1)
        flops = float(out_h * out_w * eff_kh * eff_kw * c * layer.filters)
        params = kh * kw * c * layer.filters + layer.filters
        return (out_h, out_w, layer.filters), flops, params
    if layer.kind == "maxpool":
        wh, ww = layer.window
        out_h, out_w = max(h // wh, 1), max(w // ww, 1)
        return (out_h, out_w, c), 0.0, 0
    n_in = h * w * c
    return (1, 1, layer.units), float(n_in * layer.units), n_in * layer.units + layer.units


def layer_forward_flops(layer: LayerSpec, input_shape: tuple[int, int, int]) -> float:
    """Forward FLOPs (MAC count) of one layer on the given input shape.

    Unlike the internal chain walk, this strict variant rejects inputs a
    valid-padding convolution cannot consume.
    """
    h, w, c = input_shape
    if h < 1 or w < 1 or c < 1:
        raise ValueError(f"input shape {input_shape} has a non-positive dimension")
    if layer.kind == "conv":
        kh, kw = layer.kernel
        if h < kh or w < kw:
            raise ValueError(
                f"layer {layer.label()}: input {h}x{w} smaller than kernel {kh}x{kw} (valid padding)"
            )
    _, flops, _ = _chain_step(layer, input_shape)
    return flops


def profile_cut(
    layers: Sequence[LayerSpec],
    v: int,
    batch: int,
    bytes_per_value: int,
    input_shape: tuple[int, int, int],
    overrides: dict[int, dict[str, float]] | None = None,
) -> CutProfile:
    """Profile a single cut layer ``v`` (1-based).

    The last-layer cut is the degenerate federated case: no smashed data,
    no gradient transfer, zero server-side workload.
    """
    n_layers = len(layers)
    if not 1 <= v <= n_layers:
        raise ValueError(f"cut layer {v} outside 1..{n_layers}")
    if batch < 1:
        raise ValueError(f"batch must be >= 1, got {batch}")

    shape = tuple(input_shape)
    device_flops = 0.0
    device_params = 0
    total_flops = 0.0
    cut_elems = 0
    for layer in layers:
        shape, flops, params = _chain_step(layer, shape)
        total_flops += flops
        if layer.index <= v:
            device_flops += flops
            device_params += params
            if layer.index == v:
                cut_elems = shape[0] * shape[1] * shape[2]

    bits = 8 * bytes_per_value
    xi_s = float(cut_elems * bits) if v < n_layers else 0.0
    profile = CutProfile(
        cut=v,
        xi_d_bits=float(device_params * bits),
        xi_s_bits=xi_s,
        xi_g_bits=batch * xi_s,
        gamma_d_f=device_flops,
        gamma_d_b=device_flops,
        gamma_s_f=total_flops - device_flops,
        gamma_s_b=total_flops - device_flops,
    )
    block = (overrides or {}).get(v)
    if block:
        profile = replace(profile, source="override", **block)
    return profile


def enumerate_cuts(
    layers: Sequence[LayerSpec],
    batch: int,
    bytes_per_value: int,
    input_shape: tuple[int, int, int],
    overrides: dict[int, dict[str, float]] | None = None,
) -> list[CutProfile]:
    """One CutProfile per candidate cut layer, in ascending cut order."""
    return [
        profile_cut(layers, v, batch, bytes_per_value, input_shape, overrides)
        for v in range(1, len(layers) + 1)
    ]


def profile_model(model: ModelConfig, batch: int, use_overrides: bool = True) -> list[CutProfile]:
    """Enumerate cuts of a parsed model config."""
    return enumerate_cuts(
        model.layers,
        batch,
        model.bytes_per_value,
        model.input_shape,
        model.overrides if use_overrides else None,
    )


def profiles_to_rows(profiles: Iterable[CutProfile], layers: Sequence[LayerSpec]) -> list[dict]:
    names = {l.index: l.label() for l in layers}
    rows = []
    for p in profiles:
        rows.append(
            {
                "cut": p.cut,
                "layer": names.get(p.cut, f"L{p.cut}"),
                "xi_d_bits": p.xi_d_bits,
                "xi_s_bits": p.xi_s_bits,
                "xi_g_bits": p.xi_g_bits,
                "gamma_d_f": p.gamma_d_f,
                "gamma_d_b": p.gamma_d_b,
                "gamma_s_f": p.gamma_s_f,
                "gamma_s_b": p.gamma_s_b,
                "source": p.source,
            }
        )
    return rows


def write_profiles_csv(profiles, layers, fileobj, header_lines: Sequence[str] = ()) -> None:
    rows = profiles_to_rows(profiles, layers)
    for line in header_lines:
        fileobj.write(f"# {line}\n")
    writer = csv.DictWriter(fileobj, fieldnames=list(rows[0].keys()))
    writer.writeheader()
    writer.writerows(rows)
