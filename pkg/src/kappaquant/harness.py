"""
Toy linear networks with synthetic calibration data, and the end-to-end
pipeline: full precision vs. quantized vs. reconditioned-then-quantized.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .conditioner import ConditionerConfig, TraceEntry, condiquant
from .matrix import ShapeError, fro_norm, matmul, spectral_norm
from .metrics import psnr, ssim
from .quantizer import QuantSpec, _check_bits, calibrate_minmax, calibrate_percentile, fake_quantize

NONLINEARITIES = ("none", "relu")

# Calibration activations are scaled to this spectral norm, so that
# eta * ||X||_2**2 == 1 at the default step size.
ACT_NORM = 10.0
DEFAULT_SAMPLES = 100


@dataclass(frozen=True)
class LayerRecord:
    name: str
    weight: np.ndarray
    activation: np.ndarray
    condition_enabled: bool = True

    def __post_init__(self):
        if self.activation.shape[1] != self.weight.shape[0]:
            raise ShapeError(
                f"layer {self.name!r}: activation {self.activation.shape} does not feed weight {self.weight.shape}"
            )


@dataclass(frozen=True)
class ToyNet:
    layers: tuple[LayerRecord, ...]
    nonlinearities: tuple[str, ...] = ()
    calib_input: Optional[np.ndarray] = None
    eval_input: Optional[np.ndarray] = None

    def __post_init__(self):
        layers = tuple(self.layers)
        object.__setattr__(self, "layers", layers)
        if not layers:
            raise ValueError("a network needs at least one layer")
        gaps = tuple(self.nonlinearities) or ("none",) * (len(layers) - 1)
        object.__setattr__(self, "nonlinearities", gaps)
        if len(gaps) != len(layers) - 1:
            raise ValueError(f"expected {len(layers) - 1} nonlinearity tags, got {len(gaps)}")
        for tag in gaps:
            if tag not in NONLINEARITIES:
                raise ValueError(f"unknown nonlinearity {tag!r}")
        names = [layer.name for layer in layers]
        if len(set(names)) != len(names):
            raise ValueError(f"layer names must be unique: {names}")
        for prev, nxt in zip(layers, layers[1:]):
            if prev.weight.shape[1] != nxt.weight.shape[0]:
                raise ShapeError(
                    f"layer {prev.name!r} outputs {prev.weight.shape[1]} features "
                    f"but {nxt.name!r} expects {nxt.weight.shape[0]}"
                )

    @property
    def names(self) -> list[str]:
        return [layer.name for layer in self.layers]

    @property
    def weights(self) -> list[np.ndarray]:
        return [layer.weight for layer in self.layers]

    def with_weights(self, weights: Sequence[np.ndarray]) -> "ToyNet":
        layers = tuple(replace(layer, weight=w) for layer, w in zip(self.layers, weights))
        return replace(self, layers=layers)


@dataclass
class PipelineResult:
    bits: int
    psnr_fp_vs_quant_baseline: float
    psnr_fp_vs_quant_conditioned: float
    ssim_baseline: float
    ssim_conditioned: float
    fp_deviation: float
    peak: float
    traces: dict[str, list[TraceEntry]] = field(default_factory=dict)

    @property
    def psnr_gain(self) -> float:
        return self.psnr_fp_vs_quant_conditioned - self.psnr_fp_vs_quant_baseline


def _apply(tag: str, y: np.ndarray) -> np.ndarray:
    return np.maximum(y, 0.0) if tag == "relu" else y


def forward(
    net: ToyNet,
    inputs: np.ndarray,
    quant: Optional[Sequence[Optional[tuple[QuantSpec, QuantSpec]]]] = None,
    capture: bool = False,
) -> tuple[np.ndarray, list[np.ndarray]]:
    """
    Run ``inputs`` through the network.

    ``quant`` optionally holds one ``(activation_spec, weight_spec)`` pair
    (or ``None`` for full precision) per layer. With ``capture`` the
    full-precision-or-quantized input seen by each layer, before its own
    fake quantization, is returned alongside the output.
    """
    first = net.layers[0].weight
    if inputs.shape[1] != first.shape[0]:
        raise ShapeError(f"input has {inputs.shape[1]} features, first layer expects {first.shape[0]}")
    if quant is not None and len(quant) != len(net.layers):
        raise ValueError(f"expected {len(net.layers)} quantizer pairs, got {len(quant)}")
    x = np.asarray(inputs, dtype=np.float64)
    captured = []
    for i, layer in enumerate(net.layers):
        if capture:
            captured.append(x)
        w = layer.weight
        pair = quant[i] if quant is not None else None
        if pair is not None:
            x = fake_quantize(x, pair[0]).quantized
            w = fake_quantize(w, pair[1]).quantized
        x = matmul(x, w)
        if i < len(net.nonlinearities):
            x = _apply(net.nonlinearities[i], x)
    return x, captured


def _haar_orthogonal(rng: np.random.Generator, n: int) -> np.ndarray:
    q, r = np.linalg.qr(rng.standard_normal((n, n)))
    return q * np.sign(np.diag(r))


def synth_network(
    seed: int,
    depth: int = 6,
    width: int = 64,
    act_rank_ratio: float = 0.625,
    kappa_target: float = 1e3,
    samples: int = DEFAULT_SAMPLES,
    nonlinearity: str = "none",
) -> ToyNet:
    """
    Build a seeded chain of square layers with rank-deficient calibration data.

    Inputs are ``A @ B`` with ``B`` a fixed random ``r x width`` basis,
    r = round(act_rank_ratio * width), so every captured activation has
    rank r when the chain is linear. Weights are ``U diag(s) V^T`` with Haar
    orthogonal factors and a geometric spectrum from 1 to 1/kappa_target,
    rescaled so the next layer's calibration activation has spectral norm
    ``ACT_NORM``. Held-out evaluation inputs share the basis ``B``.
    """
    if depth < 1:
        raise ValueError(f"depth must be >= 1, got {depth}")
    if width < 4:
        raise ValueError(f"width must be >= 4, got {width}")
    if not 0.0 < act_rank_ratio <= 1.0:
        raise ValueError(f"act_rank_ratio must lie in (0, 1], got {act_rank_ratio}")
    if not kappa_target >= 1.0:
        raise ValueError(f"kappa_target must be >= 1, got {kappa_target}")
    if samples < 1:
        raise ValueError(f"samples must be >= 1, got {samples}")
    if nonlinearity not in NONLINEARITIES:
        raise ValueError(f"unknown nonlinearity {nonlinearity!r}")

    rng = np.random.default_rng(seed)
    rank = max(1, int(round(act_rank_ratio * width)))
    basis = rng.standard_normal((rank, width))
    calib = rng.standard_normal((samples, rank)) @ basis
    held_out = rng.standard_normal((samples, rank)) @ basis
    scale = ACT_NORM / spectral_norm(calib)
    calib, held_out = calib * scale, held_out * scale

    spectrum = np.geomspace(1.0, 1.0 / kappa_target, width)
    layers, x = [], calib
    for i in range(depth):
        u, v = _haar_orthogonal(rng, width), _haar_orthogonal(rng, width)
        w = (u * spectrum) @ v.T
        y = x @ w
        if i < depth - 1:
            y = _apply(nonlinearity, y)
        c = ACT_NORM / spectral_norm(y)
        w, y = w * c, y * c
        layers.append(LayerRecord(f"layer{i}", w, x))
        x = y
    return ToyNet(tuple(layers), (nonlinearity,) * (depth - 1), calib, held_out)


def default_workers() -> int:
    env = os.environ.get("THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def condition_layers(
    layers: Sequence[LayerRecord], config: Optional[ConditionerConfig] = None, workers: Optional[int] = None
) -> tuple[list[np.ndarray], dict[str, list[TraceEntry]]]:
    """Recondition every enabled layer against its own activations.

    Layers are independent, so they run on a thread pool; disabled layers
    keep their weights. Returns the new weights in layer order and the
    traces keyed by layer name.
    """
    config = config or ConditionerConfig()
    todo = [layer for layer in layers if layer.condition_enabled]

    def run(layer):
        return condiquant(layer.weight, layer.activation, config)

    workers = workers or default_workers()
    if workers > 1 and len(todo) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run, todo))
    else:
        results = [run(layer) for layer in todo]
    done = {layer.name: res for layer, res in zip(todo, results)}
    weights = [done[l.name].w_final if l.name in done else l.weight for l in layers]
    return weights, {name: res.trace for name, res in done.items()}


def condition_network(
    net: ToyNet, config: Optional[ConditionerConfig] = None, workers: Optional[int] = None
) -> tuple[ToyNet, dict[str, list[TraceEntry]]]:
    weights, traces = condition_layers(net.layers, config, workers)
    return net.with_weights(weights), traces


def _calibrate(x: np.ndarray, bits: int, calib: str, pct: float) -> QuantSpec:
    if calib == "minmax":
        return calibrate_minmax(x, bits)
    if calib == "percentile":
        return calibrate_percentile(x, bits, pct)
    raise ValueError(f"unknown calibration {calib!r}")


def quant_specs(net: ToyNet, bits: int, calib: str = "minmax", pct: float = 0.01):
    """Per-layer (activation, weight) specs from a full-precision calibration pass."""
    _, acts = forward(net, net.calib_input, capture=True)
    return [
        (_calibrate(a, bits, calib, pct), calibrate_minmax(layer.weight, bits))
        for a, layer in zip(acts, net.layers)
    ]


def run_pipeline(
    net: ToyNet,
    bits: int,
    config: Optional[ConditionerConfig] = None,
    calib: str = "minmax",
    pct: float = 0.01,
    conditioned: Optional[tuple[ToyNet, dict]] = None,
    workers: Optional[int] = None,
) -> PipelineResult:
    """
    Measure how well quantized networks track the full-precision output on
    held-out inputs, with and without reconditioning.

    Activation bounds use ``calib`` on each network's own calibration pass;
    weight bounds are always min/max. ``conditioned`` lets callers reuse one
    reconditioning across several bit widths.
    """
    bits = _check_bits(bits)
    if net.calib_input is None or net.eval_input is None:
        raise ValueError("run_pipeline needs a network with calibration and evaluation inputs")
    if conditioned is None:
        conditioned = condition_network(net, config, workers)
    cnet, traces = conditioned

    ref, _ = forward(net, net.eval_input)
    base, _ = forward(net, net.eval_input, quant_specs(net, bits, calib, pct))
    cond, _ = forward(cnet, net.eval_input, quant_specs(cnet, bits, calib, pct))
    cond_fp, _ = forward(cnet, net.eval_input)

    peak = float(np.max(ref) - np.min(ref))
    return PipelineResult(
        bits=bits,
        psnr_fp_vs_quant_baseline=psnr(base, ref, peak),
        psnr_fp_vs_quant_conditioned=psnr(cond, ref, peak),
        ssim_baseline=ssim(base, ref, peak),
        ssim_conditioned=ssim(cond, ref, peak),
        fp_deviation=fro_norm(cond_fp - ref) / fro_norm(ref),
        peak=peak,
        traces=traces,
    )
