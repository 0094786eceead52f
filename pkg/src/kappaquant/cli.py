"""Command-line interface: condition, quantize, analyze, simulate.

Exit status is 0 on success, 1 on usage errors and 2 on numerical or I/O
failures; diagnostics go to stderr.
"""

from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path

from .analysis import bound_check, error_attribution, kappa_profile, rank_profile
from .conditioner import POLICIES, ConditionerConfig
from .container import ContainerError, read_container, write_container
from .harness import LayerRecord, condition_layers, condition_network, run_pipeline, synth_network
from .quantizer import MAX_BITS, MIN_BITS, QuantConfigError, calibrate_minmax, calibrate_percentile, fake_quantize
from .report import build_report, dumps, write_report

EXIT_OK, EXIT_USAGE, EXIT_FAILURE = 0, 1, 2
BIT_CHOICES = range(MIN_BITS, MAX_BITS + 1)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _add_conditioner_flags(p: argparse.ArgumentParser) -> None:
    d = ConditionerConfig()
    g = p.add_argument_group("conditioner")
    g.add_argument("--eta", type=float, default=d.eta, help="gradient step size")
    g.add_argument("--lambda", dest="lam", type=float, default=d.lam, help="regularization strength")
    g.add_argument("--mu", type=float, default=d.mu, help="proximal balance factor")
    g.add_argument("--iters", type=int, default=d.max_iters, help="number of iterations")
    g.add_argument("--target", choices=POLICIES, default=d.target_policy, help="shrinkage target policy")
    g.add_argument("--threads", type=int, default=None, help="per-layer worker threads (default: $THREADS or CPU count)")


def _config(args) -> ConditionerConfig:
    try:
        return ConditionerConfig(args.eta, args.lam, args.mu, args.iters, args.target)
    except ValueError as err:
        raise UsageError(str(err)) from err


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="kappaquant", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("condition", help="recondition layer weights against calibration activations")
    p.add_argument("--weights", required=True, type=Path)
    p.add_argument("--acts", required=True, type=Path)
    p.add_argument("--out", required=True, type=Path)
    p.add_argument("--report", type=Path, help="trace report path (default: OUT with .json suffix)")
    p.add_argument("--exclude", nargs="+", default=[], metavar="NAME", help="layers to copy through unchanged")
    _add_conditioner_flags(p)

    p = sub.add_parser("quantize", help="fake-quantize every matrix in a container")
    p.add_argument("--in", dest="inp", required=True, type=Path)
    p.add_argument("--bits", required=True, type=int, choices=BIT_CHOICES)
    p.add_argument("--calib", choices=("minmax", "percentile"), default="minmax")
    p.add_argument("--pct", type=float, default=0.01, help="tail fraction for percentile calibration")
    p.add_argument("--out", required=True, type=Path)
    p.add_argument("--report", type=Path, help="also write the clipping-bound echo to this JSON file")

    p = sub.add_parser("analyze", help="attribution, sensitivity, rank and kappa profiles")
    p.add_argument("--weights", required=True, type=Path)
    p.add_argument("--acts", required=True, type=Path)
    p.add_argument("--bits", required=True, type=int, choices=BIT_CHOICES)
    p.add_argument("--report", required=True, type=Path)
    p.add_argument("--exclude", nargs="+", default=[], metavar="NAME")
    _add_conditioner_flags(p)

    p = sub.add_parser("simulate", help="end-to-end synthetic network regression")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--depth", type=int, default=6)
    p.add_argument("--width", type=int, default=64)
    p.add_argument("--rank-ratio", type=float, default=0.625)
    p.add_argument("--kappa", type=float, default=1e3)
    p.add_argument("--samples", type=int, default=100)
    p.add_argument("--bits", type=int, nargs="+", default=[2], choices=BIT_CHOICES)
    p.add_argument("--calib", choices=("minmax", "percentile"), default="minmax")
    p.add_argument("--pct", type=float, default=0.01)
    p.add_argument("--report", required=True, type=Path)
    p.add_argument("--save-weights", type=Path, help="write the synthetic weights container here")
    p.add_argument("--save-acts", type=Path, help="write the captured calibration activations here")
    _add_conditioner_flags(p)
    return parser


def _load_layers(weights_path: Path, acts_path: Path, exclude) -> list[LayerRecord]:
    weights = read_container(weights_path)
    acts = read_container(acts_path)
    unknown = set(exclude) - set(weights)
    if unknown:
        raise UsageError(f"--exclude names not in {weights_path}: {sorted(unknown)}")
    missing = [n for n in weights if n not in acts]
    if missing:
        raise ValueError(f"no calibration activations for layers {missing}")
    return [LayerRecord(n, weights[n], acts[n], n not in exclude) for n in weights]


def _cmd_condition(args) -> dict:
    config = _config(args)
    layers = _load_layers(args.weights, args.acts, args.exclude)
    weights, traces = condition_layers(layers, config, args.threads)
    write_container(args.out, {layer.name: w for layer, w in zip(layers, weights)})
    body = {
        "config": config.to_dict(),
        "inputs": {"weights": str(args.weights), "acts": str(args.acts)},
        "excluded": list(args.exclude),
        "traces": traces,
    }
    return {"report_path": args.report or args.out.with_suffix(".json"), "body": body}


def _calibrate(x, bits, calib, pct):
    if calib == "percentile":
        return calibrate_percentile(x, bits, pct)
    return calibrate_minmax(x, bits)


def _cmd_quantize(args) -> dict:
    tensors = read_container(args.inp)
    try:
        specs = {n: _calibrate(x, args.bits, args.calib, args.pct) for n, x in tensors.items()}
    except QuantConfigError as err:
        raise UsageError(str(err)) from err
    write_container(args.out, {n: fake_quantize(x, specs[n]).quantized for n, x in tensors.items()})
    body = {"calibration": args.calib, "pct": args.pct if args.calib == "percentile" else None, "specs": specs}
    return {"report_path": args.report, "body": body, "echo": True}


def _cmd_analyze(args) -> dict:
    config = _config(args)
    layers = _load_layers(args.weights, args.acts, args.exclude)
    conditioned, traces = condition_layers(layers, config, args.threads)

    attribution, sensitivity = [], []
    for layer in layers:
        spec_x = calibrate_minmax(layer.activation, args.bits)
        spec_w = calibrate_minmax(layer.weight, args.bits)
        attribution.append({"name": layer.name, **error_attribution(layer.activation, layer.weight, spec_x, spec_w).to_dict()})
        sensitivity.append({"name": layer.name, **bound_check(layer.activation, layer.weight, spec_x).to_dict()})
    kappas = kappa_profile([l.name for l in layers], [l.weight for l in layers], conditioned)
    for entry, k in zip(sensitivity, kappas.entries):
        entry["kappa_before"], entry["kappa_after"] = k.kappa_before, k.kappa_after
    body = {
        "config": config.to_dict(),
        "bits": args.bits,
        "attribution": attribution,
        "sensitivity": sensitivity,
        "rank_profile": rank_profile(layers),
        "kappa_profile": kappas,
        "traces": traces,
    }
    return {"report_path": args.report, "body": body}


def _cmd_simulate(args) -> dict:
    config = _config(args)
    try:
        net = synth_network(args.seed, args.depth, args.width, args.rank_ratio, args.kappa, args.samples)
    except ValueError as err:
        raise UsageError(str(err)) from err
    if args.save_weights:
        write_container(args.save_weights, {l.name: l.weight for l in net.layers})
    if args.save_acts:
        write_container(args.save_acts, {l.name: l.activation for l in net.layers})
    conditioned = condition_network(net, config, args.threads)
    runs = [run_pipeline(net, b, config, args.calib, args.pct, conditioned) for b in args.bits]
    kappas = kappa_profile(net.names, net.weights, conditioned[0].weights)
    body = {
        "config": config.to_dict(),
        "synth": {
            "seed": args.seed,
            "depth": args.depth,
            "width": args.width,
            "rank_ratio": args.rank_ratio,
            "kappa": args.kappa,
            "samples": args.samples,
        },
        "quantization": {"calibration": args.calib, "pct": args.pct if args.calib == "percentile" else None},
        "pipeline": [
            {
                "bits": r.bits,
                "psnr_fp_vs_quant_baseline": r.psnr_fp_vs_quant_baseline,
                "psnr_fp_vs_quant_conditioned": r.psnr_fp_vs_quant_conditioned,
                "ssim_baseline": r.ssim_baseline,
                "ssim_conditioned": r.ssim_conditioned,
                "fp_deviation": r.fp_deviation,
                "peak": r.peak,
            }
            for r in runs
        ],
        "rank_profile": rank_profile(net.layers),
        "kappa_profile": kappas,
        "traces": conditioned[1],
    }
    return {"report_path": args.report, "body": body}


COMMANDS = {
    "condition": _cmd_condition,
    "quantize": _cmd_quantize,
    "analyze": _cmd_analyze,
    "simulate": _cmd_simulate,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    start = time.perf_counter()
    try:
        out = COMMANDS[args.command](args)
        report = build_report(args.command, out["body"], time.perf_counter() - start)
        if out.get("report_path"):
            write_report(out["report_path"], report)
        if out.get("echo"):
            sys.stdout.write(dumps(report))
    except UsageError as err:
        print(f"kappaquant {args.command}: error: {err}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, ContainerError, ArithmeticError, ValueError) as err:
        print(f"kappaquant {args.command}: {type(err).__name__}: {err}", file=sys.stderr)
        return EXIT_FAILURE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
