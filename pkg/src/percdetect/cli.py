"""Command-line interface.

Every run first prints its manifest (one JSON line) and then its results.
Feeding a saved manifest back through ``--manifest`` replays the run.

Exit codes: 0 ran (no object), 2 ran and detected an object, 1 error.
"""
from __future__ import annotations

import argparse
import json
import sys
from typing import Optional, Sequence

from . import __version__
from .detector import DetectionConfig, default_phi, detect
from .errors import InvalidArgumentError
from .fileio import RunManifest, dumps, read_image, report_document, write_report
from .lab import calibrate_phi, estimate_cluster_tail, estimate_crossings, fpr_power_curve
from .model import NoiseModel
from .thresholding import P_C_SITE, ThresholdConfig, ThresholdRule

EXIT_NO_OBJECT = 0
EXIT_ERROR = 1
EXIT_DETECTED = 2

# arguments that locate inputs/outputs rather than define the computation
_NOT_ECHOED = {"manifest", "func"}


def _threshold_cfg(args) -> ThresholdConfig:
    if getattr(args, "theta", None) is not None:
        return ThresholdConfig(p_c_site=args.p_c, rule=ThresholdRule.MANUAL, manual_theta=args.theta)
    return ThresholdConfig(p_c_site=args.p_c, rule=ThresholdRule(args.rule))


def _table(rows, header, delimiter) -> str:
    lines = [delimiter.join(header)]
    for row in rows:
        lines.append(delimiter.join(f"{v:.9g}" if isinstance(v, float) else str(v) for v in row))
    return "\n".join(lines)


def _object_side(spec: str) -> int:
    if spec == "none":
        return 0
    kind, _, side = spec.partition(":")
    if kind != "square" or not side.isdigit():
        raise InvalidArgumentError(f"--object must be 'none' or 'square:SIDE', got {spec!r}")
    return int(side)


def cmd_detect(args, out) -> int:
    img = read_image(args.input, args.format)
    cfg = DetectionConfig(NoiseModel.gaussian(args.sigma), _threshold_cfg(args), alpha=args.alpha, phi=args.phi)
    report = detect(img, cfg)
    manifest = args._manifest
    if args.out:
        write_report(report, manifest, args.out)
    print(dumps(report_document(report), indent=None), file=out)
    return EXIT_DETECTED if report.detected else EXIT_NO_OBJECT


def cmd_simulate(args, out) -> int:
    side = _object_side(args.object)
    phis = args.phi or [default_phi(args.n, args.alpha)]
    rows = fpr_power_curve(args.n, args.sigma, side, phis, args.trials, args.seed, _threshold_cfg(args))
    kind = "power" if side else "fpr"
    print(
        _table(
            [(r.phi, r.trials, r.detections, r.rate, r.ci_low, r.ci_high) for r in rows],
            ("phi", "trials", "detections", kind, "ci_low", "ci_high"),
            args.delimiter,
        ),
        file=out,
    )
    return 0


def cmd_tail(args, out) -> int:
    sizes = range(1, args.max_size + 1)
    est = estimate_cluster_tail(
        args.n, args.p, args.trials, sizes, args.seed, fit_sizes=(args.fit_min, args.fit_max), p_c_site=args.p_c
    )
    print(
        dumps(
            {"fitted_rate": est.fitted_rate, "slope": est.slope, "intercept": est.intercept, "r_squared": est.r_squared},
            indent=None,
        ),
        file=out,
    )
    rows = zip(
        est.thresholds.tolist(),
        est.survival.tolist(),
        est.confidence.tolist(),
        est.screen_survival.tolist(),
        est.screen_confidence.tolist(),
    )
    print(_table(rows, ("size", "survival", "stderr", "screen_survival", "screen_stderr"), args.delimiter), file=out)
    return 0


def cmd_crossings(args, out) -> int:
    st = estimate_crossings(args.n, args.p, args.trials, args.seed, p_c_site=args.p_c)
    doc = {
        "n": st.n,
        "p": st.p,
        "trials": st.trials,
        "crossing_rate": st.crossing_rate,
        "disjoint_count_mean": st.disjoint_count_mean,
        "disjoint_count_min": st.disjoint_count_min,
    }
    print(dumps(doc, indent=None), file=out)
    return 0


def cmd_calibrate(args, out) -> int:
    res = calibrate_phi(args.n, args.sigma, args.alpha, args.trials, args.seed, _threshold_cfg(args))
    doc = {
        "phi": res.phi,
        "detections": res.detections,
        "trials": res.trials,
        "fpr": res.fpr,
        "fpr_upper": res.fpr_upper,
        "fallback": res.fallback,
    }
    print(dumps(doc, indent=None), file=out)
    return 0


def build_parser(replay: bool = False) -> argparse.ArgumentParser:
    """With ``replay`` the required flags may come from ``--manifest`` instead."""
    req = not replay
    parser = argparse.ArgumentParser(prog="percdetect", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, seed=True):
        p.add_argument("--manifest", help="replay the configuration echoed in a saved manifest/report")
        p.add_argument("--p-c", type=float, default=P_C_SITE, help="site percolation threshold (default %(default)s)")
        if seed:
            p.add_argument("--seed", type=int, default=0)

    def thresholds(p):
        g = p.add_mutually_exclusive_group()
        g.add_argument("--theta", type=float, help="manual threshold")
        g.add_argument("--rule", choices=["eq10", "eq11"], default="eq10")

    p = sub.add_parser("detect", help="run the detector on one image")
    common(p, seed=False)
    p.add_argument("--input", required=req)
    p.add_argument("--format", choices=["pgm", "csv"])
    p.add_argument("--sigma", type=float, required=req)
    thresholds(p)
    p.add_argument("--phi", type=int)
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--out", help="write the full report here")
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("simulate", help="false-detection rate or power by Monte Carlo")
    common(p)
    p.add_argument("--n", type=int, required=req)
    p.add_argument("--sigma", type=float, required=req)
    p.add_argument("--object", default="none", help="'none' or 'square:SIDE'")
    p.add_argument("--trials", type=int, default=1000)
    p.add_argument("--phi", type=int, action="append", help="repeatable; default from n and alpha")
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--delimiter", default="\t")
    thresholds(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("tail", help="subcritical cluster-size survival")
    common(p)
    p.add_argument("--p", type=float, required=req)
    p.add_argument("--n", type=int, required=req)
    p.add_argument("--trials", type=int, default=10000)
    p.add_argument("--max-size", type=int, default=30)
    p.add_argument("--fit-min", type=int, default=5)
    p.add_argument("--fit-max", type=int, default=30)
    p.add_argument("--delimiter", default="\t")
    p.set_defaults(func=cmd_tail)

    p = sub.add_parser("crossings", help="supercritical left-right crossings")
    common(p)
    p.add_argument("--p", type=float, required=req)
    p.add_argument("--n", type=int, required=req)
    p.add_argument("--trials", type=int, default=1000)
    p.set_defaults(func=cmd_crossings)

    p = sub.add_parser("calibrate", help="smallest phi meeting a false-detection budget")
    common(p)
    p.add_argument("--n", type=int, required=req)
    p.add_argument("--sigma", type=float, required=req)
    p.add_argument("--alpha", type=float, required=req)
    p.add_argument("--trials", type=int, default=1000)
    thresholds(p)
    p.set_defaults(func=cmd_calibrate)
    return parser


def _required_actions(command):
    sub = next(a for a in build_parser()._actions if isinstance(a, argparse._SubParsersAction))
    return [a for a in sub.choices[command]._actions if a.required]


def _apply_manifest(args) -> None:
    with open(args.manifest) as fh:
        doc = json.load(fh)
    if "manifest" in doc:
        doc = doc["manifest"]
    if doc.get("command") != args.command:
        raise ValueError(f"manifest is for {doc.get('command')!r}, not {args.command!r}")
    for key, value in doc["config_echo"].items():
        setattr(args, key, value)


def main(argv: Optional[Sequence[str]] = None, out=None) -> int:
    out = out or sys.stdout
    argv = list(sys.argv[1:] if argv is None else argv)
    replay = any(a == "--manifest" or a.startswith("--manifest=") for a in argv)
    parser = build_parser(replay)
    args = parser.parse_args(argv)
    try:
        if args.manifest:
            _apply_manifest(args)
            missing = [a.dest for a in _required_actions(args.command) if getattr(args, a.dest, None) is None]
            if missing:
                raise InvalidArgumentError(f"missing required settings: {', '.join(missing)}")
        echo = {k: v for k, v in sorted(vars(args).items()) if k not in _NOT_ECHOED and not k.startswith("_")}
        manifest = RunManifest(args.command, echo, seed=int(getattr(args, "seed", 0) or 0))
        args._manifest = manifest
        print(dumps(manifest.as_dict(), indent=None), file=out)
        return args.func(args, out)
    except (ValueError, OSError) as exc:
        print(f"percdetect: error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
