"""Command-line front end.

Exit codes: 0 success, 2 infeasible / below threshold / violation found,
1 malformed input or usage error.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys

import numpy as np

from .lft import Controller, PartitionedSystem
from .oracle import closed_loop_gain_check, sample_robust_performance, sample_robust_stability
from .sdp import SolverOptions, SolverTimeout
from .structures import StructureError
from .synth import (SCHEMA, Certificate, application_preset, check_q_performance,
                    check_q_stability, synthesize, verify_certificate)

EXIT_OK, EXIT_USAGE, EXIT_NEGATIVE = 0, 1, 2

log = logging.getLogger("lftrobust")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _load(path):
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def load_plant(path) -> PartitionedSystem:
    data = _load(path)
    return PartitionedSystem.from_json(data.get("plant", data))


def load_controller(path, plant) -> Controller:
    data = _load(path)
    if "controller" in data:
        data = data["controller"]
        if data is None:
            raise ValueError(f"{path} holds no controller")
    return Controller.from_json(plant, data)


def load_certificate(path, closed_loop=False) -> Certificate:
    data = _load(path)
    if "certificate" in data:
        data = data["closed_loop_certificate" if closed_loop else "certificate"]
        if data is None:
            raise ValueError(f"{path} holds no certificate")
    return Certificate.from_json(data)


def _parse_dims(text):
    if text in ("static", "unconstrained"):
        return text
    out = []
    for tok in text.split(","):
        tok = tok.strip()
        out.append(None if tok in ("*", "u", "unconstrained") else int(tok))
    return out


def _emit(obj, args):
    text = json.dumps(obj, indent=2)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    else:
        print(text)


def _options(args) -> SolverOptions:
    return SolverOptions(margin_tol=args.tol, verbose=args.verbose)


def cmd_analyze(args) -> int:
    plant = load_plant(args.plant)
    opts = _options(args)
    if args.mode == "stability":
        cert = check_q_stability(plant.A, plant.structure, opts)
    else:
        if plant.p1 != plant.q1:
            raise StructureError("performance analysis needs dim u1 == dim y1")
        cert = check_q_performance(plant.performance_matrix, plant.structure, opts)
    _emit(cert.to_json(), args)
    if not cert.feasible:
        print(f"no certificate: best margin {cert.margin:.3e} < {args.tol:g}", file=sys.stderr)
    return EXIT_OK if cert.feasible else EXIT_NEGATIVE


def cmd_synthesize(args) -> int:
    plant = load_plant(args.plant)
    if args.preset:
        fb = None if args.frequency_block is None else args.frequency_block - 1
        dims = application_preset(args.preset, plant.structure, fb)
    else:
        dims = _parse_dims(args.dims)
    outcome = synthesize(plant, args.goal, dims, _options(args))
    _emit(outcome.to_json(), args)
    if not outcome.ok:
        where = "" if outcome.failing_block is None else f" (block {outcome.failing_block + 1})"
        print(f"{outcome.status}{where}: {outcome.message}", file=sys.stderr)
    return EXIT_OK if outcome.ok else EXIT_NEGATIVE


def cmd_check_cert(args) -> int:
    plant = load_plant(args.plant)
    controller = load_controller(args.controller, plant) if args.controller else None
    cert = load_certificate(args.cert, closed_loop=controller is not None)
    margin = verify_certificate(cert, plant, controller)
    passed = bool(margin >= args.tol)
    _emit({"schema": SCHEMA, "kind": cert.kind, "theorem": cert.source, "margin": margin,
           "reported_margin": cert.margin, "tol": args.tol, "passed": passed}, args)
    return EXIT_OK if passed else EXIT_NEGATIVE


def cmd_sample(args) -> int:
    plant = load_plant(args.plant)
    if args.controller:
        controller = load_controller(args.controller, plant)
        report = closed_loop_gain_check(plant, controller, args.samples, args.seed, args.radius)
    elif args.mode == "stability":
        report = sample_robust_stability(plant.A, plant.structure, args.samples, args.seed,
                                         args.radius)
    else:
        report = sample_robust_performance(plant.performance_matrix, plant.structure,
                                           args.samples, args.seed, args.radius)
    _emit(report.to_json(), args)
    return EXIT_NEGATIVE if report.violation_found else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--tol", type=float, default=1e-7, help="margin threshold")
    common.add_argument("--out", help="write JSON here instead of stdout")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--verbose", action="store_true")

    parser = _Parser(prog="lftrobust", description="Structured robust analysis and synthesis "
                     "for systems in linear fractional form.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("analyze", parents=[common], help="Q-stability / Q-performance certificate")
    p.add_argument("--plant", required=True)
    p.add_argument("--mode", choices=("stability", "performance"), default="stability")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("synthesize", parents=[common], help="controller synthesis")
    p.add_argument("--plant", required=True)
    p.add_argument("--goal", choices=("stabilization", "performance"), default="stabilization")
    p.add_argument("--dims", default="unconstrained",
                   help="static, unconstrained, or per-block list like 0,* (* = unbounded)")
    p.add_argument("--preset", choices=("structured-uncertainty", "lpv"))
    p.add_argument("--frequency-block", type=int, help="1-based index overriding the structure's")
    p.set_defaults(func=cmd_synthesize)

    p = sub.add_parser("check-cert", parents=[common], help="re-verify a certificate")
    p.add_argument("--plant", required=True)
    p.add_argument("--cert", required=True)
    p.add_argument("--controller")
    p.set_defaults(func=cmd_check_cert)

    p = sub.add_parser("sample", parents=[common], help="sampling oracle report")
    p.add_argument("--plant", required=True)
    p.add_argument("--controller")
    p.add_argument("--mode", choices=("stability", "performance"), default="stability")
    p.add_argument("--samples", type=int, default=10_000)
    p.add_argument("--radius", type=float, default=1.0)
    p.set_defaults(func=cmd_sample)
    return parser


def run(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(f"lftrobust: {exc}", file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(name)s: %(message)s")
    try:
        return args.func(args)
    except (OSError, json.JSONDecodeError, KeyError, TypeError, ValueError, StructureError,
            NotImplementedError, np.linalg.LinAlgError) as exc:
        print(f"lftrobust: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SolverTimeout as exc:
        print(f"lftrobust: solver timeout (best margin {exc.best_margin:.3e})", file=sys.stderr)
        return EXIT_NEGATIVE


def main():
    sys.exit(run())
