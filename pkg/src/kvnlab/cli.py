"""Command-line entry point: ``kvnlab <subcommand>``.

Exit codes: 0 success, 1 invariant violation, 2 usage error. Logs go to
standard error; data goes to files under ``--out``.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys

import numpy as np

from . import fieldio, scenarios
from .errors import KvnError, ScenarioError
from .grid import make_grid
from .states import partial_trace, pure_state_operator
from .wigner import negativity_volume, partial_wigner, wigner_transform

EXIT_OK, EXIT_VIOLATION, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _add_common(p):
    p.add_argument("--out", default=None, help="output directory")
    p.add_argument("--seed", type=int, default=None, help="seed for randomised states")


def _add_state(p, n_default):
    p.add_argument("--n", type=int, default=n_default, help="points per axis")
    p.add_argument("--box", type=float, default=8.0, help="half-width of the square box")
    p.add_argument("--state", default="gaussian", choices=sorted(scenarios.STATE_KINDS))
    p.add_argument("--q0", type=float, default=0.0)
    p.add_argument("--p0", type=float, default=0.0)
    p.add_argument("--sigma-q", type=float, default=1.0)
    p.add_argument("--sigma-p", type=float, default=1.0)
    p.add_argument("--sigma", type=float, default=0.7, help="cat/correlated component width")
    p.add_argument("--separation", type=float, default=None, help="cat separation (default 6 sigma)")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="kvnlab", description="Koopman-von Neumann phase-space laboratory")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("run", help="run a scenario file or builtin")
    p.add_argument("scenario", help="path to a scenario JSON file or a builtin name")
    _add_common(p)
    p.add_argument("--dt", type=float, default=None)
    p.add_argument("--steps", type=int, default=None)

    sub.add_parser("list", help="list builtin scenarios")

    p = sub.add_parser("verify", help="run every builtin and print a summary table")
    p.add_argument("--out", default=None)

    p = sub.add_parser("evolve", help="evolve a state and write the final amplitude")
    _add_common(p)
    _add_state(p, 128)
    p.add_argument("--hamiltonian", default="harmonic", choices=["free", "harmonic", "zero"])
    p.add_argument("--dt", type=float, default=0.01)
    p.add_argument("--steps", type=int, default=100)
    p.add_argument("--checkpoint-every", type=int, default=0)

    p = sub.add_parser("uncertainty", help="Robertson reports for operator pairs as CSV")
    _add_common(p)
    _add_state(p, 128)
    p.add_argument("--pair", action="append", default=None, metavar="A,B",
                   help="operator pair from q, p, qt, pt, q2, p2 (repeatable)")

    p = sub.add_parser("wigner", help="Wigner field, slices and summary for a state")
    _add_common(p)
    _add_state(p, 32)
    p.add_argument("--allow-large", action="store_true", help="permit 64x64 phase space")
    return ap


def _state_spec(args) -> dict:
    spec = {"kind": args.state, "q0": args.q0, "p0": args.p0, "sigma_q": args.sigma_q,
            "sigma_p": args.sigma_p, "sigma": args.sigma}
    if args.separation is not None:
        spec["separation"] = args.separation
    return spec


def _ad_hoc(args, name, hamiltonian, analyses, schedule=None) -> dict:
    return {"name": name, "seed": args.seed or 0,
            "grid": {"n_q": args.n, "n_p": args.n, "q_range": [-args.box, args.box],
                     "p_range": [-args.box, args.box]},
            "state": _state_spec(args), "hamiltonian": hamiltonian,
            "schedule": schedule or {}, "analyses": analyses}


def _resolve(spec: str) -> dict:
    if os.path.exists(spec):
        return scenarios.load(spec)
    if spec.endswith(".json"):
        raise UsageError(f"scenario file {spec!r} not found")
    try:
        return scenarios.get_builtin(spec)
    except ScenarioError:
        raise UsageError(f"{spec!r} is neither a scenario file nor a builtin "
                         f"({', '.join(b['name'] for b in scenarios.list_builtins())})") from None


def _print_checks(report, stream=sys.stdout):
    for c in report.checks:
        mark = "ok  " if c.passed else "FAIL"
        print(f"  [{mark}] {c.name}: {c.value:.6g} {c.op} {c.limit:g}", file=stream)


def cmd_run(args) -> int:
    s = _resolve(args.scenario)
    if args.seed is not None:
        s["seed"] = args.seed
    if args.dt is not None:
        s["schedule"]["dt"] = args.dt
    if args.steps is not None:
        s["schedule"]["steps"] = args.steps
    out = args.out or os.path.join("runs", s["name"])
    report = scenarios.run(s, out)
    print(f"{s['name']}: {'PASS' if report.passed else 'FAIL'} -> {os.path.join(out, 'report.json')}")
    _print_checks(report)
    return EXIT_OK if report.passed else EXIT_VIOLATION


def cmd_list(args) -> int:
    for b in scenarios.list_builtins():
        print(f"{b['name']:22s} {b['description']}")
    return EXIT_OK


def cmd_verify(args) -> int:
    rows, ok = [], True
    for b in scenarios.list_builtins():
        out = os.path.join(args.out, b["name"]) if args.out else None
        report = scenarios.run(b, out)
        failed = [c.name for c in report.checks if not c.passed]
        ok &= report.passed
        rows.append((b["name"], len(report.checks), len(failed), ", ".join(failed)))
    print(f"{'suite':22s} {'checks':>6s} {'failed':>6s}  failing")
    for name, n, f, which in rows:
        print(f"{name:22s} {n:6d} {f:6d}  {which}")
    print("all invariants hold" if ok else "invariant violations found")
    return EXIT_OK if ok else EXIT_VIOLATION


def cmd_evolve(args) -> int:
    s = _ad_hoc(args, "evolve", {"kind": args.hamiltonian},
                [{"type": "fidelity", "min": 0.0}],
                {"dt": args.dt, "steps": args.steps, "checkpoint_every": args.checkpoint_every})
    out = args.out or os.path.join("runs", "evolve")
    report = scenarios.run(s, out)
    print(f"evolved to t = {report.metrics['t_final']:.6g}; outputs in {out}")
    _print_checks(report)
    return EXIT_OK if report.passed else EXIT_VIOLATION


def cmd_uncertainty(args) -> int:
    pairs = [p.split(",") for p in (args.pair or ["q,pt", "q,p", "qt,p"])]
    for pr in pairs:
        if len(pr) != 2:
            raise UsageError(f"pair must look like A,B; got {','.join(pr)!r}")
    s = _ad_hoc(args, "uncertainty", {"kind": "zero"}, [{"type": "uncertainty", "pairs": pairs}])
    out = args.out or os.path.join("runs", "uncertainty")
    report = scenarios.run(s, out)
    sys.stdout.write(scenarios.uncertainty_csv("uncertainty", report.tables["uncertainty"]))
    return EXIT_OK if report.passed else EXIT_VIOLATION


def _slice_csv(x, y, values, xname, yname) -> str:
    lines = [f"{xname},{yname},value"]
    for i, xv in enumerate(x):
        for j, yv in enumerate(y):
            lines.append(f"{float(xv)!r},{float(yv)!r},{float(values[i, j])!r}")
    return "\n".join(lines) + "\n"


def cmd_wigner(args) -> int:
    grid = make_grid(args.n, args.n, (-args.box, args.box), (-args.box, args.box))
    chi = scenarios.build_state(grid, _state_spec(args), np.random.default_rng(args.seed or 0))
    W = wigner_transform(chi, args.allow_large)
    rho = pure_state_operator(chi)
    pw1 = partial_wigner(partial_trace(rho, 1))
    pw2 = partial_wigner(partial_trace(rho, 2))
    out = args.out or os.path.join("runs", "wigner")
    os.makedirs(out, exist_ok=True)
    fieldio.write_field(os.path.join(out, "wigner.kvnf"), fieldio.Field(W.values, fieldio.wigner_axes(W)))
    x1, y1 = pw1.axes
    fieldio.atomic_write_text(os.path.join(out, "partial_q_pt.csv"), _slice_csv(x1, y1, pw1.values, "q", "pt"))
    x2, y2 = pw2.axes
    fieldio.atomic_write_text(os.path.join(out, "partial_qt_p.csv"), _slice_csv(x2, y2, pw2.values, "qt", "p"))
    jq, jp = grid.n_q // 2, grid.n_p // 2
    fieldio.atomic_write_text(os.path.join(out, "slice_pt_qt_at_origin.csv"),
                              _slice_csv(W.pt, W.qt, W.values[jq, :, :, jp], "pt", "qt"))
    summary = {"integral": W.integral(), "min": float(W.values.min()), "max": float(W.values.max()),
               "negativity_volume": negativity_volume(W), "imag_residue": W.imag_residue,
               "partial_q_pt": {"integral": pw1.integral(), "min": float(pw1.values.min()),
                                "max": float(pw1.values.max()), "negativity_volume": negativity_volume(pw1)},
               "partial_qt_p": {"integral": pw2.integral(), "min": float(pw2.values.min()),
                                "max": float(pw2.values.max()), "negativity_volume": negativity_volume(pw2)}}
    fieldio.atomic_write_text(os.path.join(out, "summary.json"), scenarios.dumps(summary))
    print(json.dumps({k: summary[k] for k in ("integral", "min", "max", "negativity_volume")}))
    return EXIT_OK if abs(summary["integral"] - 1.0) <= 1e-6 else EXIT_VIOLATION


COMMANDS = {"run": cmd_run, "list": cmd_list, "verify": cmd_verify, "evolve": cmd_evolve,
            "uncertainty": cmd_uncertainty, "wigner": cmd_wigner}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"kvnlab: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s")
    if args.command is None:
        parser.print_help(sys.stderr)
        return EXIT_USAGE
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"kvnlab: error: {exc}", file=sys.stderr)
        print(scenarios.__doc__, file=sys.stderr)
        return EXIT_USAGE
    except ScenarioError as exc:
        print(f"kvnlab: {exc}", file=sys.stderr)
        if exc.__cause__ is None:  # schema problem, not a failed computation
            print(scenarios.__doc__, file=sys.stderr)
            return EXIT_USAGE
        return EXIT_VIOLATION
    except KvnError as exc:
        print(f"kvnlab: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_VIOLATION


if __name__ == "__main__":
    sys.exit(main())
