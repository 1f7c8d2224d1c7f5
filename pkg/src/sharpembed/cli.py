"""Batch command-line interface.

Every subcommand accepts ``--config FILE`` with flat ``key = value`` lines
(keys are the long option names, dashes or underscores); explicit flags win.
A previously written artifact (CSV with a ``# config:`` line or JSON with a
``config`` key) is accepted as a config file too, which reproduces the run.

Exit codes: 0 success or prediction met, 1 prediction not met,
2 validation error, 3 construction failure, 4 numeric failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import __version__
from . import constants as C
from .analysis import ELL2, NOT_ELL2, fit_decay, report_json
from .core import BoundaryCondition, Energy, Irrational, prufer_from_solution
from .errors import ConstructionError, DomainError, NumericFailure, SharpEmbedError
from .potentials import even_q_build, glue_multi, potential_csv, sign_type_run
from .solver import Trajectory, integrate

log = logging.getLogger("sharpembed")

EXIT_OK, EXIT_MISMATCH, EXIT_VALIDATION, EXIT_CONSTRUCTION, EXIT_NUMERIC = 0, 1, 2, 3, 4


# ---------------------------------------------------------------- config handling

def read_config(path: str) -> dict:
    """Flat key/value config, or the config embedded in an artifact."""
    with open(path) as fh:
        text = fh.read()
    stripped = text.lstrip()
    if stripped.startswith("{"):
        d = json.loads(text)
        return dict(d.get("config", d))
    for line in text.splitlines():
        if line.startswith("# config: "):
            return json.loads(line[len("# config: "):])
    out = {}
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise DomainError(f"config line without '=': {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key.replace("-", "_")] = value
    return out


def _apply_config(parser: argparse.ArgumentParser, sub: argparse.ArgumentParser, argv) -> argparse.Namespace:
    args = parser.parse_args(argv)
    if getattr(args, "config", None):
        cfg = read_config(args.config)
        cfg.pop("command", None)
        cfg.pop("version", None)
        known = {a.dest: a for a in sub._actions}
        defaults = {}
        for key, value in cfg.items():
            key = key.replace("-", "_")
            if key not in known or key in ("config", "help"):
                continue
            action = known[key]
            if isinstance(value, str) and action.type is not None and action.nargs is None:
                value = action.type(value)
            elif isinstance(value, str) and isinstance(action, argparse._StoreTrueAction):
                value = value.lower() in ("1", "true", "yes", "on")
            defaults[key] = value
        sub.set_defaults(**defaults)
        args = parser.parse_args(argv)
    return args


def resolved_config(args: argparse.Namespace) -> dict:
    d = {k: v for k, v in vars(args).items() if k not in ("func", "config", "output_dir", "output")}
    d["version"] = __version__
    return d


def _outdir(args) -> str:
    path = args.output_dir
    os.makedirs(path, exist_ok=True)
    return path


# ---------------------------------------------------------------- embedding

def predicted_verdict(E: float, a: float) -> tuple[str | None, str, float]:
    """(prediction, construction, sharp constant) for a single energy.

    With X the relevant sharp constant the decay slope is -a X / sin(pi k),
    so l^2 is predicted iff a X > sin(pi k).  For odd q the sign-type rate lies
    between B_q and A_q, and the prediction is left open in between.
    """
    en = Energy.from_E(E)
    s = math.sin(math.pi * en.k)
    if isinstance(en.cls, Irrational):
        X = C.A0
        return (ELL2 if a * X > s else NOT_ELL2), "SignType", X
    q = en.cls.q
    if q % 2 == 0:
        X = C.sharp_A(q)
        return (ELL2 if a * X > s else NOT_ELL2), "EvenQ", X
    A, B = C.sharp_A(q), C.sharp_B(q)
    if a * B > s:
        return ELL2, "SignType", B
    if a * A < s:
        return NOT_ELL2, "SignType", A
    return None, "SignType", B


def run_embed(E: float, a: float, theta0: float, n_max: int, n_start: int | None = None,
              fit_min: int = 1000):
    """Build the construction selected by the arithmetic type of k(E) and fit it."""
    en = Energy.from_E(E)
    prediction, kind, X = predicted_verdict(E, a)
    bc = BoundaryCondition.from_any(theta0)
    if kind == "EvenQ":
        res = even_q_build(a, en.cls.p, en.cls.q, n0=n_start, boundary=bc, n_max=n_max)
        V, tr, extra = res.V, res.trajectory, {
            "n0": res.n0, "max_phase_error": float(res.phase_error.max()),
            "delta_tilde": res.delta_tilde, "sign_misalignments": res.sign_misalignments}
    else:
        s = math.sin(math.pi * en.k)
        n_start = max(10, int(math.ceil(4 * a / s))) if n_start is None else int(n_start)
        _R, th1 = prufer_from_solution(*bc.pair(), en.k)
        tr, V = sign_type_run(a, en.k, th1 + (n_start - 1) * en.k, n_start, n_max - n_start)
        extra = {"n_start": n_start}
    rep = fit_decay(tr, fit_min, n_max)
    summary = {"E": E, "k": en.k, "class": _class_str(en), "construction": kind, "a": a,
               "sharp_constant": X, "predicted": prediction, "beta": rep.beta,
               "stderr": rep.stderr, "verdict": rep.verdict, "tail_fraction": rep.tail_fraction}
    summary.update(extra)
    return V, tr, rep, summary


def _class_str(en: Energy) -> str:
    if isinstance(en.cls, Irrational):
        return "irrational"
    return f"{en.cls.p}/{en.cls.q} ({en.cls.parity})"


def _supercritical_warning(E: float, a: float) -> None:
    prediction, kind, X = predicted_verdict(E, a)
    if prediction != ELL2:
        log.warning("coupling a=%g is not super-critical at E=%g (sharp constant %.6g): "
                    "no l^2 solution is expected", a, E, X)


# ---------------------------------------------------------------- subcommands

def cmd_constants(args) -> int:
    if args.q_min < 2 and args.q_min != 0:
        raise DomainError("q range must start at 0 or at q >= 2")
    qs = list(range(max(2, args.q_min), args.q_max + 1))
    if args.q_min == 0 or args.with_zero:
        qs = [0] + qs
    lines = ["# config: " + json.dumps(resolved_config(args), sort_keys=True),
             "q,A_q,B_q,A_brute,B_brute,phi_max,phi_min"]
    for q in qs:
        A = C.sharp_A(q)
        if q == 0:
            lines.append(f"0,{A:.17g},,{C.phase_average_irrational():.17g},,,")
            continue
        Ab, phi_max = C.phase_extremum(q, "max")
        if q % 2:
            B = C.sharp_B(q)
            Bb, phi_min = C.phase_extremum(q, "min")
            lines.append(f"{q},{A:.17g},{B:.17g},{Ab:.17g},{Bb:.17g},{phi_max:.17g},{phi_min:.17g}")
        else:
            lines.append(f"{q},{A:.17g},,{Ab:.17g},,{phi_max:.17g},")
    _emit("\n".join(lines) + "\n", args.output)
    return EXIT_OK


def _emit(text: str, path: str | None) -> None:
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        with open(path, "w", newline="\n") as fh:
            fh.write(text)


def cmd_embed(args) -> int:
    _supercritical_warning(args.E, args.a)
    V, tr, rep, summary = run_embed(args.E, args.a, args.theta0, args.n_max, args.n_start, args.fit_min)
    cfg = resolved_config(args)
    out = _outdir(args)
    potential_csv(V, os.path.join(out, "potential.csv"), cfg)
    tr.to_csv(os.path.join(out, "trajectory.csv"), cfg)
    report_json(rep, os.path.join(out, "report.json"), cfg, {"summary": summary})
    print(json.dumps(summary, sort_keys=True))
    ok = summary["predicted"] is None or summary["predicted"] == rep.verdict
    return EXIT_OK if ok else EXIT_MISMATCH


def parse_targets(args) -> list[tuple[float, float]]:
    targets = []
    for t in args.target or []:
        E, _, th = t.partition(":")
        targets.append((float(E), float(th or 0.0)))
    if args.targets:
        with open(args.targets) as fh:
            for raw in fh:
                line = raw.split("#", 1)[0].replace(",", " ").split()
                if not line or line[0].lower() == "e":
                    continue
                targets.append((float(line[0]), float(line[1]) if len(line) > 1 else 0.0))
    if not targets:
        raise DomainError("no targets given (use --target E:theta or --targets FILE)")
    return targets


def parse_h(spec: str | None):
    """'none', 'const:C' or 'log:c0' (h(n) = ln(c0 + n))."""
    if spec is None or spec == "none":
        return None
    kind, _, val = spec.partition(":")
    if kind == "const":
        return float(val)
    if kind == "log":
        c0 = float(val or 10.0)
        return lambda n: math.log(c0 + n)
    raise DomainError(f"unknown growth spec {spec!r}")


def cmd_multi_embed(args) -> int:
    targets = parse_targets(args)
    g = glue_multi(targets, h=parse_h(args.h), n_start=args.n_start, n_max=args.n_max,
                   gamma=args.gamma, max_doublings=args.max_doublings)
    cfg = resolved_config(args)
    out = _outdir(args)
    potential_csv(g.V, os.path.join(out, "potential.csv"), cfg)
    results = []
    for i, (E, th) in enumerate(g.targets):
        tr = integrate(g.V, E, th, args.n_max)
        rep = fit_decay(tr, args.fit_min, args.n_max)
        tr.to_csv(os.path.join(out, f"trajectory_{i}.csv"), cfg)
        report_json(rep, os.path.join(out, f"report_{i}.json"), cfg, {"E": E, "theta0": th})
        results.append({"E": E, "theta0": th, "beta": rep.beta, "verdict": rep.verdict,
                        "tail_fraction": rep.tail_fraction})
    schedule = {"config": cfg, "spec": json.loads(g.spec.to_json()), "envelope": g.envelope,
                "h_bound": g.h_bound, "monotone": g.monotone, "contraction_ok": g.contraction_ok,
                "activation": {str(k): v for k, v in g.activation.items()},
                "checkpoints": g.checkpoint_table(), "targets": results}
    with open(os.path.join(out, "schedule.json"), "w", newline="\n") as fh:
        fh.write(json.dumps(schedule, indent=2, sort_keys=True) + "\n")
    print(json.dumps(results, sort_keys=True))
    return EXIT_OK if all(r["verdict"] == ELL2 for r in results) else EXIT_MISMATCH


def parse_grid(spec: str | None) -> list[float]:
    """'start:stop:step' (inclusive) or a comma list; empty string gives no points."""
    if spec is None or not spec.strip():
        return []
    if ":" in spec:
        start, stop, step = (float(x) for x in spec.split(":"))
        if step <= 0:
            raise DomainError("grid step must be positive")
        count = int(math.floor((stop - start) / step + 1e-9)) + 1
        return [round(start + i * step, 12) for i in range(max(count, 0))]
    return [float(x) for x in spec.split(",") if x.strip()]


def _sweep_cell(E: float, a: float, args) -> dict:
    row = {"E": E, "a": a, "beta": float("nan"), "stderr": float("nan"), "tail": float("nan"),
           "verdict": "", "predicted": "", "error": ""}
    try:
        _V, _tr, rep, summary = run_embed(E, a, args.theta0, args.n_max, None, args.fit_min)
        row.update(beta=rep.beta, stderr=rep.stderr, tail=rep.tail_fraction, verdict=rep.verdict,
                   predicted=summary["predicted"] or "")
    except SharpEmbedError as exc:
        row["error"] = f"{type(exc).__name__}: {exc}".replace(",", ";")
    return row


def cmd_sweep(args) -> int:
    Es = parse_grid(args.E_grid) if args.E_grid is not None else [args.E]
    As = parse_grid(args.a_grid) if args.a_grid is not None else [args.a]
    cells = [(E, a) for E in Es for a in As if E is not None and a is not None]
    with ThreadPoolExecutor(max_workers=args.workers) as pool:
        rows = list(pool.map(lambda c: _sweep_cell(c[0], c[1], args), cells))
    lines = ["# config: " + json.dumps(resolved_config(args), sort_keys=True),
             "E,a,beta,stderr,tail,verdict,predicted,error"]
    for r in rows:
        lines.append(f"{r['E']:.17g},{r['a']:.17g},{r['beta']:.17g},{r['stderr']:.17g},"
                     f"{r['tail']:.17g},{r['verdict']},{r['predicted']},{r['error']}")
    _emit("\n".join(lines) + "\n", args.output)
    return EXIT_OK


def cmd_analyze(args) -> int:
    tr = Trajectory.from_csv(args.trajectory)
    rep = fit_decay(tr, args.n_min, args.n_max, channel=args.channel)
    text = report_json(rep, None, resolved_config(args),
                       {"E": tr.E, "theta0": tr.boundary.theta0, "source": args.trajectory})
    _emit(text + "\n", args.output)
    return EXIT_OK


def cmd_verify(args) -> int:
    from .acceptance import run_all

    numbers = [int(x) for x in args.only.split(",")] if args.only else None
    results = run_all(numbers)
    failed = [r.number for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} criteria passed"
          + (f"; failing: {failed}" if failed else ""))
    return EXIT_OK if not failed else EXIT_MISMATCH


# ---------------------------------------------------------------- parser

def build_parser() -> tuple[argparse.ArgumentParser, dict]:
    p = argparse.ArgumentParser(prog="sharpembed", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    subs = p.add_subparsers(dest="command", required=True)
    table = {}

    def sub(name, func, help_):
        sp = subs.add_parser(name, help=help_)
        sp.add_argument("--config", help="key=value file or an earlier artifact")
        sp.set_defaults(func=func)
        table[name] = sp
        return sp

    s = sub("constants", cmd_constants, "table of A_q, B_q with brute-force cross-checks")
    s.add_argument("--q-min", type=int, default=2)
    s.add_argument("--q-max", type=int, default=10)
    s.add_argument("--with-zero", action="store_true", help="prepend the q = 0 (irrational) row")
    s.add_argument("-o", "--output", default=None)

    s = sub("embed", cmd_embed, "embed one eigenvalue and analyse the solution")
    s.add_argument("--E", type=float, required=False, default=None)
    s.add_argument("--a", type=float, required=False, default=None)
    s.add_argument("--theta0", type=float, default=0.0)
    s.add_argument("--n-max", type=int, default=10**6)
    s.add_argument("--n-start", type=int, default=None)
    s.add_argument("--fit-min", type=int, default=1000)
    s.add_argument("--output-dir", default="embed_out")

    s = sub("multi-embed", cmd_multi_embed, "glue segments for several target energies")
    s.add_argument("--targets", default=None, help="file with lines 'E theta'")
    s.add_argument("--target", action="append", help="E:theta, may repeat")
    s.add_argument("--h", default=None, help="none | const:C | log:c0 (h(n) = ln(c0 + n))")
    s.add_argument("--gamma", type=float, default=3.0)
    s.add_argument("--n-start", type=int, default=1000)
    s.add_argument("--n-max", type=int, default=10**6)
    s.add_argument("--max-doublings", type=int, default=12)
    s.add_argument("--fit-min", type=int, default=1000)
    s.add_argument("--output-dir", default="multi_out")

    s = sub("sweep", cmd_sweep, "verdict map over a grid of energies or couplings")
    s.add_argument("--E-grid", default=None, help="start:stop:step or comma list")
    s.add_argument("--a-grid", default=None, help="start:stop:step or comma list")
    s.add_argument("--E", type=float, default=None)
    s.add_argument("--a", type=float, default=None)
    s.add_argument("--theta0", type=float, default=0.0)
    s.add_argument("--n-max", type=int, default=10**6)
    s.add_argument("--fit-min", type=int, default=1000)
    s.add_argument("--workers", type=int, default=os.cpu_count() or 1)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("-o", "--output", default=None)

    s = sub("analyze", cmd_analyze, "fit a stored trajectory CSV")
    s.add_argument("trajectory", nargs="?", default=None)
    s.add_argument("--n-min", type=int, default=None)
    s.add_argument("--n-max", type=int, default=None)
    s.add_argument("--channel", default="auto", choices=["auto", "logR2", "logRtilde2"])
    s.add_argument("-o", "--output", default=None)

    s = sub("verify", cmd_verify, "run the acceptance checks")
    s.add_argument("--only", default=None, help="comma list of criterion numbers")
    return p, table


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    parser, table = build_parser()
    first = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if first.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        args = _apply_config(parser, table[first.command], argv)
        _require(args)
        return args.func(args)
    except ConstructionError as exc:
        log.error("construction failed: %s", exc)
        return EXIT_CONSTRUCTION
    except NumericFailure as exc:
        log.error("numeric failure: %s", exc)
        return EXIT_NUMERIC
    except (DomainError, ValueError, OSError) as exc:
        log.error("%s", exc)
        return EXIT_VALIDATION


def _require(args) -> None:
    missing = []
    if args.command == "embed":
        missing = [n for n in ("E", "a") if getattr(args, n) is None]
    elif args.command == "sweep":
        if args.E_grid is None and args.E is None:
            missing.append("E or E_grid")
        if args.a_grid is None and args.a is None:
            missing.append("a or a_grid")
    elif args.command == "analyze" and args.trajectory is None:
        missing = ["trajectory"]
    if missing:
        raise DomainError("missing required parameter(s): " + ", ".join(missing))


if __name__ == "__main__":
    sys.exit(main())
