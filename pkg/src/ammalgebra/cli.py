"""Command-line front end.

Every global flag can also come from the environment as ``AMMALG_<FLAG>``
(``AMMALG_CONFIG``, ``AMMALG_TOL``, ``AMMALG_SEED``, ``AMMALG_SAMPLES``,
``AMMALG_CSV``, ``AMMALG_DIGITS``).  A flag on the command line beats the
environment, which beats the config file, which beats the defaults.

Exit codes: 0 success, 1 a verification check failed, 2 usage, config or
request error.
"""
from __future__ import annotations

import argparse
import os
import sys
from fractions import Fraction
from pathlib import Path
from typing import Sequence


from .axioms import default_box
from .compose import (
    optimal_split_detail,
    par_compose,
    seq_compose_many_to_many,
    seq_compose_many_to_one,
)
from .config import ConfigError, NetworkConfig, load_config, parse_number
from .core import DEFAULT_TOL, AmmInstance, StateVector, Valuation, evaluate, solve_coordinate, trade
from .errors import AmmError
from .operators import inherit_valuation, project, virtualize
from .report import VerifyReport, combine
from .stable import stable_point, valuation_of
from .verify import Fixture, run_axiom_suite, run_builtin

ENV_PREFIX = "AMMALG_"
DEFAULTS = {"config": None, "tol": None, "seed": 0, "samples": 200, "csv": None, "digits": 9}
GLOBAL_TYPES = {"config": str, "tol": float, "seed": int, "samples": int, "csv": str, "digits": int}
DEFAULT_REPORT = "ammalg-report.csv"


class UsageError(Exception):
    pass


# --------------------------------------------------------------------------
# parsing

def _global_flags(suppress: bool) -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    d = argparse.SUPPRESS if suppress else None
    p.add_argument("--config", default=d, metavar="PATH", help="network file (YAML)")
    p.add_argument("--tol", type=float, default=d, help="KKT tolerance for stable-point solves")
    p.add_argument("--seed", type=int, default=d, help="random seed (default 0)")
    p.add_argument("--samples", type=int, default=d, help="verification sample budget (default 200)")
    p.add_argument("--csv", default=d, metavar="PATH", help="write results as CSV ('-' for stdout)")
    p.add_argument("--digits", type=int, default=d, help="significant digits in printed numbers (default 9)")
    return p


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ammalg", parents=[_global_flags(False)],
                                     description="Stable points, operators and compositions of AMMs.")
    common = _global_flags(True)
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("eval", parents=[common], help="evaluate A, its gradient and valuation")
    p.add_argument("amm")
    p.add_argument("--at", nargs="+", metavar="ASSET=Q", help="point to evaluate (default: current state)")

    p = sub.add_parser("stable", parents=[common], help="stable point for a valuation")
    p.add_argument("amm")
    p.add_argument("--valuation", nargs="+", metavar="ASSET=W",
                   help="weights (normalized); defaults to the config's market valuation")

    p = sub.add_parser("trade", parents=[common], help="deposit/withdraw and re-solve one asset")
    p.add_argument("amm")
    p.add_argument("--delta", nargs="+", required=True, metavar="ASSET=Q", help="trader deposits are positive")
    p.add_argument("--free", required=True, help="asset solved for")

    p = sub.add_parser("compose", parents=[common], help="sequential or parallel composition")
    p.add_argument("mode", choices=("seq", "par"))
    p.add_argument("first")
    p.add_argument("second")
    p.add_argument("--hidden", help="hidden asset (sequential; default: the shared asset)")
    p.add_argument("--hidden-valuation", nargs="+", metavar="ASSET=W",
                   help="valuation of the shared assets when there are several")
    p.add_argument("--t", nargs="+", metavar="T", help="split fraction(s) routed to the first AMM")
    p.add_argument("--optimal-split", metavar="AMOUNT", help="find the best split of a deposit")
    p.add_argument("--points", type=int, default=5, help="number of output samples to print")

    p = sub.add_parser("virtualize", parents=[common], help="merge assets into a virtual asset")
    p.add_argument("amm")
    p.add_argument("--subset", nargs="+", required=True)
    p.add_argument("--valuation", nargs="+", metavar="ASSET=W", help="direction (default: market valuation)")
    p.add_argument("--name")

    p = sub.add_parser("project", parents=[common], help="fix some balances")
    p.add_argument("amm")
    p.add_argument("--fix", nargs="+", metavar="ASSET=Q", help="balances to fix (default: current)")
    p.add_argument("--keep", nargs="+", metavar="ASSET", help="assets left free; the rest are fixed")

    p = sub.add_parser("verify", parents=[common], help="run the property suites")
    p.add_argument("--builtin", action="store_true", help="built-in fixtures and the theorem suite")
    return parser


def resolve_globals(args: argparse.Namespace, env: dict | None = None) -> argparse.Namespace:
    env = os.environ if env is None else env
    args.explicit = set()
    for key, typ in GLOBAL_TYPES.items():
        if getattr(args, key, None) is not None:
            args.explicit.add(key)
            continue
        raw = env.get(ENV_PREFIX + key.upper())
        if raw is not None and raw != "":
            try:
                setattr(args, key, typ(raw))
                args.explicit.add(key)
            except ValueError:
                raise UsageError(f"{ENV_PREFIX}{key.upper()}: cannot read {raw!r} as {typ.__name__}") from None
        else:
            setattr(args, key, DEFAULTS[key])
    if args.digits < 1 or args.digits > 17:
        raise UsageError("--digits must lie in 1..17")
    if args.samples < 1:
        raise UsageError("--samples must be positive")
    return args


def parse_pairs(items: Sequence[str] | None, what: str) -> dict[str, object]:
    """``["X=1", "Y=3/4"]`` or ``["X=1,Y=3/4"]`` -> {asset: number}."""
    out: dict[str, object] = {}
    for item in items or ():
        for part in item.split(","):
            if not part:
                continue
            if "=" not in part:
                raise UsageError(f"{what}: expected ASSET=NUMBER, got {part!r}")
            k, v = part.split("=", 1)
            try:
                out[k.strip()] = parse_number(v, f"{what} {k.strip()}")
            except ConfigError as exc:
                raise UsageError(str(exc)) from None
    return out


# --------------------------------------------------------------------------
# output

class Printer:
    def __init__(self, digits: int, out=None):
        self.digits = digits
        self.out = out or sys.stdout

    def num(self, q) -> str:
        return f"{float(q):.{self.digits}g}"

    def vec(self, qs) -> str:
        return "(" + ", ".join(self.num(q) for q in qs) + ")"

    def row(self, key: str, value) -> None:
        print(f"{key:<14} {value}", file=self.out)

    def state(self, key: str, state: StateVector) -> None:
        self.row(key, "  ".join(f"{a}={self.num(q)}" for a, q in zip(state.assets, state.values)))


# --------------------------------------------------------------------------
# network access

def _load(args) -> NetworkConfig:
    if not args.config:
        raise UsageError("this command needs --config (or AMMALG_CONFIG)")
    cfg = load_config(args.config)
    if cfg.seed is not None and "seed" not in args.explicit:
        args.seed = cfg.seed
    return cfg


def _tol(args, cfg: NetworkConfig | None):
    tol = cfg.tolerances if cfg is not None else DEFAULT_TOL
    return tol.replace(kkt=args.tol) if args.tol is not None else tol


def _hidden_valuation(values: dict | None, cfg: NetworkConfig, shared: Sequence[str]):
    if values:
        missing = [a for a in shared if a not in values]
        if missing:
            raise UsageError(f"--hidden-valuation must cover the shared assets {list(shared)}")
        return tuple(values[a] for a in shared)
    if cfg.market_valuation is not None:
        return inherit_valuation(cfg.market_valuation, tuple(shared))
    return None


def _compose(cfg: NetworkConfig, mode, first, second, *, hidden=None, hidden_valuation=None, t=None):
    A, B = resolve(cfg, first), resolve(cfg, second)
    if mode == "par":
        return par_compose(A, B, Fraction(1, 2) if t is None else t)
    shared = [a for a in A.assets if a in B.assets]
    if len(shared) >= 2 and hidden is None:
        hv = _hidden_valuation(hidden_valuation, cfg, shared)
        if hv is None:
            raise UsageError(f"hidden valuation required: {first} and {second} share {shared}; "
                             "pass --hidden-valuation or set market_valuation")
        return seq_compose_many_to_many(A, B, hv)
    return seq_compose_many_to_one(A, B, hidden)


def resolve(cfg: NetworkConfig, name: str) -> AmmInstance:
    """A configured AMM or a composition declared in the config."""
    if name in cfg.amms:
        return cfg.amms[name]
    for c in cfg.compositions:
        if c.name == name:
            return _compose(cfg, c.mode, *c.amms, hidden=c.hidden, hidden_valuation=c.hidden_valuation, t=c.t)
    raise UsageError(f"no AMM or composition named {name!r}; known: "
                     f"{sorted(cfg.amms) + [c.name for c in cfg.compositions]}")


def _valuation(cfg: NetworkConfig, inst: AmmInstance, weights: dict | None) -> Valuation:
    if weights:
        if set(weights) != set(inst.assets):
            raise UsageError(f"--valuation must give a weight for each of {list(inst.assets)}")
        total = sum(weights.values())
        return Valuation(inst.assets, tuple(weights[a] / total for a in inst.assets))
    if cfg.market_valuation is None:
        raise UsageError("no --valuation given and the config has no market_valuation")
    mv = cfg.market_valuation
    if set(inst.assets) <= set(mv.assets):
        return inherit_valuation(mv, inst.assets) if len(inst.assets) < len(mv.assets) else mv.reordered(inst.assets)
    raise UsageError(f"market valuation does not cover {list(inst.assets)}; pass --valuation")


# --------------------------------------------------------------------------
# commands

def cmd_eval(args, pr: Printer) -> int:
    cfg = _load(args)
    inst = resolve(cfg, args.amm)
    tol = _tol(args, cfg)
    if args.at:
        pts = parse_pairs(args.at, "--at")
        if set(pts) != set(inst.assets):
            raise UsageError(f"--at must give every asset of {list(inst.assets)}")
        state = StateVector(inst.assets, tuple(pts[a] for a in inst.assets), delta=inst.defn.delta_coords)
    else:
        state = inst.state
    x = state.array
    pr.row("amm", inst.defn.describe())
    pr.state("state", state)
    pr.row("A", pr.num(evaluate(inst.defn, state, tol)))
    pr.row("grad", pr.vec(inst.defn.grad(x)))
    if inst.defn.axiom_conforming:
        try:
            pr.row("valuation", pr.vec(valuation_of(inst.defn, state, tol).weights))
        except AmmError as exc:
            pr.row("valuation", f"n/a ({exc})")
    return 0


def cmd_stable(args, pr: Printer) -> int:
    cfg = _load(args)
    inst = resolve(cfg, args.amm)
    v = _valuation(cfg, inst, parse_pairs(args.valuation, "--valuation"))
    res = stable_point(inst.defn, v, tol=_tol(args, cfg))
    pr.row("amm", inst.defn.describe())
    pr.row("valuation", pr.vec(v.weights))
    pr.state("state", res.state)
    pr.row("lambda", pr.num(res.lagrange_lambda))
    pr.row("kkt_residual", pr.num(res.residual_kkt))
    pr.row("|A|", pr.num(res.residual_manifold))
    pr.row("method", f"{res.method} ({res.iterations} iterations)")
    return 0


def cmd_trade(args, pr: Printer) -> int:
    cfg = _load(args)
    inst = resolve(cfg, args.amm)
    deltas = parse_pairs(args.delta, "--delta")
    new, pl = trade(inst, deltas, args.free, _tol(args, cfg))
    pr.state("before", inst.state)
    pr.state("after", new.state)
    pr.row("profit_loss", "  ".join(f"{a}={pr.num(q)}" for a, q in zip(pl.assets, pl.deltas)))
    return 0


def _sample_inputs(comp: AmmInstance, points: int):
    d = comp.defn
    anchor = comp.state.values[:-1]
    if d.delta_coords:
        steps = [Fraction(k, 2) for k in range(points)]
        return [[s] * len(anchor) for s in steps]
    factors = [Fraction(3, 4), Fraction(1), Fraction(3, 2), Fraction(2), Fraction(3), Fraction(5), Fraction(10)]
    return [[q * f if isinstance(q, (int, Fraction)) else float(q) * float(f) for q in anchor]
            for f in factors[:points]]


def cmd_compose(args, pr: Printer) -> int:
    cfg = _load(args)
    tol = _tol(args, cfg)
    if args.optimal_split is not None:
        if args.mode != "par":
            raise UsageError("--optimal-split applies to parallel composition")
        A, B = resolve(cfg, args.first), resolve(cfg, args.second)
        amount = parse_number(args.optimal_split, "--optimal-split")
        res = optimal_split_detail(A, B, amount, tol)
        pr.row("t*", pr.num(res.t))
        pr.row(f"to {args.first}", pr.num(res.to_first))
        pr.row(f"to {args.second}", pr.num(res.to_second))
        pr.row("total_return", pr.num(res.total_return))
        pr.row("interior", str(res.interior).lower())
        pr.row("rate_gap", pr.num(res.residual))
        return 0
    t = None
    if args.t:
        vals = [parse_number(q, "--t") for q in args.t]
        t = vals[0] if len(vals) == 1 else tuple(vals)
    comp = _compose(cfg, args.mode, args.first, args.second, hidden=args.hidden,
                    hidden_valuation=parse_pairs(args.hidden_valuation, "--hidden-valuation") or None, t=t)
    d = comp.defn
    pr.row("composed", d.describe())
    pr.row("assets", ", ".join(d.assets))
    pr.state("anchor", comp.state)
    out = d.assets[-1]
    label = "delta " if d.delta_coords else ""
    for xs in _sample_inputs(comp, args.points):
        try:
            y = d.output(xs)
        except AmmError:
            continue
        pr.row("sample", f"{label}{', '.join(d.assets[:-1])}={pr.vec(xs)}  {out}={pr.num(y)}")
    return 0


def cmd_virtualize(args, pr: Printer) -> int:
    cfg = _load(args)
    inst = resolve(cfg, args.amm)
    w = parse_pairs(args.valuation, "--valuation")
    if w:
        direction = {a: w[a] for a in args.subset} if set(args.subset) <= set(w) else None
        if direction is None:
            raise UsageError("--valuation must cover the subset")
    elif cfg.market_valuation is not None:
        direction = inherit_valuation(cfg.market_valuation, tuple(args.subset))
    else:
        raise UsageError("no --valuation given and the config has no market_valuation")
    vinst, spec = virtualize(inst, args.subset, direction, name=args.name, tol=_tol(args, cfg))
    pr.row("virtualized", vinst.defn.describe())
    pr.state("state", vinst.state)
    pr.row("units", pr.num(spec.c_units))
    pr.row("residue", "  ".join(f"{a}={pr.num(q)}" for a, q in zip(spec.subset, spec.residue_r)))
    return 0


def cmd_project(args, pr: Printer) -> int:
    cfg = _load(args)
    inst = resolve(cfg, args.amm)
    if args.fix and args.keep:
        raise UsageError("give either --fix or --keep")
    if args.fix:
        fixed = parse_pairs(args.fix, "--fix")
    elif args.keep:
        fixed = {a: inst.state[a] for a in inst.assets if a not in args.keep}
    else:
        raise UsageError("give --fix ASSET=Q or --keep ASSET ...")
    defn = project(inst.defn, fixed)
    pr.row("projected", defn.describe())
    pr.row("free", ", ".join(defn.assets))
    vals = [inst.state[a] for a in defn.assets]
    vals[-1] = solve_coordinate(defn, vals, len(vals) - 1, _tol(args, cfg))
    pr.state("state", StateVector(defn.assets, tuple(vals)))
    return 0


def _config_fixtures(cfg: NetworkConfig) -> list[Fixture]:
    out = []
    for name, inst in cfg.amms.items():
        out.append(Fixture(name, inst.defn, default_box(inst.state.values, delta=inst.defn.delta_coords)))
    for c in cfg.compositions:
        inst = resolve(cfg, c.name)
        out.append(Fixture(c.name, inst.defn, default_box(inst.state.values, spread=1.5,
                                                          delta=inst.defn.delta_coords)))
    return out


def cmd_verify(args, pr: Printer) -> int:
    if not args.builtin and not args.config:
        raise UsageError("verify needs --builtin or --config")
    reports: list[VerifyReport] = []
    if args.config:
        cfg = _load(args)
        reports.append(run_axiom_suite(_config_fixtures(cfg), samples=args.samples, seed=args.seed,
                                       tol=_tol(args, cfg)))
    if args.builtin:
        reports.append(run_builtin(seed=args.seed, samples=args.samples, tol=_tol(args, None)))
    report = reports[0] if len(reports) == 1 else combine("builtin+config", args.seed, reports)
    print(report.summary(pr.digits), file=pr.out)
    target = args.csv or DEFAULT_REPORT
    if target == "-":
        sys.stdout.write(report.to_csv())
    else:
        Path(target).write_text(report.to_csv())
        print(f"report written to {target}", file=pr.out)
    return 0 if report.ok else 1


COMMANDS = {"eval": cmd_eval, "stable": cmd_stable, "trade": cmd_trade, "compose": cmd_compose,
            "virtualize": cmd_virtualize, "project": cmd_project, "verify": cmd_verify}


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        args = resolve_globals(args)
        return COMMANDS[args.command](args, Printer(args.digits))
    except (UsageError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (AmmError, ValueError, ArithmeticError) as exc:
        kind = "non-conforming" if type(exc).__name__ == "NonConformingError" else type(exc).__name__
        print(f"error ({kind}): {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
