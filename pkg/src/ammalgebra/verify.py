"""Seeded property suites for the AMM axioms and the composition theorems.

Every check draws its inputs from its own stream ``rng_for(seed, check_id)``
so adding or scaling one check never perturbs another.  Each case records
the residual it measured and the tolerance it was held to.  Checks that
document a known failure carry ``expected="fail"``.

Case counts scale with ``samples``; the reference counts are reached at
``samples = REFERENCE_SAMPLES``.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Iterable, Sequence

import numpy as np

from .axioms import check_axioms, rng_for
from .compose import (
    demonstrate_naive_ambiguity,
    naive_ambiguity_detail,
    optimal_split_detail,
    par_compose,
    seq_compose_2d,
    seq_compose_many_to_many,
    seq_compose_many_to_one,
    split_return,
    _rate,
)
from .core import (
    DEFAULT_TOL,
    AmmDef,
    AmmInstance,
    ConstantMean,
    ConstantProduct,
    ExplicitGraph,
    Linear,
    StateVector,
    Tolerances,
    Valuation,
    fd_gradient,
    manifold_bound,
    solve_coordinate,
    trade,
)
from .errors import AmmError
from .fees import linear_leg_identities, with_fee
from .operators import (
    devirtualize,
    inherit_valuation,
    project,
    solve_along_valuation,
    virtualize,
)
from .report import Case, VerifyReport, combine, digest
from .stable import brute_force_stable, equivalence_map, stable_point, valuation_of

REFERENCE_SAMPLES = 1000
SAMPLED_ONLY = "sampled evidence only"


class CoverageError(AssertionError):
    """A registered property has no check in the report."""


# property -> check ids that exercise it
AXIOM_PROPERTIES: dict[str, tuple[str, ...]] = {
    "monotone and strictly convex upper set": ("axiom.monotonicity", "axiom.convexity",
                                               "axiom.gradient_positive"),
    "every valuation has a unique stable point": ("axiom.expressivity", "axiom.uniqueness"),
    "every state is stable for its normalized gradient": ("axiom.stability",),
}

THEOREMS: dict[str, tuple[str, ...]] = {
    "stable points lie on the level set and minimize value": ("stable.minimality", "stable.kkt"),
    "constant-product closed form": ("stable.closed_form",),
    "stable-point map is a homeomorphism with lambda = 1/|grad|_1": ("stable.duality",),
    "equivalence map preserves stable points": ("stable.equivalence",),
    "level set is the graph of a unique function": ("core.implicit_unique",),
    "analytic gradients": ("core.gradient_fd",),
    "trades stay on the manifold and reverse exactly": ("core.trade_reversal",),
    "projection preserves stable points": ("operators.projection_stable",),
    "unique shift along a valuation": ("operators.along_valuation",),
    "virtualized AMM is an AMM": ("operators.virtual_axioms", "operators.devirtualize"),
    "virtualization stable point": ("operators.virtual_stable",),
    "one-to-one composition closed form": ("compose.seq_closed_form",),
    "sequential composition is an AMM": ("compose.seq_closure",),
    "sequential composition preserves stable points": ("compose.seq_stable",),
    "converse of stable preservation fails": ("compose.seq_converse", "compose.seq_converse_oracle"),
    "naive many-to-many composition is ambiguous": ("compose.naive_ambiguity",
                                                  "compose.naive_states_valid"),
    "virtualized many-to-many composition preserves stable points": ("compose.many_to_many_stable",),
    "parallel composition is an AMM": ("compose.par_closure",),
    "parallel composition keeps the zero-delta anchor stable": ("compose.par_stable",),
    "virtualized parallel composition keeps the anchor stable": ("compose.par_virtual_stable",),
    "optimal split equalizes marginal rates": ("compose.optimal_split", "compose.split_ordering"),
    "fees are composition with a linear AMM": ("fees.path_equality", "fees.leg_identities"),
}


def assert_coverage(report: VerifyReport, theorems: dict[str, tuple[str, ...]] = THEOREMS) -> None:
    """Raise :class:`CoverageError` if some registered property has no case."""
    present = report.check_ids()
    missing = [name for name, ids in theorems.items() if not any(i in present for i in ids)]
    if missing:
        raise CoverageError(f"properties without checks: {missing}")


# --------------------------------------------------------------------------
# random instances

def random_level(rng) -> float:
    return float(math.exp(rng.uniform(math.log(0.1), math.log(100.0))))


def random_weights(rng, n: int, lo: float = 1e-3) -> np.ndarray:
    """Normalized log-uniform draw clamped to ``[lo, 1 - lo]``."""
    raw = np.exp(rng.uniform(math.log(lo), 0.0, n))
    v = raw / raw.sum()
    v = np.clip(v, lo, 1 - lo)
    return v / v.sum()


def random_valuation(rng, assets: Sequence[str], lo: float = 1e-3) -> Valuation:
    v = random_weights(rng, len(assets), lo)
    return Valuation(tuple(assets), tuple(float(w) for w in v))


def random_def(rng, assets: Sequence[str], family: str | None = None) -> AmmDef:
    family = family or ("cp" if rng.random() < 0.5 else "cm")
    c = random_level(rng)
    if family == "cp":
        return ConstantProduct(tuple(assets), c)
    w = tuple(float(x) for x in rng.uniform(0.5, 3.0, len(assets)))
    return ConstantMean(tuple(assets), w, c)


def stable_instance(defn: AmmDef, v: Valuation) -> AmmInstance:
    res = stable_point(defn, v)
    return AmmInstance(defn, res.state)


def _names(prefix: str, n: int) -> tuple[str, ...]:
    return tuple(f"{prefix}{i + 1}" for i in range(n))


# --------------------------------------------------------------------------
# case helpers

@dataclass(frozen=True)
class _Ctx:
    seed: int
    samples: int
    tol: Tolerances

    def count(self, reference: int, minimum: int = 2) -> int:
        return max(minimum, int(round(reference * self.samples / REFERENCE_SAMPLES)))


def _case(check_id, label, residual, tolerance, *, passed=None, note="", expected="pass", inputs=()):
    residual = float(residual)
    if passed is None:
        passed = math.isfinite(residual) and residual <= tolerance
    return Case(check_id, label, bool(passed), residual, float(tolerance),
                digest(check_id, label, *inputs), note, expected)


def _error_case(check_id, label, exc, tolerance=0.0, expected="pass", inputs=()):
    return Case(check_id, label, False, math.nan, float(tolerance), digest(check_id, label, *inputs),
                f"{type(exc).__name__}: {exc}", expected)


def _guard(check_id: str, label: str, fn: Callable[[], Case | list[Case]], tolerance=0.0) -> list[Case]:
    try:
        out = fn()
    except (AmmError, ArithmeticError, ValueError, np.linalg.LinAlgError) as exc:
        return [_error_case(check_id, label, exc, tolerance)]
    return out if isinstance(out, list) else [out]


def _rel(a, b) -> float:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return float(np.max(np.abs(a - b) / np.maximum(np.abs(b), 1e-300)))


def _perturbed_init(defn: AmmDef, x: np.ndarray, rng, tol: Tolerances, delta: bool = False):
    """An on-manifold state near ``x`` reached by a random trade on the first coordinates."""
    for _ in range(20):
        y = x.copy()
        for i in range(defn.dim - 1):
            if delta:
                y[i] = x[i] + rng.uniform(-0.2, 0.2) * max(1.0, abs(x[i]))
            else:
                y[i] = x[i] * math.exp(rng.uniform(-0.3, 0.3))
        try:
            y[-1] = float(solve_coordinate(defn, list(y), defn.dim - 1, tol))
        except AmmError:
            continue
        if delta or y[-1] > tol.positivity_floor:
            return y
    return x


# --------------------------------------------------------------------------
# built-in fixtures

@dataclass(frozen=True)
class Fixture:
    label: str
    defn: AmmDef
    box: object
    state: StateVector | None = None


def eq1_instance(a=1, b=1) -> AmmInstance:
    A = AmmInstance(ConstantProduct(("X", "Z"), 1), StateVector(("X", "Z"), (a, 1 / Fraction(a) if isinstance(a, (int, Fraction)) else 1 / a)))
    B = AmmInstance(ConstantProduct(("Z", "Y"), 1), StateVector(("Z", "Y"), (b, 1 / Fraction(b) if isinstance(b, (int, Fraction)) else 1 / b)))
    return seq_compose_2d(A, B)


def bob_carol() -> tuple[AmmInstance, AmmInstance]:
    bob = AmmInstance(ConstantMean(("X", "Y"), (2, 1), Fraction(3, 4)),
                      StateVector(("X", "Y"), (1, Fraction(3, 4))))
    carol = AmmInstance(ConstantProduct(("X", "Y"), 1), StateVector(("X", "Y"), (1, 1)))
    return bob, carol


def virtualization_fixture() -> AmmInstance:
    base = AmmInstance(ConstantProduct(("X", "Y", "Z"), 8), StateVector(("X", "Y", "Z"), (2, 2, 2)))
    inst, _ = virtualize(base, ("Y", "Z"), Valuation(("Y", "Z"), (Fraction(2, 3), Fraction(1, 3))), name="W")
    return inst


def many_to_many_fixture() -> AmmInstance:
    A = AmmInstance(ConstantProduct(("W", "X", "Y"), 1), StateVector(("W", "X", "Y"), (1, 1, 1)))
    B = AmmInstance(ConstantProduct(("X", "Y", "Z"), 8), StateVector(("X", "Y", "Z"), (2, 2, 2)))
    w = Valuation(("X", "Y"), (Fraction(1, 2), Fraction(1, 2)))
    return seq_compose_many_to_many(A, B, w, name="V")


def fee_composition_fixture(gamma=Fraction(3, 1000), delta=1) -> AmmInstance:
    from .fees import input_linear_leg
    from .core import Relabeled
    leg = input_linear_leg(1, gamma, delta, ("X", "X#net"))
    amm = AmmInstance(Relabeled(ConstantProduct(("X", "Y"), 1), ("X#net", "Y")),
                      StateVector(("X#net", "Y"), (1, 1)))
    return seq_compose_many_to_one(leg, amm, "X#net", allow_linear=True)


def builtin_fixtures() -> list[Fixture]:
    """Conforming families, composed/virtualized/projected fixtures, and one linear AMM."""
    bob, carol = bob_carol()
    seq_m1 = seq_compose_many_to_one(
        AmmInstance(ConstantProduct(("X1", "X2", "Z"), 8), StateVector(("X1", "X2", "Z"), (2, 2, 2))),
        AmmInstance(ConstantProduct(("Z", "Y"), 1), StateVector(("Z", "Y"), (2, Fraction(1, 2)))))
    return [
        Fixture("constant_product_2d", ConstantProduct(("X", "Y"), 1), (0.1, 10.0)),
        Fixture("constant_product_3d", ConstantProduct(("X", "Y", "Z"), 8), (0.25, 16.0)),
        Fixture("constant_product_4d", ConstantProduct(("A", "B", "C", "D"), 2), (0.25, 8.0)),
        Fixture("constant_mean_2d", bob.defn, (0.1, 10.0)),
        Fixture("constant_mean_3d", ConstantMean(("X", "Y", "Z"), (1, 2, 0.5), 3), (0.25, 8.0)),
        Fixture("seq_one_to_one", eq1_instance().defn, [(0.6, 10.0), (0.5, 3.0)]),
        Fixture("seq_many_to_one", seq_m1.defn, [(1.5, 6.0), (1.5, 6.0), (0.1, 2.0)]),
        Fixture("seq_many_to_many", many_to_many_fixture().defn, [(0.2, 10.0), (0.2, 20.0)]),
        Fixture("virtualized", virtualization_fixture().defn, [(0.5, 8.0), (0.5, 12.0)]),
        Fixture("projected", project(ConstantProduct(("X", "Y", "Z"), 8), {"X": 4}), (0.1, 10.0)),
        Fixture("par_split", par_compose(bob, carol, 0.5).defn, [(-0.8, 3.0), (0.5, 3.0)]),
        Fixture("linear", Linear(("X", "Y"), (1, 1), 3), (0.1, 2.9)),
    ]


def broken_fixture() -> Fixture:
    """A graph of an affine function: monotone but not strictly convex, yet flagged conforming."""
    return Fixture("affine_graph", ExplicitGraph(("X", "Y"), lambda xs: 2 - xs[0],
                                                 dh=lambda xs: [-1.0], lower=(0.0,), label="2 - x"),
                   (0.1, 1.9))


# --------------------------------------------------------------------------
# axiom suite

def _grid_unique(defn: AmmDef, v: Valuation, box, x_star: np.ndarray, tol: Tolerances):
    """On a 2-asset def: near-minimal grid points form one cluster around the solver's minimum."""
    lo, hi = box[0] if hasattr(box[0], "__len__") else box
    grid = 400
    axis = np.geomspace(lo, hi, grid) if lo > 0 else np.linspace(lo, hi, grid)
    costs = np.full(grid, np.inf)
    vv = v.array
    for i, x in enumerate(axis):
        try:
            y = float(solve_coordinate(defn, [x, 1.0], 1, tol))
        except AmmError:
            continue
        costs[i] = vv[0] * x + vv[1] * y
    finite = np.isfinite(costs)
    if not finite.any():
        raise AmmError("no feasible grid point")
    k = int(np.argmin(costs))
    # strict local minima of the sampled cost
    interior = [i for i in range(1, grid - 1)
                if finite[i - 1] and finite[i + 1] and costs[i] < costs[i - 1] and costs[i] < costs[i + 1]]
    step = axis[min(k + 1, grid - 1)] - axis[max(k - 1, 0)]
    off = abs(axis[k] - x_star[0])
    passed = len(interior) <= 1 and (off <= step or k in (0, grid - 1))
    return off, step, passed, len(interior)


def run_axiom_suite(fixtures: Iterable[Fixture] | None = None, samples: int = 1000, seed: int = 0,
                    tol: Tolerances = DEFAULT_TOL) -> VerifyReport:
    """Axiom checks plus expressivity, stability and uniqueness on each fixture."""
    t0 = time.perf_counter()
    fixtures = list(builtin_fixtures() if fixtures is None else fixtures)
    ctx = _Ctx(seed, samples, tol)
    cases: list[Case] = []
    n_val = ctx.count(20, minimum=3)
    for fx in fixtures:
        d = fx.defn
        rep = check_axioms(d, fx.box, samples=max(samples, 10), seed=seed, tol=tol, label=fx.label)
        cases.extend(rep.cases)
        if not d.axiom_conforming:
            cases.append(_expressivity_nonconforming(fx, tol))
            continue
        rng = rng_for(seed, "expressivity", fx.label)
        worst_kkt = worst_round = 0.0
        ok = True
        note = ""
        uniq_cases = []
        for j in range(n_val):
            v = random_valuation(rng, d.assets, lo=1e-2)
            try:
                res = stable_point(d, v, tol=tol)
                worst_kkt = max(worst_kkt, res.residual_kkt)
                back = valuation_of(d, res.state, tol)
                worst_round = max(worst_round, float(np.max(np.abs(back.array - v.array))))
                if d.dim == 2 and j < 3:
                    off, step, passed, nmin = _grid_unique(d, v, fx.box, res.state.array, tol)
                    uniq_cases.append(_case("axiom.uniqueness", f"{fx.label}#{j}", off, step, passed=passed,
                                            note=f"grid minima {nmin}; offset vs grid step",
                                            inputs=(v.weights,)))
                elif j < 3:
                    init = _perturbed_init(d, res.state.array, rng, tol, d.delta_coords)
                    res2 = stable_point(d, v, init=init, tol=tol, closed_form=False)
                    off = _rel(res2.state.array, res.state.array) if not d.delta_coords else \
                        float(np.max(np.abs(res2.state.array - res.state.array)))
                    uniq_cases.append(_case("axiom.uniqueness", f"{fx.label}#{j}", off, 1e-6,
                                            note="two starts reach the same stable point",
                                            inputs=(v.weights,)))
            except AmmError as exc:
                ok = False
                note = f"{type(exc).__name__}: {exc}"
                break
        dig = digest(fx.label, n_val, seed)
        extra = f"; {SAMPLED_ONLY}" if fx.label.startswith(("seq", "par", "fee")) else ""
        cases.append(Case("axiom.expressivity", fx.label, ok and worst_kkt <= tol.kkt, worst_kkt, tol.kkt, dig,
                          (note or f"stable point found for {n_val} valuations") + extra))
        cases.append(Case("axiom.stability", fx.label, ok and worst_round <= 1e-6, worst_round, 1e-6, dig,
                          "valuation_of(stable_point(v)) vs v" + extra))
        cases.extend(uniq_cases)
    return VerifyReport("axioms", tuple(cases), seed, time.perf_counter() - t0)


def _expressivity_nonconforming(fx: Fixture, tol: Tolerances) -> Case:
    v = Valuation(fx.defn.assets, tuple([1.0 / fx.defn.dim] * fx.defn.dim))
    try:
        stable_point(fx.defn, v, tol=tol)
    except AmmError as exc:
        return Case("axiom.expressivity", fx.label, False, math.nan, 0.0, digest(fx.label),
                    f"solver rejected: {exc}", "fail")
    return Case("axiom.expressivity", fx.label, True, 0.0, 0.0, digest(fx.label),
                "solver unexpectedly accepted a non-conforming AMM", "fail")


# --------------------------------------------------------------------------
# core checks

def _check_gradient_fd(ctx: _Ctx) -> list[Case]:
    rng = rng_for(ctx.seed, "core.gradient_fd")
    out = []
    for i in range(ctx.count(1000)):
        n = int(rng.integers(2, 6))
        assets = _names("X", n)
        fam = ("cp", "cm", "lin")[i % 3]
        if fam == "lin":
            d = Linear(assets, tuple(float(x) for x in rng.uniform(0.5, 2.0, n)), random_level(rng))
        else:
            d = random_def(rng, assets, fam)
        u = np.exp(rng.uniform(-1.5, 1.5, n))
        if fam == "lin":
            x = u * d.level / float(np.dot(d.lam, u))
        else:
            x = stable_point(d, random_valuation(rng, assets)).state.array
        g = d.grad(x)
        fd = fd_gradient(d.value, x)
        res = float(np.max(np.abs(g - fd)) / np.max(np.abs(g)))
        out.append(_case("core.gradient_fd", f"{i}", res, 1e-6, inputs=(d.describe(), x.tolist())))
    return out


def _check_implicit_unique(ctx: _Ctx) -> list[Case]:
    rng = rng_for(ctx.seed, "core.implicit_unique")
    out = []
    for i in range(ctx.count(100)):
        n = int(rng.integers(2, 6))
        d = random_def(rng, _names("X", n))
        vals = list(np.exp(rng.uniform(-1.5, 1.5, n)))

        def run():
            z = float(solve_coordinate(d, vals, n - 1, ctx.tol, closed_form=False))
            grid = np.geomspace(z * 1e-3, z * 1e3, 1000)
            signs = []
            for q in grid:
                y = np.array(vals, dtype=float)
                y[-1] = q
                signs.append(np.sign(d.value(y)))
            changes = int(np.sum(np.diff(signs) != 0))
            y = np.array(vals, dtype=float)
            y[-1] = z
            resid = abs(d.value(y)) / (1 + float(np.linalg.norm(d.grad(y))))
            return _case("core.implicit_unique", f"{i}", resid, ctx.tol.implicit, passed=changes == 1 and
                         resid <= ctx.tol.implicit, note=f"{changes} sign change(s) over the scan",
                         inputs=(d.describe(), vals))
        out.extend(_guard("core.implicit_unique", f"{i}", run, ctx.tol.implicit))
    return out


def _check_trade_reversal(ctx: _Ctx) -> list[Case]:
    rng = rng_for(ctx.seed, "core.trade_reversal")
    out = []
    for i in range(ctx.count(100)):
        n = int(rng.integers(2, 6))
        d = random_def(rng, _names("X", n))
        v = random_valuation(rng, d.assets, lo=0.05)

        def run():
            inst = stable_instance(d, v)
            deltas = {a: float(inst.state[a]) * rng.uniform(-0.5, 1.0) for a in d.assets[:-1]}
            new, pl = trade(inst, deltas, d.assets[-1])
            man = abs(d.value(new.x))
            back, _ = trade(new, {a: -q for a, q in deltas.items()}, d.assets[-1])
            err = float(np.max(np.abs(back.x - inst.x)))
            ok = err <= 1e-9 * max(1.0, float(np.max(inst.x))) and man <= manifold_bound(d, new.x, ctx.tol.manifold)
            return _case("core.trade_reversal", f"{i}", err, 1e-9, passed=ok,
                         note=f"|A| after trade {man:.3g}", inputs=(d.describe(), sorted(deltas.items())))
        out.extend(_guard("core.trade_reversal", f"{i}", run, 1e-9))
    return out


# --------------------------------------------------------------------------
# stable-point checks

def _check_closed_form(ctx: _Ctx) -> list[Case]:
    rng = rng_for(ctx.seed, "stable.closed_form")
    out = []
    for i in range(ctx.count(100)):
        c = random_level(rng)
        v = float(random_weights(rng, 2)[0])
        d = ConstantProduct(("X", "Y"), c)
        val = Valuation(("X", "Y"), (v, 1 - v))
        exp = np.array([math.sqrt(c * (1 - v) / v), math.sqrt(c * v / (1 - v))])

        def run():
            a = stable_point(d, val, tol=ctx.tol).state.array
            b = stable_point(d, val, tol=ctx.tol, closed_form=False).state.array
            res = max(_rel(a, exp), _rel(b, exp))
            return _case("stable.closed_form", f"{i}", res, 1e-8, note="closed form and Newton path",
                         inputs=(c, v))
        out.extend(_guard("stable.closed_form", f"{i}", run, 1e-8))
    return out


def _check_duality(ctx: _Ctx) -> list[Case]:
    rng = rng_for(ctx.seed, "stable.duality")
    out = []
    for i in range(ctx.count(200)):
        n = 2 + i % 4
        d = random_def(rng, _names("X", n), ("cp", "cm")[(i // 4) % 2])
        v = random_valuation(rng, d.assets)

        def run():
            res = stable_point(d, v, tol=ctx.tol)
            back = valuation_of(d, res.state, ctx.tol)
            err = float(np.max(np.abs(back.array - v.array)))
            g = d.grad(res.state.array)
            lam_err = abs(res.lagrange_lambda * float(np.sum(g)) - 1.0)
            ok = err <= 1e-6 and res.lagrange_lambda > 0 and lam_err <= 1e-8
            return [_case("stable.duality", f"{i}", err, 1e-6, passed=ok, inputs=(d.describe(), v.weights),
                          note=f"lambda={res.lagrange_lambda:.6g}"),
                    _case("stable.kkt", f"{i}", res.residual_kkt, ctx.tol.kkt,
                          passed=res.residual_kkt <= ctx.tol.kkt and res.residual_manifold <=
                          manifold_bound(d, res.state.array, ctx.tol.manifold),
                          inputs=(d.describe(), v.weights), note=f"|A|={res.residual_manifold:.3g}")]
        out.extend(_guard("stable.duality", f"{i}", run, 1e-6))
    return out


def _check_minimality(ctx: _Ctx) -> list[Case]:
    rng = rng_for(ctx.seed, "stable.minimality")
    out = []
    for i in range(ctx.count(20)):
        n = int(rng.integers(2, 6))
        d = random_def(rng, _names("X", n))
        v = random_valuation(rng, d.assets)

        def run():
            x = stable_point(d, v, tol=ctx.tol).state.array
            best = float(np.dot(v.array, x))
            worst = math.inf
            for _ in range(100):
                y = x * np.exp(rng.uniform(-1.5, 1.5, n))
                y[-1] = float(solve_coordinate(d, list(y), n - 1, ctx.tol))
                worst = min(worst, float(np.dot(v.array, y)) - best)
            slack = 1e-10 * abs(best)
            return _case("stable.minimality", f"{i}", max(0.0, -worst), slack, passed=worst >= -slack,
                         note=f"best improvement over 100 on-manifold points; closest gap {worst:.3g}", inputs=(d.describe(), v.weights))
        out.extend(_guard("stable.minimality", f"{i}", run))
    return out


def _check_equivalence(ctx: _Ctx) -> list[Case]:
    rng = rng_for(ctx.seed, "stable.equivalence")
    out = []
    for i in range(ctx.count(50)):
        n = int(rng.integers(2, 6))
        da = random_def(rng, _names("X", n))
        db = random_def(rng, _names("X", n))
        v = random_valuation(rng, da.assets)

        def run():
            x = stable_point(da, v, tol=ctx.tol).state
            y = equivalence_map(da, db, x, ctx.tol)
            back = equivalence_map(db, da, y, ctx.tol)
            man = abs(db.value(y.array))
            err = _rel(back.array, x.array)
            return _case("stable.equivalence", f"{i}", err, 1e-7,
                         passed=err <= 1e-7 and man <= manifold_bound(db, y.array, ctx.tol.manifold),
                         inputs=(da.describe(), db.describe(), v.weights))
        out.extend(_guard("stable.equivalence", f"{i}", run, 1e-7))
    return out


# --------------------------------------------------------------------------
# operator checks

def _check_projection(ctx: _Ctx) -> list[Case]:
    rng = rng_for(ctx.seed, "operators.projection_stable")
    out = []
    for i in range(ctx.count(100)):
        n = int(rng.integers(3, 6))
        d = random_def(rng, _names("X", n))
        v = random_valuation(rng, d.assets)
        k = int(rng.integers(1, n - 1))

        def run():
            x = stable_point(d, v, tol=ctx.tol).state
            fixed = {a: x[a] for a in d.assets[:k]}
            p = project(d, fixed)
            sub = inherit_valuation(v, p.assets)
            y = stable_point(p, sub, tol=ctx.tol).state
            err = _rel(y.array, np.array([x[a] for a in p.assets]))
            return _case("operators.projection_stable", f"{i}", err, 1e-6, inputs=(d.describe(), v.weights, k))
        out.extend(_guard("operators.projection_stable", f"{i}", run, 1e-6))
    return out


def _check_along_valuation(ctx: _Ctx) -> list[Case]:
    rng = rng_for(ctx.seed, "operators.along_valuation")
    out = []
    for i in range(ctx.count(50)):
        n = int(rng.integers(3, 6))
        d = random_def(rng, _names("X", n))
        m = int(rng.integers(2, n))
        names = d.assets[n - m:]
        a_prime = {a: float(np.exp(rng.uniform(-1, 1))) for a in d.assets[: n - m]}
        b = {a: float(np.exp(rng.uniform(-1, 1))) for a in names}
        v = random_weights(rng, m, lo=0.05)

        def run():
            t = solve_along_valuation(d, a_prime, b, tuple(v), ctx.tol)
            x = np.empty(n)
            for a, q in a_prime.items():
                x[d.index(a)] = q
            for a, w in zip(names, v):
                x[d.index(a)] = b[a] + t * w
            resid = abs(d.value(x)) / (1 + float(np.linalg.norm(d.grad(x))))
            return _case("operators.along_valuation", f"{i}", resid, ctx.tol.implicit,
                         passed=resid <= ctx.tol.implicit and np.all(x > 0),
                         note=f"t={t:.6g}", inputs=(d.describe(), sorted(a_prime.items()), sorted(b.items())))
        out.extend(_guard("operators.along_valuation", f"{i}", run, ctx.tol.implicit))
    return out


def _joint(rng, sizes: Sequence[int], lo=1e-2) -> list[np.ndarray]:
    v = random_weights(rng, sum(sizes), lo)
    out, k = [], 0
    for s in sizes:
        out.append(v[k:k + s])
        k += s
    return out


def _val(assets, raw) -> Valuation:
    raw = np.asarray(raw, dtype=float)
    return Valuation(tuple(assets), tuple(float(w) for w in raw / raw.sum()))


def _check_virtual(ctx: _Ctx) -> list[Case]:
    rng = rng_for(ctx.seed, "operators.virtual_stable")
    out = []
    for i in range(ctx.count(50)):
        p = int(rng.integers(1, 3))
        m = int(rng.integers(2, 4))
        xs, ys = _names("X", p), _names("Y", m)
        d = random_def(rng, xs + ys)
        vx, w = _joint(rng, (p, m))

        def run():
            star = stable_point(d, _val(xs + ys, np.concatenate([vx, w])), tol=ctx.tol).state
            # anchor on a different state whose subset lies on b* + s w
            s = rng.uniform(-0.3, 0.3) * float(min(star[a] / wi for a, wi in zip(ys, w)))
            bvals = {a: star[a] + s * wi for a, wi in zip(ys, w)}
            vals = [star[a] for a in xs] + [bvals[a] for a in ys]
            vals[0] = 1.0
            vals[0] = float(solve_coordinate(d, vals, 0, ctx.tol))
            anchor = AmmInstance(d, StateVector(xs + ys, tuple(vals)))
            vinst, spec = virtualize(anchor, ys, tuple(w), name="V")
            target = _val(xs + ("V",), np.concatenate([vx, [float(np.dot(w, w))]]))
            res = stable_point(vinst.defn, target, tol=ctx.tol)
            err = _rel(res.state.array[:p], np.array([star[a] for a in xs]))
            under = devirtualize(spec, res.state)
            back = devirtualize(spec, vinst.state, base_assets=d.assets)
            exact = tuple(back.values) == tuple(anchor.state.values)
            man = abs(d.value(under.reordered(d.assets).array))
            return [
                _case("operators.virtual_stable", f"{i}", err, 1e-6, inputs=(d.describe(), vx.tolist(), w.tolist())),
                _case("operators.devirtualize", f"{i}", man, manifold_bound(d, under.reordered(d.assets).array,
                                                                             ctx.tol.manifold),
                      passed=exact and man <= manifold_bound(d, under.reordered(d.assets).array, ctx.tol.manifold),
                      note="anchor round trip exact; off-anchor on manifold", inputs=(d.describe(), s)),
            ]
        out.extend(_guard("operators.virtual_stable", f"{i}", run, 1e-6))
    return out


def _closure_case(check_id: str, label: str, defn: AmmDef, box, ctx: _Ctx) -> Case:
    rep = check_axioms(defn, box, samples=ctx.count(200, minimum=20), seed=ctx.seed, tol=ctx.tol, label=label)
    bad = [c.check_id for c in rep.cases if not c.passed]
    conv = [c for c in rep.cases if c.check_id == "axiom.convexity"][0]
    return Case(check_id, label, not bad, conv.residual, conv.tolerance, digest(check_id, label),
                ("failed: " + ",".join(bad) if bad else "monotone, strictly convex, positive gradient")
                + f"; {SAMPLED_ONLY}")


def _check_virtual_axioms(ctx: _Ctx) -> list[Case]:
    rng = rng_for(ctx.seed, "operators.virtual_axioms")
    out = []
    for i in range(ctx.count(5)):
        n = int(rng.integers(3, 5))
        d = random_def(rng, _names("X", n))
        v = random_valuation(rng, d.assets, lo=0.05)

        def run():
            inst = stable_instance(d, v)
            m = int(rng.integers(2, n))
            sub = d.assets[n - m:]
            vinst, _ = virtualize(inst, sub, tuple(random_weights(rng, m, lo=0.05)), name="V")
            box = [(q / 3, q * 3) for q in vinst.x]
            return _closure_case("operators.virtual_axioms", f"{i}", vinst.defn, box, ctx)
        out.extend(_guard("operators.virtual_axioms", f"{i}", run))
    f = virtualization_fixture()
    out.append(_closure_case("operators.virtual_axioms", "fixture", f.defn, [(0.5, 8.0), (0.5, 12.0)], ctx))
    return out


# --------------------------------------------------------------------------
# sequential composition

def _check_eq1(ctx: _Ctx) -> list[Case]:
    rng = rng_for(ctx.seed, "compose.seq_closed_form")
    out = []
    for i in range(ctx.count(10)):
        a = float(np.exp(rng.uniform(-1, 1)))
        b = float(np.exp(rng.uniform(-1, 1)))
        d = eq1_instance(a, b).defn
        lo = a / (1 + a * b)
        worst = 0.0
        for _ in range(50):
            x = lo * math.exp(rng.uniform(0.05, 3.0))
            h = float(d.output([x]))
            worst = max(worst, abs(h - a * x / (x - a + a * b * x)) / abs(a * x / (x - a + a * b * x)))
        out.append(_case("compose.seq_closed_form", f"{i}", worst, 1e-10, inputs=(a, b)))
    d = eq1_instance().defn
    pts = [Fraction(p, q) for p, q in ((1, 1), (2, 3), (3, 2), (5, 7), (7, 3), (10, 1))]
    exact = all(d.output([x]) == x / (2 * x - 1) for x in pts)
    out.append(_case("compose.seq_closed_form", "unit", 0.0, 0.0, passed=exact, note="x/(2x-1) exactly at rationals"))
    return out


def _seq_instance(rng, ctx: _Ctx):
    m = int(rng.integers(1, 3))
    k = int(rng.integers(1, 3))
    xs, ys = _names("X", m), _names("Y", k)
    A = random_def(rng, xs + ("Z",))
    B = random_def(rng, ("Z",) + ys)
    v, w, vp = _joint(rng, (m, 1, k))
    Ai = stable_instance(A, _val(A.assets, np.concatenate([v, w])))
    Bi = stable_instance(B, _val(B.assets, np.concatenate([w, vp])))
    return Ai, Bi, v, vp


def _check_seq_stable(ctx: _Ctx) -> list[Case]:
    rng = rng_for(ctx.seed, "compose.seq_stable")
    out = []
    for i in range(ctx.count(50)):
        def run():
            Ai, Bi, v, vp = _seq_instance(rng, ctx)
            comp = seq_compose_many_to_one(Ai, Bi)
            d = comp.defn
            target = _val(d.assets, np.concatenate([v, vp]))
            init = _perturbed_init(d, comp.x, rng, ctx.tol)
            res = stable_point(d, target, init=init, tol=ctx.tol)
            err = _rel(res.state.array, comp.x)
            return _case("compose.seq_stable", f"{i}", err, 1e-6, note=f"newton from perturbed start; {SAMPLED_ONLY}",
                         inputs=(d.describe(), v.tolist(), vp.tolist()))
        out.extend(_guard("compose.seq_stable", f"{i}", run, 1e-6))
    return out


def converse_fixture():
    """A = B = xy = 1 at (1, 1); valuation (1/4, 1/2, 1/4) over (X, Z, Y)."""
    A = AmmInstance(ConstantProduct(("X", "Z"), 1), StateVector(("X", "Z"), (1, 1)))
    B = AmmInstance(ConstantProduct(("Z", "Y"), 1), StateVector(("Z", "Y"), (1, 1)))
    comp = seq_compose_2d(A, B)
    sa = stable_point(A.defn, Valuation(("X", "Z"), (Fraction(1, 3), Fraction(2, 3)))).state
    sb = stable_point(B.defn, Valuation(("Z", "Y"), (Fraction(2, 3), Fraction(1, 3)))).state
    oracle = brute_force_stable(comp.defn, Valuation(("X", "Y"), (0.5, 0.5)), grid=400, box=(0.55, 20.0), refine=3)
    return comp, sa, sb, oracle


def _check_converse(ctx: _Ctx) -> list[Case]:
    def run():
        comp, sa, sb, oracle = converse_fixture()
        exp_a = np.array([math.sqrt(2), math.sqrt(2) / 2])
        exp_b = np.array([math.sqrt(2) / 2, math.sqrt(2)])
        off = max(_rel(sa.array, exp_a), _rel(sb.array, exp_b))
        # the converse would need the constituents to be stable at their (1, 1) anchors
        anchored = max(float(np.max(np.abs(sa.array - 1))), float(np.max(np.abs(sb.array - 1))))
        oerr = float(np.max(np.abs(oracle.array - 1.0)))
        return [
            Case("compose.seq_converse", "xy=1 twice", anchored <= 1e-6 and off <= 1e-12, anchored, 1e-6,
                 digest("converse"), f"constituent stable points differ from anchors (offset vs sqrt form {off:.2g})",
                 "fail"),
            _case("compose.seq_converse_oracle", "xy=1 twice", oerr, 1e-4,
                  note="(1, 1) is the composed grid-oracle minimum"),
        ]
    return _guard("compose.seq_converse", "xy=1 twice", run)


def _check_naive(ctx: _Ctx) -> list[Case]:
    def run():
        s1, s2, detail = naive_ambiguity_detail()
        same = s1 == s2
        ok_states = (s1.values == (4, Fraction(8, 25)) and s2.values == (4, Fraction(1, 3)))
        valid = all(w * x * y == 1 for w, x, y in detail.upstream_states) and \
            all(x * y * z == 2 for x, y, z in detail.downstream_states)
        s8 = demonstrate_naive_ambiguity(8)
        valid8 = s8[0].values == (4, Fraction(32, 25)) and s8[1].values == (4, Fraction(4, 3))
        return [
            Case("compose.naive_ambiguity", "wxy=1, xyz", same, float(abs(s1.values[1] - s2.values[1])), 0.0,
                 digest("naive"), "two transfer choices give different (w, z) states", "fail"),
            _case("compose.naive_states_valid", "level 2", 0.0, 0.0, passed=ok_states and valid,
                  note="(4, 8/25) and (4, 1/3) satisfy both constraints exactly"),
            _case("compose.naive_states_valid", "level 8", 0.0, 0.0, passed=valid8,
                  note="(4, 32/25) and (4, 4/3) with xyz = 8"),
        ]
    return _guard("compose.naive_ambiguity", "wxy=1, xyz", run)


def _check_many_to_many(ctx: _Ctx) -> list[Case]:
    rng = rng_for(ctx.seed, "compose.many_to_many_stable")
    out = []
    for i in range(ctx.count(20)):
        def run():
            n, k, m = int(rng.integers(1, 3)), int(rng.integers(2, 4)), int(rng.integers(1, 3))
            xs, hs, ys = _names("X", n), _names("H", k), _names("Y", m)
            A = random_def(rng, xs + hs)
            B = random_def(rng, hs + ys)
            v, w, vp = _joint(rng, (n, k, m))
            Ai = stable_instance(A, _val(A.assets, np.concatenate([v, w])))
            Bi = stable_instance(B, _val(B.assets, np.concatenate([w, vp])))
            comp = seq_compose_many_to_many(Ai, Bi, tuple(w), name="V")
            d = comp.defn
            target = _val(d.assets, np.concatenate([v, vp]))
            init = _perturbed_init(d, comp.x, rng, ctx.tol)
            res = stable_point(d, target, init=init, tol=ctx.tol)
            err = _rel(res.state.array, comp.x)
            return _case("compose.many_to_many_stable", f"{i}", err, 1e-6, note=SAMPLED_ONLY,
                         inputs=(d.describe(), v.tolist(), w.tolist(), vp.tolist()))
        out.extend(_guard("compose.many_to_many_stable", f"{i}", run, 1e-6))
    return out


def _check_seq_closure(ctx: _Ctx) -> list[Case]:
    rng = rng_for(ctx.seed, "compose.seq_closure")
    out = [_closure_case("compose.seq_closure", "one_to_one", eq1_instance().defn, [(0.6, 10.0), (0.5, 3.0)], ctx),
           _closure_case("compose.seq_closure", "many_to_many", many_to_many_fixture().defn,
                         [(0.2, 10.0), (0.2, 20.0)], ctx)]
    for i in range(ctx.count(3, minimum=1)):
        def run():
            Ai, Bi, _, _ = _seq_instance(rng, ctx)
            comp = seq_compose_many_to_one(Ai, Bi)
            box = [(q / 1.5, q * 1.5) for q in comp.x]
            return _closure_case("compose.seq_closure", f"random{i}", comp.defn, box, ctx)
        out.extend(_guard("compose.seq_closure", f"random{i}", run))
    return out


# --------------------------------------------------------------------------
# parallel composition

T_VALUES = (0.0, 0.25, 0.5, 0.75, 1.0)


def _check_par_stable(ctx: _Ctx) -> list[Case]:
    rng = rng_for(ctx.seed, "compose.par_stable")
    out = []
    for i in range(ctx.count(10)):
        n = 2 if i % 2 == 0 else 3
        assets = _names("X", n - 1) + ("Y",)
        A = random_def(rng, assets)
        B = random_def(rng, assets)
        v = random_valuation(rng, assets, lo=0.02)

        def run():
            Ai, Bi = stable_instance(A, v), stable_instance(B, v)
            worst = 0.0
            for t in T_VALUES:
                comp = par_compose(Ai, Bi, t if n == 2 else (t, float(rng.uniform()))
                                   )
                d = comp.defn
                init = _perturbed_init(d, comp.x, rng, ctx.tol, delta=True)
                res = stable_point(d, v, init=init, tol=ctx.tol)
                worst = max(worst, float(np.max(np.abs(res.state.array - comp.x) / np.maximum(1.0, np.abs(comp.x)))))
            return _case("compose.par_stable", f"{i}", worst, 1e-6, note=f"t in {T_VALUES}; {SAMPLED_ONLY}",
                         inputs=(A.describe(), B.describe(), v.weights))
        out.extend(_guard("compose.par_stable", f"{i}", run, 1e-6))
    return out


def _check_par_virtual(ctx: _Ctx) -> list[Case]:
    rng = rng_for(ctx.seed, "compose.par_virtual_stable")
    out = []
    for i in range(ctx.count(10)):
        def run():
            p, q = int(rng.integers(1, 3)), int(rng.integers(2, 4))
            xs, ys = _names("X", p), _names("Y", q)
            A = random_def(rng, xs + ys)
            B = random_def(rng, xs + ys)
            v, vp = _joint(rng, (p, q), lo=0.02)
            val = _val(xs + ys, np.concatenate([v, vp]))
            Av, _ = virtualize(stable_instance(A, val), ys, tuple(vp), name="V")
            Bv, _ = virtualize(stable_instance(B, val), ys, tuple(vp), name="V")
            target = _val(xs + ("V",), np.concatenate([v, [float(np.dot(vp, vp))]]))
            t = tuple(float(x) for x in rng.uniform(0, 1, p))
            comp = par_compose(Av, Bv, t)
            d = comp.defn
            init = _perturbed_init(d, comp.x, rng, ctx.tol, delta=True)
            res = stable_point(d, target, init=init, tol=ctx.tol)
            err = float(np.max(np.abs(res.state.array - comp.x) / np.maximum(1.0, np.abs(comp.x))))
            return _case("compose.par_virtual_stable", f"{i}", err, 1e-6,
                         note="zero-delta anchor is stable for (v, |v'|^2) normalized",
                         inputs=(A.describe(), B.describe(), v.tolist(), vp.tolist(), t))
        out.extend(_guard("compose.par_virtual_stable", f"{i}", run, 1e-6))
    return out


def _check_par_closure(ctx: _Ctx) -> list[Case]:
    bob, carol = bob_carol()
    out = []
    for t in (0.0, 0.5, 1.0):
        comp = par_compose(bob, carol, t)
        out.extend(_guard("compose.par_closure", f"bob_carol t={t}",
                          lambda: _closure_case("compose.par_closure", f"bob_carol t={t}", comp.defn,
                                                [(-0.8, 3.0), (0.5, 3.0)], ctx)))
    return out


def split_grid_oracle(A: AmmInstance, B: AmmInstance, amount, points: int = 1000) -> tuple[float, float]:
    ts = np.linspace(0.0, 1.0, points)
    rets = [float(split_return(A, B, float(amount), float(t))) for t in ts]
    k = int(np.argmax(rets))
    return float(ts[k]), rets[k]


def _check_split(ctx: _Ctx) -> list[Case]:
    rng = rng_for(ctx.seed, "compose.optimal_split")
    out = []
    bob, carol = bob_carol()
    fixtures = [("bob_carol", bob, carol, 1.0), ("bob_carol", bob, carol, 3.0)]
    for i in range(ctx.count(20)):
        A = random_def(rng, ("X", "Y"))
        B = random_def(rng, ("X", "Y"))
        Ai = stable_instance(A, random_valuation(rng, ("X", "Y"), lo=0.05))
        Bi = stable_instance(B, random_valuation(rng, ("X", "Y"), lo=0.05))
        amount = float(Ai.x[0] * np.exp(rng.uniform(-2, 1)))
        fixtures.append((f"{i}", Ai, Bi, amount))
    for label, A, B, amount in fixtures:
        def run():
            res = optimal_split_detail(A, B, amount, ctx.tol)
            _, best = split_grid_oracle(A, B, amount)
            gap = best - res.total_return
            foc = abs(_rate(A, float(A.x[0]) + res.t * amount) - _rate(B, float(B.x[0]) + (1 - res.t) * amount))
            ok = gap <= 1e-9 and (foc <= 1e-8 or not res.interior)
            return _case("compose.optimal_split", f"{label} x={amount:.6g}", max(gap, foc if res.interior else 0.0),
                         1e-8, passed=ok, note=f"t*={res.t:.9g} interior={res.interior} grid gap {gap:.3g}",
                         inputs=(label, amount))
        out.extend(_guard("compose.optimal_split", f"{label} x={amount:.6g}", run, 1e-8))
    # return ordering between Bob (t = 1) and Carol (t = 0)
    r1b, r1c = split_return(bob, carol, 1, 1), split_return(bob, carol, 1, 0)
    r3b, r3c = split_return(bob, carol, 3, 1), split_return(bob, carol, 3, 0)
    exact = (r1b, r1c, r3b, r3c) == (Fraction(9, 16), Fraction(1, 2), Fraction(45, 64), Fraction(3, 4))
    out.append(_case("compose.split_ordering", "bob_carol", 0.0, 0.0, passed=exact and r1b > r1c and r3c > r3b,
                     note="x=1: 9/16 > 1/2 (Bob); x=3: 3/4 > 45/64 (Carol)"))
    return out


# --------------------------------------------------------------------------
# fees

def _check_fees(ctx: _Ctx) -> list[Case]:
    rng = rng_for(ctx.seed, "fees.path_equality")
    out = []
    for i in range(ctx.count(100)):
        a = float(np.exp(rng.uniform(-2, 2)))
        gamma = float(rng.uniform(1e-4, 0.3))
        delta = float(a * np.exp(rng.uniform(-4, 1)))
        fam = random_def(rng, ("X", "Y"))
        inst = AmmInstance(fam, StateVector(("X", "Y"), (a, float(solve_coordinate(fam, [a, 1.0], 1)))))

        def run():
            cases = []
            for side in ("input", "output"):
                fa = with_fee(inst, gamma, side)
                d1, d2 = fa.deposit(delta), fa.deposit_via_composition(delta)
                same = d1 == d2
                cases.append(_case("fees.path_equality", f"{i}/{side}", 0.0 if same else
                                   float(np.max(np.abs(d1.state.array - d2.state.array))), 0.0, passed=same,
                                   note="direct vs composed final state, bit for bit",
                                   inputs=(fam.describe(), a, gamma, delta, side)))
            fa_, fend = linear_leg_identities(a, gamma, delta)
            ok = fa_ == (1 - Fraction(gamma)) * Fraction(delta) and fend == 0
            cases.append(_case("fees.leg_identities", f"{i}", 0.0, 0.0, passed=ok,
                               note="f(a) = (1-gamma) delta and f(a+delta) = 0 exactly",
                               inputs=(a, gamma, delta)))
            return cases
        out.extend(_guard("fees.path_equality", f"{i}", run))
    return out


# --------------------------------------------------------------------------

THEOREM_CHECKS: tuple[Callable[[_Ctx], list[Case]], ...] = (
    _check_gradient_fd, _check_implicit_unique, _check_trade_reversal,
    _check_closed_form, _check_duality, _check_minimality, _check_equivalence,
    _check_projection, _check_along_valuation, _check_virtual, _check_virtual_axioms,
    _check_eq1, _check_seq_stable, _check_converse, _check_naive, _check_many_to_many, _check_seq_closure,
    _check_par_stable, _check_par_virtual, _check_par_closure, _check_split,
    _check_fees,
)


def run_theorem_suite(seed: int = 0, samples: int = 1000, tol: Tolerances = DEFAULT_TOL,
                      only: Sequence[str] | None = None) -> VerifyReport:
    """Every invariant of the stable-point, operator and composition layers."""
    t0 = time.perf_counter()
    ctx = _Ctx(seed, samples, tol)
    cases: list[Case] = []
    for fn in THEOREM_CHECKS:
        if only is not None and not any(fn.__name__.endswith(o) for o in only):
            continue
        cases.extend(fn(ctx))
    report = VerifyReport("theorems", tuple(cases), seed, time.perf_counter() - t0)
    if only is None:
        assert_coverage(report, THEOREMS)
    return report


def run_builtin(seed: int = 0, samples: int = 1000, tol: Tolerances = DEFAULT_TOL,
                extra: Sequence[Fixture] = ()) -> VerifyReport:
    """Axiom suite over the built-in fixtures plus the theorem suite, with a coverage check."""
    fixtures = builtin_fixtures() + list(extra)
    ax = run_axiom_suite(fixtures, samples=samples, seed=seed, tol=tol)
    th = run_theorem_suite(seed=seed, samples=samples, tol=tol)
    assert_coverage(ax, AXIOM_PROPERTIES)
    assert_coverage(th, THEOREMS)
    report = combine("builtin", seed, [ax, th])
    return report
