"""The ten acceptance criteria, each at its stated tolerance.

Every test prints one ``PASS``/``FAIL`` line, visible even under capture.
"""
from __future__ import annotations

import math
import time
from fractions import Fraction

import numpy as np
import pytest

from ammalgebra.axioms import check_axioms, rng_for
from ammalgebra.cli import main
from ammalgebra.compose import (
    demonstrate_naive_ambiguity,
    optimal_split_detail,
    seq_compose_2d,
    seq_compose_many_to_one,
    split_return,
)
from ammalgebra.core import AmmInstance, ConstantProduct, StateVector, Valuation
from ammalgebra.fees import linear_leg_identities, with_fee
from ammalgebra.operators import virtualize
from ammalgebra.stable import brute_force_stable, stable_point, valuation_of
from ammalgebra.verify import (
    bob_carol,
    builtin_fixtures,
    many_to_many_fixture,
    random_def,
    random_level,
    random_valuation,
    random_weights,
    run_axiom_suite,
)

F = Fraction


@pytest.fixture
def report(capsys):
    def emit(number: int, title: str, ok: bool, detail: str = ""):
        with capsys.disabled():
            print(f"\n[{'PASS' if ok else 'FAIL'}] criterion {number}: {title}" + (f" ({detail})" if detail else ""))
        return ok
    return emit


def rel(a, b) -> float:
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    return float(np.max(np.abs(a - b) / np.abs(b)))


def test_1_closed_form_stable_points(report):
    rng = rng_for(1, "acceptance.closed_form")
    worst = worst_x = worst_level = 0.0
    for _ in range(100):
        c = random_level(rng)
        v = float(random_weights(rng, 2)[0])
        x = stable_point(ConstantProduct(("X", "Y"), c), Valuation(("X", "Y"), (v, 1 - v))).state.array
        stated = [math.sqrt(c * (1 - v) / v), math.sqrt(v / (c * (1 - v)))]
        worst = max(worst, rel(x, stated))
        worst_x = max(worst_x, rel(x[0], stated[0]))
        # the level set pins y = c / x, i.e. sqrt(c v / (1 - v))
        worst_level = max(worst_level, rel(x[1], c / stated[0]))
    x = stable_point(ConstantProduct(("X", "Y"), 1), Valuation(("X", "Y"), (1 / 3, 2 / 3))).state.values
    printed = f"({x[0]:.6f}, {x[1]:.6f})"
    ok = worst <= 1e-8 and printed == "(1.414214, 0.707107)"
    assert report(1, "closed-form stable points", ok,
                  f"max rel vs stated pair {worst:.2e}; x alone {worst_x:.2e}; y vs c/x {worst_level:.2e}; "
                  f"c=1 point {printed}")


def test_2_duality_round_trip(report):
    rng = rng_for(2, "acceptance.duality")
    worst = 0.0
    seen = set()
    for i in range(200):
        n = 2 + i % 4
        fam = ("cp", "cm")[(i // 4) % 2]
        seen.add((n, fam))
        d = random_def(rng, tuple(f"X{j}" for j in range(n)), fam)
        v = random_valuation(rng, d.assets)
        back = valuation_of(d, stable_point(d, v).state)
        worst = max(worst, float(np.max(np.abs(back.array - v.array))))
    ok = worst <= 1e-6 and len(seen) == 8
    assert report(2, "duality round trip", ok, f"max |dv| {worst:.2e} over 200 cases")


def test_3_one_to_one_composition_formula(report):
    rng = rng_for(3, "acceptance.eq1")
    worst = 0.0
    for _ in range(5):
        a, b = (float(np.exp(rng.uniform(-1, 1))) for _ in range(2))
        comp = seq_compose_2d(
            AmmInstance(ConstantProduct(("X", "Z"), 1), StateVector(("X", "Z"), (a, 1 / a))),
            AmmInstance(ConstantProduct(("Z", "Y"), 1), StateVector(("Z", "Y"), (b, 1 / b))))
        lo = a / (1 + a * b)
        for _ in range(10):
            x = lo * math.exp(rng.uniform(0.01, 3))
            h = a * x / (x - a + a * b * x)
            worst = max(worst, abs(float(comp.defn.output([x])) - h) / h)
    unit = seq_compose_2d(
        AmmInstance(ConstantProduct(("X", "Z"), 1), StateVector(("X", "Z"), (1, 1))),
        AmmInstance(ConstantProduct(("Z", "Y"), 1), StateVector(("Z", "Y"), (1, 1))))
    points = [F(p, q) for p, q in ((2, 3), (1, 1), (3, 2), (5, 3), (7, 2), (11, 5), (9, 1))]
    exact = all(unit.defn.output([x]) == x / (2 * x - 1) for x in points)
    ok = worst <= 1e-10 and exact
    assert report(3, "one-to-one composition h(x) = ax/(x-a+abx)", ok,
                  f"max rel {worst:.2e} at 50 points; exact at rationals: {exact}")


def test_4_naive_ambiguity_and_virtualized_fix(report):
    s1, s2 = demonstrate_naive_ambiguity()
    exact = s1.values == (4, F(8, 25)) and s2.values == (4, F(1, 3))
    comp = many_to_many_fixture()
    rep = check_axioms(comp.defn, [(0.2, 10.0), (0.2, 20.0)], samples=1000, seed=4)
    ok = exact and rep.ok and not rep.failing()
    assert report(4, "naive many-to-many ambiguity", ok,
                  f"states {s1.values} vs {s2.values}; virtualized axiom failures {len(rep.failing())}")


def test_5_virtualization_fixture(report):
    base = AmmInstance(ConstantProduct(("X", "Y", "Z"), 8), StateVector(("X", "Y", "Z"), (2, 2, 2)))
    inst, spec = virtualize(base, ("Y", "Z"), Valuation(("Y", "Z"), (F(2, 3), F(1, 3))), name="W")
    rng = rng_for(5, "acceptance.virtual")
    worst = 0.0
    for x, w in rng.uniform(0.2, 6, (20, 2)):
        worst = max(worst, abs(inst.defn.value([x, w]) - (x * (2 * w / 3) * (w / 3 + 1) - 8)))
    ok = inst.state.values == (2, 3) and spec.residue_r == (0, 1) and worst <= 1e-12
    assert report(5, "virtualization fixture", ok,
                  f"state {inst.state.values}, residue {spec.residue_r}, max |dA| {worst:.1e}")


def _random_chain(rng):
    m, k = int(rng.integers(1, 3)), int(rng.integers(1, 3))
    xs = tuple(f"X{i}" for i in range(m))
    ys = tuple(f"Y{i}" for i in range(k))
    w = random_weights(rng, m + 1 + k, lo=1e-2)
    A = random_def(rng, xs + ("Z",))
    B = random_def(rng, ("Z",) + ys)
    va = w[: m + 1] / w[: m + 1].sum()
    vb = w[m:] / w[m:].sum()
    Ai = AmmInstance(A, stable_point(A, Valuation(A.assets, tuple(va))).state)
    Bi = AmmInstance(B, stable_point(B, Valuation(B.assets, tuple(vb))).state)
    target = np.concatenate([w[:m], w[m + 1:]])
    return seq_compose_many_to_one(Ai, Bi), Valuation(xs + ys, tuple(target / target.sum()))


def test_6_sequential_stable_point_preservation(report):
    rng = rng_for(6, "acceptance.seq_stable")
    worst = 0.0
    for _ in range(50):
        comp, target = _random_chain(rng)
        start = comp.x.copy()
        start[0] *= 1.2
        start[-1] = float(comp.defn.output(list(start[:-1])))
        res = stable_point(comp.defn, target, init=start)
        worst = max(worst, rel(res.state.array, comp.x))
    sa = stable_point(ConstantProduct(("X", "Z"), 1), Valuation(("X", "Z"), (1 / 3, 2 / 3))).state.array
    sb = stable_point(ConstantProduct(("Z", "Y"), 1), Valuation(("Z", "Y"), (2 / 3, 1 / 3))).state.array
    unit = seq_compose_2d(
        AmmInstance(ConstantProduct(("X", "Z"), 1), StateVector(("X", "Z"), (1, 1))),
        AmmInstance(ConstantProduct(("Z", "Y"), 1), StateVector(("Z", "Y"), (1, 1))))
    oracle = brute_force_stable(unit.defn, Valuation(("X", "Y"), (0.5, 0.5)), grid=400, box=(0.55, 20), refine=3)
    r2 = math.sqrt(2)
    converse = rel(sa, [r2, r2 / 2]) <= 1e-12 and rel(sb, [r2 / 2, r2]) <= 1e-12
    oracle_ok = float(np.max(np.abs(oracle.array - 1))) <= 1e-4
    ok = worst <= 1e-6 and converse and oracle_ok
    assert report(6, "sequential composition preserves stable points", ok,
                  f"max rel {worst:.2e} over 50; converse fixture {converse}; oracle min {oracle.array.round(6)}")


def test_7_optimal_split(report):
    bob, carol = bob_carol()
    rng = rng_for(7, "acceptance.split")
    cases = [(bob, carol, 1.0), (bob, carol, 3.0)]
    for _ in range(20):
        A = random_def(rng, ("X", "Y"))
        B = random_def(rng, ("X", "Y"))
        Ai = AmmInstance(A, stable_point(A, random_valuation(rng, ("X", "Y"), lo=0.05)).state)
        Bi = AmmInstance(B, stable_point(B, random_valuation(rng, ("X", "Y"), lo=0.05)).state)
        cases.append((Ai, Bi, float(Ai.x[0] * np.exp(rng.uniform(-2, 1)))))
    foc = gap = 0.0
    grid = np.linspace(0, 1, 1001)
    for A, B, x in cases:
        res = optimal_split_detail(A, B, x)
        if res.interior:
            fa = A.defn.grad([A.x[0] + res.t * x, float(A.defn.solve_closed([A.x[0] + res.t * x, 1], 1))])
            fb = B.defn.grad([B.x[0] + (1 - res.t) * x,
                              float(B.defn.solve_closed([B.x[0] + (1 - res.t) * x, 1], 1))])
            foc = max(foc, abs(fa[0] / fa[1] - fb[0] / fb[1]))
        best = max(float(split_return(A, B, x, float(t))) for t in grid)
        gap = max(gap, best - res.total_return)
    order = (split_return(bob, carol, 1, 1) == F(9, 16) and split_return(bob, carol, 1, 0) == F(1, 2)
             and split_return(bob, carol, 3, 0) == F(3, 4) and split_return(bob, carol, 3, 1) == F(45, 64))
    ok = foc <= 1e-8 and gap <= 1e-9 and order
    assert report(7, "optimal parallel split", ok, f"max rate gap {foc:.1e}; grid advantage {gap:.1e}; "
                  f"Bob/Carol ordering {order}")


def test_8_fee_equivalence(report):
    rng = rng_for(8, "acceptance.fees")
    mismatches = 0
    for _ in range(100):
        a = float(np.exp(rng.uniform(-2, 2)))
        gamma = float(rng.uniform(1e-4, 0.3))
        delta = float(a * np.exp(rng.uniform(-4, 1)))
        d = random_def(rng, ("X", "Y"))
        inst = AmmInstance(d, StateVector(("X", "Y"), (a, float(d.solve_closed([a, 1.0], 1)))))
        fa = with_fee(inst, gamma)
        direct, composed = fa.deposit(delta), fa.deposit_via_composition(delta)
        expect = (a + delta, float(d.solve_closed([F(a) + (1 - F(gamma)) * F(delta), 1], 1)))
        if direct != composed or direct.state.values != expect:
            mismatches += 1
    f0, f1 = linear_leg_identities(F(3, 2), F(3, 1000), F(2))
    identities = f0 == (1 - F(3, 1000)) * 2 and f1 == 0
    ok = mismatches == 0 and identities
    assert report(8, "fees as composition with a linear AMM", ok,
                  f"{mismatches} bitwise mismatches in 100; identities exact: {identities}")


def test_9_axiom_suite(report):
    rep = run_axiom_suite(builtin_fixtures(), samples=300, seed=9)
    expected = sorted((c.check_id, c.case) for c in rep.expected_failures)
    others = [c for c in rep.failing() if c.case != "linear"]
    ok = rep.ok and not others and expected == [("axiom.convexity", "linear"), ("axiom.expressivity", "linear")]
    assert report(9, "axiom suite", ok, f"{len(rep.cases)} cases; expected failures {expected}")


def test_10_determinism(report, tmp_path, capsys):
    times = []
    outputs = []
    for i in range(2):
        path = tmp_path / f"run{i}.csv"
        t0 = time.perf_counter()
        code = main(["--seed", "42", "--csv", str(path), "verify", "--builtin"])
        times.append(time.perf_counter() - t0)
        capsys.readouterr()
        outputs.append((code, path.read_text()))
    ok = outputs[0] == outputs[1] and outputs[0][0] == 0 and max(times) < 60
    assert report(10, "deterministic verify --builtin --seed 42", ok,
                  f"identical CSV: {outputs[0][1] == outputs[1][1]}; exit {outputs[0][0]}; "
                  f"{max(times):.1f} s per run")
