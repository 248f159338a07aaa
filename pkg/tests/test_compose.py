from __future__ import annotations

import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.optimize import minimize_scalar

from ammalgebra.axioms import check_axioms
from ammalgebra.compose import (
    demonstrate_naive_ambiguity,
    optimal_split,
    optimal_split_detail,
    par_compose,
    seq_compose_2d,
    seq_compose_many_to_many,
    seq_compose_many_to_one,
    split_return,
)
from ammalgebra.core import AmmInstance, ConstantMean, ConstantProduct, Linear, StateVector, Valuation
from ammalgebra.errors import DimensionError, InfeasibleError, NonConformingError
from ammalgebra.stable import brute_force_stable, stable_point
from ammalgebra.verify import bob_carol, eq1_instance, many_to_many_fixture

F = Fraction


def cp(assets, level, state):
    return AmmInstance(ConstantProduct(tuple(assets), level), StateVector(tuple(assets), tuple(state)))


class TestSequential:
    @given(st.floats(0.2, 5), st.floats(0.2, 5), st.floats(0.1, 3))
    def test_one_to_one_closed_form(self, a, b, s):
        d = eq1_instance(a, b).defn
        x = a / (1 + a * b) * (1 + s)
        assert float(d.output([x])) == pytest.approx(a * x / (x - a + a * b * x), rel=1e-10)

    def test_unit_pair_is_exact(self):
        d = eq1_instance().defn
        for x in (F(3, 2), F(7, 5), F(4)):
            assert d.output([x]) == x / (2 * x - 1)
        assert d.output([F(3, 2)]) == F(3, 4)

    def test_outside_domain(self):
        with pytest.raises(InfeasibleError):
            eq1_instance().defn.output([0.4])

    def test_composed_anchor_is_stable(self):
        comp = eq1_instance()
        res = stable_point(comp.defn, Valuation(("X", "Y"), (0.5, 0.5)), init=[2.0, 2 / 3])
        np.testing.assert_allclose(res.state.array, [1, 1], rtol=1e-8)

    def test_converse_fails(self):
        # the composition is stable at (1, 1) for (1/2, 1/2) but the constituents are not at their anchors
        a = stable_point(ConstantProduct(("X", "Z"), 1), Valuation(("X", "Z"), (1 / 3, 2 / 3))).state
        np.testing.assert_allclose(a.array, [math.sqrt(2), math.sqrt(2) / 2])
        oracle = brute_force_stable(eq1_instance().defn, Valuation(("X", "Y"), (0.5, 0.5)),
                                    grid=300, box=(0.55, 10), refine=3)
        np.testing.assert_allclose(oracle.array, [1, 1], atol=1e-4)

    def test_gradient_matches_finite_differences(self):
        from ammalgebra.core import fd_gradient
        comp = seq_compose_many_to_one(cp(("X1", "X2", "Z"), 8, (2, 2, 2)), cp(("Z", "Y"), 1, (2, 0.5)))
        x = np.array([2.5, 1.8, 0.4])
        np.testing.assert_allclose(comp.defn.grad(x), fd_gradient(comp.defn.value, x), rtol=1e-6)

    def test_many_to_one_axioms(self):
        comp = seq_compose_many_to_one(cp(("X1", "X2", "Z"), 8, (2, 2, 2)), cp(("Z", "Y"), 1, (2, 0.5)))
        rep = check_axioms(comp.defn, [(1.5, 6), (1.5, 6), (0.1, 2)], samples=200, seed=1)
        assert rep.ok and not rep.failing()

    def test_requires_single_hidden_asset(self):
        with pytest.raises(DimensionError):
            seq_compose_2d(cp(("X", "Y"), 1, (1, 1)), cp(("X", "Y"), 1, (1, 1)))

    def test_linear_upstream_rejected_by_default(self):
        lin = AmmInstance(Linear(("X", "Z"), (1, 1), 2), StateVector(("X", "Z"), (1, 1)))
        with pytest.raises(NonConformingError):
            seq_compose_many_to_one(lin, cp(("Z", "Y"), 1, (1, 1)))


class TestManyToMany:
    def test_naive_composition_is_ambiguous(self):
        s1, s2 = demonstrate_naive_ambiguity()
        assert s1.values == (4, F(8, 25)) and s2.values == (4, F(1, 3))
        s1, s2 = demonstrate_naive_ambiguity(8)
        assert s1.values == (4, F(32, 25)) and s2.values == (4, F(4, 3))

    def test_virtualized_composition(self):
        comp = many_to_many_fixture()
        assert comp.assets == ("W", "Z") and comp.state.values == (1, 2)
        rep = check_axioms(comp.defn, [(0.2, 10), (0.2, 20)], samples=300, seed=2)
        assert rep.ok and not rep.failing()
        res = stable_point(comp.defn, Valuation(("W", "Z"), (0.5, 0.5)), init=[2.0, float(comp.defn.output([2.0]))])
        np.testing.assert_allclose(res.state.array, [1, 2], rtol=1e-8)

    def test_needs_valuation(self):
        A = cp(("W", "X", "Y"), 1, (1, 1, 1))
        B = cp(("X", "Y", "Z"), 8, (2, 2, 2))
        with pytest.raises(ValueError, match="hidden valuation required"):
            seq_compose_many_to_many(A, B, None)


class TestParallel:
    def test_anchor_and_output(self):
        bob, carol = bob_carol()
        comp = par_compose(bob, carol, F(1, 2))
        assert comp.state.values == (0, F(7, 4))
        assert comp.defn.output([F(1)]) == F(7, 4) - F(3, 4)

    @given(st.floats(0, 1), st.floats(0.05, 0.95))
    def test_anchor_stable(self, t, v):
        val = Valuation(("X", "Y"), (v, 1 - v))
        A = AmmInstance(ConstantProduct(("X", "Y"), 2), stable_point(ConstantProduct(("X", "Y"), 2), val).state)
        Bd = ConstantMean(("X", "Y"), (1.5, 1), 3)
        B = AmmInstance(Bd, stable_point(Bd, val).state)
        comp = par_compose(A, B, t)
        res = stable_point(comp.defn, val, init=[0.3, float(comp.defn.output([0.3]))])
        assert abs(res.state.values[0]) <= 1e-7

    def test_split_bounds(self):
        bob, carol = bob_carol()
        with pytest.raises(ValueError):
            par_compose(bob, carol, 1.5)


class TestOptimalSplit:
    def test_bob_carol_returns(self):
        bob, carol = bob_carol()
        assert split_return(bob, carol, 1, 1) == F(9, 16)
        assert split_return(bob, carol, 1, 0) == F(1, 2)
        assert split_return(bob, carol, 3, 1) == F(45, 64)
        assert split_return(bob, carol, 3, 0) == F(3, 4)

    @pytest.mark.parametrize("amount", [0.1, 1.0, 3.0, 10.0])
    def test_matches_scalar_oracle(self, amount):
        bob, carol = bob_carol()
        res = optimal_split_detail(bob, carol, amount)
        opt = minimize_scalar(lambda t: -float(split_return(bob, carol, amount, t)), bounds=(0, 1),
                              method="bounded", options={"xatol": 1e-12})
        assert res.total_return >= -opt.fun - 1e-12
        assert res.t == pytest.approx(opt.x, abs=1e-5)

    def test_identical_pools_split_evenly(self):
        a = cp(("X", "Y"), 1, (1, 1))
        assert optimal_split(a, a, 2.0) == pytest.approx(0.5, abs=1e-12)

    def test_boundary_optimum(self):
        big = cp(("X", "Y"), 100, (10, 10))
        tiny = cp(("X", "Y"), F(1, 100), (F(1, 10), F(1, 10)))
        res = optimal_split_detail(big, tiny, 0.01)
        assert 0 <= res.t <= 1 and res.total_return >= split_return(big, tiny, 0.01, 1) - 1e-15
