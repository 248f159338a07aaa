from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.optimize import minimize_scalar

from ammalgebra.core import DEFAULT_TOL, ConstantMean, ConstantProduct, ExplicitGraph, Linear, StateVector, Valuation
from ammalgebra.errors import DomainError, NonConformingError, OffManifoldError
from ammalgebra.stable import (
    _reduced_newton,
    brute_force_stable,
    equivalence_map,
    stable_point,
    valuation_of,
)

weight = st.floats(0.01, 0.99)
level = st.floats(0.1, 100)


def simplex(n):
    return st.lists(st.floats(0.05, 1.0), min_size=n, max_size=n).map(lambda w: np.array(w) / sum(w))


class TestClosedForm:
    def test_unit_product(self):
        res = stable_point(ConstantProduct(("X", "Y"), 1), Valuation(("X", "Y"), (1 / 3, 2 / 3)))
        np.testing.assert_allclose(res.state.array, [math.sqrt(2), math.sqrt(2) / 2], rtol=1e-14)
        assert f"{res.state.values[0]:.6f}, {res.state.values[1]:.6f}" == "1.414214, 0.707107"

    @given(level, weight)
    def test_two_asset_formula(self, c, v):
        x = stable_point(ConstantProduct(("X", "Y"), c), Valuation(("X", "Y"), (v, 1 - v))).state.array
        np.testing.assert_allclose(x, [math.sqrt(c * (1 - v) / v), math.sqrt(c * v / (1 - v))], rtol=1e-12)

    @given(level, weight)
    def test_scalar_oracle(self, c, v):
        # minimize v x + (1 - v) c / x over x, independently of the library
        opt = minimize_scalar(lambda t: v * math.exp(t) + (1 - v) * c * math.exp(-t), bounds=(-20, 20),
                              method="bounded", options={"xatol": 1e-12})
        x = stable_point(ConstantProduct(("X", "Y"), c), Valuation(("X", "Y"), (v, 1 - v))).state.array
        assert x[0] == pytest.approx(math.exp(opt.x), rel=1e-6)


class TestNewton:
    @given(simplex(3), level, st.lists(st.floats(0.5, 3), min_size=3, max_size=3))
    def test_newton_matches_closed_form(self, v, c, w):
        d = ConstantMean(("X", "Y", "Z"), tuple(w), c)
        val = Valuation(d.assets, tuple(v))
        a = stable_point(d, val).state.array
        b = stable_point(d, val, closed_form=False).state.array
        np.testing.assert_allclose(b, a, rtol=1e-8)

    def test_reduced_newton_from_far_start(self):
        d = ConstantProduct(("X", "Y", "Z"), 8)
        v = np.array([0.2, 0.3, 0.5])
        res = _reduced_newton(d, v, np.array([20.0, 0.1, 4.0]), DEFAULT_TOL)
        np.testing.assert_allclose(res.state.array, d.stable_closed(v), rtol=1e-7)

    def test_graph_def_uses_newton(self):
        d = ExplicitGraph(("X", "Y"), lambda xs: 1 / xs[0], dh=lambda xs: [-1 / xs[0] ** 2], lower=(0,))
        res = stable_point(d, Valuation(("X", "Y"), (0.2, 0.8)))
        assert res.method in ("newton", "reduced_newton")
        np.testing.assert_allclose(res.state.array, [2, 0.5], rtol=1e-8)

    @given(simplex(2), level)
    def test_oracle_grid(self, v, c):
        d = ConstantProduct(("X", "Y"), c)
        x = stable_point(d, Valuation(d.assets, tuple(v)), closed_form=False).state.array
        lo, hi = x[0] / 4, x[0] * 4
        g = brute_force_stable(d, Valuation(d.assets, tuple(v)), grid=200, box=(lo, hi), refine=2)
        assert g.array[0] == pytest.approx(x[0], rel=1e-4)


class TestDuality:
    @given(simplex(4), level)
    def test_round_trip(self, v, c):
        d = ConstantProduct(("A", "B", "C", "D"), c)
        res = stable_point(d, Valuation(d.assets, tuple(v)))
        assert np.max(np.abs(valuation_of(d, res.state).array - v)) <= 1e-12
        g = d.grad(res.state.array)
        assert res.lagrange_lambda == pytest.approx(1 / g.sum(), rel=1e-12)

    def test_minimality_against_on_manifold_points(self):
        d = ConstantMean(("X", "Y", "Z"), (1, 2, 0.5), 3)
        v = Valuation(d.assets, (0.2, 0.5, 0.3))
        x = stable_point(d, v).state.array
        rng = np.random.default_rng(0)
        best = v.array @ x
        for _ in range(200):
            y = x * np.exp(rng.uniform(-1, 1, 3))
            y[2] = d.solve_closed(list(y), 2)
            assert v.array @ y >= best * (1 - 1e-12)

    def test_equivalence_map_round_trip(self):
        a = ConstantProduct(("X", "Y"), 1)
        b = ConstantMean(("X", "Y"), (2, 1), 0.75)
        x = StateVector(("X", "Y"), (2.0, 0.5))
        y = equivalence_map(a, b, x)
        np.testing.assert_allclose(valuation_of(b, y).array, valuation_of(a, x).array, atol=1e-12)
        np.testing.assert_allclose(equivalence_map(b, a, y).array, x.array, rtol=1e-12)


class TestErrors:
    def test_linear_rejected(self):
        with pytest.raises(NonConformingError, match="non-conforming"):
            stable_point(Linear(("X", "Y"), (1, 1), 2), Valuation(("X", "Y"), (0.5, 0.5)))

    def test_valuation_margin(self):
        d = ConstantProduct(("X", "Y"), 1)
        with pytest.raises(DomainError):
            stable_point(d, [1e-10, 1 - 1e-10])

    def test_off_manifold_valuation(self):
        with pytest.raises(OffManifoldError):
            valuation_of(ConstantProduct(("X", "Y"), 1), [2.0, 2.0])
