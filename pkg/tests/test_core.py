from __future__ import annotations

from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st

from ammalgebra.core import (
    AmmInstance,
    ConstantMean,
    ConstantProduct,
    ExplicitGraph,
    Linear,
    Relabeled,
    StateVector,
    Valuation,
    evaluate,
    fd_gradient,
    gradient,
    implicit_solve,
    solve_coordinate,
    trade,
)
from ammalgebra.errors import DimensionError, DomainError, InfeasibleError, OffManifoldError

positive = st.floats(0.05, 20)


class TestTypes:
    def test_state_rejects_nonpositive(self):
        with pytest.raises(DomainError):
            StateVector(("X", "Y"), (1, 0))

    def test_state_dimension(self):
        with pytest.raises(DimensionError):
            StateVector(("X", "Y"), (1,))
        with pytest.raises(DimensionError):
            StateVector(("X",), (1,))

    def test_delta_state_may_be_negative(self):
        assert StateVector(("X", "Y"), (-1, 2), delta=True)["X"] == -1

    def test_duplicate_assets(self):
        with pytest.raises(ValueError):
            StateVector(("X", "X"), (1, 1))

    def test_valuation_on_open_simplex(self):
        with pytest.raises(ValueError):
            Valuation(("X", "Y"), (0.5, 0.6))
        with pytest.raises(ValueError):
            Valuation(("X", "Y"), (0, 1))
        v = Valuation.normalized(("X", "Y"), (1, 2))
        assert v.weights == (Fraction(1, 3), Fraction(2, 3))

    def test_reorder(self):
        s = StateVector(("X", "Y"), (1, 2)).reordered(("Y", "X"))
        assert s.values == (2, 1)


class TestFamilies:
    @given(st.lists(positive, min_size=2, max_size=5), st.floats(0.1, 100))
    def test_constant_product_gradient(self, xs, c):
        d = ConstantProduct(tuple(f"X{i}" for i in range(len(xs))), c)
        x = np.array(xs)
        np.testing.assert_allclose(d.grad(x), fd_gradient(d.value, x), rtol=1e-6, atol=1e-9)

    @given(st.lists(positive, min_size=2, max_size=4), st.floats(0.1, 10))
    def test_constant_mean_hessian(self, xs, c):
        n = len(xs)
        d = ConstantMean(tuple(f"X{i}" for i in range(n)), tuple(np.linspace(0.5, 2.5, n)), c)
        x = np.array(xs)
        fd = np.array([fd_gradient(lambda z: d.grad(z)[i], x) for i in range(n)])
        np.testing.assert_allclose(d.hessian(x), fd, rtol=1e-5, atol=1e-8 * np.abs(fd).max())

    @given(st.lists(positive, min_size=2, max_size=5), st.floats(0.1, 100), st.data())
    def test_closed_form_solve_matches_bracketing(self, xs, c, data):
        n = len(xs)
        d = ConstantMean(tuple(f"X{i}" for i in range(n)), tuple(np.linspace(0.7, 1.9, n)), c)
        k = data.draw(st.integers(0, n - 1))
        a = solve_coordinate(d, xs, k)
        b = solve_coordinate(d, xs, k, closed_form=False)
        assert b == pytest.approx(a, rel=1e-9)

    def test_exact_constant_product_solve(self):
        d = ConstantProduct(("X", "Y", "Z"), 8)
        assert solve_coordinate(d, [Fraction(4), Fraction(3), 1], 2) == Fraction(2, 3)

    def test_linear_is_flagged_non_conforming(self):
        d = Linear(("X", "Y"), (1, 2), 4)
        assert not d.axiom_conforming
        assert solve_coordinate(d, [2, 1], 1) == 1

    def test_explicit_graph_domain(self):
        d = ExplicitGraph(("X", "Y"), lambda xs: 1 / xs[0], lower=(0,))
        assert d.value([2.0, 0.5]) == 0
        with pytest.raises(InfeasibleError):
            d.output([-1.0])

    def test_relabeled_delegates(self):
        base = ConstantProduct(("X", "Y"), 1)
        r = Relabeled(base, ("A", "B"))
        assert r.value([2.0, 0.5]) == 0 and r.assets == ("A", "B")


class TestInstances:
    def test_off_manifold_rejected_with_residual(self):
        with pytest.raises(OffManifoldError) as exc:
            AmmInstance(ConstantProduct(("X", "Y", "Z"), 8), StateVector(("X", "Y", "Z"), (2, 2, 3)))
        assert exc.value.residual == pytest.approx(4)

    def test_evaluate_and_gradient(self):
        d = ConstantProduct(("X", "Y"), 1)
        assert evaluate(d, StateVector(("X", "Y"), (2, 3))) == 5
        np.testing.assert_allclose(gradient(d, [2, 3]), [3, 2])
        with pytest.raises(DomainError):
            gradient(d, [-1, 3])

    def test_implicit_solve(self):
        d = ConstantProduct(("X", "Y", "Z"), 8)
        assert implicit_solve(d, {"X": 4, "Y": 1}, "Z") == pytest.approx(2)
        with pytest.raises(DimensionError):
            implicit_solve(d, {"X": 4}, "Z")


class TestTrade:
    inst = AmmInstance(ConstantProduct(("X", "Y"), 1), StateVector(("X", "Y"), (1, 1)))

    def test_deposit(self):
        new, pl = trade(self.inst, {"X": 1}, "Y")
        assert new.state.values == (2, 0.5)
        assert pl.deltas == (-1, 0.5)

    def test_zero_delta_is_identity(self):
        new, pl = trade(self.inst, {"X": 0}, "Y")
        assert new.state == self.inst.state and pl.deltas == (0, 0)

    def test_exhausting_withdrawal(self):
        with pytest.raises(InfeasibleError):
            trade(self.inst, {"X": -1}, "Y")

    def test_free_asset_cannot_carry_delta(self):
        with pytest.raises(ValueError):
            trade(self.inst, {"Y": 1}, "Y")

    @given(st.floats(-0.9, 5))
    def test_reversal(self, dx):
        new, _ = trade(self.inst, {"X": dx}, "Y")
        back, _ = trade(new, {"X": -dx}, "Y")
        np.testing.assert_allclose(back.x, self.inst.x, rtol=1e-12)
