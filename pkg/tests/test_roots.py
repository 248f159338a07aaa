from __future__ import annotations

import math

import pytest
from hypothesis import given, strategies as st
from scipy.optimize import brentq

from ammalgebra.errors import InfeasibleError
from ammalgebra.roots import bracket_increasing, increasing_root


class TestIncreasingRoot:
    @given(st.floats(0.01, 100), st.floats(0.5, 4), st.floats(0.01, 50))
    def test_power_matches_brentq(self, c, p, x0):
        phi = lambda t: t ** p - c
        root = increasing_root(phi, x0)
        assert root == pytest.approx(brentq(phi, 1e-12, 1e6, xtol=1e-15), rel=1e-10)

    def test_uses_derivative(self):
        root = increasing_root(lambda t: math.exp(t) - 5, 1.0, dphi=math.exp, lo=-math.inf)
        assert root == pytest.approx(math.log(5), rel=1e-14)

    def test_negative_domain(self):
        assert increasing_root(lambda t: t + 3, 0.0, lo=-math.inf) == pytest.approx(-3)

    def test_infeasible_region_counts_as_minus_infinity(self):
        def phi(t):
            if t < 2:
                raise InfeasibleError("outside")
            return t - 3
        assert increasing_root(phi, 10.0) == pytest.approx(3)

    def test_no_root_above_lower_bound(self):
        with pytest.raises(InfeasibleError):
            increasing_root(lambda t: t + 1, 1.0, lo=0.0)

    def test_no_root_below_expansion_limit(self):
        with pytest.raises(InfeasibleError):
            increasing_root(lambda t: -1.0 / (1 + t), 1.0, limit=1e6)


class TestBracket:
    def test_bracket_contains_root(self):
        L, fL, H, fH = bracket_increasing(lambda t: t * t - 50, 1.0)
        assert L < math.sqrt(50) < H and fL < 0 < fH
