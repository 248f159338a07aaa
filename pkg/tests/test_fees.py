from __future__ import annotations

from fractions import Fraction

import pytest
from hypothesis import given, strategies as st

from ammalgebra.core import AmmInstance, ConstantMean, ConstantProduct, StateVector
from ammalgebra.errors import DomainError, NonConformingError
from ammalgebra.core import Linear
from ammalgebra.fees import input_linear_leg, linear_leg_identities, with_fee

F = Fraction
UNIT = AmmInstance(ConstantProduct(("X", "Y"), 1), StateVector(("X", "Y"), (1, 1)))


class TestInputFee:
    def test_direct_formula(self):
        t = with_fee(UNIT, 0.003).deposit(1)
        assert t.state.values == (2.0, float(1 / (1 + (1 - F(0.003)))))
        assert t.fee == pytest.approx(0.003)

    @given(st.floats(0.01, 10), st.floats(1e-4, 0.5), st.floats(1e-3, 20))
    def test_paths_agree_bit_for_bit(self, a, gamma, delta):
        d = ConstantMean(("X", "Y"), (2, 1), 0.75)
        inst = AmmInstance(d, StateVector(("X", "Y"), (a, 0.75 / a ** 2)))
        for side in ("input", "output"):
            fa = with_fee(inst, gamma, side)
            assert fa.deposit(delta) == fa.deposit_via_composition(delta)

    def test_leg_identities(self):
        fa, fend = linear_leg_identities(F(2), F(3, 1000), F(5))
        assert fa == F(997, 1000) * 5 and fend == 0

    def test_leg_state(self):
        leg = input_linear_leg(1, F(1, 10), 2)
        assert leg.state.values == (1, F(9, 5))


class TestOutputFee:
    def test_fee_withheld_from_output(self):
        gross = 1 - F(1, 2)
        t = with_fee(UNIT, F(1, 10), "output").deposit(1)
        assert t.output == pytest.approx(float(gross * F(9, 10)))
        assert t.fee == pytest.approx(float(gross / 10))
        assert t.state.values[1] == pytest.approx(0.5 + 0.05)


class TestValidation:
    def test_gamma_range(self):
        with pytest.raises(DomainError):
            with_fee(UNIT, 1.0)

    def test_nonconforming(self):
        lin = AmmInstance(Linear(("X", "Y"), (1, 1), 2), StateVector(("X", "Y"), (1, 1)))
        with pytest.raises(NonConformingError):
            with_fee(lin, 0.01)

    def test_deposit_positive(self):
        with pytest.raises(DomainError):
            with_fee(UNIT, 0.01).deposit(0)
