"""Trading fees as sequential composition with a per-trade linear AMM.

Input side: of a deposit ``delta``, ``(1 - gamma) delta`` is swapped and the
rest stays in the pool, so the final state is ``(a + delta, g(a + (1 - gamma) delta))``.
The same state comes out of composing the linear leg
``f(x) = (1 - gamma)(a + delta - x)`` in front of the AMM.

Output side: the linear leg sits behind the AMM and withholds ``gamma`` of
the swap output, which stays in the pool.

Both routes run their arithmetic in exact rationals (floats convert exactly)
and round once at the end, so they agree bit for bit.
"""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

from .compose import seq_compose_many_to_one
from .core import AmmInstance, Linear, Relabeled, StateVector, solve_coordinate
from .errors import DimensionError, DomainError, NonConformingError


@dataclass(frozen=True)
class FeeTrade:
    state: StateVector   # the fee-charging AMM's state after the trade
    output: object       # amount of the output asset the trader receives
    fee: object          # fee retained by the pool, in the asset it is levied on


def _q(v) -> Fraction:
    return v if isinstance(v, Fraction) else Fraction(v)


def _g(inst: AmmInstance, x):
    d = inst.defn
    return solve_coordinate(d, [x, 1], 1, inst.tol)


def input_linear_leg(a, gamma, delta, assets=("X", "X#net")) -> AmmInstance:
    """``L = (x, (1 - gamma)(a + delta - x))`` at ``(a, (1 - gamma) delta)``."""
    a, gamma, delta = _q(a), _q(gamma), _q(delta)
    keep = 1 - gamma
    leg = Linear(tuple(assets), (keep, Fraction(1)), keep * (a + delta))
    return AmmInstance(leg, StateVector(tuple(assets), (a, keep * delta)))


def output_linear_leg(y0, gamma, assets=("Y#gross", "Y")) -> AmmInstance:
    """Pays ``(1 - gamma)`` of every gross unit received: ``y = (1 - gamma)(2 y0 - z)`` at ``(y0, (1 - gamma) y0)``."""
    y0, gamma = _q(y0), _q(gamma)
    keep = 1 - gamma
    leg = Linear(tuple(assets), (keep, Fraction(1)), 2 * keep * y0)
    return AmmInstance(leg, StateVector(tuple(assets), (y0, keep * y0)))


@dataclass(frozen=True)
class FeeAmm:
    """A 2-asset AMM that charges fee ``gamma`` on the input or the output side."""

    inst: AmmInstance
    gamma: float
    side: str = "input"

    def __post_init__(self):
        if self.inst.defn.dim != 2:
            raise DimensionError("fees are modeled for 2-asset AMMs")
        if not self.inst.defn.axiom_conforming:
            raise NonConformingError("fee wrapper needs a conforming AMM")
        if not 0 < self.gamma < 1:
            raise DomainError(f"fee must lie in (0, 1), got {self.gamma!r}")
        if self.side not in ("input", "output"):
            raise ValueError("side must be 'input' or 'output'")

    @property
    def assets(self):
        return self.inst.defn.assets

    def _check(self, delta):
        if not delta > 0:
            raise DomainError("deposit must be positive")

    def deposit(self, delta) -> FeeTrade:
        """Direct formula."""
        self._check(delta)
        a, ga = (_q(q) for q in self.inst.state.values)
        gamma, delta = _q(self.gamma), _q(delta)
        if self.side == "input":
            y = _q(_g(self.inst, a + (1 - gamma) * delta))
            return self._trade(a + delta, y, ga - y, gamma * delta)
        y = _q(_g(self.inst, a + delta))
        gross = ga - y
        fee = gamma * gross
        return self._trade(a + delta, y + fee, gross - fee, fee)

    def deposit_via_composition(self, delta) -> FeeTrade:
        """Build the per-trade linear leg, compose, and trade the composition."""
        self._check(delta)
        x_name, y_name = self.assets
        a, ga = (_q(q) for q in self.inst.state.values)
        gamma, delta = _q(self.gamma), _q(delta)
        if self.side == "input":
            hidden = x_name + "#net"
            leg = input_linear_leg(a, gamma, delta, (x_name, hidden))
            amm = AmmInstance(Relabeled(self.inst.defn, (hidden, y_name)),
                              StateVector((hidden, y_name), (a, ga)))
            comp = seq_compose_many_to_one(leg, amm, hidden, allow_linear=True).defn
            z, _ = comp.hidden_in([a + delta])
            y = _q(comp.output([a + delta]))
            # the pool ends holding its own deposit, which includes the fee
            return self._trade(a + delta, y, ga - y, delta - (z - a))
        hidden = y_name + "#gross"
        amm = AmmInstance(Relabeled(self.inst.defn, (x_name, hidden)),
                          StateVector((x_name, hidden), (a, ga)))
        leg = output_linear_leg(ga, gamma, (hidden, y_name))
        comp = seq_compose_many_to_one(amm, leg, hidden, allow_linear=True).defn
        z, z_up = comp.hidden_in([a + delta])
        paid = leg.state.values[1] - _q(comp.output([a + delta]))
        gross = z - ga
        fee = gross - paid
        return self._trade(a + delta, _q(z_up) + fee, paid, fee)

    def _trade(self, x, y, output, fee) -> FeeTrade:
        state = StateVector(self.assets, (float(x), float(y)))
        return FeeTrade(state, float(output), float(fee))


def with_fee(inst: AmmInstance, gamma, side: str = "input") -> FeeAmm:
    return FeeAmm(inst, gamma, side)


def linear_leg_identities(a, gamma, delta) -> tuple:
    """``(f(a), f(a + delta))`` of the input-side leg, computed exactly."""
    leg = input_linear_leg(a, gamma, delta)
    d = leg.defn
    fa = d.solve_closed([_q(a), 1], 1)
    fend = d.solve_closed([_q(a) + _q(delta), 1], 1)
    return fa, fend
