"""Sequential and parallel composition of AMMs.

Sequential: upstream ``A`` turns inputs ``x`` into a hidden asset ``Z``,
which is fed to downstream ``B``.  With ``f`` the upstream's hidden balance
and ``g`` the downstream's output balance, the composition is the graph
``y_out = g(c + f(a) - f(x), y)`` anchored at the constituents' states.

Parallel: two AMMs over the same assets share an input, split component-wise
by ``t``.  Its coordinates are deltas from the anchor for the inputs and the
combined output holdings ``h_t(x) = f(a + t x) + g(b + (1 - t) x)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .core import (
    DEFAULT_TOL,
    AmmDef,
    AmmInstance,
    Linear,
    StateVector,
    Tolerances,
    _check_assets,
    solve_coordinate,
)
from .errors import DimensionError, DomainError, InfeasibleError, NonConformingError
from .operators import virtualize


def _shared(a: AmmDef, b: AmmDef) -> list[str]:
    return [x for x in a.assets if x in b.assets]


def _require(inst: AmmInstance, allow_linear: bool = False) -> None:
    d = inst.defn
    if d.axiom_conforming:
        return
    if allow_linear and isinstance(d, Linear):
        return
    raise NonConformingError(f"{d.describe()} is non-conforming and cannot be composed")


# --------------------------------------------------------------------------
# sequential

@dataclass(frozen=True)
class SeqComposed(AmmDef):
    """``A (x) B`` in graph form over (upstream inputs, downstream inputs, output).

    The output is the last non-hidden asset of the downstream AMM.  Values are
    computed through the constituents' closed forms when they exist, so exact
    rationals propagate through :meth:`output`.
    """

    upstream: AmmInstance
    downstream: AmmInstance
    hidden: str
    conforming: bool = True
    assets: tuple[str, ...] = field(init=False)
    family = "seq_composed"

    def __post_init__(self):
        up, down = self.upstream.defn, self.downstream.defn
        up.index(self.hidden)
        down.index(self.hidden)
        xs = tuple(a for a in up.assets if a != self.hidden)
        ys = tuple(a for a in down.assets if a != self.hidden)
        if not xs or not ys:
            raise DimensionError("each constituent needs a non-hidden asset")
        object.__setattr__(self, "assets", _check_assets(xs + ys))

    @property
    def axiom_conforming(self):
        return self.conforming

    @property
    def inputs(self) -> tuple[str, ...]:
        return tuple(a for a in self.upstream.defn.assets if a != self.hidden)

    @property
    def _m(self) -> int:
        return self.upstream.defn.dim - 1

    @property
    def hidden_anchor_up(self):
        return self.upstream.state[self.hidden]

    @property
    def hidden_anchor_down(self):
        return self.downstream.state[self.hidden]

    def _upstream_point(self, xs) -> list:
        up = self.upstream.defn
        k = up.index(self.hidden)
        vals = list(xs)
        vals.insert(k, 1.0)
        return vals, k

    def hidden_in(self, xs):
        """Hidden units the downstream holds after the upstream moves to ``xs``."""
        up = self.upstream.defn
        vals, k = self._upstream_point(xs)
        if isinstance(up, Linear):
            # a per-trade linear leg may be drained exactly to zero
            z_up = up.solve_closed(vals, k)
            if z_up < 0:
                raise InfeasibleError(f"linear leg cannot supply {-float(z_up):.6g} {self.hidden}")
        else:
            z_up = solve_coordinate(up, vals, k, self.upstream.tol)
        anchors = (self.hidden_anchor_down, self.hidden_anchor_up)
        if isinstance(z_up, float) and all(isinstance(q, Fraction) for q in anchors):
            z_up = Fraction(z_up)
        z = anchors[0] + anchors[1] - z_up
        if not z > self.downstream.tol.positivity_floor:
            raise InfeasibleError(
                f"hidden asset {self.hidden} exhausted: downstream would hold {float(z):.6g}")
        return z, z_up

    def _downstream_point(self, z, ys) -> tuple[list, int, int]:
        down = self.downstream.defn
        kz = down.index(self.hidden)
        ko = down.dim - 1 if kz != down.dim - 1 else down.dim - 2
        vals = [None] * down.dim
        vals[kz] = z
        others = [i for i in range(down.dim) if i not in (kz, ko)]
        for i, q in zip(others, ys):
            vals[i] = q
        vals[ko] = 1.0
        return vals, kz, ko

    def output(self, values):
        """Output balance ``h(x, y)`` for inputs ``values`` (output slot excluded)."""
        m = self._m
        xs, ys = list(values[:m]), list(values[m:])
        z, _ = self.hidden_in(xs)
        vals, _, ko = self._downstream_point(z, ys)
        return solve_coordinate(self.downstream.defn, vals, ko, self.downstream.tol)

    def value(self, p):
        p = np.asarray(p, dtype=float)
        return float(p[-1]) - float(self.output(list(p[:-1])))

    def grad(self, p):
        p = np.asarray(p, dtype=float)
        m = self._m
        up, down = self.upstream.defn, self.downstream.defn
        xs, ys = list(p[:m]), list(p[m:-1])
        z, z_up = self.hidden_in(xs)
        upv, ku = self._upstream_point(xs)
        upv[ku] = z_up
        gu = up.grad(np.array([float(q) for q in upv]))
        f_x = -np.delete(gu, ku) / gu[ku]
        dv, kz, ko = self._downstream_point(z, ys)
        dv[ko] = solve_coordinate(down, dv, ko, self.downstream.tol)
        gd = down.grad(np.array([float(q) for q in dv]))
        g_z = -gd[kz] / gd[ko]
        others = [i for i in range(down.dim) if i not in (kz, ko)]
        g_y = -gd[others] / gd[ko]
        # value = y_out - g(c + f(a) - f(x), y)
        return np.concatenate([g_z * f_x, -g_y, [1.0]])

    def solve_closed(self, values, k):
        if k == self.dim - 1:
            return self.output(list(values[:-1]))
        return None

    def initial_point(self, tol=DEFAULT_TOL):
        return self.anchor.array

    @property
    def anchor(self) -> StateVector:
        xs = [self.upstream.state[a] for a in self.inputs]
        down = self.downstream.defn
        ys = [self.downstream.state[a] for a in down.assets if a != self.hidden]
        return StateVector(self.assets, tuple(xs + ys))

    def describe(self):
        return (f"seq({self.upstream.defn.describe()} >> {self.downstream.defn.describe()}; "
                f"hidden {self.hidden})")


def _seq(A: AmmInstance, B: AmmInstance, hidden: str, allow_linear: bool = False) -> AmmInstance:
    _require(A, allow_linear)
    _require(B, allow_linear)
    conforming = A.defn.axiom_conforming and B.defn.axiom_conforming
    if allow_linear and not conforming:
        # an affine leg composed with a strictly convex AMM stays strictly convex
        conforming = not (isinstance(A.defn, Linear) and isinstance(B.defn, Linear))
    d = SeqComposed(A, B, hidden, conforming)
    return AmmInstance(d, d.anchor, A.tol)


def seq_compose_2d(A: AmmInstance, B: AmmInstance) -> AmmInstance:
    """Compose two 2-asset AMMs sharing one asset: the result trades A's other asset for B's."""
    if A.defn.dim != 2 or B.defn.dim != 2:
        raise DimensionError("seq_compose_2d takes two 2-asset AMMs")
    shared = _shared(A.defn, B.defn)
    if len(shared) != 1:
        raise DimensionError(f"constituents must share exactly one asset, share {shared}")
    return _seq(A, B, shared[0])


def seq_compose_many_to_one(A: AmmInstance, B: AmmInstance, hidden: str | None = None,
                            allow_linear: bool = False) -> AmmInstance:
    """Compose through a single hidden asset shared by ``A`` and ``B``."""
    shared = _shared(A.defn, B.defn)
    if hidden is None:
        if len(shared) != 1:
            raise DimensionError(
                f"constituents share {len(shared)} assets {shared}; exactly one is required "
                "(use seq_compose_many_to_many with a hidden valuation)")
        hidden = shared[0]
    elif shared != [hidden]:
        raise DimensionError(f"{hidden!r} must be the only shared asset; shared: {shared}")
    return _seq(A, B, hidden, allow_linear)


def seq_compose_many_to_many(A: AmmInstance, B: AmmInstance, hidden_valuation,
                             name: str | None = None) -> AmmInstance:
    """Virtualize the shared assets in both constituents along ``hidden_valuation``, then compose.

    ``hidden_valuation`` is a :class:`Valuation` over the shared assets or a
    positive direction in the order the shared assets appear in ``A``.
    """
    shared = _shared(A.defn, B.defn)
    if len(shared) < 2:
        return seq_compose_many_to_one(A, B)
    if hidden_valuation is None:
        raise ValueError("hidden valuation required to compose through several shared assets")
    name = name or "+".join(shared)
    Av, _ = virtualize(A, shared, hidden_valuation, name=name)
    Bv, _ = virtualize(B, shared, hidden_valuation, name=name)
    return _seq(Av, Bv, name)


@dataclass(frozen=True)
class NaiveAmbiguity:
    """Two states reached by the same deposit through different hidden transfers."""

    first: StateVector
    second: StateVector
    transfers: tuple
    upstream_states: tuple
    downstream_states: tuple


def demonstrate_naive_ambiguity(downstream_level=Fraction(2)) -> tuple[StateVector, StateVector]:
    """Composing through two hidden assets without virtualization is ill-defined.

    A := wxy = 1 at (1, 1, 1) and B trades (x, y, z) from (2, 2, 2).  A deposit
    of 3 W can hand B either (1/2, 1/2) or (1/4, 2/3) of (X, Y); both keep A on
    its level set and lead to different (w, z) states.  B's level is
    ``downstream_level``; the default 2 gives (4, 8/25) and (4, 1/3), and 8
    (the level through B's start state) gives (4, 32/25) and (4, 4/3).
    """
    return naive_ambiguity_detail(downstream_level)[:2]


def naive_ambiguity_detail(downstream_level=Fraction(2)):
    F = Fraction
    w = F(1) + 3
    states, ups, downs = [], [], []
    transfers = ((F(-1, 2), F(-1, 2)), (F(-1, 4), F(-2, 3)))
    for dx, dy in transfers:
        xa, ya = 1 + dx, 1 + dy
        if w * xa * ya != 1:
            raise AssertionError("transfer does not keep the upstream on its level set")
        xb, yb = 2 - dx, 2 - dy
        z = F(downstream_level) / (xb * yb)
        ups.append((w, xa, ya))
        downs.append((xb, yb, z))
        states.append(StateVector(("W", "Z"), (w, z)))
    return states[0], states[1], NaiveAmbiguity(states[0], states[1], transfers, tuple(ups), tuple(downs))


# --------------------------------------------------------------------------
# parallel

def _split_vector(t, n_inputs: int) -> tuple:
    if isinstance(t, (int, float, Fraction)):
        t = (t,) * n_inputs
    t = tuple(t)
    if len(t) != n_inputs:
        raise DimensionError(f"split needs {n_inputs} components, got {len(t)}")
    for ti in t:
        if not 0 <= ti <= 1:
            raise DomainError(f"split components must lie in [0, 1], got {ti!r}")
    return t


def _leg_output(inst: AmmInstance, xs):
    d = inst.defn
    vals = list(xs) + [1.0]
    return solve_coordinate(d, vals, d.dim - 1, inst.tol)


@dataclass(frozen=True)
class ParComposed(AmmDef):
    """``A || B`` with split ``t``: ``y - f(a + t x) - g(b + (1 - t) x)``.

    Input coordinates are deltas from the anchors (a trader deposit is a
    positive delta); the last coordinate is the combined output holdings.
    """

    left: AmmInstance
    right: AmmInstance
    t: tuple
    assets: tuple[str, ...] = field(init=False)
    family = "par_composed"
    delta_coords = True

    def __post_init__(self):
        if self.left.defn.assets != self.right.defn.assets:
            raise DimensionError(
                f"parallel constituents must trade the same assets in the same order: "
                f"{self.left.defn.assets} vs {self.right.defn.assets}")
        object.__setattr__(self, "assets", self.left.defn.assets)
        object.__setattr__(self, "t", _split_vector(self.t, len(self.assets) - 1))

    @property
    def axiom_conforming(self):
        return self.left.defn.axiom_conforming and self.right.defn.axiom_conforming

    def _legs(self, xs):
        a = self.left.state.values[:-1]
        b = self.right.state.values[:-1]
        xl = [ai + ti * x for ai, ti, x in zip(a, self.t, xs)]
        xr = [bi + (1 - ti) * x for bi, ti, x in zip(b, self.t, xs)]
        floor = self.left.tol.positivity_floor
        if any(not q > floor for q in xl) or any(not q > floor for q in xr):
            raise InfeasibleError("withdrawal exceeds a constituent's input balance")
        return xl, xr

    def output(self, values):
        xl, xr = self._legs(list(values))
        return _leg_output(self.left, xl) + _leg_output(self.right, xr)

    def leg_outputs(self, xs):
        xl, xr = self._legs(list(xs))
        return _leg_output(self.left, xl), _leg_output(self.right, xr)

    def value(self, p):
        p = np.asarray(p, dtype=float)
        return float(p[-1]) - float(self.output(list(p[:-1])))

    def grad(self, p):
        p = np.asarray(p, dtype=float)
        xl, xr = self._legs(list(p[:-1]))
        out = []
        for inst, x in ((self.left, xl), (self.right, xr)):
            y = float(_leg_output(inst, x))
            g = inst.defn.grad(np.array([float(q) for q in x] + [y]))
            out.append(-g[:-1] / g[-1])
        t = np.array([float(q) for q in self.t])
        dh = t * out[0] + (1 - t) * out[1]
        return np.append(-dh, 1.0)

    def solve_closed(self, values, k):
        if k == self.dim - 1:
            return self.output(list(values[:-1]))
        return None

    def coordinate_lower_bound(self, p, k):
        return -math.inf

    def initial_point(self, tol=DEFAULT_TOL):
        return self.anchor.array

    @property
    def anchor(self) -> StateVector:
        n = self.dim - 1
        return StateVector(self.assets, (0,) * n + (self.output([0] * n),), delta=True)

    def describe(self):
        ts = ", ".join(f"{float(q):.6g}" for q in self.t)
        return f"par({self.left.defn.describe()} || {self.right.defn.describe()}; t=[{ts}])"


def par_compose(A: AmmInstance, B: AmmInstance, t) -> AmmInstance:
    """Parallel composition with split ``t`` (scalar or one entry per input asset)."""
    _require(A)
    _require(B)
    d = ParComposed(A, B, t)
    return AmmInstance(d, d.anchor, A.tol)


def _rate(inst: AmmInstance, x) -> float:
    """Slope of the output balance with respect to the input, ``f'(x)`` (negative)."""
    d = inst.defn
    y = float(_leg_output(inst, [x]))
    g = d.grad(np.array([float(x), y]))
    return float(-g[0] / g[1])


def split_return(A: AmmInstance, B: AmmInstance, amount, t) -> float:
    """Output received for depositing ``amount`` split ``t`` to A and ``1 - t`` to B."""
    a, fa = A.state.values
    b, gb = B.state.values
    fl = _leg_output(A, [a + t * amount])
    gr = _leg_output(B, [b + (1 - t) * amount])
    return (fa - fl) + (gb - gr)


@dataclass(frozen=True)
class SplitResult:
    t: float
    total_return: float
    to_first: float
    to_second: float
    residual: float
    interior: bool


def optimal_split(A: AmmInstance, B: AmmInstance, amount, tol: Tolerances = DEFAULT_TOL) -> float:
    """The split maximizing output for a deposit of ``amount`` of the input asset."""
    return optimal_split_detail(A, B, amount, tol).t


def optimal_split_detail(A: AmmInstance, B: AmmInstance, amount, tol: Tolerances = DEFAULT_TOL) -> SplitResult:
    """Bisection on ``r(t) = f'(a + t x) - g'(b + (1 - t) x)``, increasing in ``t``.

    The return has derivative ``-x r(t)``: a sign change of ``r`` is the
    maximum; otherwise the better boundary wins, ``t = 0`` on a tie.
    """
    for inst in (A, B):
        if inst.defn.dim != 2:
            raise DimensionError("optimal_split takes 2-asset constituents; virtualize first")
        _require(inst)
    if A.defn.assets != B.defn.assets:
        raise DimensionError("constituents must trade the same assets")
    if not amount > 0:
        raise DomainError("split amount must be positive")
    x = float(amount)
    a = float(A.state.values[0])
    b = float(B.state.values[0])

    def r(t):
        return _rate(A, a + t * x) - _rate(B, b + (1 - t) * x)

    r0, r1 = r(0.0), r(1.0)

    def result(t, res, interior):
        ret = float(split_return(A, B, x, t))
        return SplitResult(t, ret, t * x, (1 - t) * x, res, interior)

    if r0 >= 0 or r1 <= 0:
        R0 = float(split_return(A, B, x, 0.0))
        R1 = float(split_return(A, B, x, 1.0))
        if R1 > R0:
            return result(1.0, r1, False)
        return result(0.0, r0, False)
    lo, hi = 0.0, 1.0
    rl, rh = r0, r1
    for _ in range(tol.max_iter):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        rm = r(mid)
        if rm == 0.0:
            lo = hi = mid
            rl = rh = rm
            break
        if rm < 0:
            lo, rl = mid, rm
        else:
            hi, rh = mid, rm
    t, res = (lo, rl) if abs(rl) <= abs(rh) else (hi, rh)
    return result(t, res, True)
