"""Dimension-reducing operators: projection and asset virtualization.

Projection fixes some coordinates and keeps the rest free.  Virtualization
merges a subset of assets into one virtual asset that moves along a fixed
direction ``v`` from an anchor ``b``: one virtual unit is the bundle ``v``.
The anchor is frozen when the virtualized AMM is built.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping, Sequence

import numpy as np

from .core import (
    DEFAULT_TOL,
    AmmDef,
    AmmInstance,
    Number,
    StateVector,
    Tolerances,
    Valuation,
    _check_assets,
    _fmt,
)
from .errors import DimensionError, DomainError, InfeasibleError
from .roots import increasing_root


def _exact(q) -> bool:
    return isinstance(q, (int, Fraction)) and not isinstance(q, bool)


# --------------------------------------------------------------------------
# projection

@dataclass(frozen=True)
class Projected(AmmDef):
    """``y -> A(a, y)`` with the coordinates in ``fixed`` held constant."""

    base: AmmDef
    fixed: tuple  # ((asset, value), ...)
    assets: tuple[str, ...] = field(init=False)
    family = "projected"

    def __post_init__(self):
        fixed = tuple((a, q) for a, q in self.fixed)
        object.__setattr__(self, "fixed", fixed)
        names = [a for a, _ in fixed]
        for a in names:
            self.base.index(a)
        free = tuple(a for a in self.base.assets if a not in names)
        object.__setattr__(self, "assets", free)

    @property
    def axiom_conforming(self):
        return self.base.axiom_conforming

    @property
    def _free_idx(self) -> list[int]:
        return [self.base.index(a) for a in self.assets]

    def _full(self, y) -> list:
        full = [None] * self.base.dim
        for a, q in self.fixed:
            full[self.base.index(a)] = q
        for i, q in zip(self._free_idx, y):
            full[i] = q
        return full

    def value(self, y):
        full = np.array([float(q) for q in self._full(list(np.asarray(y, dtype=float)))])
        return self.base.value(full)

    def grad(self, y):
        full = np.array([float(q) for q in self._full(list(np.asarray(y, dtype=float)))])
        return self.base.grad(full)[self._free_idx]

    def hessian(self, y):
        full = np.array([float(q) for q in self._full(list(np.asarray(y, dtype=float)))])
        idx = self._free_idx
        return self.base.hessian(full)[np.ix_(idx, idx)]

    def solve_closed(self, values, k):
        return self.base.solve_closed(self._full(values), self._free_idx[k])

    def describe(self):
        fx = ", ".join(f"{a}={_fmt(q)}" for a, q in self.fixed)
        return f"project({self.base.describe()}; {fx})"


def project(defn: AmmDef, fixed: Mapping[str, Number]) -> AmmDef:
    """The AMM over the remaining assets with ``fixed`` coordinates held constant."""
    if not fixed:
        return defn
    for a, q in fixed.items():
        defn.index(a)
        if not q > 0:
            raise DomainError(f"fixed coordinate {a} must be positive, got {q!r}")
    if defn.dim - len(fixed) < 2:
        raise DimensionError(
            f"projection must leave at least 2 free coordinates; {defn.dim - len(fixed)} remain")
    return Projected(defn, tuple(fixed.items()))


def inherit_valuation(v: Valuation, subset: Sequence[str]) -> Valuation:
    """Restrict ``v`` to ``subset`` and renormalize: ``v_j / (1 - sum of the rest)``."""
    subset = tuple(subset)
    if not subset:
        raise ValueError("subset must be non-empty")
    for a in subset:
        if a not in v.assets:
            raise DimensionError(f"asset {a!r} not in valuation {v.assets}")
    if len(subset) == 1:
        raise DimensionError("an inherited valuation needs at least two assets")
    rest = [w for a, w in zip(v.assets, v.weights) if a not in subset]
    ws = [v[a] for a in subset]
    if all(_exact(w) for w in v.weights):
        denom = 1 - sum(rest)
        return Valuation(subset, tuple(Fraction(w) / denom for w in ws))
    denom = 1.0 - math.fsum(float(w) for w in rest)
    out = [float(w) / denom for w in ws]
    total = math.fsum(out)
    return Valuation(subset, tuple(w / total for w in out))


# --------------------------------------------------------------------------
# virtualization

@dataclass(frozen=True)
class VirtualizationSpec:
    """How a subset of assets maps to one virtual asset.

    ``c_units`` is the largest ``c`` with ``anchor_b - c v >= 0``; the residue
    ``anchor_b - c v`` has a zero wherever the minimum is attained.
    """

    subset: tuple[str, ...]
    v: tuple
    anchor_b: tuple
    c_units: Number
    residue_r: tuple
    virtual_asset: str

    def underlying(self, z) -> tuple:
        """Subset quantities for ``z`` virtual units: ``b + (z - c) v``."""
        if z == self.c_units:
            return tuple(self.anchor_b)
        if _exact(z) and _exact(self.c_units) and all(_exact(w) for w in self.v):
            return tuple(b + (z - self.c_units) * w for b, w in zip(self.anchor_b, self.v))
        dz = float(z) - float(self.c_units)
        return tuple(float(b) + dz * float(w) for b, w in zip(self.anchor_b, self.v))


def _units_and_residue(b: Sequence, v: Sequence):
    exact = all(_exact(q) for q in b) and all(_exact(w) for w in v)
    fb = [Fraction(q) for q in b]
    fv = [Fraction(w) for w in v]
    ratios = [bi / vi for bi, vi in zip(fb, fv)]
    c = min(ratios)
    r = [bi - c * vi for bi, vi in zip(fb, fv)]
    if exact:
        return c, tuple(r)
    return float(c), tuple(float(q) for q in r)


@dataclass(frozen=True)
class Virtualized(AmmDef):
    """``(A|v)(x, z) = A(x, b + (z - c) v)`` with the virtual asset last."""

    base: AmmDef
    spec: VirtualizationSpec
    anchor: tuple | None = field(default=None, compare=False)
    assets: tuple[str, ...] = field(init=False)
    family = "virtualized"

    def __post_init__(self):
        kept = tuple(a for a in self.base.assets if a not in self.spec.subset)
        object.__setattr__(self, "assets", _check_assets(kept + (self.spec.virtual_asset,)))

    @property
    def axiom_conforming(self):
        return self.base.axiom_conforming

    @property
    def _kept_idx(self) -> list[int]:
        return [self.base.index(a) for a in self.assets[:-1]]

    @property
    def _sub_idx(self) -> list[int]:
        return [self.base.index(a) for a in self.spec.subset]

    @property
    def _v(self) -> np.ndarray:
        return np.array([float(w) for w in self.spec.v])

    def _full(self, p) -> list:
        full = [None] * self.base.dim
        for i, q in zip(self._kept_idx, p[:-1]):
            full[i] = q
        for i, q in zip(self._sub_idx, self.spec.underlying(p[-1])):
            full[i] = q
        return full

    def _full_array(self, p) -> np.ndarray:
        p = np.asarray(p, dtype=float)
        full = np.empty(self.base.dim)
        full[self._kept_idx] = p[:-1]
        b = np.array([float(q) for q in self.spec.anchor_b])
        full[self._sub_idx] = b + (p[-1] - float(self.spec.c_units)) * self._v
        return full

    def value(self, p):
        return self.base.value(self._full_array(p))

    def grad(self, p):
        g = self.base.grad(self._full_array(p))
        return np.append(g[self._kept_idx], float(np.dot(g[self._sub_idx], self._v)))

    def hessian(self, p):
        H = self.base.hessian(self._full_array(p))
        k, s, v = self._kept_idx, self._sub_idx, self._v
        m = len(k)
        out = np.empty((m + 1, m + 1))
        out[:m, :m] = H[np.ix_(k, k)]
        cross = H[np.ix_(k, s)] @ v
        out[:m, m] = cross
        out[m, :m] = cross
        out[m, m] = float(v @ H[np.ix_(s, s)] @ v)
        return out

    def solve_closed(self, values, k):
        if k == self.dim - 1:
            return None
        return self.base.solve_closed(self._full(values), self._kept_idx[k])

    def coordinate_lower_bound(self, p, k):
        if k != self.dim - 1:
            return self.base.coordinate_lower_bound(self._full_array(p), self._kept_idx[k])
        c = float(self.spec.c_units)
        return max(0.0, max(c - float(b) / float(w) for b, w in zip(self.spec.anchor_b, self.spec.v)))

    def initial_point(self, tol=DEFAULT_TOL):
        if self.anchor is not None:
            return np.array([float(q) for q in self.anchor])
        return super().initial_point(tol)

    def describe(self):
        vs = ", ".join(_fmt(w) for w in self.spec.v)
        return (f"virtualize({self.base.describe()}; {','.join(self.spec.subset)} -> "
                f"{self.spec.virtual_asset} along [{vs}])")


def _direction(subset: tuple[str, ...], v) -> tuple:
    if isinstance(v, Valuation):
        return tuple(v.reordered(subset).weights) if set(v.assets) == set(subset) else \
            tuple(v[a] for a in subset)
    if isinstance(v, Mapping):
        return tuple(v[a] for a in subset)
    v = tuple(v)
    if len(v) != len(subset):
        raise DimensionError(f"direction has {len(v)} entries for {len(subset)} assets")
    return v


def virtualize(inst: AmmInstance, subset: Sequence[str], v, name: str | None = None,
               tol: Tolerances | None = None) -> tuple[AmmInstance, VirtualizationSpec]:
    """Merge ``subset`` into one virtual asset moving along ``v``.

    Args:
        inst: AMM and anchor state.
        subset: at least two assets of ``inst``; at least one must remain.
        v: a :class:`Valuation` over the subset, or any positive direction
            (not necessarily normalized).
        name: virtual asset id; defaults to the subset ids joined by ``+``.

    Returns:
        The virtualized instance at ``(kept coordinates, c_units)`` and its
        spec.  Exact inputs (ints, Fractions) give exact ``c_units`` and
        residue.
    """
    tol = tol or inst.tol
    defn = inst.defn
    subset = tuple(subset)
    if len(subset) < 2:
        raise DimensionError("virtualization merges at least two assets")
    for a in subset:
        defn.index(a)
    if len(set(subset)) != len(subset):
        raise ValueError("duplicate assets in the virtualized subset")
    if defn.dim - len(subset) + 1 < 2:
        raise DimensionError(
            f"virtualizing {len(subset)} of {defn.dim} assets leaves a "
            f"{defn.dim - len(subset) + 1}-dimensional object; an AMM needs at least 2")
    direction = _direction(subset, v)
    if any(not w > 0 for w in direction):
        raise DomainError("virtualization direction must be strictly positive")
    b = tuple(inst.state[a] for a in subset)
    c, r = _units_and_residue(b, direction)
    if not c > tol.positivity_floor:
        raise InfeasibleError("anchor admits no positive number of virtual units")
    name = name or "+".join(subset)
    spec = VirtualizationSpec(subset, direction, b, c, r, name)
    kept_assets = tuple(a for a in defn.assets if a not in subset)
    kept = tuple(inst.state[a] for a in kept_assets)
    vdef = Virtualized(defn, spec, anchor=kept + (c,))
    state = StateVector(vdef.assets, kept + (c,))
    return AmmInstance(vdef, state, tol), spec


def devirtualize(spec: VirtualizationSpec, virtual_state, base_assets: Sequence[str] | None = None,
                 kept_assets: Sequence[str] | None = None) -> StateVector:
    """Map a virtual state ``(x, z)`` back to underlying coordinates.

    ``virtual_state`` is a :class:`StateVector` (its asset ids give the
    kept assets) or a plain sequence with the virtual quantity last, in which
    case ``kept_assets`` names the others.  ``base_assets`` orders the output;
    by default kept assets come first, then the subset.
    """
    if isinstance(virtual_state, StateVector):
        kept_assets = virtual_state.assets[:-1]
        vals = virtual_state.values
    else:
        vals = tuple(virtual_state)
        if kept_assets is None:
            kept_assets = tuple(f"x{i}" for i in range(len(vals) - 1))
    z = vals[-1]
    if not z > 0:
        raise DomainError("virtual quantity must be positive")
    sub = spec.underlying(z)
    d = dict(zip(kept_assets, vals[:-1]))
    d.update(zip(spec.subset, sub))
    order = tuple(base_assets) if base_assets is not None else tuple(kept_assets) + spec.subset
    return StateVector(order, tuple(d[a] for a in order))


def solve_along_valuation(defn: AmmDef, a_prime: Mapping[str, Number], b: Mapping[str, Number],
                          v, tol: Tolerances = DEFAULT_TOL) -> float:
    """The unique ``t`` with ``A(a', b + t v) = 0``.

    ``t`` may be negative; the search interval is bounded below by the
    largest ``-b_j / v_j`` so every coordinate stays positive.

    Raises:
        InfeasibleError: the root would leave the positive orthant.
    """
    names = tuple(b)
    direction = np.array([float(w) for w in _direction(names, v)])
    if np.any(direction <= 0):
        raise DomainError("direction must be strictly positive")
    covered = set(a_prime) | set(names)
    if covered != set(defn.assets) or len(a_prime) + len(names) != defn.dim:
        raise DimensionError(f"a' and b must partition {defn.assets}")
    base = np.empty(defn.dim)
    for a, q in a_prime.items():
        base[defn.index(a)] = float(q)
    bidx = [defn.index(a) for a in names]
    bvec = np.array([float(b[a]) for a in names])
    if np.any(base[[defn.index(a) for a in a_prime]] <= 0) or np.any(bvec <= 0):
        raise DomainError("a' and b must be strictly positive")
    lo = float(np.max(-bvec / direction))

    def point(t):
        x = base.copy()
        x[bidx] = bvec + t * direction
        if np.any(x[bidx] <= tol.positivity_floor):
            raise InfeasibleError("outside the positive orthant")
        return x

    def phi(t):
        return defn.value(point(t))

    def dphi(t):
        return float(np.dot(defn.grad(point(t))[bidx], direction))

    try:
        return increasing_root(phi, 0.0, dphi=dphi, lo=lo, limit=tol.expansion, max_iter=tol.max_iter)
    except InfeasibleError as exc:
        raise InfeasibleError(f"no t keeps b + t v positive on the level set: {exc}") from None
