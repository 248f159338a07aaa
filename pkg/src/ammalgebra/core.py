"""AMM function families, state vectors, valuations and trades.

An n-dimensional AMM is a function ``A`` on the positive orthant whose zero
level set is the AMM's state space.  Families here supply ``A`` in closed form
together with its gradient and, where possible, a closed-form solve for one
coordinate given the others.  Composed and virtualized families (see
:mod:`ammalgebra.operators` and :mod:`ammalgebra.compose`) subclass
:class:`AmmDef` and carry their construction instead of a flattened formula.

Scalar closed-form paths use plain Python arithmetic, so exact rationals
(:class:`fractions.Fraction`) flow through them unchanged.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Mapping, Sequence, Union

import numpy as np

from .errors import (
    ConvergenceError,
    DimensionError,
    DomainError,
    InfeasibleError,
    OffManifoldError,
)
from .roots import increasing_root

Number = Union[float, int, Fraction]


@dataclass(frozen=True)
class Tolerances:
    """Numeric tolerances; every solver takes one of these."""

    positivity_floor: float = 1e-12
    manifold: float = 1e-9
    implicit: float = 1e-10
    kkt: float = 1e-8
    valuation_margin: float = 1e-9
    max_iter: int = 200
    max_halvings: int = 60
    expansion: float = 1e18

    def replace(self, **changes) -> "Tolerances":
        return Tolerances(**{**self.__dict__, **changes})


DEFAULT_TOL = Tolerances()


def _check_assets(assets: Sequence[str]) -> tuple[str, ...]:
    assets = tuple(assets)
    for a in assets:
        if not isinstance(a, str) or not a:
            raise ValueError(f"asset ids must be non-empty strings, got {a!r}")
    if len(set(assets)) != len(assets):
        raise ValueError(f"duplicate asset ids in {assets}")
    return assets


@dataclass(frozen=True)
class StateVector:
    """Quantities held by an AMM, one per asset.

    ``delta=True`` marks coordinates measured relative to an anchor (parallel
    compositions); such vectors are exempt from the positivity floor and are
    validated by the owning def instead.
    """

    assets: tuple[str, ...]
    values: tuple
    delta: bool = False

    def __post_init__(self):
        object.__setattr__(self, "assets", _check_assets(self.assets))
        object.__setattr__(self, "values", tuple(self.values))
        if len(self.assets) != len(self.values):
            raise DimensionError(
                f"{len(self.assets)} assets but {len(self.values)} quantities")
        if len(self.assets) < 2:
            raise DimensionError("a state needs at least two assets")
        for a, q in zip(self.assets, self.values):
            if not math.isfinite(q):
                raise DomainError(f"quantity of {a} is not finite: {q!r}")
            if not self.delta and not q > DEFAULT_TOL.positivity_floor:
                raise DomainError(f"quantity of {a} must be positive, got {q!r}")

    @classmethod
    def of(cls, mapping: Mapping[str, Number], delta: bool = False) -> "StateVector":
        return cls(tuple(mapping), tuple(mapping.values()), delta=delta)

    @property
    def array(self) -> np.ndarray:
        return np.array([float(q) for q in self.values])

    def __getitem__(self, asset: str):
        return self.values[self.assets.index(asset)]

    def __len__(self) -> int:
        return len(self.assets)

    def as_dict(self) -> dict:
        return dict(zip(self.assets, self.values))

    def reordered(self, assets: Sequence[str]) -> "StateVector":
        if sorted(assets) != sorted(self.assets):
            raise DimensionError(f"state over {self.assets} cannot be viewed as {tuple(assets)}")
        d = self.as_dict()
        return StateVector(tuple(assets), tuple(d[a] for a in assets), delta=self.delta)


@dataclass(frozen=True)
class Valuation:
    """Relative asset values: interior of the standard simplex."""

    assets: tuple[str, ...]
    weights: tuple

    def __post_init__(self):
        object.__setattr__(self, "assets", _check_assets(self.assets))
        object.__setattr__(self, "weights", tuple(self.weights))
        if len(self.assets) != len(self.weights):
            raise DimensionError("valuation needs one weight per asset")
        for a, w in zip(self.assets, self.weights):
            if not 0 < w < 1:
                raise ValueError(f"valuation weight for {a} must lie in (0, 1), got {w!r}")
        total = math.fsum(float(w) for w in self.weights)
        if abs(total - 1.0) > 1e-12:
            raise ValueError(f"valuation weights sum to {total!r}, not 1")

    @classmethod
    def normalized(cls, assets: Sequence[str], raw: Sequence[Number]) -> "Valuation":
        """Scale positive ``raw`` weights onto the simplex."""
        if all(isinstance(r, (int, Fraction)) for r in raw):
            total = sum(Fraction(r) for r in raw)
            return cls(tuple(assets), tuple(Fraction(r) / total for r in raw))
        arr = np.asarray(raw, dtype=float)
        if np.any(arr <= 0):
            raise ValueError("valuation weights must be positive")
        return cls(tuple(assets), tuple(float(w) for w in arr / arr.sum()))

    @classmethod
    def of(cls, mapping: Mapping[str, Number]) -> "Valuation":
        return cls(tuple(mapping), tuple(mapping.values()))

    @property
    def array(self) -> np.ndarray:
        return np.array([float(w) for w in self.weights])

    def __getitem__(self, asset: str):
        return self.weights[self.assets.index(asset)]

    def reordered(self, assets: Sequence[str]) -> "Valuation":
        if sorted(assets) != sorted(self.assets):
            raise DimensionError(f"valuation over {self.assets} does not cover {tuple(assets)}")
        d = dict(zip(self.assets, self.weights))
        return Valuation(tuple(assets), tuple(d[a] for a in assets))


@dataclass(frozen=True)
class ProfitLoss:
    """Trader's net transfer: old state minus new state."""

    assets: tuple[str, ...]
    deltas: tuple

    @property
    def array(self) -> np.ndarray:
        return np.array([float(d) for d in self.deltas])

    def __getitem__(self, asset: str):
        return self.deltas[self.assets.index(asset)]


# --------------------------------------------------------------------------
# finite differences

def _fd_step(xi: float) -> float:
    return max(1e-6 * abs(xi), 1e-9)


def fd_gradient(fun: Callable[[np.ndarray], float], x: np.ndarray) -> np.ndarray:
    """Central differences, falling back to one-sided at a domain edge."""
    x = np.asarray(x, dtype=float)
    g = np.empty_like(x)
    f0 = None
    for i in range(x.size):
        h = _fd_step(x[i])
        xp = x.copy()
        xm = x.copy()
        xp[i] += h
        xm[i] -= h
        try:
            fm = fun(xm)
        except (InfeasibleError, DomainError):
            if f0 is None:
                f0 = fun(x)
            g[i] = (fun(xp) - f0) / h
            continue
        g[i] = (fun(xp) - fm) / (2 * h)
    return g


def fd_jacobian(fun: Callable[[np.ndarray], np.ndarray], x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    cols = []
    for i in range(x.size):
        h = max(1e-5 * abs(x[i]), 1e-7)
        xp = x.copy()
        xm = x.copy()
        xp[i] += h
        xm[i] -= h
        try:
            cols.append((fun(xp) - fun(xm)) / (2 * h))
        except (InfeasibleError, DomainError):
            cols.append((fun(xp) - fun(x)) / h)
    J = np.column_stack(cols)
    return 0.5 * (J + J.T)


# --------------------------------------------------------------------------
# AMM definitions

class AmmDef:
    """An AMM function ``A`` over named assets.

    Subclasses implement :meth:`value`; :meth:`grad` and :meth:`hessian`
    default to finite differences.  :meth:`solve_closed` returns the
    coordinate ``k`` that puts ``values`` on the level set, or ``None`` when
    no closed form exists.
    """

    assets: tuple[str, ...]
    axiom_conforming = True
    delta_coords = False
    family = "abstract"

    @property
    def dim(self) -> int:
        return len(self.assets)

    def index(self, asset: str) -> int:
        try:
            return self.assets.index(asset)
        except ValueError:
            raise DimensionError(f"asset {asset!r} not traded by this AMM {self.assets}") from None

    def value(self, x: np.ndarray) -> float:
        raise NotImplementedError

    def grad(self, x: np.ndarray) -> np.ndarray:
        return fd_gradient(self.value, x)

    def hessian(self, x: np.ndarray) -> np.ndarray:
        return fd_jacobian(self.grad, x)

    def solve_closed(self, values: Sequence, k: int):
        return None

    def coordinate_lower_bound(self, x: np.ndarray, k: int) -> float:
        """Open lower bound for coordinate ``k`` holding the others fixed."""
        return 0.0

    def initial_point(self, tol: Tolerances = DEFAULT_TOL) -> np.ndarray:
        """All-equal point on the level set."""
        n = self.dim
        s = increasing_root(lambda s: self.value(np.full(n, s)), 1.0,
                            dphi=lambda s: float(np.sum(self.grad(np.full(n, s)))),
                            limit=tol.expansion, max_iter=tol.max_iter)
        return np.full(n, s)

    def describe(self) -> str:
        return f"{self.family}({', '.join(self.assets)})"


@dataclass(frozen=True)
class ConstantProduct(AmmDef):
    """``A(x) = prod(x) - level``."""

    assets: tuple[str, ...]
    level: Number
    family = "constant_product"

    def __post_init__(self):
        object.__setattr__(self, "assets", _check_assets(self.assets))
        if not self.level > 0:
            raise ValueError("constant-product level must be positive")

    def value(self, x):
        return float(np.prod(x)) - float(self.level)

    def grad(self, x):
        x = np.asarray(x, dtype=float)
        n = x.size
        return np.array([float(np.prod(np.delete(x, i))) for i in range(n)])

    def hessian(self, x):
        x = np.asarray(x, dtype=float)
        n = x.size
        H = np.zeros((n, n))
        for i in range(n):
            for j in range(i + 1, n):
                H[i, j] = H[j, i] = float(np.prod(np.delete(x, [i, j])))
        return H

    def solve_closed(self, values, k):
        return self.level / math.prod(v for j, v in enumerate(values) if j != k)

    def stable_closed(self, v: np.ndarray) -> np.ndarray:
        # x_i = (c prod v)^(1/n) / v_i
        n = v.size
        scale = math.exp((math.log(float(self.level)) + float(np.sum(np.log(v)))) / n)
        return scale / v

    def describe(self):
        return f"constant_product(level={_fmt(self.level)}; {', '.join(self.assets)})"


@dataclass(frozen=True)
class ConstantMean(AmmDef):
    """``A(x) = prod(x_i ** w_i) - level`` (weights need not sum to one)."""

    assets: tuple[str, ...]
    weights: tuple
    level: Number
    family = "constant_mean"

    def __post_init__(self):
        object.__setattr__(self, "assets", _check_assets(self.assets))
        object.__setattr__(self, "weights", tuple(self.weights))
        if len(self.weights) != len(self.assets):
            raise DimensionError("one weight per asset required")
        if any(not w > 0 for w in self.weights) or not self.level > 0:
            raise ValueError("constant-mean weights and level must be positive")

    @property
    def _w(self) -> np.ndarray:
        return np.array([float(w) for w in self.weights])

    def value(self, x):
        return float(np.prod(np.asarray(x, dtype=float) ** self._w)) - float(self.level)

    def grad(self, x):
        x = np.asarray(x, dtype=float)
        p = float(np.prod(x ** self._w))
        return self._w * p / x

    def hessian(self, x):
        x = np.asarray(x, dtype=float)
        w = self._w
        p = float(np.prod(x ** w))
        H = np.outer(w / x, w / x) * p
        H[np.diag_indices_from(H)] = w * (w - 1) * p / x ** 2
        return H

    def solve_closed(self, values, k):
        rest = math.prod(v ** w for j, (v, w) in enumerate(zip(values, self.weights)) if j != k)
        base = self.level / rest
        wk = self.weights[k]
        return base if wk == 1 else base ** (1 / wk)

    def stable_closed(self, v: np.ndarray) -> np.ndarray:
        # x_i = s w_i / v_i with s = (level / prod (w_i/v_i)^w_i)^(1/W)
        w = self._w
        ratio = w / v
        log_s = (math.log(float(self.level)) - float(np.sum(w * np.log(ratio)))) / float(np.sum(w))
        return math.exp(log_s) * ratio

    def describe(self):
        ws = ", ".join(_fmt(w) for w in self.weights)
        return f"constant_mean(weights=[{ws}], level={_fmt(self.level)}; {', '.join(self.assets)})"


@dataclass(frozen=True)
class Linear(AmmDef):
    """``A(x) = lam . x - level``; fixed exchange rate, not strictly convex."""

    assets: tuple[str, ...]
    lam: tuple
    level: Number
    family = "linear"
    axiom_conforming = False

    def __post_init__(self):
        object.__setattr__(self, "assets", _check_assets(self.assets))
        object.__setattr__(self, "lam", tuple(self.lam))
        if len(self.lam) != len(self.assets):
            raise DimensionError("one rate per asset required")
        if any(not l > 0 for l in self.lam) or not self.level > 0:
            raise ValueError("linear rates and level must be positive")

    def value(self, x):
        return float(np.dot([float(l) for l in self.lam], np.asarray(x, dtype=float))) - float(self.level)

    def grad(self, x):
        return np.array([float(l) for l in self.lam])

    def hessian(self, x):
        return np.zeros((self.dim, self.dim))

    def solve_closed(self, values, k):
        rest = sum(l * v for j, (l, v) in enumerate(zip(self.lam, values)) if j != k)
        return (self.level - rest) / self.lam[k]

    def describe(self):
        ls = ", ".join(_fmt(l) for l in self.lam)
        return f"linear(lambda=[{ls}], level={_fmt(self.level)}; {', '.join(self.assets)})"


@dataclass(frozen=True)
class ExplicitGraph(AmmDef):
    """``A(x, y) = y - h(x)`` for a function ``h`` of the first n-1 coordinates.

    ``h`` receives a sequence of inputs and should be written with plain
    arithmetic so exact rationals pass through.  ``lower`` gives open lower
    bounds on the inputs outside which ``h`` is undefined.
    """

    assets: tuple[str, ...]
    h: Callable = field(compare=False)
    dh: Callable | None = field(default=None, compare=False)
    lower: tuple | None = None
    label: str = "h"
    family = "explicit_graph"

    def __post_init__(self):
        object.__setattr__(self, "assets", _check_assets(self.assets))
        if self.lower is not None:
            object.__setattr__(self, "lower", tuple(self.lower))

    def _inputs_ok(self, xs) -> None:
        if self.lower is not None:
            for a, xi, lb in zip(self.assets, xs, self.lower):
                if not xi > lb:
                    raise InfeasibleError(f"{a}={float(xi):.6g} outside the domain of {self.label}")

    def output(self, xs):
        self._inputs_ok(xs)
        out = self.h(xs)
        if not math.isfinite(out):
            raise InfeasibleError(f"{self.label} undefined at {tuple(map(float, xs))}")
        return out

    def value(self, x):
        x = np.asarray(x, dtype=float)
        return float(x[-1]) - float(self.output(list(x[:-1])))

    def grad(self, x):
        x = np.asarray(x, dtype=float)
        xs = x[:-1]
        if self.dh is not None:
            d = np.asarray(self.dh(list(xs)), dtype=float)
        else:
            d = fd_gradient(lambda z: float(self.output(list(z))), xs)
        return np.append(-d, 1.0)

    def solve_closed(self, values, k):
        if k == self.dim - 1:
            return self.output(list(values[:-1]))
        return None

    def coordinate_lower_bound(self, x, k):
        if self.lower is not None and k < self.dim - 1:
            return max(0.0, float(self.lower[k]))
        return 0.0

    def describe(self):
        return f"explicit_graph({self.assets[-1]} = {self.label}; {', '.join(self.assets)})"


@dataclass(frozen=True)
class Relabeled(AmmDef):
    """The same AMM function over renamed assets."""

    base: AmmDef
    assets: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "assets", _check_assets(self.assets))
        if len(self.assets) != self.base.dim:
            raise DimensionError("relabeling must keep the dimension")

    @property
    def family(self):
        return self.base.family

    @property
    def axiom_conforming(self):
        return self.base.axiom_conforming

    @property
    def delta_coords(self):
        return self.base.delta_coords

    def value(self, x):
        return self.base.value(x)

    def grad(self, x):
        return self.base.grad(x)

    def hessian(self, x):
        return self.base.hessian(x)

    def solve_closed(self, values, k):
        return self.base.solve_closed(values, k)

    def coordinate_lower_bound(self, x, k):
        return self.base.coordinate_lower_bound(x, k)

    def initial_point(self, tol=DEFAULT_TOL):
        return self.base.initial_point(tol)

    def describe(self):
        return f"{self.base.describe()} as ({', '.join(self.assets)})"


def _fmt(v) -> str:
    if isinstance(v, Fraction):
        return str(v)
    return f"{float(v):.9g}"


# --------------------------------------------------------------------------
# instances

@dataclass(frozen=True)
class AmmInstance:
    """An AMM together with its current on-manifold state."""

    defn: AmmDef
    state: StateVector
    tol: Tolerances = field(default=DEFAULT_TOL, compare=False, repr=False)

    def __post_init__(self):
        state = self.state
        if state.assets != self.defn.assets:
            state = state.reordered(self.defn.assets)
        if state.delta != self.defn.delta_coords:
            state = StateVector(state.assets, state.values, delta=self.defn.delta_coords)
        object.__setattr__(self, "state", state)
        x = _as_point(self.defn, state, self.tol)
        resid = abs(self.defn.value(x))
        bound = manifold_bound(self.defn, x, self.tol.manifold)
        if resid > bound:
            raise OffManifoldError(
                f"state {tuple(map(float, state.values))} is off the manifold of "
                f"{self.defn.describe()}: |A| = {resid:.6g} > {bound:.3g}", resid)

    @property
    def assets(self) -> tuple[str, ...]:
        return self.defn.assets

    @property
    def x(self) -> np.ndarray:
        return self.state.array


def manifold_bound(defn: AmmDef, x: np.ndarray, rel: float) -> float:
    return rel * (1.0 + float(np.linalg.norm(defn.grad(x))))


def _as_point(defn: AmmDef, x, tol: Tolerances = DEFAULT_TOL) -> np.ndarray:
    if isinstance(x, StateVector):
        if x.assets != defn.assets:
            x = x.reordered(defn.assets)
        arr = x.array
    else:
        arr = np.asarray(x, dtype=float)
    if arr.ndim != 1 or arr.size != defn.dim:
        raise DimensionError(f"expected {defn.dim} coordinates for {defn.assets}, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise DomainError("coordinates must be finite")
    if not defn.delta_coords and np.any(arr <= tol.positivity_floor):
        bad = defn.assets[int(np.argmin(arr))]
        raise DomainError(f"coordinate {bad} must exceed {tol.positivity_floor:g}, got {arr.min()!r}")
    return arr


# --------------------------------------------------------------------------
# operations

def evaluate(defn: AmmDef, x, tol: Tolerances = DEFAULT_TOL) -> float:
    """``A(x)``; raises on dimension mismatch or a non-positive coordinate."""
    return defn.value(_as_point(defn, x, tol))


def gradient(defn: AmmDef, x, tol: Tolerances = DEFAULT_TOL) -> np.ndarray:
    """``grad A(x)``; every component must be strictly positive."""
    g = defn.grad(_as_point(defn, x, tol))
    if not np.all(g > 0):
        raise DomainError(f"non-positive gradient component {g.min():.3g}: AMM is not strictly increasing")
    return g


def solve_coordinate(defn: AmmDef, values: Sequence, k: int,
                     tol: Tolerances = DEFAULT_TOL, closed_form: bool = True):
    """Coordinate ``k`` that puts ``values`` (slot ``k`` ignored) on the level set.

    Tries the family's closed form first; otherwise brackets geometrically from
    the mean of the fixed coordinates and refines with safeguarded Newton.
    """
    values = list(values)
    if closed_form:
        z = defn.solve_closed(values, k)
        if z is not None:
            if not defn.delta_coords and not z > tol.positivity_floor:
                raise InfeasibleError(
                    f"no positive {defn.assets[k]} balance satisfies the AMM (got {float(z):.6g})")
            return z
    base = np.array([float(v) for v in values])
    others = np.delete(base, k)
    pos = others[others > 0]
    anchor = float(np.exp(np.mean(np.log(pos)))) if pos.size else 1.0
    lo = defn.coordinate_lower_bound(base, k)
    if not anchor > lo:
        anchor = lo + max(abs(lo), 1.0)

    def phi(z):
        y = base.copy()
        y[k] = z
        return defn.value(y)

    def dphi(z):
        y = base.copy()
        y[k] = z
        return defn.grad(y)[k]

    try:
        z = increasing_root(phi, anchor, dphi=dphi, lo=lo,
                            limit=tol.expansion, max_iter=tol.max_iter)
    except InfeasibleError as exc:
        raise InfeasibleError(f"no {defn.assets[k]} balance satisfies the AMM: {exc}") from None
    if not defn.delta_coords and not z > tol.positivity_floor:
        raise InfeasibleError(f"{defn.assets[k]} balance would be exhausted")
    y = base.copy()
    y[k] = z
    resid = abs(defn.value(y))
    bound = tol.implicit * (1.0 + float(np.linalg.norm(defn.grad(y))))
    if resid > bound:
        raise ConvergenceError(
            f"implicit solve for {defn.assets[k]} stalled at |A| = {resid:.3g} > {bound:.3g}", best=z)
    return z


def implicit_solve(defn: AmmDef, fixed: Mapping[str, Number], free: str,
                   tol: Tolerances = DEFAULT_TOL, closed_form: bool = True) -> float:
    """The unique ``z`` with ``A(fixed, z) = 0`` for the coordinate ``free``.

    Args:
        fixed: quantities for every other asset.
        free: asset whose balance is solved for.
        closed_form: use the family's closed form when it has one.

    Raises:
        InfeasibleError: no positive root within the expansion limit.
    """
    k = defn.index(free)
    missing = [a for a in defn.assets if a != free and a not in fixed]
    extra = [a for a in fixed if a not in defn.assets or a == free]
    if missing or extra:
        raise DimensionError(f"fixed coordinates must cover {defn.assets} minus {free!r};"
                             f" missing {missing}, unexpected {extra}")
    values = []
    for j, a in enumerate(defn.assets):
        if j == k:
            values.append(1.0)
            continue
        q = fixed[a]
        if not defn.delta_coords and not q > tol.positivity_floor:
            raise DomainError(f"fixed coordinate {a} must be positive, got {q!r}")
        values.append(q)
    return float(solve_coordinate(defn, values, k, tol, closed_form))


def trade(inst: AmmInstance, deltas: Mapping[str, Number], free: str,
          tol: Tolerances | None = None) -> tuple[AmmInstance, ProfitLoss]:
    """Apply ``deltas`` (trader deposits positive) and re-solve ``free``.

    Returns the new instance and the profit-loss vector ``old - new``.
    """
    tol = tol or inst.tol
    defn = inst.defn
    k = defn.index(free)
    if free in deltas:
        raise ValueError(f"the free asset {free!r} is solved for and cannot carry a delta")
    for a in deltas:
        defn.index(a)
    old = inst.state.values
    new = []
    for j, a in enumerate(defn.assets):
        if j == k:
            new.append(old[j])
            continue
        q = old[j] + deltas.get(a, 0)
        if not defn.delta_coords and not q > tol.positivity_floor:
            raise InfeasibleError(f"trade would leave {a} at {float(q):.6g}")
        new.append(q)
    if all(deltas.get(a, 0) == 0 for a in defn.assets):
        z = old[k]
    else:
        z = solve_coordinate(defn, new, k, tol)
    new[k] = z
    state = StateVector(defn.assets, tuple(new), delta=defn.delta_coords)
    pl = ProfitLoss(defn.assets, tuple(o - n for o, n in zip(old, new)))
    return AmmInstance(defn, state, tol), pl
