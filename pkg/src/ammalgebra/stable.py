"""Valuation <-> state duality.

The stable point of an AMM for valuation ``v`` is the state on the level set
minimizing ``v . x``.  At that point ``v = lam * grad A(x)`` with
``lam = 1 / ||grad A(x)||_1``, so the inverse map is a normalized gradient.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import (
    DEFAULT_TOL,
    AmmDef,
    ConstantMean,
    ConstantProduct,
    Relabeled,
    StateVector,
    Tolerances,
    Valuation,
    _as_point,
    manifold_bound,
    solve_coordinate,
)
from .errors import (
    ConvergenceError,
    DimensionError,
    DomainError,
    InfeasibleError,
    NonConformingError,
    OffManifoldError,
)


@dataclass(frozen=True)
class StablePointResult:
    state: StateVector
    lagrange_lambda: float
    residual_kkt: float
    residual_manifold: float
    iterations: int
    method: str = "closed_form"


def _require_conforming(defn: AmmDef) -> None:
    if not defn.axiom_conforming:
        raise NonConformingError(
            f"{defn.describe()} is non-conforming: stable points are not unique or do not exist")


def _valuation_array(defn: AmmDef, v, tol: Tolerances) -> np.ndarray:
    if isinstance(v, Valuation):
        if v.assets != defn.assets:
            v = v.reordered(defn.assets)
        arr = v.array
    else:
        arr = np.asarray(v, dtype=float)
        if arr.size != defn.dim or abs(arr.sum() - 1.0) > 1e-12:
            raise ValueError("valuation must have one weight per asset and sum to 1")
    if arr.size != defn.dim:
        raise DimensionError(f"valuation has {arr.size} weights, AMM has {defn.dim} assets")
    m = tol.valuation_margin
    if np.any(arr <= m) or np.any(arr >= 1 - m):
        raise DomainError(f"valuation weights must lie in ({m:g}, 1 - {m:g}); got {arr.tolist()}")
    return arr


def _closed_form(defn: AmmDef, v: np.ndarray):
    base = defn.base if isinstance(defn, Relabeled) else defn
    if isinstance(base, (ConstantProduct, ConstantMean)):
        return base.stable_closed(v)
    return None


def _residuals(defn: AmmDef, x: np.ndarray, v: np.ndarray) -> tuple[float, float, float, np.ndarray]:
    g = defn.grad(x)
    n1 = float(np.sum(np.abs(g)))
    if not n1 >= 1e-14:
        raise DomainError(f"degenerate gradient (||grad A||_1 = {n1:.3g}) at {x.tolist()}")
    lam = 1.0 / n1
    kkt = float(np.max(np.abs(lam * g - v)))
    man = abs(defn.value(x))
    return lam, kkt, man, g


def _result(defn, x, v, iters, method, tol) -> StablePointResult:
    lam, kkt, man, g = _residuals(defn, x, v)
    return StablePointResult(StateVector(defn.assets, tuple(float(q) for q in x), delta=defn.delta_coords),
                             lam, kkt, man, iters, method)


def _feasible(defn: AmmDef, x: np.ndarray, tol: Tolerances) -> bool:
    if not np.all(np.isfinite(x)):
        return False
    if not defn.delta_coords and np.any(x <= tol.positivity_floor):
        return False
    return True


def _newton(defn: AmmDef, v: np.ndarray, x0: np.ndarray, tol: Tolerances) -> StablePointResult:
    """Damped Newton on ``(lam grad A(x) - v, A(x)) = 0`` in ``(x, lam)``."""
    n = defn.dim
    x = x0.astype(float).copy()

    def merit(x, lam):
        g = defn.grad(x)
        a = defn.value(x)
        return (float(np.max(np.abs(lam * g - v)))
                + abs(a) / (1.0 + float(np.linalg.norm(g)))), g, a

    g = defn.grad(x)
    lam = 1.0 / float(np.sum(g))
    m, g, a = merit(x, lam)
    _, kkt, man, _ = _residuals(defn, x, v)
    if kkt <= 1e-2 * tol.kkt and man <= 1e-2 * manifold_bound(defn, x, tol.manifold):
        return _result(defn, x, v, 0, "newton", tol)
    for it in range(1, tol.max_iter + 1):
        H = defn.hessian(x)
        J = np.zeros((n + 1, n + 1))
        J[:n, :n] = lam * H
        J[:n, n] = g
        J[n, :n] = g
        F = np.append(lam * g - v, a)
        try:
            step = np.linalg.solve(J, -F)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(J, -F, rcond=None)[0]
        if not np.all(np.isfinite(step)):
            break
        alpha = 1.0
        accepted = False
        for _ in range(tol.max_halvings + 1):
            xn = x + alpha * step[:n]
            ln = lam + alpha * step[n]
            if ln > 0 and _feasible(defn, xn, tol):
                try:
                    mn, gn, an = merit(xn, ln)
                except (InfeasibleError, DomainError, ZeroDivisionError, OverflowError):
                    mn = math.inf
                if math.isfinite(mn) and mn < m:
                    accepted = True
                    break
            alpha *= 0.5
        if not accepted:
            break
        x, lam, m, g, a = xn, ln, mn, gn, an
        lam_n, kkt, man, _ = _residuals(defn, x, v)
        if kkt <= 1e-2 * tol.kkt and man <= 1e-2 * manifold_bound(defn, x, tol.manifold):
            return _result(defn, x, v, it, "newton", tol)
        if float(np.max(np.abs(alpha * step[:n]))) <= 1e-15 * (1 + float(np.max(np.abs(x)))):
            break
    res = _result(defn, x, v, tol.max_iter, "newton", tol)
    if res.residual_kkt <= tol.kkt and res.residual_manifold <= manifold_bound(defn, x, tol.manifold):
        return res
    raise ConvergenceError(
        f"stable-point Newton did not converge for {defn.describe()}: "
        f"kkt {res.residual_kkt:.3g}, |A| {res.residual_manifold:.3g}", best=res)


def _reduced_newton(defn: AmmDef, v: np.ndarray, x0: np.ndarray, tol: Tolerances) -> StablePointResult:
    """Minimize ``v . (z, y(z))`` over the first n-1 coordinates, solving the last.

    Iterates stay on the level set, and the objective is convex because the
    upper contour set is, so a backtracking Newton (falling back to steepest
    descent) converges from any feasible start.
    """
    n = defn.dim
    k = n - 1

    def full(z):
        vals = list(z) + [1.0]
        vals[k] = float(solve_coordinate(defn, vals, k, tol))
        x = np.array(vals, dtype=float)
        if not _feasible(defn, x, tol):
            raise InfeasibleError("left the positive orthant")
        return x

    def phi_grad(z):
        x = full(z)
        g = defn.grad(x)
        return float(np.dot(v, x)), v[:k] - v[k] * g[:k] / g[k], x

    def safe(z):
        try:
            return phi_grad(z)
        except (InfeasibleError, DomainError, ConvergenceError, ZeroDivisionError, OverflowError):
            return math.inf, None, None

    z = np.asarray(x0[:k], dtype=float).copy()
    f, gr, x = safe(z)
    if gr is None:
        raise InfeasibleError("reduced Newton start is infeasible")
    for it in range(1, tol.max_iter + 1):
        _, kkt, man, _ = _residuals(defn, x, v)
        if kkt <= 1e-2 * tol.kkt:
            return _result(defn, x, v, it, "reduced_newton", tol)
        H = np.empty((k, k))
        for j in range(k):
            h = max(1e-6 * abs(z[j]), 1e-9)
            zp, zm = z.copy(), z.copy()
            zp[j] += h
            zm[j] -= h
            _, gp, _ = safe(zp)
            _, gm, _ = safe(zm)
            if gp is None or gm is None:
                gp = gp if gp is not None else gr
                gm = gm if gm is not None else gr
                H[:, j] = (gp - gm) / (h if (gp is gr) != (gm is gr) else 2 * h)
            else:
                H[:, j] = (gp - gm) / (2 * h)
        H = 0.5 * (H + H.T)
        try:
            w = np.linalg.eigvalsh(H)
            step = -np.linalg.solve(H, gr) if w.min() > 0 else None
        except np.linalg.LinAlgError:
            step = None
        if step is None or not np.all(np.isfinite(step)) or float(np.dot(step, gr)) >= 0:
            scale = 1.0 / max(float(np.max(np.abs(gr))), 1e-300)
            step = -gr * scale * 0.1 * (1 + float(np.max(np.abs(z))))
        alpha = 1.0
        for _ in range(tol.max_halvings + 1):
            fn, gn, xn = safe(z + alpha * step)
            if gn is not None and fn <= f + 1e-4 * alpha * float(np.dot(step, gr)) + 1e-15 * abs(f):
                break
            alpha *= 0.5
        else:
            break
        z, f, gr, x = z + alpha * step, fn, gn, xn
    res = _result(defn, x, v, tol.max_iter, "reduced_newton", tol)
    if res.residual_kkt <= tol.kkt:
        return res
    raise ConvergenceError(f"reduced Newton did not converge for {defn.describe()}: "
                           f"kkt {res.residual_kkt:.3g}", best=res)


def stable_point(defn: AmmDef, v, init: StateVector | Sequence[float] | None = None,
                 tol: Tolerances = DEFAULT_TOL, closed_form: bool = True) -> StablePointResult:
    """The state minimizing ``v . x`` on the level set of ``defn``.

    Uses the closed form for constant-product and constant-mean families and
    damped Newton on the first-order system otherwise (or when
    ``closed_form=False``).  Newton starts from ``init`` or the all-equal
    on-manifold point (the zero-delta anchor for delta-coordinate defs).

    Raises:
        NonConformingError: ``defn`` is flagged non-conforming.
        ConvergenceError: Newton stalled; ``.best`` holds the best result.
    """
    _require_conforming(defn)
    varr = _valuation_array(defn, v, tol)
    if closed_form:
        x = _closed_form(defn, varr)
        if x is not None:
            return _result(defn, x, varr, 0, "closed_form", tol)
    if init is None:
        x0 = defn.initial_point(tol)
    else:
        x0 = _as_point(defn, init, tol)
    x0 = np.asarray(x0, dtype=float)
    try:
        return _newton(defn, varr, x0, tol)
    except ConvergenceError as exc:
        first = exc
    try:
        return _reduced_newton(defn, varr, x0, tol)
    except (ConvergenceError, InfeasibleError):
        raise first from None


def valuation_of(defn: AmmDef, x, tol: Tolerances = DEFAULT_TOL) -> Valuation:
    """The unique valuation whose stable point is ``x``: ``grad A / ||grad A||_1``."""
    _require_conforming(defn)
    arr = _as_point(defn, x, tol)
    resid = abs(defn.value(arr))
    bound = manifold_bound(defn, arr, tol.manifold)
    if resid > bound:
        raise OffManifoldError(f"state is off the manifold: |A| = {resid:.6g} > {bound:.3g}", resid)
    g = defn.grad(arr)
    if not np.all(g > 0):
        raise DomainError("gradient has a non-positive component")
    s = float(np.sum(g))
    if s < 1e-14:
        raise DomainError(f"degenerate gradient (||grad A||_1 = {s:.3g})")
    w = g / s
    w = w / math.fsum(w)
    return Valuation(defn.assets, tuple(float(q) for q in w))


def equivalence_map(def_a: AmmDef, def_b: AmmDef, x, tol: Tolerances = DEFAULT_TOL) -> StateVector:
    """Send a state of ``def_a`` to the state of ``def_b`` with the same valuation."""
    if sorted(def_a.assets) != sorted(def_b.assets):
        raise DimensionError(f"asset sets differ: {def_a.assets} vs {def_b.assets}")
    v = valuation_of(def_a, x, tol).reordered(def_b.assets)
    return stable_point(def_b, v, tol=tol).state


def _axis(lo: float, hi: float, k: int) -> np.ndarray:
    if lo > 0:
        return np.geomspace(lo, hi, k)
    return np.linspace(lo, hi, k)


def brute_force_stable(defn: AmmDef, v, grid: int = 400, box: tuple[float, float] | Sequence = (0.1, 10.0),
                       refine: int = 0, tol: Tolerances = DEFAULT_TOL) -> StateVector:
    """Grid-search oracle for the stable point.

    Scans a log-spaced grid over the first n-1 coordinates, solves the last,
    and keeps the minimum of ``v . x``.  Each of ``refine`` further rounds
    rescans a grid spanning two cells around the incumbent.  Infeasible grid
    points are skipped.  Meant for tests and dimension at most 4.
    """
    n = defn.dim
    if n > 4:
        raise DimensionError("grid oracle supports at most 4 dimensions")
    varr = v.reordered(defn.assets).array if isinstance(v, Valuation) else np.asarray(v, dtype=float)
    if len(box) == 2 and not hasattr(box[0], "__len__"):
        bounds = [(float(box[0]), float(box[1]))] * (n - 1)
    else:
        bounds = [(float(lo), float(hi)) for lo, hi in box][: n - 1]

    def scan(bounds):
        axes = [_axis(lo, hi, grid) for lo, hi in bounds]
        best, best_x, best_idx = math.inf, None, None
        for idx in itertools.product(*(range(grid) for _ in axes)):
            vals = [ax[i] for ax, i in zip(axes, idx)] + [1.0]
            try:
                z = float(solve_coordinate(defn, vals, n - 1, tol))
            except (InfeasibleError, DomainError, ConvergenceError, ZeroDivisionError, OverflowError):
                continue
            vals[-1] = z
            cost = float(np.dot(varr, vals))
            if cost < best:
                best, best_x, best_idx = cost, np.array(vals), idx
        return best_x, best_idx, axes

    x, idx, axes = scan(bounds)
    if x is None:
        raise InfeasibleError("no feasible grid point")
    for _ in range(refine):
        nb = []
        for ax, i in zip(axes, idx):
            lo = ax[max(i - 1, 0)]
            hi = ax[min(i + 1, len(ax) - 1)]
            nb.append((lo, hi))
        x2, idx2, axes2 = scan(nb)
        if x2 is None:
            break
        x, idx, axes = x2, idx2, axes2
    return StateVector(defn.assets, tuple(float(q) for q in x), delta=defn.delta_coords)
