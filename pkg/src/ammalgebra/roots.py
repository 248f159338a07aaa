"""Root finding for strictly increasing scalar functions.

Every coordinate solve in the library reduces to finding the unique zero of a
strictly increasing function ``phi`` on an open interval ``(lo, inf)``.  The
solver brackets the root by expanding outward from an anchor, then runs Newton
steps that fall back to bisection whenever they leave the bracket.

``phi`` may raise :class:`InfeasibleError` for arguments below some unknown
domain boundary (a composed AMM whose hidden balance would go negative); such
points are treated as ``phi = -inf``, which is the monotone extension.
"""
from __future__ import annotations

import math
from typing import Callable

from .errors import ConvergenceError, InfeasibleError

_EPS = 2.220446049250313e-16


def _safe(phi: Callable[[float], float]) -> Callable[[float], float]:
    def wrapped(t: float) -> float:
        try:
            val = float(phi(t))
        except (InfeasibleError, ZeroDivisionError, OverflowError):
            return -math.inf
        if math.isnan(val):
            return -math.inf
        return val

    return wrapped


def bracket_increasing(
    phi: Callable[[float], float],
    x0: float,
    lo: float = 0.0,
    limit: float = 1e18,
) -> tuple[float, float, float, float]:
    """Find ``L < H`` with ``phi(L) < 0 <= phi(H)``.

    Moves up geometrically from ``x0`` (additively when the domain is not the
    positive half-line), or down by halving the distance to ``lo``.  Gives up
    once the excursion exceeds ``limit`` times the anchor scale.

    Returns:
        ``(L, phi(L), H, phi(H))``.  ``L`` equals ``H`` when ``phi(x0) == 0``.

    Raises:
        InfeasibleError: no sign change within the expansion limit.
    """
    f = _safe(phi)
    f0 = f(x0)
    if f0 == 0.0:
        return x0, f0, x0, f0
    scale = max(abs(x0), 1.0) if lo != 0.0 else x0
    max_steps = int(math.ceil(math.log2(limit))) + 2
    if f0 < 0:
        L, fL = x0, f0
        step = scale
        for _ in range(max_steps):
            H = x0 * 2.0 if lo == 0.0 else L + step
            fH = f(H)
            if fH >= 0:
                return L, fL, H, fH
            L, fL = H, fH
            x0 = H
            step *= 2.0
        raise InfeasibleError(f"no root below {H:.3g} (expansion limit {limit:g})")
    H, fH = x0, f0
    if math.isfinite(lo):
        gap = x0 - lo
        for k in range(1, max_steps):
            L = lo + gap * 2.0 ** (-k)
            if L <= lo:
                break
            fL = f(L)
            if fL < 0:
                return L, fL, H, fH
            H, fH = L, fL
        raise InfeasibleError(f"no root above lower domain bound {lo:.6g}")
    step = scale
    for _ in range(max_steps):
        L = H - step
        fL = f(L)
        if fL < 0:
            return L, fL, H, fH
        H, fH = L, fL
        step *= 2.0
    raise InfeasibleError(f"no root above {L:.3g} (expansion limit {limit:g})")


def increasing_root(
    phi: Callable[[float], float],
    x0: float,
    *,
    dphi: Callable[[float], float] | None = None,
    lo: float = 0.0,
    limit: float = 1e18,
    max_iter: int = 200,
) -> float:
    """Unique zero of a strictly increasing ``phi`` on ``(lo, inf)``.

    Iterates until the bracket collapses to a few ulps or an exact zero is
    hit; callers check the residual against their own tolerance.
    """
    f = _safe(phi)
    L, fL, H, fH = bracket_increasing(phi, x0, lo=lo, limit=limit)
    if L == H:
        return L
    if fH == 0.0:
        return H
    # start from the endpoint with the smaller residual
    x, fx = (H, fH) if abs(fH) <= abs(fL) else (L, fL)
    best_x, best_f = x, fx
    for _ in range(max_iter):
        cand = math.nan
        if dphi is not None and math.isfinite(fx):
            try:
                d = float(dphi(x))
            except (InfeasibleError, ZeroDivisionError, OverflowError):
                d = math.nan
            if d > 0 and math.isfinite(d):
                cand = x - fx / d
        if not (L < cand < H):
            if L > 0 and H / L > 4.0:
                cand = math.sqrt(L) * math.sqrt(H)
            else:
                cand = 0.5 * (L + H)
        fc = f(cand)
        if fc == 0.0:
            return cand
        if fc < 0:
            L, fL = cand, fc
        else:
            H, fH = cand, fc
        if abs(fc) < abs(best_f):
            best_x, best_f = cand, fc
        step = abs(cand - x)
        x, fx = cand, fc
        if H - L <= 4 * _EPS * max(abs(L), abs(H)) or step <= 2 * _EPS * abs(x):
            break
    else:
        raise ConvergenceError("root finder exceeded max iterations", best=best_x)
    return best_x
