"""Sampled checks of the AMM axioms: monotonicity, strict convexity, positive gradient."""
from __future__ import annotations

import math
import zlib
from typing import Sequence

import numpy as np

from .core import DEFAULT_TOL, AmmDef, Tolerances, solve_coordinate
from .errors import AmmError
from .report import Case, VerifyReport, digest

# midpoint gaps below this (relative to grad . x scale) count as flat
CONVEXITY_MARGIN = 1e-12
# pairs closer than this relative distance are resampled
MIN_PAIR_SEPARATION = 1e-3


def rng_for(seed: int, *labels) -> np.random.Generator:
    """Independent, reproducible stream per (seed, label) pair."""
    key = [zlib.crc32(str(l).encode()) for l in labels]
    return np.random.default_rng([int(seed) & 0xFFFFFFFF, *key])


def _bounds(defn: AmmDef, box) -> list[tuple[float, float]]:
    if len(box) == 2 and not hasattr(box[0], "__len__"):
        return [(float(box[0]), float(box[1]))] * defn.dim
    out = [(float(lo), float(hi)) for lo, hi in box]
    if len(out) != defn.dim:
        raise ValueError(f"box has {len(out)} intervals for {defn.dim} coordinates")
    return out


def _draw(rng: np.random.Generator, bounds) -> np.ndarray:
    x = np.empty(len(bounds))
    for i, (lo, hi) in enumerate(bounds):
        if lo > 0:
            x[i] = math.exp(rng.uniform(math.log(lo), math.log(hi)))
        else:
            x[i] = rng.uniform(lo, hi)
    return x


def _eval(defn, x):
    try:
        val = defn.value(x)
    except (AmmError, ZeroDivisionError, OverflowError, ValueError):
        return None
    return val if math.isfinite(val) else None


def _grad(defn, x):
    try:
        g = defn.grad(x)
    except (AmmError, ZeroDivisionError, OverflowError, ValueError):
        return None
    return g if np.all(np.isfinite(g)) else None


def _on_manifold(defn, rng, bounds, tol):
    n = defn.dim
    x = _draw(rng, bounds)
    try:
        z = float(solve_coordinate(defn, list(x), n - 1, tol))
    except (AmmError, ZeroDivisionError, OverflowError, ValueError):
        return None
    if not defn.delta_coords and not z > tol.positivity_floor:
        return None
    x[-1] = z
    return x


def check_axioms(defn: AmmDef, box=(0.1, 10.0), samples: int = 1000, seed: int = 0,
                 tol: Tolerances = DEFAULT_TOL, label: str | None = None) -> VerifyReport:
    """Run the sampled axiom checks on ``defn`` over ``box``.

    ``box`` is one ``(lo, hi)`` interval for every coordinate or one per
    coordinate.  Samples where the function is undefined (a composed AMM
    outside its feasible region) are skipped and counted in the note.

    Check ids: ``axiom.monotonicity``, ``axiom.convexity``,
    ``axiom.gradient_positive``.  The convexity residual is the smallest
    scaled midpoint gap ``A(t x + (1-t) x') / (1 + |grad A| |mid|)`` seen; it
    must exceed the margin.  Non-conforming defs are expected to fail
    convexity.
    """
    label = label or defn.describe()
    bounds = _bounds(defn, box)
    dig = digest(label, bounds, samples, seed)
    expected_convexity = "pass" if defn.axiom_conforming else "fail"
    cases = []

    # monotonicity: x' >= x with at least one strict increase
    rng = rng_for(seed, "monotonicity", label)
    worst = math.inf
    used = skipped = 0
    for _ in range(samples):
        x = _draw(rng, bounds)
        k = int(rng.integers(1, defn.dim + 1))
        which = rng.choice(defn.dim, size=k, replace=False)
        xp = x.copy()
        for i in which:
            lo, hi = bounds[i]
            xp[i] += (hi - lo) * rng.uniform(0.01, 0.5)
        a0, a1 = _eval(defn, x), _eval(defn, xp)
        if a0 is None or a1 is None:
            skipped += 1
            continue
        used += 1
        worst = min(worst, a1 - a0)
    ok = used > 0 and worst > 0
    cases.append(Case("axiom.monotonicity", label, ok, worst if used else math.nan, 0.0, dig,
                      f"min A(x')-A(x) over {used} pairs; {skipped} infeasible skipped"))

    # strict convexity of the upper contour set through on-manifold pairs
    rng = rng_for(seed, "convexity", label)
    worst = math.inf
    used = skipped = 0
    for _ in range(samples):
        p = _on_manifold(defn, rng, bounds, tol)
        q = _on_manifold(defn, rng, bounds, tol)
        if p is None or q is None:
            skipped += 1
            continue
        sep = float(np.linalg.norm(p - q)) / (1.0 + float(np.linalg.norm(p)))
        if sep < MIN_PAIR_SEPARATION:
            skipped += 1
            continue
        for t in (0.25, 0.5, 0.75):
            mid = t * p + (1 - t) * q
            a = _eval(defn, mid)
            g = _grad(defn, mid)
            if a is None or g is None:
                skipped += 1
                continue
            used += 1
            scale = 1.0 + float(np.linalg.norm(g)) * float(np.linalg.norm(mid))
            worst = min(worst, a / scale)
    ok = used > 0 and worst > CONVEXITY_MARGIN
    note = f"min scaled midpoint gap over {used} midpoints; {skipped} skipped"
    if not ok and used:
        note += "; non-strict" if abs(worst) <= 1e3 * CONVEXITY_MARGIN else "; violated"
    cases.append(Case("axiom.convexity", label, ok, worst if used else math.nan,
                      CONVEXITY_MARGIN, dig, note, expected_convexity))

    # gradient positivity at random box points and on-manifold points
    rng = rng_for(seed, "gradient", label)
    worst = math.inf
    used = skipped = 0
    for i in range(samples):
        x = _draw(rng, bounds) if i % 2 == 0 else _on_manifold(defn, rng, bounds, tol)
        g = None if x is None else _grad(defn, x)
        if g is None:
            skipped += 1
            continue
        used += 1
        worst = min(worst, float(np.min(g)))
    ok = used > 0 and worst > 0
    cases.append(Case("axiom.gradient_positive", label, ok, worst if used else math.nan, 0.0, dig,
                      f"min gradient component over {used} points; {skipped} skipped"))
    return VerifyReport("axioms", tuple(cases), seed)


def default_box(state: Sequence[float], spread: float = 4.0, delta: bool = False):
    """Per-coordinate sampling box around a state."""
    if delta:
        return [(-0.5 * max(abs(q), 1.0), 0.5 * max(abs(q), 1.0)) for q in state]
    return [(float(q) / spread, float(q) * spread) for q in state]
