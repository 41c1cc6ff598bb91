"""Shrinkage of the fitted region covariance using directional contrasts.

The empirical and model covariances are blended so that the blend's
variogram-type contrasts along each grid axis track a spline-smoothed
version of the empirical contrasts.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import MrvoxError
from .numerics import smoothing_spline

AXES = ("x", "y", "z")


@dataclass(frozen=True)
class ShrinkageConfig:
    p: float = 0.3          # spline penalty; 1 interpolates, 0 is a line
    delta_tol: float = 1e-3

    def __post_init__(self):
        if not 0.0 <= self.p <= 1.0:
            raise MrvoxError("p must lie in [0, 1]")


@dataclass(frozen=True)
class ContrastCurve:
    """Contrast values indexed by slice coordinate along one axis."""

    slices: np.ndarray
    values: np.ndarray


@dataclass(frozen=True)
class ShrinkageResult:
    delta: float
    shrunk: np.ndarray
    # per axis: (raw empirical, smoothed empirical, blend at delta), or None
    # for an axis with no adjacent pairs
    contrast_curves: dict


def directional_contrasts(cov: np.ndarray, coords: np.ndarray):
    """Adjacent-slice second differences of the covariance along each axis.

    For axis x, slice value c_x(x) averages
    cov(v,v) + cov(v',v') - 2 cov(v,v') over all pairs v = (x,y,z),
    v' = (x+1,y,z) present in the grid. Axes with no adjacent pairs yield an
    empty curve.
    """
    coords = np.asarray(coords, dtype=int)
    index = {tuple(c): i for i, c in enumerate(coords)}
    curves = []
    for axis in range(3):
        step = np.zeros(3, dtype=int)
        step[axis] = 1
        sums: dict[int, list[float]] = {}
        for i, c in enumerate(coords):
            j = index.get(tuple(c + step))
            if j is None:
                continue
            sums.setdefault(int(c[axis]), []).append(
                cov[i, i] + cov[j, j] - 2.0 * cov[i, j])
        xs = np.array(sorted(sums), dtype=float)
        vals = np.array([np.mean(sums[int(x)]) for x in xs])
        curves.append(ContrastCurve(slices=xs, values=vals))
    return tuple(curves)


def _golden_section(f, lo, hi, tol):
    invphi = (np.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = f(d)
    return (a + b) / 2.0


def select_delta(emp: np.ndarray, mle: np.ndarray, coords: np.ndarray,
                 config: ShrinkageConfig | None = None) -> ShrinkageResult:
    """Pick the blend weight whose contrasts best match the smoothed target.

    Contrasts are linear in the covariance, so the blend's contrast curves
    are the same convex combination of the operand curves and the objective
    is an exact quadratic in delta; the golden-section result is cross-checked
    against the closed-form minimizer.
    """
    config = config or ShrinkageConfig()
    if emp.shape != mle.shape:
        raise MrvoxError("operand covariance shapes disagree")
    emp_curves = directional_contrasts(emp, coords)
    mle_curves = directional_contrasts(mle, coords)
    if all(c.slices.size == 0 for c in emp_curves):
        raise MrvoxError("no adjacent voxel pairs along any axis")

    targets = []
    for curve in emp_curves:
        if curve.slices.size >= 4:
            targets.append(smoothing_spline(curve.slices, curve.values, config.p))
        else:
            # too few slices to smooth; use the raw curve as its own target
            targets.append(curve.values.copy())

    def objective(delta):
        total = 0.0
        for ce, cm, tgt in zip(emp_curves, mle_curves, targets):
            if ce.slices.size == 0:
                continue
            blend = (1.0 - delta) * ce.values + delta * cm.values
            total += float(np.sum((tgt - blend) ** 2))
        return total

    # closed form: objective = sum ||(t - ce) - delta (cm - ce)||^2
    num = den = 0.0
    for ce, cm, tgt in zip(emp_curves, mle_curves, targets):
        if ce.slices.size == 0:
            continue
        diff = cm.values - ce.values
        num += float((tgt - ce.values) @ diff)
        den += float(diff @ diff)
    candidates = [0.0, 1.0, _golden_section(objective, 0.0, 1.0, config.delta_tol)]
    if den > 0.0:
        candidates.append(min(1.0, max(0.0, num / den)))
    objs = [objective(d) for d in candidates]
    best = min(objs)
    tol = 1e-12 * (1.0 + abs(best))
    delta = min(d for d, o in zip(candidates, objs) if o <= best + tol)

    curves = {}
    for axis, (ce, cm, tgt) in enumerate(zip(emp_curves, mle_curves, targets)):
        if ce.slices.size == 0:
            curves[AXES[axis]] = None
        else:
            curves[AXES[axis]] = {
                "slices": ce.slices,
                "raw": ce.values,
                "smoothed": tgt,
                "at_delta": (1.0 - delta) * ce.values + delta * cm.values,
            }
    return ShrinkageResult(delta=float(delta),
                           shrunk=(1.0 - delta) * emp + delta * mle,
                           contrast_curves=curves)
