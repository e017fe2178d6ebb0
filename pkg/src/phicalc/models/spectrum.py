"""Critical-weight scans and the boundary normal-family gap.

The critical weights of a reduced x-direction operator are the real values
s at which the indicial matrix family fails to be invertible on the ray
lambda = -i s.  For the flat product models every such failure happens on
this ray (each Fourier mode reduces to quadratics with real roots in s),
so a scan plus local refinement of the smallest singular value finds the
whole set.

Pole orders: the vanishing order of the smallest singular value along s
equals the pole order of the inverse family, which is the quantity the
(weight, log power) bookkeeping needs; the vanishing order of |det| counts
multiplicity instead.  Both are measured from log-log slopes and reported,
and a disagreement beyond multiplicity-one is flagged rather than silently
accepted.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .geometry import IndicialFamily, ModelGeometry, NormalFamily

__all__ = ["SpectrumPoint", "imspec", "imspec_roots", "normal_family_gap", "GapReport"]


@dataclass(frozen=True)
class SpectrumPoint:
    """One critical weight: a root of the indicial family.

    ``pole_order_k`` follows the convention that the inverse family has a
    pole of order k + 1 at the root.  ``det_order`` is the vanishing order
    of the determinant (multiplicity count); ``order_mismatch`` marks roots
    where the two measurements differ, e.g. for non-semisimple families.
    """

    lambda_root: float
    fourier_mode: tuple
    pole_order_k: int
    det_order: int | None = None
    order_mismatch: bool = False
    at_window_edge: bool = False

    def to_row(self):
        return {
            "mode": ";".join(str(int(v)) for v in self.fourier_mode),
            "lambda_root": self.lambda_root,
            "pole_order_k": self.pole_order_k,
        }


def _threads(requested=None) -> int:
    if requested is not None:
        return max(1, int(requested))
    env = os.environ.get("PHICALC_THREADS")
    return max(1, int(env)) if env else 1


def _sigma_min(family: IndicialFamily, s: float, mode) -> float:
    return float(np.linalg.svd(family.matrix(s, mode), compute_uv=False)[-1])


def _log_slope(fn, s0: float, deltas) -> float:
    """Least-squares slope of log fn(s0 +/- delta) against log delta."""
    xs, ys = [], []
    for d in deltas:
        for sgn in (+1, -1):
            v = fn(s0 + sgn * d)
            if v > 0:
                xs.append(math.log(d))
                ys.append(math.log(v))
    if len(xs) < 3:
        return math.nan
    A = np.vstack([xs, np.ones(len(xs))]).T
    slope, _ = np.linalg.lstsq(A, np.array(ys), rcond=None)[0]
    return float(slope)


_INVPHI = (math.sqrt(5.0) - 1.0) / 2.0


def _golden_min(fn, a, b, width):
    """Golden-section minimization to an absolute bracket width.

    Unlike library bounded minimizers this has no sqrt(machine-eps)
    tolerance floor, which matters because the singular value behaves like
    |s - s0|^k near a root and must be localized to ~1e-10.
    """
    c = b - _INVPHI * (b - a)
    d = a + _INVPHI * (b - a)
    fc, fd = fn(c), fn(d)
    while (b - a) > width:
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - _INVPHI * (b - a)
            fc = fn(c)
        else:
            a, c, fc = c, d, fd
            d = a + _INVPHI * (b - a)
            fd = fn(d)
    xm = 0.5 * (a + b)
    return xm, fn(xm)


def _scan_mode(family, mode, lo, hi, scan_step, sv_tol, refine_width, dip_threshold):
    grid = np.arange(lo, hi + scan_step / 2, scan_step)
    sig = np.array([_sigma_min(family, s, mode) for s in grid])
    roots = []
    for i in range(len(grid)):
        left = sig[i - 1] if i > 0 else math.inf
        right = sig[i + 1] if i + 1 < len(grid) else math.inf
        if not (sig[i] <= left and sig[i] <= right and sig[i] < dip_threshold):
            continue
        a = grid[max(i - 1, 0)]
        b = grid[min(i + 1, len(grid) - 1)]
        s_star, sig_star = _golden_min(
            lambda s: _sigma_min(family, s, mode), float(a), float(b), refine_width
        )
        if sig_star >= sv_tol:
            continue
        if any(abs(s_star - r[0]) < 1e-8 for r in roots):
            continue
        # vanishing orders of the smallest singular value and of |det|
        deltas = (1e-3, 3e-4, 1e-4, 3e-5)
        sv_slope = _log_slope(lambda s: _sigma_min(family, s, mode), s_star, deltas)
        det_slope = _log_slope(
            lambda s: abs(np.linalg.det(family.matrix(s, mode))), s_star, deltas
        )
        sv_order = int(round(sv_slope)) if math.isfinite(sv_slope) else 1
        det_order = int(round(det_slope)) if math.isfinite(det_slope) else None
        edge = s_star - lo < scan_step or hi - s_star < scan_step
        roots.append((s_star, sv_order, det_order, edge))
    if not (np.all(np.isfinite(sig))):
        raise ArithmeticError(f"singular-value scan failed for mode {mode}")
    return [
        SpectrumPoint(
            lambda_root=s,
            fourier_mode=tuple(mode),
            pole_order_k=max(sv_order - 1, 0),
            det_order=det_order,
            order_mismatch=(det_order is not None and det_order != sv_order),
            at_window_edge=edge,
        )
        for (s, sv_order, det_order, edge) in roots
    ]


def imspec(
    family: IndicialFamily,
    window=(-2.5, 2.5),
    mode_cutoff: int = 3,
    scan_step: float = 1e-2,
    sv_tol: float = 1e-8,
    refine_width: float = 1e-10,
    dip_threshold: float = 0.25,
    threads: int | None = None,
    dedup: bool = True,
) -> list:
    """Critical weights of an indicial family inside a window.

    Scans the smallest singular value on an s-grid per Fourier mode,
    refines every dip by bounded minimization to width ``refine_width``,
    and accepts roots where the singular value drops below ``sv_tol``.
    Results are deduplicated across modes (keeping the representative with
    the smallest mode) and sorted by root.
    """
    lo, hi = float(window[0]), float(window[1])
    if not (math.isfinite(lo) and math.isfinite(hi) and lo < hi):
        raise ValueError(f"window must be a finite interval, got {window}")
    modes = sorted(family.modes(mode_cutoff), key=lambda m: (sum(abs(v) for v in m), m))
    nthreads = _threads(threads)
    if nthreads > 1:
        with ThreadPoolExecutor(max_workers=nthreads) as pool:
            batches = list(
                pool.map(
                    lambda mode: _scan_mode(
                        family, mode, lo, hi, scan_step, sv_tol, refine_width, dip_threshold
                    ),
                    modes,
                )
            )
    else:
        batches = [
            _scan_mode(family, mode, lo, hi, scan_step, sv_tol, refine_width, dip_threshold)
            for mode in modes
        ]
    points = [p for batch in batches for p in batch]
    points.sort(key=lambda p: (p.lambda_root, sum(abs(v) for v in p.fourier_mode)))
    if not dedup:
        return points
    out = []
    for p in points:
        if any(abs(p.lambda_root - q.lambda_root) < 1e-8 for q in out):
            continue
        out.append(p)
    return out


def imspec_roots(points) -> list:
    return [p.lambda_root for p in points]


# ---------------------------------------------------------------------------
# normal-family gap


@dataclass
class GapReport:
    taus: np.ndarray
    etas: np.ndarray
    gaps: np.ndarray  # min over perpendicular fibre modes, per grid point
    min_gap: float
    lambda1: float
    normal_invertible: bool
    tol: float
    rows: list = field(default_factory=list)

    def to_json(self):
        return {
            "min_gap": self.min_gap,
            "lambda1": None if math.isinf(self.lambda1) else self.lambda1,
            "normal_invertible": self.normal_invertible,
            "grid": {"taus": self.taus.tolist(), "etas": self.etas.tolist()},
            "gaps": self.gaps.tolist(),
        }


def normal_family_gap(
    model: ModelGeometry,
    taus=None,
    etas=None,
    mode_cutoff: int = 2,
    tol: float = 1e-8,
    threads: int | None = None,
) -> GapReport:
    """Smallest singular value of the boundary normal family on the
    fibre-perpendicular modes, over a (tau, eta) grid.

    For a torus fiber the perpendicular subspace is spanned exactly by the
    nonzero fibre Fourier modes, so the restriction is a per-mode matrix.
    Modes beyond the cutoff only increase the fibre frequency, hence the
    minimum over the scanned modes is the true gap.  Without a fiber the
    perpendicular subspace is trivial and the gap is infinite.
    """
    taus = np.linspace(-5, 5, 21) if taus is None else np.asarray(taus, float)
    etas = np.linspace(-5, 5, 21) if etas is None else np.asarray(etas, float)
    lam1 = model.smallest_fiber_eigenvalue()
    if model.f == 0:
        gaps = np.full((len(taus),) + (len(etas),) * model.b, np.inf)
        return GapReport(taus, etas, gaps, math.inf, lam1, True, tol)

    nf = NormalFamily(model)
    modes = model.fiber_modes(mode_cutoff, nonzero=True)
    eta_grids = [etas] * model.b

    def gap_at(point):
        tau, eta = point
        return min(
            float(np.linalg.svd(nf.matrix(tau, eta, m), compute_uv=False)[-1])
            for m in modes
        )

    points = []
    for tau in taus:
        for eta in np.stack(np.meshgrid(*eta_grids, indexing="ij"), axis=-1).reshape(-1, model.b):
            points.append((float(tau), eta))
    nthreads = _threads(threads)
    if nthreads > 1:
        with ThreadPoolExecutor(max_workers=nthreads) as pool:
            flat = list(pool.map(gap_at, points))
    else:
        flat = [gap_at(p) for p in points]
    gaps = np.array(flat).reshape((len(taus),) + (len(etas),) * model.b)
    min_gap = float(gaps.min())
    return GapReport(
        taus,
        etas,
        gaps,
        min_gap,
        lam1,
        normal_invertible=min_gap > tol and min_gap >= math.sqrt(lam1) - 1e-6,
        tol=tol,
        rows=[
            {"tau": p[0], "eta": list(map(float, np.atleast_1d(p[1]))), "gap": g}
            for p, g in zip(points, flat)
        ],
    )
