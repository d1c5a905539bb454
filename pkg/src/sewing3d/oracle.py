"""Brute-force numerical integration of the sewed system.

This module is the independent check on the closed forms: it integrates the
full 3D affine fields with an adaptive Runge-Kutta scheme (scipy's DOP853,
stepped manually), locates the crossings of ``z = 0`` on the dense output and
applies the sewing rule at each crossing.  It deliberately does not import
:mod:`sewing3d.flow`.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import DOP853

from .errors import InvalidScenario, NumericFailure
from .model import AffinePiece, CanonicalParams, FocusCanonicalParams, PiecewiseSystem

__all__ = [
    "EPS_FOLD",
    "Crossing",
    "OrbitTrace",
    "NumericHalfReturn",
    "integrate",
    "numeric_half_map",
    "numeric_full_return",
    "numeric_multiplier",
    "closure_residual",
    "numeric_y_multiplier",
]

EPS_FOLD = 1e-9
RTOL = 1e-12
ATOL = 1e-13
DIVERGENCE = 1e12


@dataclass(frozen=True)
class Crossing:
    t: float
    x: float
    y: float
    z: float
    from_side: int
    to_side: int


@dataclass
class OrbitTrace:
    """Sampled orbit.  ``points`` has columns ``t, x, y, z``.

    ``status`` is one of ``completed``, ``tangency``, ``non-sewing``,
    ``diverged`` or ``no-return``.
    """

    points: np.ndarray
    pieces: np.ndarray
    crossing_mask: np.ndarray
    crossings: list[Crossing] = field(default_factory=list)
    status: str = "completed"
    message: str = ""

    @property
    def end(self) -> np.ndarray:
        return self.points[-1, 1:]

    def rows(self):
        """Rows ``(t, x, y, z, piece, crossing)`` for tabular export."""
        for (t, x, y, z), pc, cr in zip(self.points, self.pieces, self.crossing_mask):
            yield float(t), float(x), float(y), float(z), "+" if pc > 0 else "-", int(bool(cr))


@dataclass(frozen=True)
class NumericHalfReturn:
    tau: float
    y_exit: float
    x_exit: float
    defined: bool
    reason: str = ""


def _system(sys) -> PiecewiseSystem:
    if isinstance(sys, PiecewiseSystem):
        return sys
    if isinstance(sys, (CanonicalParams, FocusCanonicalParams)):
        return sys.to_piecewise()
    raise InvalidScenario(f"cannot integrate object of type {type(sys).__name__}")


def _slow_time(piece: AffinePiece) -> float:
    lam = np.abs(np.linalg.eigvals(piece.A))
    lam = lam[lam > 1e-14]
    return float(1.0 / lam.min()) if lam.size else 1.0


def _fast_time(piece: AffinePiece) -> float:
    lam = np.abs(np.linalg.eigvals(piece.A))
    lam = lam[lam > 1e-14]
    return float(1.0 / lam.max()) if lam.size else math.inf


def _bisect(fn, lo, hi, f_lo_positive=True, iters=200):
    # fn(lo) has the sign given by f_lo_positive, fn(hi) the opposite (or zero)
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if (fn(mid) > 0) == f_lo_positive:
            lo = mid
        else:
            hi = mid
    return lo, hi


def integrate(
    sys,
    p0,
    t_end: float,
    *,
    max_crossings: int | None = None,
    t_max_segment: float | None = None,
    rtol: float = RTOL,
    atol: float = ATOL,
    max_step: float | None = None,
    eps_fold: float = EPS_FOLD,
    side: int | None = None,
) -> OrbitTrace:
    """Integrate ``sys`` from ``p0`` until ``t_end`` or ``max_crossings``.

    ``side`` forces the starting piece when ``p0`` lies on the switching
    plane; otherwise the sewing rule (sign of the normal derivative of both
    fields) decides.  A crossing with ``|y| < eps_fold`` stops the run with
    status ``tangency``.
    """
    pw = _system(sys)
    p = np.asarray(p0, dtype=float)
    if p.shape != (3,) or not np.all(np.isfinite(p)):
        raise InvalidScenario(f"p0 must be a finite 3-vector, got {p0!r}")
    if not t_end >= 0:
        raise InvalidScenario("t_end must be non-negative")

    pts, pcs, crs, crossings = [], [], [], []

    def record(t, q, pc, cr=False):
        pts.append((t, q[0], q[1], q[2]))
        pcs.append(pc)
        crs.append(cr)

    def done(status="completed", message=""):
        return OrbitTrace(np.array(pts, dtype=float), np.array(pcs, dtype=int), np.array(crs, dtype=bool),
                          crossings, status, message)

    if p[2] > 0:
        cur = 1
    elif p[2] < 0:
        cur = -1
    else:
        hu, hl = pw.upper.normal_derivative(p), pw.lower.normal_derivative(p)
        if side is not None:
            cur = 1 if side > 0 else -1
        elif hu > 0 and hl > 0:
            cur = 1
        elif hu < 0 and hl < 0:
            cur = -1
        else:
            record(0.0, p, 1)
            status = "tangency" if min(abs(hu), abs(hl)) < eps_fold else "non-sewing"
            return done(status, f"start on switching plane with Xh = ({hu:.3g}, {hl:.3g})")
    record(0.0, p, cur)
    if t_end == 0:
        return done()

    t = 0.0
    seg_start = 0.0
    while True:
        piece = pw.piece(cur)
        A, b = piece.A, piece.b
        h_max = max_step if max_step is not None else 0.1 * _fast_time(piece)
        seg_limit = t_max_segment if t_max_segment is not None else math.inf
        bound = min(t_end, seg_start + seg_limit)
        solver = DOP853(lambda _t, u: A @ u + b, t, p, bound, rtol=rtol, atol=atol,
                        max_step=h_max if math.isfinite(h_max) else np.inf)
        event = None
        while solver.status == "running":
            t_old, u_old = solver.t, solver.y.copy()
            msg = solver.step()
            if solver.status == "failed":
                record(solver.t, solver.y, cur)
                return done("diverged", f"integrator failure at t={t_old:.6g}: {msg}")
            u_new = solver.y
            if not np.all(np.isfinite(u_new)) or np.abs(u_new).max() > DIVERGENCE:
                record(solver.t, u_new, cur)
                return done("diverged", f"state left the bounded region at t={solver.t:.6g}")
            dense = solver.dense_output()
            zr = cur * u_new[2]
            hi = None
            if zr <= 0:
                hi = solver.t
            elif cur * u_old[1] < 0 < cur * u_new[1]:
                # an interior minimum of cur*z may dip through the plane
                lo_y, hi_y = _bisect(lambda s: -cur * dense(s)[1], t_old, solver.t)
                tm = 0.5 * (lo_y + hi_y)
                if cur * dense(tm)[2] <= 0:
                    hi = tm
            if hi is not None:
                lo, hi = _bisect(lambda s: cur * dense(s)[2], t_old, hi)
                event = hi
                q = dense(hi)
                break
            record(solver.t, u_new, cur)
        if event is None:
            if solver.t >= t_end:
                return done()
            return done("no-return", f"no crossing within {seg_limit:.6g} time units of t={seg_start:.6g}")

        q = np.array([q[0], q[1], 0.0])
        t = event
        hu, hl = pw.upper.normal_derivative(q), pw.lower.normal_derivative(q)
        if abs(q[1]) < eps_fold or min(abs(hu), abs(hl)) < eps_fold:
            record(t, q, cur, True)
            return done("tangency", f"orbit reached the fold at t={t:.6g}")
        if hu * hl <= 0:
            record(t, q, cur, True)
            return done("non-sewing", f"crossing at t={t:.6g} outside the sewing region")
        new = 1 if hu > 0 else -1
        crossings.append(Crossing(t, q[0], q[1], 0.0, cur, new))
        record(t, q, new, True)
        cur, p, seg_start = new, q, t
        if max_crossings is not None and len(crossings) >= max_crossings:
            return done("completed", f"stopped after {len(crossings)} crossings")
        if t >= t_end:
            return done()


def _pieces_chart(params):
    """``(system, sign)``: the oracle works in physical coordinates.

    The focus layout is analysed in the chart ``ytil = -y`` on the switching
    plane, so entry/exit values are mapped through ``sign = -1``.
    """
    if isinstance(params, FocusCanonicalParams):
        return params.to_piecewise(), -1.0
    return _system(params), 1.0


def _default_segment(pw: PiecewiseSystem) -> float:
    return 1e3 * max(_slow_time(pw.upper), _slow_time(pw.lower))


def numeric_half_map(params, y0: float, side: int = 1, t_max: float | None = None, x0: float = 0.0,
                     **kw) -> NumericHalfReturn:
    """First return of the orbit entering piece ``side`` at ``(x0, y0, 0)``."""
    pw, sgn = _pieces_chart(params)
    seg = t_max if t_max is not None else _default_segment(pw)
    tr = integrate(pw, (x0, sgn * y0, 0.0), seg * 1.01, max_crossings=1, t_max_segment=seg, side=side, **kw)
    if not tr.crossings:
        return NumericHalfReturn(math.nan, math.nan, math.nan, False, tr.status + ": " + tr.message)
    c = tr.crossings[0]
    return NumericHalfReturn(float(c.t), float(sgn * c.y), float(c.x), True)


def numeric_full_return(params, x0: float, y0: float, t_max: float | None = None, **kw):
    """``(x, y)`` after one upper and one lower half-return, or ``None``."""
    pw, sgn = _pieces_chart(params)
    seg = t_max if t_max is not None else _default_segment(pw)
    tr = integrate(pw, (x0, sgn * y0, 0.0), 2.02 * seg, max_crossings=2, t_max_segment=seg, side=1, **kw)
    if len(tr.crossings) < 2:
        return None
    c = tr.crossings[1]
    return float(c.x), float(sgn * c.y), float(c.t)


def closure_residual(params, x0: float, y0: float, **kw) -> float:
    """Distance between the start and the point after one full period."""
    out = numeric_full_return(params, x0, y0, **kw)
    if out is None:
        return math.inf
    return math.hypot(out[0] - x0, out[1] - y0)


def numeric_multiplier(params, cycle, rel_step: float = 1e-6, **kw) -> float:
    """Central-difference slope of the full x-return map at the cycle.

    ``cycle`` only needs ``x0`` and ``y0`` attributes.
    """
    x0, y0 = float(cycle.x0), float(cycle.y0)
    h = rel_step * max(1.0, abs(x0))
    plus = numeric_full_return(params, x0 + h, y0, **kw)
    minus = numeric_full_return(params, x0 - h, y0, **kw)
    if plus is None or minus is None:
        raise NumericFailure("full return undefined near the cycle")
    return (plus[0] - minus[0]) / (2.0 * h)


def numeric_y_multiplier(params, y0: float, rel_step: float = 1e-6, **kw) -> float:
    """Central-difference slope of the y-return map ``P- o P+`` at ``y0``."""
    h = rel_step * max(1.0, abs(y0))
    plus = numeric_full_return(params, 0.0, y0 + h, **kw)
    minus = numeric_full_return(params, 0.0, y0 - h, **kw)
    if plus is None or minus is None:
        raise NumericFailure("full return undefined near y0")
    return (plus[1] - minus[1]) / (2.0 * h)
