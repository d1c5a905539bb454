"""Invariant cylinders, the limit cycle inside each cylinder, and cycle surfaces."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq, minimize_scalar

from .errors import InvalidScenario, TheoryNotApplicable
from .flow import HalfReturn, piece_flow, x_affine_lower, x_affine_upper
from .model import CanonicalParams, FocusCanonicalParams
from .spectral import pair_invariants, structure_of

__all__ = [
    "Cylinder",
    "CylinderScan",
    "CycleOutcome",
    "LimitCycle",
    "PeriodicSurface",
    "FocusFocusResult",
    "return_defect",
    "scan_cylinders",
    "find_cylinders",
    "find_limit_cycle",
    "x_fixed_point",
    "iterate_x_return",
    "periodic_surface",
    "focus_focus_analyze",
    "Y_RANGE",
    "GRID_NODES",
]

log = logging.getLogger(__name__)

Y_RANGE = (1e-3, 50.0)
GRID_NODES = 512
Q_TOL = 1e-10
CONTINUUM_TOL = 1e-8
SCALE_TOL = 1e-12


@dataclass(frozen=True)
class Cylinder:
    y0: float
    y1: float
    tau_plus: float
    tau_minus: float
    residual: float
    flag: str = ""


@dataclass(frozen=True)
class LimitCycle:
    cyl: Cylinder
    x0: float
    x1: float
    period: float
    multiplier: float

    @property
    def y0(self) -> float:
        return self.cyl.y0

    @property
    def stability(self) -> str:
        m = abs(self.multiplier)
        return "attracting" if m < 1 else "repelling" if m > 1 else "neutral"


@dataclass(frozen=True)
class CycleOutcome:
    """Result of the x-map analysis on one cylinder.

    ``kind`` is ``isolated`` (then ``cycle`` is set), ``all-closed`` or ``none``.
    Upper map ``x1 = rho x0 + B``; lower map ``x1 = x0 / xi + C``.
    """

    kind: str
    cycle: LimitCycle | None
    rho: float
    xi: float
    B: float
    C: float


@dataclass
class CylinderScan:
    cylinders: list[Cylinder]
    continuum: bool
    grid: np.ndarray
    q: np.ndarray
    undefined: list[float] = field(default_factory=list)
    diagnostics: list[str] = field(default_factory=list)

    @property
    def count(self):
        return math.inf if self.continuum else len(self.cylinders)


@dataclass
class PeriodicSurface:
    samples: list[tuple[float, float, float, float]]
    amplitude: list[float]
    continuity_ok: bool


@dataclass
class FocusFocusResult:
    cylinders: list[Cylinder]
    outcome: CycleOutcome | None
    diagnostics: list[str]


# ---------------------------------------------------------------------------


def _flows(params, t_max=None):
    return piece_flow(params.upper, t_max=t_max), piece_flow(params.lower, t_max=t_max)


def _returns(params, y0, t_max=None):
    """Both half-returns on an array of entry values (NaN where undefined)."""
    up, lo = _flows(params, t_max)
    y0 = np.atleast_1d(np.asarray(y0, dtype=float))
    tau1, y1, ok1 = up.half_maps(y0)
    tau2 = np.full(y0.shape, np.nan)
    y2 = np.full(y0.shape, np.nan)
    if ok1.any():
        t2, e2, ok2 = lo.half_maps(y1[ok1])
        tau2[ok1] = np.where(ok2, t2, np.nan)
        y2[ok1] = np.where(ok2, e2, np.nan)
    return tau1, y1, tau2, y2


def return_defect(params, y0, t_max=None):
    """``Q(y0) = P-(P+(y0)) - y0`` on an array; NaN where a half map is undefined."""
    y0 = np.atleast_1d(np.asarray(y0, dtype=float))
    return _returns(params, y0, t_max)[3] - y0


def _cylinder(params, y0, flag="", t_max=None) -> Cylinder | None:
    up, lo = _flows(params, t_max)
    h1 = up.half_map(y0)
    if not h1.defined:
        return None
    h2 = lo.half_map(h1.y_exit)
    if not h2.defined:
        return None
    return Cylinder(float(y0), h1.y_exit, h1.tau, h2.tau, abs(h2.y_exit - y0), flag)


def _q_scalar(params, t_max):
    def q(y):
        v = return_defect(params, [y], t_max)[0]
        if not np.isfinite(v):
            raise ValueError("undefined")
        return v
    return q


def scan_cylinders(params, y_range=Y_RANGE, expected=None, n_nodes: int = GRID_NODES,
                   t_max=None, check_continuum: bool = True) -> CylinderScan:
    """Locate the roots of ``Q`` on a log-spaced grid.

    With ``expected`` of kind ``InfinitelyManyCylinders`` (or when the whole
    grid already satisfies ``|Q| < 1e-8``) the grid is checked as a
    continuum witness instead; the continuum must break when ``c-`` is
    perturbed by ``1e-6``.
    """
    lo_y, hi_y = (float(v) for v in y_range)
    if not 0 < lo_y < hi_y:
        raise InvalidScenario(f"y_range must satisfy 0 < y_min < y_max, got {y_range}")
    grid = np.geomspace(lo_y, hi_y, n_nodes)
    tau1, y1, tau2, y2 = _returns(params, grid, t_max)
    q = y2 - grid
    ok = np.isfinite(q)
    undefined = [float(y) for y in grid[~ok]]
    if undefined:
        log.info("half-return undefined at %d of %d nodes", len(undefined), n_nodes)
    diags = []
    if undefined:
        diags.append(f"{len(undefined)} grid nodes with undefined half-return")

    want_cont = expected is not None and getattr(expected, "kind", expected) == "InfinitelyManyCylinders"
    if ok.any() and (want_cont or np.nanmax(np.abs(q)) < CONTINUUM_TOL):
        qmax = float(np.nanmax(np.abs(q)))
        if qmax < CONTINUUM_TOL:
            broken = True
            if check_continuum and isinstance(params, CanonicalParams):
                qp = return_defect(params.replace(c_minus=params.c_minus + 1e-6), grid[ok], t_max)
                broken = bool(np.nanmax(np.abs(qp)) >= CONTINUUM_TOL) if np.isfinite(qp).any() else True
                if not broken:
                    diags.append("continuum survives a 1e-6 perturbation of c-")
            cyls = [Cylinder(float(grid[i]), float(y1[i]), float(tau1[i]), float(tau2[i]), float(abs(q[i])), "continuum")
                    for i in np.flatnonzero(ok)]
            return CylinderScan(cyls, True, grid, q, undefined, diags)
        diags.append(f"continuum expected but max|Q| = {qmax:.3g} over the grid")

    fq = _q_scalar(params, t_max)
    roots: list[tuple[float, str]] = []
    idx = np.flatnonzero(ok)
    for i in idx:
        if q[i] == 0.0:
            roots.append((float(grid[i]), ""))
    for i, j in zip(idx[:-1], idx[1:]):
        if j != i + 1:
            continue  # undefined node in between: no root claimed in this cell
        a, b = grid[i], grid[j]
        qa, qb = q[i], q[j]
        if qa == 0 or qb == 0:
            continue
        if qa * qb < 0:
            try:
                r = brentq(fq, a, b, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=200)
            except ValueError:
                diags.append(f"refinement failed in [{a:.6g}, {b:.6g}]")
                continue
            roots.append((float(r), ""))
    # tangential contacts: interior local minima of |Q| without sign change
    for k in range(1, len(grid) - 1):
        if not (ok[k - 1] and ok[k] and ok[k + 1]):
            continue
        s = np.sign(q[k])
        if s == 0 or np.sign(q[k - 1]) != s or np.sign(q[k + 1]) != s:
            continue
        if not (abs(q[k]) < abs(q[k - 1]) and abs(q[k]) < abs(q[k + 1])):
            continue
        if abs(q[k]) > 1e-3 * (1.0 + grid[k]):
            continue
        try:
            res = minimize_scalar(lambda y: s * fq(y), bounds=(grid[k - 1], grid[k + 1]), method="bounded",
                                  options={"xatol": 1e-14})
        except ValueError:
            continue
        if res.fun <= Q_TOL:
            if res.fun < -Q_TOL:
                for a, b in ((grid[k - 1], res.x), (res.x, grid[k + 1])):
                    roots.append((float(brentq(fq, a, b, xtol=1e-15)), ""))
            else:
                roots.append((float(res.x), "structurally-unstable"))
                diags.append(f"double root near y0={res.x:.6g}: boundary case, structurally unstable")

    cyls = []
    for r, flag in sorted(roots):
        if cyls and abs(r - cyls[-1].y0) < 1e-9 * (1 + r):
            continue
        c = _cylinder(params, r, flag, t_max)
        if c is None:
            continue
        if c.residual >= Q_TOL * max(1.0, r):
            diags.append(f"root at y0={r:.6g} has residual {c.residual:.3g}")
        cyls.append(c)
    return CylinderScan(cyls, False, grid, q, undefined, diags)


def find_cylinders(params, y_range=Y_RANGE, expected=None, **kw) -> list[Cylinder]:
    return scan_cylinders(params, y_range, expected, **kw).cylinders


# ---------------------------------------------------------------------------


def _x_maps(params, cyl: Cylinder):
    up = x_affine_upper(params, cyl.y0, HalfReturn(cyl.tau_plus, cyl.y1, True))
    lo = x_affine_lower(params, cyl.y1, HalfReturn(cyl.tau_minus, cyl.y0, True))
    return up.scale, up.offset, 1.0 / lo.scale, lo.offset


def x_fixed_point(rho: float, xi: float, B: float, C: float) -> float:
    """Intersection of ``x1 = rho x0 + B`` with ``x1 = x0 / xi + C``."""
    return (C - B) / (rho - 1.0 / xi)


def find_limit_cycle(params, cyl: Cylinder, tol: float = SCALE_TOL) -> CycleOutcome:
    """Fixed point of the x-return map on the cylinder through ``cyl``."""
    rho, B, xi, C = _x_maps(params, cyl)
    period = cyl.tau_plus + cyl.tau_minus
    if abs(rho * xi - 1.0) < tol:
        if abs(B - C) <= tol * (1.0 + abs(B) + abs(C)):
            return CycleOutcome("all-closed", None, rho, xi, B, C)
        return CycleOutcome("none", None, rho, xi, B, C)
    x0 = x_fixed_point(rho, xi, B, C)
    cycle = LimitCycle(cyl, x0, rho * x0 + B, period, rho * xi)
    return CycleOutcome("isolated", cycle, rho, xi, B, C)


def iterate_x_return(outcome: CycleOutcome, x: float = 0.0, n: int = 10000, tol: float = 1e-15) -> float:
    """Iterate ``x -> xi (rho x + B - C)`` until it stops moving."""
    rho, xi, B, C = outcome.rho, outcome.xi, outcome.B, outcome.C
    for _ in range(n):
        nxt = xi * (rho * x + B - C)
        if abs(nxt - x) <= tol * (1.0 + abs(x)):
            return nxt
        x = nxt
    return x


def periodic_surface(params: CanonicalParams, y_grid) -> PeriodicSurface:
    """One isolated cycle per cylinder of a continuum family."""
    ap, am = params.a_plus, params.a_minus
    if ap == 0 and am == 0:
        raise TheoryNotApplicable("surface of cycles needs (a+)^2 + (a-)^2 != 0")
    if ap * am < 0:
        raise TheoryNotApplicable(f"surface of cycles needs a+ a- >= 0, got a+ a- = {ap * am:g}")
    y_grid = np.sort(np.asarray(y_grid, dtype=float))
    if y_grid.size == 0 or np.any(y_grid <= 0):
        raise InvalidScenario("y_grid must be non-empty and positive")
    try:
        kind = structure_of(pair_invariants(params)).kind
    except TheoryNotApplicable:
        kind = None
    if kind != "InfinitelyManyCylinders":
        q = return_defect(params, y_grid)
        if not (np.all(np.isfinite(q)) and np.max(np.abs(q)) < CONTINUUM_TOL):
            raise TheoryNotApplicable("surface of cycles needs a continuum of cylinders (kappa = lambda = 0)")
    samples, amp = [], []
    for y in y_grid:
        cyl = _cylinder(params, y)
        if cyl is None or cyl.residual >= CONTINUUM_TOL:
            raise TheoryNotApplicable(f"no cylinder through y0={y:g}")
        out = find_limit_cycle(params, cyl)
        if out.cycle is None:
            raise TheoryNotApplicable(f"x-map on the cylinder y0={y:g} has no isolated fixed point ({out.kind})")
        c = out.cycle
        samples.append((float(y), c.x0, c.x1, c.period))
        amp.append(max(abs(c.x0), abs(c.x1), abs(cyl.y0), abs(cyl.y1)))
    ok = True
    for (ya, xa, _, _), (yb, xb, _, _) in zip(samples, samples[1:]):
        if abs(xb - xa) > 10.0 * (yb - ya) * max(1.0, abs(xa), abs(xb)):
            ok = False
    return PeriodicSurface(samples, amp, ok)


def focus_focus_analyze(params: FocusCanonicalParams, y_range=Y_RANGE, **kw) -> FocusFocusResult:
    """Cylinder search and cycle for the focus/focus canonical form."""
    if not isinstance(params, FocusCanonicalParams):
        raise InvalidScenario("focus_focus_analyze needs FocusCanonicalParams")
    params.check_constraints()
    scan = scan_cylinders(params, y_range, **kw)
    diags = list(scan.diagnostics)
    cyls = scan.cylinders
    if scan.continuum:
        diags.append("theory violation: continuum of cylinders in a focus/focus system")
    elif len(cyls) > 1:
        diags.append(f"theory violation: {len(cyls)} cylinders found, at most one expected")
    outcome = find_limit_cycle(params, cyls[0]) if len(cyls) == 1 else None
    return FocusFocusResult(cyls, outcome, diags)
