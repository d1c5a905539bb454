"""Closed-form flows of the canonical pieces and their half-return maps.

Every piece has the layout ``x' = a x + b z + m``, ``y' = c y + d z + k``,
``z' = y``.  The planar part is solved through two kernels,

* ``e(t)``: solution of ``z'' = c z' + d z`` with ``z(0) = 0, z'(0) = 1``;
* ``E(t) = int_0^t e``: the response to the unit constant forcing,

so that from a point ``(x0, y0, 0)`` of the switching plane
``z(t) = y0 e(t) + k E(t)``.  Both kernels are exponential polynomials
``sum c_j t^p_j exp(r_j t)`` whose terms are chosen per spectral type: real
distinct, complex (focus/center), repeated (``Nd``), one zero eigenvalue
(``D1``) and nilpotent (``D2``).  The x-component is the convolution of
``z`` with ``exp(a t)``, evaluated term by term with a power series wherever
the closed form has a removable singularity (resonance ``r_j = a``).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import TheoryNotApplicable
from .model import CanonicalParams, FocusCanonicalParams, PieceParams
from .spectral import EPS_DISC, SpectralType, alpha_of, classify_piece

__all__ = [
    "HalfReturn",
    "AffineXMap",
    "PieceFlow",
    "piece_flow",
    "flow_upper",
    "flow_lower",
    "half_map_upper",
    "half_map_lower",
    "x_affine_upper",
    "x_affine_lower",
    "parametrized_halfmap",
    "T_MAX_FACTOR",
    "BOUND",
]

T_MAX_FACTOR = 1e3
# returns beyond this state magnitude are reported as escapes, matching the integrator's bounded region
BOUND = 1e12
_SERIES_TERMS = 40


@dataclass(frozen=True)
class HalfReturn:
    tau: float
    y_exit: float
    defined: bool
    reason: str = ""


@dataclass(frozen=True)
class AffineXMap:
    scale: float
    offset: float

    def __call__(self, x):
        return self.scale * x + self.offset


# ---------------------------------------------------------------------------
# exponential polynomials: (coef, power, rate) arrays


class _Terms:
    __slots__ = ("coef", "power", "rate")

    def __init__(self, items):
        items = [it for it in items if it[0] != 0]
        self.coef = np.array([complex(c) for c, _, _ in items], dtype=complex)
        self.power = np.array([p for _, p, _ in items], dtype=int)
        self.rate = np.array([complex(r) for _, _, r in items], dtype=complex)

    def items(self):
        return list(zip(self.coef, self.power, self.rate))

    def scaled(self, s):
        return [(c * s, p, r) for c, p, r in self.items()]

    def derivative(self) -> "_Terms":
        out = []
        for c, p, r in self.items():
            if p > 0:
                out.append((c * p, p - 1, r))
            if r != 0:
                out.append((c * r, p, r))
        return _Terms(out)

    def __call__(self, t):
        t = np.asarray(t, dtype=float)[..., None]
        with np.errstate(over="ignore", invalid="ignore"):
            val = self.coef * t**self.power * np.exp(self.rate * t)
            return val.sum(axis=-1).real

    def convolved(self, a: float, t):
        """``int_0^t exp(a (t - s)) f(s) ds`` for this ``f``."""
        t = np.asarray(t, dtype=float)[..., None]
        delta = self.rate - a
        p = self.power
        with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
            dt = delta * t
            ea = np.exp(a * t)
            # closed form: p!/(-delta)^(p+1) [e^{at} - e^{rt} sum_j (-delta t)^j / j!]
            partial = np.zeros(np.broadcast(dt, p).shape, dtype=complex)
            term = np.ones_like(partial)
            pmax = int(p.max()) if p.size else 0
            for j in range(pmax + 1):
                partial = partial + np.where(j <= p, term, 0.0)
                term = term * (-dt) / (j + 1)
            fact = np.array([math.factorial(int(q)) for q in p], dtype=float)
            closed = fact / (-delta) ** (p + 1) * (ea - np.exp(self.rate * t) * partial)
            # series: e^{at} sum_n delta^n t^(n+p+1) / (n! (n+p+1))
            acc = np.zeros_like(closed)
            pw = np.ones_like(closed)
            tp = t ** (p + 1)
            for n in range(_SERIES_TERMS):
                acc = acc + pw * tp / (n + p + 1)
                pw = pw * dt / (n + 1)
            series = ea * acc
            val = np.where(np.abs(dt) < 1.0, series, closed)
            return (self.coef * val).sum(axis=-1).real


def _kernels(sd, c: float) -> tuple[_Terms, _Terms]:
    t = sd.type
    if t is SpectralType.D2:
        return _Terms([(1.0, 1, 0.0)]), _Terms([(0.5, 2, 0.0)])
    if t is SpectralType.Nd:
        lam = c / 2.0
        e = _Terms([(1.0, 1, lam)])
        E = _Terms([(1.0 / lam, 1, lam), (-1.0 / lam**2, 0, lam), (1.0 / lam**2, 0, 0.0)])
        return e, E
    l2, l3 = complex(sd.lambda2), complex(sd.lambda3)
    diff = l2 - l3
    e = _Terms([(1.0 / diff, 0, l2), (-1.0 / diff, 0, l3)])
    E_items = []
    for sgn, lam in ((1.0, l2), (-1.0, l3)):
        if lam == 0:  # D1: the zero eigenvalue integrates to t
            E_items.append((sgn / diff, 1, 0.0))
        else:
            E_items += [(sgn / (diff * lam), 0, lam), (-sgn / (diff * lam), 0, 0.0)]
    return e, _Terms(E_items)


# ---------------------------------------------------------------------------


class PieceFlow:
    """Closed-form flow and half-return map of one piece.

    ``t_max`` bounds the return-time search; it defaults to
    ``T_MAX_FACTOR`` times the slowest planar time scale.
    """

    def __init__(self, piece: PieceParams, eps: float = EPS_DISC, t_max: float | None = None):
        self.piece = piece
        self.spectral = classify_piece(piece.a, piece.c, piece.d, eps)
        self.e, self.E = _kernels(self.spectral, piece.c)
        self.de = self.e.derivative()
        mags = [abs(l) for l in (self.spectral.lambda2, self.spectral.lambda3) if abs(l) > 0]
        self.t_char = max(1.0 / m for m in mags) if mags else 1.0
        self.fastest = max(mags) if mags else 0.0
        self.t_max = T_MAX_FACTOR * self.t_char if t_max is None else float(t_max)
        self._one = _Terms([(1.0, 0, 0.0)])

    # -- full state ---------------------------------------------------------

    def state(self, t, p):
        """Point reached at time(s) ``t`` from ``p = (x0, y0, z0)``."""
        x0, y0, z0 = (float(v) for v in p)
        pc = self.piece
        # z0 * (e' - c e) solves the homogeneous equation with z(0)=1, z'(0)=0
        z_terms = _Terms(
            self.e.scaled(y0) + self.E.scaled(pc.k) + self.de.scaled(z0) + self.e.scaled(-pc.c * z0)
        )
        y_terms = z_terms.derivative()
        t_arr = np.asarray(t, dtype=float)
        with np.errstate(over="ignore"):
            x = np.exp(pc.a * t_arr) * x0 + pc.b * z_terms.convolved(pc.a, t_arr) + pc.m * self._one.convolved(pc.a, t_arr)
        y = y_terms(t_arr)
        z = z_terms(t_arr)
        if t_arr.ndim == 0:
            return float(x), float(y), float(z)
        return np.stack([x, y, z], axis=-1)

    def z_y(self, t, y_in):
        """``(z, y)`` at times ``t`` for orbits leaving ``(*, y_in, 0)``."""
        k = self.piece.k
        e, E, de = self.e(t), self.E(t), self.de(t)
        with np.errstate(over="ignore", invalid="ignore"):
            return y_in * e + k * E, y_in * de + k * e

    def x_offset(self, t, y_in):
        """x reached at time ``t`` from ``x0 = 0`` (vectorised in both)."""
        pc = self.piece
        ce = self.e.convolved(pc.a, t)
        cE = self.E.convolved(pc.a, t)
        c1 = self._one.convolved(pc.a, t)
        return pc.b * (y_in * ce + pc.k * cE) + pc.m * c1

    # -- half-return map ----------------------------------------------------

    def _grid(self, y_in: float) -> np.ndarray:
        k = abs(self.piece.k) or 1.0
        first = 2.0 * abs(y_in) / k
        if self.fastest > 0:
            first = min(first, 1.0 / self.fastest)
        t0 = 0.05 * first
        if self.spectral.is_complex:
            cap = math.pi / (8.0 * abs(complex(self.spectral.lambda2).imag))
            n_geo = max(1, int(math.ceil(math.log(max(cap / t0, 1.0)) / math.log(1.25))))
            geo = t0 * 1.25 ** np.arange(n_geo + 1)
            geo = geo[geo < min(cap, self.t_max)]
            start = geo[-1] if geo.size else t0
            uni = np.arange(start + cap, self.t_max, cap)
            grid = np.concatenate([geo, uni, [self.t_max]])
        else:
            n = int(math.ceil(math.log2(max(self.t_max / t0, 2.0))))
            grid = np.concatenate([t0 * 2.0 ** np.arange(n), [self.t_max]])
            grid = grid[grid <= self.t_max]
        return np.unique(grid)

    def _bracket(self, y_in: float):
        """First cell ``[tl, tr]`` containing the first zero of ``z``."""
        sgn = float(self.piece.side)
        grid = self._grid(y_in)
        prev_t, prev_z, prev_y = 0.0, 0.0, sgn * abs(y_in)
        for lo in range(0, grid.size, 1024):
            ts = grid[lo:lo + 1024]
            z, y = self.z_y(ts, y_in)
            z, y = sgn * z, sgn * y
            for i in range(ts.size):
                tl, zl, yl = (prev_t, prev_z, prev_y) if i == 0 else (ts[i - 1], z[i - 1], y[i - 1])
                tr, zr, yr = ts[i], z[i], y[i]
                if not (np.isfinite(zr) and np.isfinite(yr)):
                    return None, f"non-finite state at t={tr:.6g}"
                if zr <= 0 and abs(yr) <= BOUND:
                    return (tl, tr), ""
                if max(abs(zr), abs(yr)) > BOUND:
                    return None, f"orbit left the region |y|, |z| <= {BOUND:g} at t={tr:.6g}"
                if yl < 0 < yr and tl > 0:
                    # interior minimum of z: check whether it dips below zero
                    ts_min = self._bisect_y(tl, tr, y_in)
                    if sgn * self.z_y(ts_min, y_in)[0] <= 0:
                        return (tl, ts_min), ""
            prev_t, prev_z, prev_y = ts[-1], z[-1], y[-1]
        return None, f"no return before t_max={self.t_max:.6g}"

    def _bisect_y(self, tl, tr, y_in):
        sgn = float(self.piece.side)
        for _ in range(200):
            tm = 0.5 * (tl + tr)
            if tm <= tl or tm >= tr:
                break
            if sgn * self.z_y(tm, y_in)[1] < 0:
                tl = tm
            else:
                tr = tm
        return 0.5 * (tl + tr)

    def _refine(self, tl, tr, y_in):
        """Safeguarded Newton on ``z`` (``z' = y``) inside the brackets.

        A Newton step leaving the current bracket is replaced by bisection;
        the loop ends when the bracket collapses to adjacent floats or the
        residual reaches rounding level.
        """
        sgn = float(self.piece.side)
        tl = np.array(tl, dtype=float, ndmin=1)
        tr = np.array(tr, dtype=float, ndmin=1)
        y_in = np.broadcast_to(np.asarray(y_in, dtype=float), tl.shape)
        t = 0.5 * (tl + tr)
        active = np.ones(tl.shape, dtype=bool)
        for _ in range(200):
            z, y = self.z_y(t[active], y_in[active])
            sz = sgn * z
            a_idx = np.flatnonzero(active)
            pos = sz > 0
            tl[a_idx[pos]] = t[a_idx[pos]]
            tr[a_idx[~pos]] = t[a_idx[~pos]]
            with np.errstate(divide="ignore", invalid="ignore"):
                cand = t[a_idx] - z / y
            lo, hi = tl[a_idx], tr[a_idx]
            mid = 0.5 * (lo + hi)
            inside = np.isfinite(cand) & (cand > lo) & (cand < hi)
            nxt = np.where(inside, cand, mid)
            conv = (np.abs(z) <= 4e-16 * (1.0 + np.abs(y_in[a_idx])) * (1.0 + np.abs(y) * t[a_idx])) | (
                np.nextafter(lo, np.inf) >= hi) | (nxt == t[a_idx])
            t[a_idx] = np.where(conv, t[a_idx], nxt)
            active[a_idx[conv]] = False
            if not active.any():
                break
        return t

    def _brackets(self, y_in: np.ndarray):
        """First-crossing brackets for a batch of entry values.

        ``z`` is linear in the entry value, so the kernels are evaluated once
        on a shared grid.  Cells in which ``z`` has an interior minimum are
        resolved by the scalar search.
        """
        n = y_in.size
        tl = np.full(n, np.nan)
        tr = np.full(n, np.nan)
        why = [""] * n
        if n == 0:
            return tl, tr, why
        sgn = float(self.piece.side)
        grid = self._grid(float(np.min(np.abs(y_in))))
        pending = np.ones(n, dtype=bool)
        prev_t = 0.0
        prev_z = np.zeros(n)
        prev_y = sgn * y_in
        k = self.piece.k
        for lo in range(0, grid.size, 512):
            ts = grid[lo:lo + 512]
            e, E, de = self.e(ts), self.E(ts), self.de(ts)
            idx = np.flatnonzero(pending)
            with np.errstate(over="ignore", invalid="ignore"):
                z = sgn * (y_in[idx, None] * e + k * E)
                y = sgn * (y_in[idx, None] * de + k * e)
            zl = np.concatenate([prev_z[idx, None], z[:, :-1]], axis=1)
            yl = np.concatenate([prev_y[idx, None], y[:, :-1]], axis=1)
            tls = np.concatenate([[prev_t], ts[:-1]])
            cross = (z <= 0) & (np.abs(y) <= BOUND)
            bad = ~(np.isfinite(z) & np.isfinite(y)) | (np.abs(z) > BOUND) | (np.abs(y) > BOUND)
            dip = (yl < 0) & (y > 0) & (tls > 0)
            stop = cross | bad | dip
            hit = stop.any(axis=1)
            first = np.argmax(stop, axis=1)
            for r in np.flatnonzero(hit):
                i, j = idx[r], first[r]
                pending[i] = False
                if bad[r, j] and not cross[r, j]:
                    why[i] = f"orbit left the region |y|, |z| <= {BOUND:g} at t={ts[j]:.6g}"
                elif cross[r, j] and not dip[r, j]:
                    tl[i], tr[i] = tls[j], ts[j]
                else:
                    br, why[i] = self._bracket(float(y_in[i]))
                    if br is not None:
                        tl[i], tr[i] = br
            prev_t = ts[-1]
            prev_z[idx] = z[:, -1]
            prev_y[idx] = y[:, -1]
            if not pending.any():
                break
        for i in np.flatnonzero(pending):
            why[i] = f"no return before t_max={self.t_max:.6g}"
        return tl, tr, why

    def half_maps(self, y_in, with_reasons: bool = False):
        """Vectorised half-return map: ``(tau, y_exit, defined)`` arrays."""
        y_in = np.atleast_1d(np.asarray(y_in, dtype=float))
        sgn = self.piece.side
        tau = np.full(y_in.shape, np.nan)
        y_exit = np.full(y_in.shape, np.nan)
        valid = np.isfinite(y_in) & (sgn * y_in > 0)
        reasons = [f"entry y must have sign {sgn:+d}"] * y_in.size
        vi = np.flatnonzero(valid)
        tl, tr, why = self._brackets(y_in[vi])
        for r, i in enumerate(vi):
            reasons[i] = why[r]
        found = np.isfinite(tl)
        ok = np.zeros(y_in.shape, dtype=bool)
        ok[vi[found]] = True
        if found.any():
            t = self._refine(tl[found], tr[found], y_in[vi[found]])
            ye = self.z_y(t, y_in[vi[found]])[1]
            far = ~(np.abs(ye) <= BOUND)
            tau[vi[found]] = np.where(far, np.nan, t)
            y_exit[vi[found]] = np.where(far, np.nan, ye)
            ok[vi[found][far]] = False
            for i in vi[found][far]:
                reasons[i] = f"return beyond the region |y| <= {BOUND:g}"
        if with_reasons:
            return tau, y_exit, ok, reasons
        return tau, y_exit, ok

    def half_map(self, y_in: float) -> HalfReturn:
        tau, y_exit, ok, why = self.half_maps([y_in], with_reasons=True)
        if not ok[0]:
            return HalfReturn(math.nan, math.nan, False, why[0])
        return HalfReturn(float(tau[0]), float(y_exit[0]), True)

    def x_map(self, y_in: float, tau: float) -> AffineXMap:
        """Forward map ``x_exit = scale * x_entry + offset`` at return time ``tau``."""
        return AffineXMap(math.exp(self.piece.a * tau), float(self.x_offset(tau, y_in)))


@lru_cache(maxsize=256)
def piece_flow(piece: PieceParams, eps: float = EPS_DISC, t_max: float | None = None) -> PieceFlow:
    return PieceFlow(piece, eps, t_max)


def _pieces(params):
    if isinstance(params, (CanonicalParams, FocusCanonicalParams)):
        return params.upper, params.lower
    raise TypeError(f"expected canonical parameters, got {type(params).__name__}")


def flow_upper(params, t, p, t_max=None):
    return piece_flow(_pieces(params)[0], EPS_DISC, t_max).state(t, p)


def flow_lower(params, t, p, t_max=None):
    return piece_flow(_pieces(params)[1], EPS_DISC, t_max).state(t, p)


def half_map_upper(params, y0: float, t_max=None) -> HalfReturn:
    return piece_flow(_pieces(params)[0], EPS_DISC, t_max).half_map(y0)


def half_map_lower(params, y1: float, t_max=None) -> HalfReturn:
    return piece_flow(_pieces(params)[1], EPS_DISC, t_max).half_map(y1)


def x_affine_upper(params, y0: float, half: HalfReturn) -> AffineXMap:
    """``x1 = rho x0 + B`` with ``rho = exp(a+ tau)``."""
    if not half.defined:
        raise TheoryNotApplicable("upper half-return undefined: " + half.reason)
    return piece_flow(_pieces(params)[0]).x_map(y0, half.tau)


def x_affine_lower(params, y1: float, half: HalfReturn) -> AffineXMap:
    """Lower map written backwards, ``x_entry = x_exit / xi + C``.

    The lower flow carries ``x_entry`` to ``xi x_entry + F`` with
    ``xi = exp(a- tau-)``, so ``C = -F / xi``.
    """
    if not half.defined:
        raise TheoryNotApplicable("lower half-return undefined: " + half.reason)
    fwd = piece_flow(_pieces(params)[1]).x_map(y1, half.tau)
    return AffineXMap(1.0 / fwd.scale, -fwd.offset / fwd.scale)


# ---------------------------------------------------------------------------
# (v, w) parametrisations of the upper half-return map


def _solve_real_pair(l2, l3, E2, E3):
    # (l y1 - 1) = E (l y0 - 1) for both eigenvalues
    A = np.array([[-l2 * E2, l2], [-l3 * E3, l3]])
    rhs = np.array([1.0 - E2, 1.0 - E3])
    y0, y1 = np.linalg.solve(A, rhs)
    return float(y0), float(y1)


def parametrized_halfmap(params, v: float) -> tuple[float, float, float]:
    """``(y0, y1, tau)`` of the upper piece at curve parameter ``v``.

    ``v`` is the first return-time variable of the piece's clause
    (``exp(-l2 tau)`` for ``Sa``, ``exp(l2 tau)`` for ``No``,
    ``exp(c tau / 2)`` for ``Nd``, ``exp(c tau)`` for ``Fo`` and ``D1``,
    ``tau`` for ``D2``); for ``Ce`` it is the angle ``sqrt(-d) tau`` in
    ``(0, pi)``.  The companion ``w`` follows from the type's curve relation
    and the pair ``(y0, y1)`` is recovered from the clause's two relations.
    """
    piece = params.upper if isinstance(params, (CanonicalParams, FocusCanonicalParams)) else params
    if piece.side != 1 or piece.k != -1.0:
        raise TheoryNotApplicable("parametrisation is stated for the canonical upper piece")
    a, c, d = piece.a, piece.c, piece.d
    sd = classify_piece(a, c, d)
    t = sd.type
    if t is SpectralType.Sa:
        if not 0 < v < 1:
            raise TheoryNotApplicable("Sa clause needs v in (0, 1)")
        s = sd.s
        alpha = alpha_of(sd, a, c, d)
        w = v**alpha
        # w = ((c-s) y1 - 2)/((c-s) y0 - 2),  v = ((c+s) y0 - 2)/((c+s) y1 - 2)
        M = np.array([[-w * (c - s), c - s], [c + s, -v * (c + s)]])
        y0, y1 = np.linalg.solve(M, [2.0 - 2.0 * w, 2.0 - 2.0 * v])
        tau = -2.0 * math.log(v) / (c + s)
        return float(y0), float(y1), tau
    if t is SpectralType.No:
        s = sd.s
        alpha = alpha_of(sd, a, c, d)
        w = v**alpha
        tau = 2.0 * math.log(v) / (c + s)
        if not tau > 0:
            raise TheoryNotApplicable("No clause: v must correspond to a positive time")
        M = np.array([[-w * (c - s), c - s], [-v * (c + s), c + s]])
        y0, y1 = np.linalg.solve(M, [2.0 - 2.0 * w, 2.0 - 2.0 * v])
        return float(y0), float(y1), tau
    if t is SpectralType.Nd:
        w = math.log(v)
        tau = 2.0 * w / c
        if not tau > 0:
            raise TheoryNotApplicable("Nd clause: v must correspond to a positive time")
        y0 = (2.0 + 2.0 * (1.0 - v) / (v * w)) / c
        y1 = (v * (c * y0 - 2.0) + 2.0) / c
        return y0, y1, tau
    if t is SpectralType.Fo:
        alpha = alpha_of(sd, a, c, d)
        theta = alpha * math.log(v)  # = s tau / 2; w = tan(theta)
        tau = math.log(v) / c
        if not tau > 0:
            raise TheoryNotApplicable("Fo clause: v must correspond to a positive time")
        lam = complex(c / 2.0, sd.s / 2.0)
        E = math.sqrt(v) * complex(math.cos(theta), math.sin(theta))
        R = (1.0 - E) / lam
        y0 = -R.imag / E.imag
        y1 = R.real + E.real * y0
        if not (0 < theta < math.pi and y0 > 0):
            raise TheoryNotApplicable("Fo clause: v outside the first-return range")
        return y0, y1, tau
    if t is SpectralType.Ce:
        om = math.sqrt(-d)
        if not 0 < v < math.pi:
            raise TheoryNotApplicable("Ce clause: angle parameter must lie in (0, pi)")
        cv, sv = math.cos(v), math.sin(v)
        y0 = (1.0 - cv) / (om * sv)
        y1 = cv * y0 - sv / om
        return y0, y1, v / om
    if t is SpectralType.D1:
        w = math.log(v)
        tau = w / c
        if not tau > 0:
            raise TheoryNotApplicable("D1 clause: v must correspond to a positive time")
        y0 = (w + 1.0 - v) / (c * (1.0 - v))
        return y0, y0 - tau, tau
    # D2: v = tau, w = tau^2 = 2 y0 (y0 - y1)
    if not v > 0:
        raise TheoryNotApplicable("D2 clause: v = tau must be positive")
    w = v * v
    y0 = w / (2.0 * v)
    return y0, y0 - v, v
