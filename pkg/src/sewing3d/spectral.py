"""Spectral types of the canonical pieces and the (kappa, lambda) classifier.

Each canonical piece has eigenvalues ``a`` (the x-direction) and the two
roots of ``l^2 - c l - d = 0``.  The planar pair decides one of seven types
(``Sa, No, Nd, Fo, Ce, D1, D2``).  The exponents ``alpha`` (upper piece) and
``beta`` (lower piece) feed the tabulated invariants ``kappa`` and
``lambda``, whose signs predict scrolls, a unique invariant cylinder or a
continuum of cylinders.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Callable

import numpy as np
from scipy.optimize import brentq

from .errors import TheoryNotApplicable
from .model import CanonicalParams

__all__ = [
    "SpectralType",
    "SpectralData",
    "PairInvariants",
    "StructureClass",
    "EPS_DISC",
    "classify_piece",
    "alpha_of",
    "beta_of",
    "kappa_lambda",
    "table_rows",
    "pair_invariants",
    "structure_of",
    "f2_diagnostic",
    "tangency_root_test",
    "RootTest",
]

EPS_DISC = 1e-12


class SpectralType(str, Enum):
    Sa = "Sa"
    No = "No"
    Nd = "Nd"
    Fo = "Fo"
    Ce = "Ce"
    D1 = "D1"
    D2 = "D2"

    def __str__(self):
        return self.value


ST = SpectralType


@dataclass(frozen=True)
class SpectralData:
    type: SpectralType
    lambda1: complex
    lambda2: complex
    lambda3: complex
    s: float

    @property
    def is_complex(self) -> bool:
        return self.type in (ST.Fo, ST.Ce)


def classify_piece(a: float, c: float, d: float, eps: float = EPS_DISC) -> SpectralData:
    """Eigen-type of one canonical piece from ``(a, c, d)``.

    Zero tests on ``c``, ``d`` and ``c^2 + 4d`` use the absolute tolerance
    ``eps``.  ``a`` only enters as ``lambda1``.
    """
    disc = c * c + 4.0 * d
    c0, d0, disc0 = abs(c) <= eps, abs(d) <= eps, abs(disc) <= eps
    if c0 and d0:
        return SpectralData(ST.D2, a, 0.0, 0.0, 0.0)
    if d0:
        lam = (c, 0.0) if c > 0 else (0.0, c)
        return SpectralData(ST.D1, a, lam[0], lam[1], abs(c))
    if disc0:
        return SpectralData(ST.Nd, a, c / 2.0, c / 2.0, 0.0)
    if c0 and d < 0:
        w = math.sqrt(-d)
        return SpectralData(ST.Ce, a, complex(0.0, w), complex(0.0, -w), 2.0 * w)
    if disc < 0:
        s = math.sqrt(-disc)
        return SpectralData(ST.Fo, a, complex(c / 2, s / 2), complex(c / 2, -s / 2), s)
    s = math.sqrt(disc)
    kind = ST.Sa if d > 0 else ST.No
    return SpectralData(kind, a, (c + s) / 2.0, (c - s) / 2.0, s)


def _need(cond: bool, clause: str):
    if not cond:
        raise TheoryNotApplicable(f"exponent undefined: divisor vanishes in clause {clause}")


def alpha_of(sd: SpectralData, a: float, c: float, d: float) -> float:
    """Exponent relating the two return-time variables of the upper piece."""
    s = sd.s
    t = sd.type
    if t is ST.Sa:
        _need(s + c != 0, "Sa (s + c = 0)")
        return (s - c) / (s + c)
    if t is ST.No:
        _need(s + c != 0, "No (s + c = 0)")
        return (c - s) / (s + c)
    if t is ST.Nd:
        return c / 2.0
    if t is ST.Fo:
        _need(c != 0, "Fo (c = 0)")
        return s / (2.0 * c)
    if t is ST.Ce:
        return math.sqrt(-d)
    if t is ST.D1:
        _need(c != 0, "D1 (c = 0)")
        return 1.0 / c
    _need(a != 0, "D2 (a = 0)")
    return 1.0 / a


def beta_of(sd: SpectralData, a: float, c: float, d: float) -> float:
    """Lower-piece analogue of :func:`alpha_of` (``Sa`` and ``No`` share a clause)."""
    s = sd.s
    t = sd.type
    if t in (ST.Sa, ST.No):
        _need(s + c != 0, "Sa/No (S + c = 0)")
        return (s - c) / (s + c)
    if t is ST.Nd:
        return c / 2.0
    if t is ST.Fo:
        _need(c != 0, "Fo (c = 0)")
        return s / (2.0 * c)
    if t is ST.Ce:
        return math.sqrt(-d)
    if t is ST.D1:
        _need(c != 0, "D1 (c = 0)")
        return 1.0 / c
    _need(a != 0, "D2 (a = 0)")
    return 1.0 / a


# ---------------------------------------------------------------------------
# tabulated invariants, transcribed row by row (al = alpha, be = beta,
# cp = c+, cm = c-)

KL = Callable[[float, float, float, float], "tuple[float, float]"]


def _sa_sa(al, be, cp, cm):
    k = al**2 * (al * cm + be * cp - cp - cm) * (al * be * cm - be * cp - be * cm + cp)
    l = (al * be * cp - al * cp - al * cm + cm) * (al * be * cp + al * be * cm - al * cp - be * cm)
    return k, l


def _sa_no(al, be, cp, cm):
    k = -(be * cp - cp + (-1 + al) * cm) * ((cp + (-al + 1) * cm) * be - cp) * al**2
    l = (((cp + cm) * be - cp) * al - be * cm) * ((be * cp - cp - cm) * al + cm)
    return k, l


def _sa_nd(al, be, cp, cm):
    return al**2 * ((-al + 1) * be + cp) ** 2, -(((be + cp) * al - be) ** 2)


def _sa_fo(al, be, cp, cm):
    k = 4 * al**2 * ((be**2 + 0.25) * (-1 + al) ** 2 * cm**2 - cp * (-1 + al) * cm + cp**2)
    l = -(4 * (be**2 + 0.25)) * (-1 + al) ** 2 * cm**2 - 4 * cp * al * (-1 + al) * cm - 4 * cp**2 * al**2
    return k, l


def _sa_ce(al, be, cp, cm):
    k = ((-1 + al) ** 2 * be**2 + cp**2) * al**2
    l = -((-1 + al) ** 2) * be**2 - cp**2 * al**2
    return k, l


def _sa_d1(al, be, cp, cm):
    return -al * ((-al + 1) * cm + cp), (cp + cm) * al - cm


def _no_no(al, be, cp, cm):
    k = -(be * cp - cp + (-al - 1) * cm) * ((cp + (1 + al) * cm) * be - cp) * al**2
    l = ((be * cp - cp - cm) * al - cm) * (((cp + cm) * be - cp) * al + be * cm)
    return k, l


def _no_nd(al, be, cp, cm):
    return ((1 + al) * be + cp) ** 2 * al**2, -(((be + cp) * al + be) ** 2)


def _no_fo(al, be, cp, cm):
    k = (4 * ((1 + al) ** 2 * (be**2 + 0.25) * cm**2 + cp * (1 + al) * cm + cp**2)) * al**2
    l = -4 * (1 + al) ** 2 * (be**2 + 0.25) * cm**2 - 4 * cp * al * (1 + al) * cm - 4 * cp**2 * al**2
    return k, l


def _no_d1(al, be, cp, cm):
    return al * ((1 + al) * cm + cp), (-cp - cm) * al - cm


def _nd_nd(al, be, cp, cm):
    return -(al + be), 2 * be


def _nd_fo(al, be, cp, cm):
    k = -(4 * be**2 * cm**2 + 4 * al**2 + 4 * al * cm + cm**2)
    l = (8 * be**2 + 2) * cm**2 + 4 * al * cm
    return k, l


def _nd_d1(al, be, cp, cm):
    return -(al * be + 1), 1.0


def _d1_fo(al, be, cp, cm):
    k = 4 * (1 + cm * al) + cm**2 * al**2 * (4 * be**2 + 1)
    l = -(cm**2) * al**2 * (4 * be**2 + 1)
    return k, l


def _d1_d1(al, be, cp, cm):
    return al + be, al + be


def _const(k, l):
    def row(al, be, cp, cm):
        return float(k), float(l)

    return row


_TABLE: dict[tuple[SpectralType, SpectralType], KL | None] = {
    (ST.Sa, ST.Sa): _sa_sa,
    (ST.Sa, ST.No): _sa_no,
    (ST.Sa, ST.Nd): _sa_nd,
    (ST.Sa, ST.Fo): _sa_fo,
    (ST.Sa, ST.Ce): _sa_ce,
    (ST.Sa, ST.D1): _sa_d1,
    (ST.No, ST.No): _no_no,
    (ST.No, ST.Nd): _no_nd,
    (ST.No, ST.Fo): _no_fo,
    # lambda of this row has unbalanced parentheses and cannot be read unambiguously
    (ST.No, ST.Ce): None,
    (ST.No, ST.D1): _no_d1,
    (ST.Nd, ST.Nd): _nd_nd,
    (ST.Nd, ST.Fo): _nd_fo,
    (ST.Nd, ST.D1): _nd_d1,
    (ST.D1, ST.Fo): _d1_fo,
    (ST.D1, ST.D1): _d1_d1,
    # constant rows
    (ST.Sa, ST.D2): _const(1, -1),
    (ST.Ce, ST.Nd): _const(1, -1),
    (ST.Ce, ST.Fo): _const(1, -1),
    (ST.Ce, ST.D1): _const(1, -1),
    (ST.D2, ST.Fo): _const(1, -1),
    (ST.No, ST.D2): _const(1, 1),
    (ST.Nd, ST.D2): _const(1, 1),
    (ST.D1, ST.D2): _const(1, 1),
    (ST.Ce, ST.Ce): _const(0, 0),
    (ST.D2, ST.Ce): _const(0, 0),
    (ST.D2, ST.D2): _const(0, 0),
}

CONSTANT_ROWS = frozenset(
    k for k in _TABLE if k in {
        (ST.Sa, ST.D2), (ST.Ce, ST.Nd), (ST.Ce, ST.Fo), (ST.Ce, ST.D1), (ST.D2, ST.Fo),
        (ST.No, ST.D2), (ST.Nd, ST.D2), (ST.D1, ST.D2),
        (ST.Ce, ST.Ce), (ST.D2, ST.Ce), (ST.D2, ST.D2),
    }
)


def table_rows(parseable_only: bool = True) -> list[tuple[SpectralType, SpectralType]]:
    """Pairs that have a row in one of the two tables."""
    return [k for k, v in _TABLE.items() if v is not None or not parseable_only]


def kappa_lambda(pair, alpha: float, beta: float, c_plus: float, c_minus: float) -> tuple[float, float]:
    """Evaluate the table row for ``pair`` (no orientation swap here).

    Raises :class:`TheoryNotApplicable` for ``(Fo, Fo)``, for pairs without
    a row and for the row whose formula cannot be parsed.
    """
    pair = (ST(pair[0]), ST(pair[1]))
    if pair == (ST.Fo, ST.Fo):
        raise TheoryNotApplicable("(Fo, Fo): use focus-focus path")
    if pair not in _TABLE:
        raise TheoryNotApplicable(f"no table row for {pair[0]},{pair[1]}")
    row = _TABLE[pair]
    if row is None:
        raise TheoryNotApplicable(f"table row {pair[0]},{pair[1]} is unparseable (unbalanced expression)")
    k, l = row(alpha, beta, c_plus, c_minus)
    return float(k), float(l)


# ---------------------------------------------------------------------------
# pair invariants and the structure classifier


@dataclass(frozen=True)
class PairInvariants:
    """Pair-level data.  When only the swapped row exists, ``swapped`` is set
    and every field refers to the swapped orientation (upper <-> lower)."""

    pair: tuple[SpectralType, SpectralType]
    alpha: float | None
    beta: float | None
    kappa: float | None
    lambda_: float | None
    alpha_source: str
    swapped: bool = False
    upper: SpectralData | None = None
    lower: SpectralData | None = None
    note: str = ""


def _exponent(fn, sd, a, c, d):
    try:
        return fn(sd, a, c, d), ""
    except TheoryNotApplicable as exc:
        return None, str(exc)


def pair_invariants(p: CanonicalParams, eps: float = EPS_DISC) -> PairInvariants:
    """Spectral data, exponents and tabulated invariants of ``p``."""
    up = classify_piece(p.a_plus, p.c_plus, p.d_plus, eps)
    lo = classify_piece(p.a_minus, p.c_minus, p.d_minus, eps)
    pair = (up.type, lo.type)
    if pair == (ST.Fo, ST.Fo):
        return PairInvariants(pair, None, None, None, None, "", False, up, lo, "(Fo, Fo): use focus-focus path")

    swapped = pair not in _TABLE and pair[::-1] in _TABLE
    if swapped:
        # the reflection (y, z) -> (-y, -z) exchanges the pieces and keeps (a, c, d)
        alpha, n1 = _exponent(alpha_of, lo, p.a_minus, p.c_minus, p.d_minus)
        beta, n2 = _exponent(beta_of, up, p.a_plus, p.c_plus, p.d_plus)
        key, cp, cm = pair[::-1], p.c_minus, p.c_plus
        source = f"upper-piece clause {lo.type} applied to the lower piece (swapped orientation)"
    else:
        alpha, n1 = _exponent(alpha_of, up, p.a_plus, p.c_plus, p.d_plus)
        beta, n2 = _exponent(beta_of, lo, p.a_minus, p.c_minus, p.d_minus)
        key, cp, cm = pair, p.c_plus, p.c_minus
        source = f"upper-piece clause {up.type}"
    note = "; ".join(n for n in (n1, n2) if n)
    kappa = lam = None
    if key in _TABLE and _TABLE[key] is not None and key in CONSTANT_ROWS:
        kappa, lam = kappa_lambda(key, math.nan, math.nan, cp, cm)
    elif alpha is not None and beta is not None:
        try:
            kappa, lam = kappa_lambda(key, alpha, beta, cp, cm)
        except TheoryNotApplicable as exc:
            note = "; ".join(n for n in (note, str(exc)) if n)
    elif key not in _TABLE:
        note = "; ".join(n for n in (note, f"no table row for {key[0]},{key[1]}") if n)
    return PairInvariants(key, alpha, beta, kappa, lam, source, swapped, up, lo, note)


_SCROLL = {
    ST.Sa: {ST.Sa, ST.No, ST.Nd, ST.Fo, ST.Ce, ST.D1},
    ST.No: {ST.No, ST.Nd, ST.Fo, ST.Ce, ST.D1, ST.D2},
    ST.Nd: {ST.Nd, ST.Fo, ST.D1, ST.D2},
    ST.Fo: {ST.D1},
    ST.D1: {ST.D1, ST.D2},
}
_UNIQUE = {
    ST.Sa: {ST.Sa, ST.No, ST.Nd, ST.Fo, ST.Ce, ST.D1, ST.D2},
    ST.No: {ST.No, ST.Nd, ST.Fo, ST.Ce, ST.D1},
    ST.Nd: {ST.Nd, ST.Fo, ST.Ce, ST.D1},
    ST.Fo: {ST.Fo, ST.Ce, ST.D1, ST.D2},
    ST.Ce: {ST.D1},
}
_INFINITE = {
    ST.Sa: {ST.Sa, ST.No, ST.Nd, ST.Fo, ST.Ce, ST.D1},
    ST.No: {ST.No, ST.Nd, ST.Fo, ST.Ce, ST.D1},
    ST.Nd: {ST.Nd, ST.Fo, ST.D1},
    ST.Ce: {ST.Ce, ST.D2},
    ST.D1: {ST.D1},
    ST.D2: {ST.D2},
}
_LISTS = {"Scroll": (_SCROLL, "scroll"), "UniqueCylinder": (_UNIQUE, "unique-cylinder"),
          "InfinitelyManyCylinders": (_INFINITE, "continuum")}


def _listed(kind: str, pair) -> bool:
    # the reflection exchanging the pieces makes (T+, T-) and (T-, T+) the same class
    table, _ = _LISTS[kind]
    return pair[1] in table.get(pair[0], ()) or pair[0] in table.get(pair[1], ())


@dataclass(frozen=True)
class StructureClass:
    """Predicted global structure.

    ``kind`` is one of ``Scroll``, ``UniqueCylinder``,
    ``InfinitelyManyCylinders``, ``FocusFocus`` or ``Unclassified``.
    ``listed`` is False when the sign conditions select a statement whose
    list of type pairs does not contain this pair.
    """

    kind: str
    clause: str = ""
    listed: bool = True
    reason: str = ""

    @property
    def expected_count(self) -> int | str | None:
        return {"Scroll": 0, "UniqueCylinder": 1, "InfinitelyManyCylinders": "continuum"}.get(self.kind)


def structure_of(inv: PairInvariants, zero_tol: float = 1e-12) -> StructureClass:
    """Apply the sign conditions on ``(kappa, lambda, alpha)``."""
    pair = inv.pair
    if pair == (ST.Fo, ST.Fo):
        return StructureClass("FocusFocus", "focus-focus: at most one invariant cylinder", True)
    in_any = any(_listed(k, pair) for k in _LISTS)
    if not in_any:
        return StructureClass("Unclassified", "", False, f"pair ({pair[0]},{pair[1]}) not covered by any statement")
    if inv.kappa is None or inv.lambda_ is None:
        return StructureClass("Unclassified", "", False, inv.note or "kappa/lambda unavailable")
    k, l = inv.kappa, inv.lambda_
    scale = max(1.0, abs(k), abs(l))
    kz, lz = abs(k) <= zero_tol * scale, abs(l) <= zero_tol * scale
    if kz and lz:
        kind, why = "InfinitelyManyCylinders", "kappa = lambda = 0"
    elif kz or lz or k * l > 0:
        kind, why = "Scroll", "kappa^2 + lambda^2 != 0 and kappa*lambda >= 0"
    else:
        if inv.alpha is None:
            return StructureClass("Unclassified", "", False, "alpha undefined; " + inv.note)
        q = 1.0 + inv.alpha**2 * l / k
        if q > 0:
            kind, why = "UniqueCylinder", f"kappa*lambda < 0 and 1 + alpha^2 lambda/kappa = {q:.6g} > 0"
        else:
            kind, why = "Scroll", f"kappa*lambda < 0 and 1 + alpha^2 lambda/kappa = {q:.6g} <= 0"
    listed = _listed(kind, pair)
    label = _LISTS[kind][1]
    clause = f"{label} statement: {why}"
    reason = "" if listed else f"({pair[0]},{pair[1]}) absent from the type list of the {label} statement"
    return StructureClass(kind, clause, listed, reason)


# ---------------------------------------------------------------------------
# curve-contact diagnostics


def f2_diagnostic(v, w, kappa: float, lambda_: float):
    """``kappa w (v-1)^2 + lambda v (w-1)^2`` (vectorised)."""
    v = np.asarray(v, dtype=float)
    w = np.asarray(w, dtype=float)
    out = kappa * w * (v - 1.0) ** 2 + lambda_ * v * (w - 1.0) ** 2
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class RootTest:
    has_root: bool
    root: float | None
    boundary_value: float  # 1 + alpha^2 lambda / kappa, the v -> 1 limit plus one
    criterion: bool        # boundary_value > 0

    def __bool__(self):
        return self.has_root


def _contact(v, kappa, lambda_, alpha):
    va = v**alpha
    return lambda_ * v * (va - 1.0) ** 2 / (kappa * va * (v - 1.0) ** 2) + 1.0


def tangency_root_test(kappa: float, lambda_: float, alpha: float, n: int = 2000) -> RootTest:
    """Does ``lambda v (v^a - 1)^2 / (kappa v^a (v - 1)^2) + 1`` vanish on (0, 1)?

    The answer comes from a sign scan on a logit-spaced grid refined by
    Brent's method; ``criterion`` carries the closed-form prediction
    ``1 + alpha^2 lambda / kappa > 0`` for comparison.
    """
    if kappa == 0:
        raise TheoryNotApplicable("kappa = 0: degenerate, use the kappa*lambda sign path")
    q = 1.0 + alpha**2 * lambda_ / kappa
    u = np.linspace(-30.0, 30.0, n)
    v = 1.0 / (1.0 + np.exp(-u))
    v = v[(v > 0) & (v < 1)]
    with np.errstate(all="ignore"):
        g = _contact(v, kappa, lambda_, alpha)
    ok = np.isfinite(g)
    v, g = v[ok], g[ok]
    sign = np.sign(g)
    idx = np.flatnonzero(sign[:-1] * sign[1:] < 0)
    zero = np.flatnonzero(g == 0)
    if zero.size:
        return RootTest(True, float(v[zero[0]]), q, q > 0)
    if idx.size == 0:
        return RootTest(False, None, q, q > 0)
    i = idx[0]
    root = brentq(lambda x: _contact(x, kappa, lambda_, alpha), v[i], v[i + 1], xtol=1e-15)
    return RootTest(True, float(root), q, q > 0)
