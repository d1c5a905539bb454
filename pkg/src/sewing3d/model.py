"""Parameter records for two-zone linear systems and their reductions.

A system is a pair of affine vector fields ``x' = A x + b`` glued along the
plane ``z = 0``.  Three parametrisations are used:

* :class:`PiecewiseSystem` -- raw ``(A, b)`` per half-space.
* :class:`QuasinormalParams` -- both tangency lines moved to ``{y = z = 0}``
  and the third row of each linear part reduced to ``(0, 1, a33)``.
* :class:`CanonicalParams` -- the nine-scalar normal form with invisible
  double folds along ``{y = z = 0}``::

      X+ = (a+ x + b+ z,      c+ y + d+ z - 1, y)
      X- = (a- x + b- z + m,  c- y + d- z + 1, y)

  and :class:`FocusCanonicalParams`, the variant used for focus/focus pairs.

Everything here is a plain value type; no function keeps state.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields

import numpy as np

from .errors import InvalidScenario, TheoryNotApplicable

__all__ = [
    "AffinePiece",
    "PiecewiseSystem",
    "TangencyLine",
    "tangency_lines",
    "QuasinormalPiece",
    "QuasinormalParams",
    "TangencyReport",
    "classify_tangency",
    "reduce_to_quasinormal",
    "PieceParams",
    "CanonicalParams",
    "FocusCanonicalParams",
    "twin_change",
    "canonicalize",
    "canonicalize_focus",
    "COEFF_TOL",
]

#: tolerance for coefficient-wise comparisons of reconstructed fields
COEFF_TOL = 1e-12


def _finite(name, value):
    arr = np.asarray(value, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise InvalidScenario(f"{name} must be finite, got {value!r}")
    return arr


# ---------------------------------------------------------------------------
# raw systems


@dataclass(frozen=True, eq=False)
class AffinePiece:
    """Affine field ``x' = A x + b`` on one half-space."""

    A: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        A = _finite("A", self.A)
        b = _finite("b", self.b)
        if A.shape != (3, 3) or b.shape != (3,):
            raise InvalidScenario(f"expected 3x3 matrix and 3-vector, got {A.shape}, {b.shape}")
        A.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)

    def __call__(self, p):
        return self.A @ np.asarray(p, dtype=float) + self.b

    def __eq__(self, other):
        if not isinstance(other, AffinePiece):
            return NotImplemented
        return np.array_equal(self.A, other.A) and np.array_equal(self.b, other.b)

    def __hash__(self):
        return hash((self.A.tobytes(), self.b.tobytes()))

    def normal_derivative(self, p) -> float:
        """``X h`` at ``p`` for ``h = z``: the third component of the field."""
        return float(self.A[2] @ np.asarray(p, dtype=float) + self.b[2])


@dataclass(frozen=True)
class PiecewiseSystem:
    """``upper`` acts on ``z > 0``, ``lower`` on ``z < 0``."""

    upper: AffinePiece
    lower: AffinePiece

    def piece(self, side: int) -> AffinePiece:
        return self.upper if side > 0 else self.lower


@dataclass(frozen=True)
class TangencyLine:
    """The line ``p x + q y + r = 0`` inside the plane ``z = 0``."""

    p: float
    q: float
    r: float

    def contains(self, x: float, y: float, tol: float = 1e-12) -> bool:
        scale = max(abs(self.p), abs(self.q), abs(self.r))
        return abs(self.p * x + self.q * y + self.r) <= tol * scale

    def point(self) -> tuple[float, float]:
        """Closest point of the line to the origin of the plane."""
        n2 = self.p**2 + self.q**2
        return (-self.p * self.r / n2, -self.q * self.r / n2)

    def direction(self) -> tuple[float, float]:
        n = np.hypot(self.p, self.q)
        return (-self.q / n, self.p / n)

    def same_as(self, other: "TangencyLine", tol: float = COEFF_TOL) -> bool:
        m = np.array([[self.p, self.q, self.r], [other.p, other.q, other.r]])
        m = m / np.abs(m).max(axis=1, keepdims=True)
        s = np.linalg.svd(m, compute_uv=False)
        return bool(s[1] <= tol * s[0])


def _line_of(piece: AffinePiece) -> TangencyLine:
    a31, a32 = piece.A[2, 0], piece.A[2, 1]
    if a31 == 0.0 and a32 == 0.0:
        raise TheoryNotApplicable("empty tangency line: third row has a31 = a32 = 0")
    return TangencyLine(float(a31), float(a32), float(piece.b[2]))


def tangency_lines(sys: PiecewiseSystem) -> tuple[TangencyLine, TangencyLine, bool]:
    """Tangency lines ``{X+ h = 0}`` and ``{X- h = 0}`` on ``z = 0``.

    Returns both lines and whether they coincide as point sets.
    """
    up = _line_of(sys.upper)
    lo = _line_of(sys.lower)
    return up, lo, up.same_as(lo)


# ---------------------------------------------------------------------------
# quasinormal form


@dataclass(frozen=True)
class QuasinormalPiece:
    """One piece of the quasinormal form::

        x' = a11 x + a12 y + a13 z + b1
        y' = a21 x + a22 y + a23 z + b2
        z' = z_y * y + a33 z

    ``z_y`` is ``+1`` for the standard form.  ``-1`` is accepted only by
    :func:`canonicalize_focus`, whose input is traditionally written with
    ``z' = -y + a33 z``.
    """

    a11: float = 0.0
    a12: float = 0.0
    a13: float = 0.0
    a21: float = 0.0
    a22: float = 0.0
    a23: float = 0.0
    a33: float = 0.0
    b1: float = 0.0
    b2: float = 0.0
    z_y: float = 1.0

    def __post_init__(self):
        for f in fields(self):
            _finite(f.name, getattr(self, f.name))
        if self.z_y not in (1.0, -1.0):
            raise InvalidScenario(f"z_y must be +1 or -1, got {self.z_y}")

    def matrix(self) -> tuple[np.ndarray, np.ndarray]:
        A = np.array(
            [
                [self.a11, self.a12, self.a13],
                [self.a21, self.a22, self.a23],
                [0.0, self.z_y, self.a33],
            ]
        )
        return A, np.array([self.b1, self.b2, 0.0])

    def reflected(self) -> "QuasinormalPiece":
        """The same field written in the coordinate ``y -> -y``."""
        return QuasinormalPiece(
            a11=self.a11, a12=-self.a12, a13=self.a13,
            a21=-self.a21, a22=self.a22, a23=-self.a23,
            a33=self.a33, b1=self.b1, b2=-self.b2, z_y=-self.z_y,
        )


@dataclass(frozen=True)
class QuasinormalParams:
    upper: QuasinormalPiece
    lower: QuasinormalPiece

    def to_piecewise(self) -> PiecewiseSystem:
        return PiecewiseSystem(AffinePiece(*self.upper.matrix()), AffinePiece(*self.lower.matrix()))

    def piece(self, side: int) -> QuasinormalPiece:
        return self.upper if side > 0 else self.lower


TANGENCY_KINDS = (
    "all-visible-fold",
    "all-invisible-fold",
    "invariant-line",
    "cusp-at",
    "singular-at",
)


@dataclass(frozen=True)
class TangencyReport:
    piece: str
    line: TangencyLine
    kind: str
    x_star: float | None = None

    def __str__(self):
        if self.x_star is None:
            return self.kind
        return f"{self.kind}({self.x_star:g})"


def classify_tangency(q: QuasinormalParams | QuasinormalPiece, piece: str = "upper") -> TangencyReport:
    """Character of the tangency line ``{y = z = 0}`` of one quasinormal piece.

    For ``a21 = 0`` the whole line is a fold (or invariant when ``b2 = 0``);
    otherwise the single point ``x* = -b2/a21`` is a cusp, or a singular
    point when ``a21 b1 - a11 b2 = 0``.  Visibility uses ``sgn(+-(X+-)^2 h)``:
    the sign flips for the lower piece.
    """
    if piece not in ("upper", "lower"):
        raise ValueError(f"piece must be 'upper' or 'lower', got {piece!r}")
    p = q if isinstance(q, QuasinormalPiece) else (q.upper if piece == "upper" else q.lower)
    side = 1.0 if piece == "upper" else -1.0
    line = TangencyLine(0.0, p.z_y, 0.0)
    if p.a21 == 0.0:
        # (X)^2 h along the line is the constant z_y * b2
        curvature = side * p.z_y * p.b2
        if curvature > 0:
            kind = "all-visible-fold"
        elif curvature < 0:
            kind = "all-invisible-fold"
        else:
            kind = "invariant-line"
        return TangencyReport(piece, line, kind)
    x_star = -p.b2 / p.a21
    kind = "cusp-at" if p.a21 * p.b1 - p.a11 * p.b2 != 0.0 else "singular-at"
    return TangencyReport(piece, line, kind, x_star)


@dataclass(frozen=True, eq=False)
class QuasinormalReduction:
    """Result of :func:`reduce_to_quasinormal` with the affine chart used.

    New coordinates are ``u = T @ p + t0``; the lower field was divided by
    ``lower_time_scale`` (a positive time rescaling).
    """

    params: QuasinormalParams
    T: np.ndarray
    t0: np.ndarray
    lower_time_scale: float


def reduce_to_quasinormal(sys: PiecewiseSystem, tol: float = COEFF_TOL) -> QuasinormalReduction:
    """Move the common tangency line to ``{y = z = 0}``.

    Rejects systems whose tangency lines differ or whose normal components
    have opposite signs on the plane.
    """
    up, lo, same = tangency_lines(sys)
    if not same:
        raise TheoryNotApplicable(
            "tangency lines of X+ and X- differ: X+h * X-h >= 0 on z=0 fails"
        )
    ru = np.array([up.p, up.q, up.r])
    rl = np.array([lo.p, lo.q, lo.r])
    mu = float(rl @ ru / (ru @ ru))
    if mu <= 0:
        raise TheoryNotApplicable("X+h and X-h have opposite signs on z=0: no sewing region")
    n = float(np.hypot(up.p, up.q))
    T = np.array([[-up.q / n, up.p / n, 0.0], [up.p, up.q, 0.0], [0.0, 0.0, 1.0]])
    t0 = np.array([0.0, up.r, 0.0])
    Tinv = np.linalg.inv(T)

    pieces = []
    for piece, scale in ((sys.upper, 1.0), (sys.lower, mu)):
        A = T @ piece.A @ Tinv / scale
        b = (T @ piece.b - T @ piece.A @ Tinv @ t0) / scale
        if abs(A[2, 0]) > tol * (1 + np.abs(A).max()) or abs(A[2, 1] - 1.0) > 1e-9 or abs(b[2]) > 1e-9 * (1 + abs(up.r)):
            raise TheoryNotApplicable("could not bring the normal row to (0, 1, a33)")
        pieces.append(
            QuasinormalPiece(
                a11=A[0, 0], a12=A[0, 1], a13=A[0, 2],
                a21=A[1, 0], a22=A[1, 1], a23=A[1, 2],
                a33=A[2, 2], b1=b[0], b2=b[1],
            )
        )
    return QuasinormalReduction(QuasinormalParams(*pieces), T, t0, mu)


# ---------------------------------------------------------------------------
# canonical forms


@dataclass(frozen=True)
class PieceParams:
    """One half-space field in the planar-canonical layout::

        x' = a x + b z + m
        y' = c y + d z + k
        z' = y

    ``side`` is ``+1`` for the piece acting on ``z > 0`` and ``-1`` below.
    """

    a: float
    b: float
    c: float
    d: float
    k: float
    m: float = 0.0
    side: int = 1

    def affine(self) -> AffinePiece:
        A = np.array([[self.a, 0.0, self.b], [0.0, self.c, self.d], [0.0, 1.0, 0.0]])
        return AffinePiece(A, np.array([self.m, self.k, 0.0]))


_CANON_KEYS = ("a_plus", "b_plus", "c_plus", "d_plus", "a_minus", "b_minus", "c_minus", "d_minus", "m")


@dataclass(frozen=True)
class CanonicalParams:
    """The nine scalars of the canonical form (invisible double fold)."""

    a_plus: float
    b_plus: float
    c_plus: float
    d_plus: float
    a_minus: float
    b_minus: float
    c_minus: float
    d_minus: float
    m: float = 0.0

    def __post_init__(self):
        for f in fields(self):
            v = float(getattr(self, f.name))
            if not np.isfinite(v):
                raise InvalidScenario(f"{f.name} must be finite, got {v!r}")
            object.__setattr__(self, f.name, v)

    @classmethod
    def keys(cls) -> tuple[str, ...]:
        return _CANON_KEYS

    def as_dict(self) -> dict[str, float]:
        return asdict(self)

    def replace(self, **changes) -> "CanonicalParams":
        d = self.as_dict()
        d.update(changes)
        return CanonicalParams(**d)

    @property
    def upper(self) -> PieceParams:
        return PieceParams(self.a_plus, self.b_plus, self.c_plus, self.d_plus, -1.0, 0.0, 1)

    @property
    def lower(self) -> PieceParams:
        return PieceParams(self.a_minus, self.b_minus, self.c_minus, self.d_minus, 1.0, self.m, -1)

    def to_piecewise(self) -> PiecewiseSystem:
        return PiecewiseSystem(self.upper.affine(), self.lower.affine())


_FOCUS_KEYS = ("a_plus", "b_plus", "a_minus", "b_minus", "m", "D1", "D2", "T1", "T2", "a1", "a2")


@dataclass(frozen=True)
class FocusCanonicalParams:
    """Canonical form for focus/focus pairs::

        X+ = (a+ x + b+ z,      D2 z + a2, -y + T2 z)
        X- = (a- x + b- z + m,  D1 z + a1, -y + T1 z)

    with ``a2 > 0``, ``a1 < 0``, ``T_i^2 - 4 D_i < 0`` and ``T_i != 0``.
    """

    a_plus: float
    b_plus: float
    a_minus: float
    b_minus: float
    m: float
    D1: float
    D2: float
    T1: float
    T2: float
    a1: float
    a2: float
    validate: bool = field(default=True, repr=False, compare=False)

    def __post_init__(self):
        for f in fields(self):
            if f.name == "validate":
                continue
            v = float(getattr(self, f.name))
            if not np.isfinite(v):
                raise InvalidScenario(f"{f.name} must be finite, got {v!r}")
            object.__setattr__(self, f.name, v)
        if self.validate:
            self.check_constraints()

    def check_constraints(self):
        if not self.a2 > 0:
            raise TheoryNotApplicable(f"focus form needs a2 > 0 (upper fold invisible), got a2={self.a2}")
        if not self.a1 < 0:
            raise TheoryNotApplicable(f"focus form needs a1 < 0 (lower fold invisible), got a1={self.a1}")
        for i, (T, D) in ((1, (self.T1, self.D1)), (2, (self.T2, self.D2))):
            if T == 0.0:
                raise TheoryNotApplicable(f"T{i} = 0: center piece; use canonical form (2) path")
            if not T * T - 4 * D < 0:
                raise TheoryNotApplicable(f"T{i}^2 - 4 D{i} = {T * T - 4 * D:g} >= 0: piece {i} is not a focus")

    @classmethod
    def keys(cls) -> tuple[str, ...]:
        return _FOCUS_KEYS

    def as_dict(self) -> dict[str, float]:
        return {k: getattr(self, k) for k in _FOCUS_KEYS}

    @classmethod
    def from_canonical(cls, p: CanonicalParams) -> "FocusCanonicalParams":
        """Rewrite a canonical system in focus layout (``y_f = -y + c z``)."""
        return cls(
            a_plus=p.a_plus, b_plus=p.b_plus, a_minus=p.a_minus, b_minus=p.b_minus, m=p.m,
            D1=-p.d_minus, D2=-p.d_plus, T1=p.c_minus, T2=p.c_plus, a1=-1.0, a2=1.0,
        )

    # On z = 0 the planar parts are written in the chart ytil = -y, where they
    # read ytil' = T ytil - D z - a_i, z' = ytil.
    @property
    def upper(self) -> PieceParams:
        return PieceParams(self.a_plus, self.b_plus, self.T2, -self.D2, -self.a2, 0.0, 1)

    @property
    def lower(self) -> PieceParams:
        return PieceParams(self.a_minus, self.b_minus, self.T1, -self.D1, -self.a1, self.m, -1)

    def to_piecewise(self) -> PiecewiseSystem:
        up = AffinePiece(
            np.array([[self.a_plus, 0.0, self.b_plus], [0.0, 0.0, self.D2], [0.0, -1.0, self.T2]]),
            np.array([0.0, self.a2, 0.0]),
        )
        lo = AffinePiece(
            np.array([[self.a_minus, 0.0, self.b_minus], [0.0, 0.0, self.D1], [0.0, -1.0, self.T1]]),
            np.array([self.m, self.a1, 0.0]),
        )
        return PiecewiseSystem(up, lo)


@dataclass(frozen=True, eq=False)
class TwinChange:
    """Linear charts ``u = Phi @ p`` on each side plus time-rescale factors.

    The transformed field on a side is ``speed * Phi (A p + b)``.
    """

    upper: np.ndarray
    lower: np.ndarray
    upper_speed: float
    lower_speed: float
    reflect_y: bool = False

    def chart(self, side: int) -> np.ndarray:
        phi = self.upper if side > 0 else self.lower
        if self.reflect_y:
            phi = phi @ np.diag([1.0, -1.0, 1.0])
        return phi

    def speed(self, side: int) -> float:
        return self.upper_speed if side > 0 else self.lower_speed


def _check_fold_hypotheses(q: QuasinormalParams):
    for name, p, sign in (("upper", q.upper, -1.0), ("lower", q.lower, 1.0)):
        # a21 at roundoff level (e.g. after a numerical change of coordinates) counts as zero
        if abs(p.a21) > COEFF_TOL * (1.0 + abs(p.b2) + abs(p.a22) + abs(p.a23)):
            raise TheoryNotApplicable(
                f"{name} piece has a21 = {p.a21:g} != 0: its tangency line carries a cusp or "
                "singular point, not a fold line"
            )
        if p.b2 == 0.0:
            raise TheoryNotApplicable(f"{name} piece has b2 = 0: tangency line invariant, not a fold")
        if sign * p.z_y * p.b2 <= 0:
            raise TheoryNotApplicable(f"{name} piece has b2 = {p.b2:g}: fold is visible, not invisible")


def twin_change(q: QuasinormalParams, focus: bool = False) -> TwinChange:
    """The pair of linear charts that bring ``q`` to a canonical form."""
    up, lo = q.upper, q.lower
    reflect = False
    if focus and up.z_y > 0:
        up, lo, reflect = up.reflected(), lo.reflected(), True
    r = up.b1 / up.b2
    k_up = (up.b1 * up.a11 - up.b1 * up.a22 + up.a12 * up.b2) / up.b2
    k_lo = (up.b2 * lo.a12 - up.b1 * lo.a22 + up.b1 * lo.a11) / up.b2
    if focus:
        phi_up = np.array([[1.0, -r, k_up], [0.0, 1.0, up.a22], [0.0, 0.0, 1.0]])
        phi_lo = np.array([[1.0, -r, k_lo], [0.0, 1.0, lo.a22], [0.0, 0.0, 1.0]])
        return TwinChange(phi_up, phi_lo, 1.0, 1.0, reflect)
    phi_up = np.array([[1.0, -r, -k_up], [0.0, 1.0, up.a33], [0.0, 0.0, -up.b2]])
    phi_lo = np.array([[1.0, -r, -k_lo], [0.0, 1.0, lo.a33], [0.0, 0.0, lo.b2]])
    return TwinChange(phi_up, phi_lo, -1.0 / up.b2, 1.0 / lo.b2)


def _transformed(q: QuasinormalParams, tc: TwinChange, side: int):
    A, b = q.piece(side).matrix()
    phi = tc.chart(side)
    s = tc.speed(side)
    return s * phi @ A @ np.linalg.inv(phi), s * phi @ b


def _assert_pattern(name, got, want, tol=COEFF_TOL):
    scale = 1.0 + max(np.abs(got).max(), np.abs(want).max())
    err = np.abs(np.asarray(got) - np.asarray(want)).max()
    if err > tol * scale:
        raise TheoryNotApplicable(
            f"{name}: reconstructed field deviates from the target form by {err:.3g}"
        )


def canonicalize(q: QuasinormalParams) -> CanonicalParams:
    """Quasinormal -> canonical form by the twin change of variables.

    Requires ``a21 = 0`` on both pieces, ``b2+ < 0`` and ``b2- > 0``
    (invisible folds).  The coefficients are computed in closed form and
    then checked against ``speed * Phi A Phi^-1`` coefficient-wise.
    """
    for p in (q.upper, q.lower):
        if p.z_y != 1.0:
            raise InvalidScenario("canonicalize expects the standard quasinormal form (z' = y + a33 z)")
    _check_fold_hypotheses(q)
    up, lo = q.upper, q.lower
    r = up.b1 / up.b2
    k_up = (up.b1 * up.a11 - up.b1 * up.a22 + up.a12 * up.b2) / up.b2
    k_lo = (up.b2 * lo.a12 - up.b1 * lo.a22 + up.b1 * lo.a11) / up.b2
    bu2, bl2 = up.b2, lo.b2
    out = CanonicalParams(
        a_plus=-up.a11 / bu2,
        b_plus=(up.a11 * k_up + up.a13 - r * up.a23 - k_up * up.a33) / bu2**2,
        c_plus=-(up.a22 + up.a33) / bu2,
        d_plus=(up.a23 - up.a22 * up.a33) / bu2**2,
        a_minus=lo.a11 / bl2,
        b_minus=(lo.a11 * k_lo + lo.a13 - r * lo.a23 - k_lo * lo.a33) / bl2**2,
        c_minus=(lo.a22 + lo.a33) / bl2,
        d_minus=(lo.a23 - lo.a22 * lo.a33) / bl2**2,
        m=(lo.b1 - r * bl2) / bl2,
    )
    tc = twin_change(q)
    for side, piece in ((1, out.upper), (-1, out.lower)):
        A, b = _transformed(q, tc, side)
        target = piece.affine()
        _assert_pattern("canonical " + ("upper" if side > 0 else "lower"), A, target.A)
        _assert_pattern("canonical " + ("upper" if side > 0 else "lower"), b, target.b)
    return out


def canonicalize_focus(q: QuasinormalParams) -> FocusCanonicalParams:
    """Quasinormal -> focus canonical form.

    Pieces written with ``z' = y + a33 z`` are first reflected ``y -> -y``;
    pieces already in the ``z' = -y + a33 z`` layout are used as given.
    """
    if q.upper.z_y != q.lower.z_y:
        raise InvalidScenario("both pieces must share the same z-row orientation")
    _check_fold_hypotheses(q)
    tc = twin_change(q, focus=True)
    up, lo = (q.upper, q.lower) if q.upper.z_y < 0 else (q.upper.reflected(), q.lower.reflected())
    r = up.b1 / up.b2
    k_up = (up.b1 * up.a11 - up.b1 * up.a22 + up.a12 * up.b2) / up.b2
    k_lo = (up.b2 * lo.a12 - up.b1 * lo.a22 + up.b1 * lo.a11) / up.b2
    out = FocusCanonicalParams(
        a_plus=up.a11,
        b_plus=-up.a11 * k_up + up.a13 - r * up.a23 + k_up * up.a33,
        a_minus=lo.a11,
        b_minus=-lo.a11 * k_lo + lo.a13 - r * lo.a23 + k_lo * lo.a33,
        m=lo.b1 - r * lo.b2,
        D1=lo.a23 + lo.a22 * lo.a33,
        D2=up.a23 + up.a22 * up.a33,
        T1=lo.a22 + lo.a33,
        T2=up.a22 + up.a33,
        a1=lo.b2,
        a2=up.b2,
        validate=False,
    )
    target = out.to_piecewise()
    for side in (1, -1):
        A, b = _transformed(q, tc, side)
        t = target.piece(side)
        _assert_pattern("focus form", A, t.A)
        _assert_pattern("focus form", b, t.b)
    out.check_constraints()
    return out
