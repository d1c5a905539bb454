from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from sewing3d.errors import InvalidScenario, TheoryNotApplicable
from sewing3d.model import (
    AffinePiece,
    CanonicalParams,
    FocusCanonicalParams,
    PiecewiseSystem,
    QuasinormalParams,
    QuasinormalPiece,
    canonicalize,
    canonicalize_focus,
    classify_tangency,
    reduce_to_quasinormal,
    tangency_lines,
    twin_change,
)
from sewing3d.oracle import numeric_half_map

coef = st.floats(-2.0, 2.0, allow_nan=False)


def test_affine_piece_rejects_nan():
    with pytest.raises(InvalidScenario):
        AffinePiece(np.full((3, 3), np.nan), np.zeros(3))
    with pytest.raises(InvalidScenario):
        AffinePiece(np.eye(2), np.zeros(3))


def test_canonical_params_reject_inf():
    with pytest.raises(InvalidScenario):
        CanonicalParams(np.inf, 0, 0, 0, 0, 0, 0, 0, 0)


def test_tangency_lines_of_canonical_system(ex1):
    up, lo, same = tangency_lines(ex1.to_piecewise())
    assert same
    assert up.contains(3.0, 0.0) and lo.contains(-1.0, 0.0)
    assert not up.contains(0.0, 1.0)


def test_tangency_lines_scaled_row_coincide():
    A1 = np.array([[0, 0, 0], [0, 0, 0], [0, 1, 0.0]])
    A2 = np.array([[0, 0, 0], [0, 0, 0], [0, 2, 0.0]])
    _, _, same = tangency_lines(PiecewiseSystem(AffinePiece(A1, np.zeros(3)), AffinePiece(A2, np.zeros(3))))
    assert same


def test_tangency_lines_differ():
    A1 = np.array([[0, 0, 0], [0, 0, 0], [1, 0, 0.0]])
    A2 = np.array([[0, 0, 0], [0, 0, 0], [0, 1, 0.0]])
    _, _, same = tangency_lines(PiecewiseSystem(AffinePiece(A1, np.zeros(3)), AffinePiece(A2, np.zeros(3))))
    assert not same


def test_empty_tangency_line_rejected():
    A = np.zeros((3, 3))
    with pytest.raises(TheoryNotApplicable, match="empty tangency line"):
        tangency_lines(PiecewiseSystem(AffinePiece(A, np.zeros(3)), AffinePiece(A, np.zeros(3))))


# -- tangency classes ---------------------------------------------------------


@pytest.mark.parametrize(
    "kw, piece, kind, x_star",
    [
        ({"b2": -1.0}, "upper", "all-invisible-fold", None),
        ({"b2": 1.0}, "upper", "all-visible-fold", None),
        ({"b2": 0.0}, "upper", "invariant-line", None),
        ({"a21": 1.0, "b2": 1.0, "a11": 0.0, "b1": 0.0}, "upper", "singular-at", -1.0),
        ({"a21": 2.0, "b2": 1.0, "a11": 1.0, "b1": 0.0}, "upper", "cusp-at", -0.5),
        # the lower piece reads the fold sign through -X: signs flip
        ({"b2": 1.0}, "lower", "all-invisible-fold", None),
        ({"b2": -1.0}, "lower", "all-visible-fold", None),
        ({"b2": 0.0}, "lower", "invariant-line", None),
    ],
)
def test_classify_tangency(kw, piece, kind, x_star):
    qp = QuasinormalPiece(**kw)
    q = QuasinormalParams(qp, qp)
    rep = classify_tangency(q, piece)
    assert rep.kind == kind
    assert rep.x_star == x_star


@given(a11=coef, b1=coef, b2=coef, scale=st.floats(0.1, 10.0))
def test_classification_invariant_under_time_rescale(a11, b1, b2, scale):
    p = QuasinormalPiece(a11=a11, b1=b1, b2=b2)
    # a positive time rescaling multiplies every coefficient; z_y is renormalised by the chart
    q = QuasinormalPiece(a11=a11 * scale, b1=b1 * scale, b2=b2 * scale)
    for side in ("upper", "lower"):
        assert classify_tangency(p, side).kind == classify_tangency(q, side).kind


# -- canonical forms ----------------------------------------------------------


def _embed(c: CanonicalParams) -> QuasinormalParams:
    up = QuasinormalPiece(a11=c.a_plus, a13=c.b_plus, a22=c.c_plus, a23=c.d_plus, b2=-1.0)
    lo = QuasinormalPiece(a11=c.a_minus, a13=c.b_minus, a22=c.c_minus, a23=c.d_minus, b1=c.m, b2=1.0)
    return QuasinormalParams(up, lo)


def test_canonicalize_identity(ex1):
    out = canonicalize(_embed(ex1))
    for k in ex1.keys():
        assert getattr(out, k) == pytest.approx(getattr(ex1, k), abs=1e-14)


def test_canonicalize_rejects_invariant_line():
    q = QuasinormalParams(QuasinormalPiece(b2=0.0), QuasinormalPiece(b2=1.0))
    with pytest.raises(TheoryNotApplicable, match="tangency line invariant, not a fold"):
        canonicalize(q)


def test_canonicalize_rejects_visible_fold():
    q = QuasinormalParams(QuasinormalPiece(b2=1.0), QuasinormalPiece(b2=1.0))
    with pytest.raises(TheoryNotApplicable, match="visible"):
        canonicalize(q)


def test_canonicalize_rejects_cusp():
    q = QuasinormalParams(QuasinormalPiece(a21=1.0, b2=-1.0), QuasinormalPiece(b2=1.0))
    with pytest.raises(TheoryNotApplicable, match="cusp"):
        canonicalize(q)


def _random_quasinormal(rng, b2u=None, b2l=None):
    def piece(b2):
        v = rng.uniform(-1, 1, size=8)
        return QuasinormalPiece(a11=v[0], a12=v[1], a13=v[2], a22=v[3], a23=v[4], a33=v[5], b1=v[6], b2=b2)
    return QuasinormalParams(
        piece(b2u if b2u is not None else -rng.uniform(0.5, 3)),
        piece(b2l if b2l is not None else rng.uniform(0.5, 3)),
    )


def _conjugacy_errors(q, target, tc, y_entry, focus=False):
    """Half-return of ``q`` versus its canonical form after the chart/time change."""
    errs = []
    for side in (1, -1):
        phi, speed = tc.chart(side), tc.speed(side)
        ysign = 1.0 if side > 0 else -1.0
        y = ysign * y_entry
        p0 = np.array([0.3, y, 0.0])
        raw = numeric_half_map(q.to_piecewise(), y, side=side, x0=0.3)
        u0 = phi @ p0
        can = numeric_half_map(target, -u0[1] if focus else u0[1], side=side, x0=u0[0])
        if not (raw.defined and can.defined):
            continue
        exit_raw = phi @ np.array([raw.x_exit, raw.y_exit, 0.0])
        ex_can = -exit_raw[1] if focus else exit_raw[1]
        errs.append(abs(raw.tau / speed - can.tau))
        errs.append(abs(ex_can - can.y_exit))
        errs.append(abs(exit_raw[0] - can.x_exit))
    return errs


def test_canonicalize_is_conjugacy():
    rng = np.random.default_rng(7)
    checked = 0
    for _ in range(12):
        q = _random_quasinormal(rng)
        c = canonicalize(q)
        errs = _conjugacy_errors(q, c, twin_change(q), 0.4)
        checked += len(errs)
        assert max(errs, default=0.0) < 1e-8
    assert checked > 0


def test_canonicalize_scaled_b2_example():
    rng = np.random.default_rng(11)
    q = _random_quasinormal(rng, -2.0, 3.0)
    c = canonicalize(q)
    assert max(_conjugacy_errors(q, c, twin_change(q), 0.5)) < 1e-8


def test_canonical_folds_are_invisible(ex1):
    # (X+)^2 h = y' = -1 on the tangency line; (X-)^2 h = +1, read through -X-
    sysm = ex1.to_piecewise()
    p = np.array([0.7, 0.0, 0.0])
    assert sysm.upper(p)[1] == -1.0
    assert -sysm.lower(p)[1] < 0


def test_reduce_to_quasinormal_recovers_canonical(ex1):
    # move the canonical system by an affine change inside the plane
    th = 0.3
    R = np.array([[np.cos(th), -np.sin(th), 0], [np.sin(th), np.cos(th), 0], [0, 0, 1.0]])
    t0 = np.array([0.2, -0.5, 0.0])
    Rinv = np.linalg.inv(R)
    pieces = []
    for pc in (ex1.to_piecewise().upper, ex1.to_piecewise().lower):
        A = Rinv @ pc.A @ R
        b = Rinv @ (pc.b - pc.A @ t0)
        pieces.append(AffinePiece(A, b))
    red = reduce_to_quasinormal(PiecewiseSystem(*pieces))
    c = canonicalize(red.params)
    # spectral data are coordinate free
    assert c.c_plus == pytest.approx(ex1.c_plus, abs=1e-12)
    assert c.d_plus == pytest.approx(ex1.d_plus, abs=1e-12)
    assert c.c_minus == pytest.approx(ex1.c_minus, abs=1e-12)
    assert c.d_minus == pytest.approx(ex1.d_minus, abs=1e-12)
    assert c.a_plus == pytest.approx(ex1.a_plus, abs=1e-12)


def test_reduce_rejects_distinct_lines():
    A1 = np.array([[0, 0, 0], [0, 0, 0], [1, 0, 0.0]])
    A2 = np.array([[0, 0, 0], [0, 0, 0], [0, 1, 0.0]])
    with pytest.raises(TheoryNotApplicable, match="differ"):
        reduce_to_quasinormal(PiecewiseSystem(AffinePiece(A1, np.zeros(3)), AffinePiece(A2, np.zeros(3))))


# -- focus form ---------------------------------------------------------------

FOCUS = FocusCanonicalParams(0.1, 0.5, -0.2, 0.3, 0.4, 1.2, 1.5, 0.3, -0.4, -1.0, 1.0)


def test_focus_constraints():
    with pytest.raises(TheoryNotApplicable, match="a2 > 0"):
        FocusCanonicalParams(0, 0, 0, 0, 0, 1, 1, 0.3, 0.3, -1.0, -1.0)
    with pytest.raises(TheoryNotApplicable, match="center piece; use canonical form"):
        FocusCanonicalParams(0, 0, 0, 0, 0, 1, 1, 0.0, 0.3, -1.0, 1.0)
    with pytest.raises(TheoryNotApplicable, match="not a focus"):
        FocusCanonicalParams(0, 0, 0, 0, 0, -1, 1, 0.3, 0.3, -1.0, 1.0)


def test_focus_identity_embedding():
    f = FOCUS
    up = QuasinormalPiece(a11=f.a_plus, a13=f.b_plus, a23=f.D2, a33=f.T2, b2=f.a2, z_y=-1.0)
    lo = QuasinormalPiece(a11=f.a_minus, a13=f.b_minus, a23=f.D1, a33=f.T1, b1=f.m, b2=f.a1, z_y=-1.0)
    out = canonicalize_focus(QuasinormalParams(up, lo))
    for k in f.keys():
        assert getattr(out, k) == pytest.approx(getattr(f, k), abs=1e-14)


def test_focus_generic_conjugacy():
    rng = np.random.default_rng(3)
    done = 0
    while done < 5:
        q = _random_quasinormal(rng)
        try:
            f = canonicalize_focus(q)
        except TheoryNotApplicable:
            continue
        tc = twin_change(q, focus=True)
        errs = _conjugacy_errors(q, f, tc, 0.4, focus=True)
        assert max(errs, default=0.0) < 1e-8
        done += 1


def test_focus_output_center_rejected():
    up = QuasinormalPiece(a23=-1.0, a22=0.5, a33=-0.5, b2=-1.0)
    lo = QuasinormalPiece(a23=-1.0, a33=0.3, b2=1.0)
    with pytest.raises(TheoryNotApplicable, match="center piece"):
        canonicalize_focus(QuasinormalParams(up, lo))
