"""Cylinders and limit cycles of 3D piecewise-linear systems sewn along a double invisible fold."""
from __future__ import annotations

from .errors import InvalidScenario, NumericFailure, SewingError, TheoryNotApplicable
from .model import CanonicalParams, FocusCanonicalParams, PieceParams, QuasinormalParams, QuasinormalPiece
from .spectral import SpectralType, classify_piece, pair_invariants, structure_of

__version__ = "0.1.0"
