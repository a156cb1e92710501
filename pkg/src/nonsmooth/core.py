"""Piecewise-smooth systems with a single switching surface.

A :class:`PiecewiseSystem` carries two smooth fields ``f_plus`` (valid where
``sigma > 0``) and ``f_minus`` (valid where ``sigma < 0``), the surface itself,
and an optional set-valued law on the surface. Without an explicit law the
surface set is the convex hull of the two one-sided limits, so the Filippov
definition is the special case of the Gelig-Leonov-Yakubovich one.

All objects here are immutable and every evaluation is a pure function of
``(t, x)``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

Field = Callable[[float, np.ndarray], np.ndarray]
Scalar = Callable[[float, np.ndarray], float]

#: p or m this close to zero is a sliding-boundary tie, resolved toward sliding.
TIE_TOL = 1e-12
#: gradient norms below this make the surface degenerate at the point.
GRAD_TOL = 1e-14


class EvaluationError(ValueError):
    """A surface or field evaluation produced a non-finite value."""


class DegenerateSurfaceError(EvaluationError):
    """The switching-function gradient vanishes at a surface point."""


class DegenerateSlidingError(EvaluationError):
    """Both normal projections coincide, so the sliding velocity is not unique."""


class ModelInconsistencyError(EvaluationError):
    """A surface law excludes every tangent velocity although both limit fields point inward."""


class Side(enum.Enum):
    PLUS = "PLUS"
    MINUS = "MINUS"
    ON = "ON"


class SurfaceClass(enum.Enum):
    CROSS_TO_PLUS = "CROSS_TO_PLUS"
    CROSS_TO_MINUS = "CROSS_TO_MINUS"
    ATTRACTING_SLIDING = "ATTRACTING_SLIDING"
    REPELLING = "REPELLING"


@dataclass(frozen=True)
class SwitchingSurface:
    """Zero level set of ``sigma(t, x)`` with its gradient."""

    sigma: Scalar
    grad_sigma: Field
    on_tol: float = 1e-9

    def __post_init__(self):
        if not self.on_tol > 0:
            raise ValueError(f"on_tol must be positive, got {self.on_tol}")

    def value(self, t: float, x: np.ndarray) -> float:
        s = float(self.sigma(t, x))
        if not np.isfinite(s):
            raise EvaluationError(f"sigma is not finite at t={t}, x={x}")
        return s

    def normal(self, t: float, x: np.ndarray) -> np.ndarray:
        n = np.asarray(self.grad_sigma(t, x), dtype=float)
        if not np.all(np.isfinite(n)):
            raise EvaluationError(f"grad sigma is not finite at t={t}, x={x}")
        if np.linalg.norm(n) <= GRAD_TOL:
            raise DegenerateSurfaceError(f"grad sigma vanishes at t={t}, x={x}")
        return n

    def project(self, t: float, x: np.ndarray, tol: Optional[float] = None,
                max_iter: int = 8) -> np.ndarray:
        """Move ``x`` along the gradient until ``|sigma| <= tol``."""
        tol = self.on_tol * 1e-3 if tol is None else tol
        y = np.array(x, dtype=float)
        for _ in range(max_iter):
            s = self.value(t, y)
            if abs(s) <= tol:
                break
            n = self.normal(t, y)
            y = y - s * n / np.dot(n, n)
        return y


@dataclass(frozen=True)
class SegmentSet:
    """Closed convex set ``{base + lam * direction : lo <= lam <= hi}``."""

    base: np.ndarray
    direction: np.ndarray
    lo: float
    hi: float

    def __post_init__(self):
        if not self.lo <= self.hi:
            raise ValueError(f"segment bounds out of order: lo={self.lo} > hi={self.hi}")
        object.__setattr__(self, "base", np.asarray(self.base, dtype=float))
        object.__setattr__(self, "direction", np.asarray(self.direction, dtype=float))

    @classmethod
    def hull(cls, f_minus: np.ndarray, f_plus: np.ndarray) -> "SegmentSet":
        """Segment joining the tips of ``f_minus`` (lam=0) and ``f_plus`` (lam=1)."""
        f_minus = np.asarray(f_minus, dtype=float)
        return cls(f_minus, np.asarray(f_plus, dtype=float) - f_minus, 0.0, 1.0)

    def at(self, lam: float) -> np.ndarray:
        return self.base + lam * self.direction

    @property
    def endpoints(self) -> tuple[np.ndarray, np.ndarray]:
        return self.at(self.lo), self.at(self.hi)

    @property
    def degenerate(self) -> bool:
        return self.lo == self.hi or not np.any(self.direction)

    def contains(self, v: np.ndarray, tol: float = 1e-12) -> bool:
        """Whether ``v`` lies within ``tol`` (Euclidean) of the segment."""
        v = np.asarray(v, dtype=float)
        d2 = float(np.dot(self.direction, self.direction))
        lam = self.lo if d2 == 0.0 else float(np.dot(v - self.base, self.direction) / d2)
        lam = min(max(lam, self.lo), self.hi)
        return float(np.linalg.norm(v - self.at(lam))) <= tol

    def interval_contains(self, other: "SegmentSet") -> bool:
        """Parameter-interval inclusion for two segments on the same line."""
        return self.lo <= other.lo and other.hi <= self.hi


@dataclass(frozen=True)
class SignChannel:
    """Split of the field as ``smooth(t, x) + gain(t, x) * sign(sigma)``.

    Regularization replaces the sign by a saturation; models that cannot be
    written this way do not supply a channel.
    """

    smooth: Field
    gain: Field


@dataclass(frozen=True)
class PiecewiseSystem:
    f_plus: Field
    f_minus: Field
    surface: SwitchingSurface
    dimension: int
    surface_set: Optional[Callable[[float, np.ndarray], SegmentSet]] = None
    channel: Optional[SignChannel] = None
    domain: Optional[Callable[[np.ndarray], bool]] = None
    name: str = "piecewise"
    params: object = field(default=None, compare=False)

    def __post_init__(self):
        if self.dimension < 1:
            raise ValueError("dimension must be positive")

    def limits(self, t: float, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        fp = np.asarray(self.f_plus(t, x), dtype=float)
        fm = np.asarray(self.f_minus(t, x), dtype=float)
        if not (np.all(np.isfinite(fp)) and np.all(np.isfinite(fm))):
            raise EvaluationError(f"non-finite field value at t={t}, x={x}")
        return fp, fm

    def set_at(self, t: float, x: np.ndarray) -> SegmentSet:
        """Admissible velocity set on the surface (Filippov hull by default)."""
        if self.surface_set is not None:
            return self.surface_set(t, x)
        fp, fm = self.limits(t, x)
        return SegmentSet.hull(fm, fp)

    def branch(self, side: Side) -> Field:
        if side is Side.PLUS:
            return self.f_plus
        if side is Side.MINUS:
            return self.f_minus
        raise ValueError("no smooth branch for the surface itself")

    def check_state(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.dimension,):
            raise ValueError(f"{self.name}: expected state of shape ({self.dimension},), got {x.shape}")
        if not np.all(np.isfinite(x)):
            raise ValueError(f"{self.name}: state must be finite, got {x}")
        if self.domain is not None and not self.domain(x):
            raise ValueError(f"{self.name}: state {x} outside the model domain")
        return x


@dataclass(frozen=True)
class SurfaceClassification:
    kind: SurfaceClass
    p: float
    m: float
    boundary: bool = False


@dataclass(frozen=True)
class GLYSelection:
    """Surface set at a point and the velocity the extended nonlinearity picks.

    ``tangent`` is true when the set holds exactly one velocity with zero normal
    projection; ``lam`` is then its parameter. Otherwise ``lam`` is the nearest
    end of the segment, i.e. the one-sided value the set collapses to.
    """

    segment: SegmentSet
    lam: float
    velocity: np.ndarray
    tangent: bool


def surface_side(surface: SwitchingSurface, t: float, x: np.ndarray) -> Side:
    s = surface.value(t, np.asarray(x, dtype=float))
    if abs(s) <= surface.on_tol:
        return Side.ON
    return Side.PLUS if s > 0 else Side.MINUS


def normal_projections(sys: PiecewiseSystem, t: float, x: np.ndarray):
    """Return ``(n, f_plus, f_minus, p, m)`` with ``p = n.f_plus``, ``m = n.f_minus``."""
    n = sys.surface.normal(t, x)
    fp, fm = sys.limits(t, x)
    return n, fp, fm, float(np.dot(n, fp)), float(np.dot(n, fm))


def classify_projections(p: float, m: float, tie_tol: float = TIE_TOL) -> SurfaceClassification:
    boundary = abs(p) <= tie_tol or abs(m) <= tie_tol
    if p <= tie_tol and m >= -tie_tol:
        kind = SurfaceClass.ATTRACTING_SLIDING
    elif p > 0 and m < 0:
        kind = SurfaceClass.REPELLING
    elif p > 0:
        kind = SurfaceClass.CROSS_TO_PLUS
    else:
        kind = SurfaceClass.CROSS_TO_MINUS
    return SurfaceClassification(kind, p, m, boundary)


def classify_surface_point(sys: PiecewiseSystem, t: float, x: np.ndarray,
                           tie_tol: float = TIE_TOL) -> SurfaceClassification:
    """Sign table of the normal projections of both limit fields at a surface point.

    Ties (``|p|`` or ``|m|`` within ``tie_tol``) count as sliding and are flagged
    through ``boundary``; the integrator deals with the immediate exit.
    """
    x = np.asarray(x, dtype=float)
    if surface_side(sys.surface, t, x) is not Side.ON:
        raise ValueError(f"x={x} is not on the switching surface")
    _, _, _, p, m = normal_projections(sys, t, x)
    return classify_projections(p, m, tie_tol)


def sliding_velocity(fp: np.ndarray, fm: np.ndarray, p: float, m: float) -> tuple[np.ndarray, float]:
    """Convex combination of the limit fields that is tangent to the surface."""
    den = m - p
    if den == 0.0:
        raise DegenerateSlidingError("normal projections coincide (m - p = 0)")
    alpha = m / den
    return alpha * fp + (1.0 - alpha) * fm, alpha


def filippov_sliding_field(sys: PiecewiseSystem, t: float, x: np.ndarray,
                           tie_tol: float = TIE_TOL) -> tuple[np.ndarray, float]:
    """Filippov sliding velocity ``f0`` and its weight ``alpha`` on ``f_plus``.

    The segment between the tips of ``f_plus`` and ``f_minus`` meets the
    tangent plane at ``alpha = m / (m - p)``.
    """
    cls = classify_surface_point(sys, t, x, tie_tol)
    if cls.kind is not SurfaceClass.ATTRACTING_SLIDING:
        raise ValueError(f"no attracting sliding at x={x}: {cls.kind.value}")
    fp, fm = sys.limits(t, np.asarray(x, dtype=float))
    f0, alpha = sliding_velocity(fp, fm, cls.p, cls.m)
    return f0, min(max(alpha, 0.0), 1.0) if cls.boundary else alpha


def segment_normal_range(seg: SegmentSet, n: np.ndarray) -> tuple[float, float, float, float]:
    """Normal projections at both ends and the coefficients of ``q(lam) = q0 + lam*q1``."""
    q0 = float(np.dot(n, seg.base))
    q1 = float(np.dot(n, seg.direction))
    return q0 + seg.lo * q1, q0 + seg.hi * q1, q0, q1


def gly_surface_field(sys: PiecewiseSystem, t: float, x: np.ndarray,
                      tie_tol: float = TIE_TOL) -> GLYSelection:
    """Surface set at ``x`` plus the extended-nonlinearity selection from it."""
    x = np.asarray(x, dtype=float)
    if surface_side(sys.surface, t, x) is not Side.ON:
        raise ValueError(f"x={x} is not on the switching surface")
    seg = sys.set_at(t, x)
    n = sys.surface.normal(t, x)
    q_lo, q_hi, q0, q1 = segment_normal_range(seg, n)
    tangent = min(q_lo, q_hi) <= tie_tol and max(q_lo, q_hi) >= -tie_tol
    if q1 == 0.0:
        if tangent:
            raise DegenerateSlidingError("surface set lies in the tangent plane; selection not unique")
        lam = seg.lo if abs(q_lo) <= abs(q_hi) else seg.hi
    else:
        lam = min(max(-q0 / q1, seg.lo), seg.hi)
    if not tangent:
        _, _, _, p, m = normal_projections(sys, t, x)
        if p < -tie_tol and m > tie_tol:
            raise ModelInconsistencyError(
                f"surface set at x={x} has no tangent element but both limit fields point inward")
    return GLYSelection(seg, lam, seg.at(lam), tangent)


def selected_field(sys: PiecewiseSystem, t: float, x: np.ndarray) -> np.ndarray:
    """Branch field off the surface, GLY selection on it."""
    side = surface_side(sys.surface, t, x)
    if side is Side.ON:
        return gly_surface_field(sys, t, x).velocity
    return np.asarray(sys.branch(side)(t, x), dtype=float)
