"""Closed-form equilibria, stability-condition checks and convergence diagnostics.

Most of this module concerns the reduced drilling model ``(s, y, x)``: its
loaded equilibrium, the inequalities that certify convergence after a load
jump, the Lyapunov function used to prove it, and a sweep that labels load
levels as certified, numerically safe or unsafe. The rest are generic
trajectory diagnostics (sliding-segment convergence, attractor reports).
"""

from __future__ import annotations

import csv
import enum
import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import brentq

from .core import PiecewiseSystem, Side, selected_field, surface_side
from .integrator import (
    IntegrationError,
    Mode,
    SolverConfig,
    Trajectory,
    integrate_ap,
    integrate_filippov,
)
from .models import DrillingParams, LoadChangeScenario, drilling_reduced

# convergence ball for sweeps and attractor reports
CONVERGENCE_TOL = 1e-3
TAIL_FRACTION = 0.1


class NoEquilibriumError(ValueError):
    pass


class GeometryError(ValueError):
    pass


# --------------------------------------------------------------------------
# equilibria
# --------------------------------------------------------------------------

class EquilibriumKind(enum.Enum):
    IDLE = "idle"
    LOADED = "loaded"


@dataclass(frozen=True)
class Equilibrium:
    s0: float
    y0: float
    x0: float
    kind: EquilibriumKind

    @property
    def state(self) -> np.ndarray:
        return np.array([self.s0, self.y0, self.x0])


def drilling_equilibrium(a: float, c: float, gamma: float) -> Equilibrium:
    """Stable rest point of the drilling model under constant load ``gamma``.

    ``s0`` is the smaller root of ``gamma s^2 - a c s + gamma c^2 = 0``. It is
    evaluated as ``2 gamma c / (a + sqrt(a^2 - 4 gamma^2))``, which equals
    ``c (a - sqrt(a^2 - 4 gamma^2)) / (2 gamma)`` but does not cancel for
    small ``gamma``.

    Raises
    ------
    NoEquilibriumError
        If ``gamma >= a/2``: the two roots have merged or left the real line.
    """
    if not (a > 0 and c > 0):
        raise ValueError("a and c must be positive")
    if gamma < 0:
        raise ValueError("gamma must be nonnegative")
    if gamma >= a / 2:
        raise NoEquilibriumError(f"no loaded equilibrium for gamma={gamma} >= a/2={a / 2}")
    if gamma == 0:
        return Equilibrium(0.0, 0.0, 0.0, EquilibriumKind.IDLE)
    s0 = 2.0 * gamma * c / (a + math.sqrt(a * a - 4.0 * gamma * gamma))
    return Equilibrium(s0, -gamma / a, -gamma * s0 / (a * c), EquilibriumKind.LOADED)


def equilibrium_residual(sys: PiecewiseSystem, x, t: float = 0.0) -> float:
    """Norm of the selected velocity at ``x``: branch field off the surface, GLY selection on it."""
    return float(np.linalg.norm(selected_field(sys, t, np.asarray(x, dtype=float))))


def post_jump_state(a: float, c: float, gamma0: float) -> np.ndarray:
    """State at the instant of a load jump from the ``gamma0`` rest point."""
    return drilling_equilibrium(a, c, gamma0).state


# --------------------------------------------------------------------------
# certificate inequalities
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class ConditionReport:
    cond_gamma0: bool
    cond_gamma1: bool
    cond_M: bool
    margin_M: float = field(default=float("nan"), compare=False)

    @property
    def all_true(self) -> bool:
        return self.cond_gamma0 and self.cond_gamma1 and self.cond_M

    def as_dict(self) -> dict:
        return {"cond_gamma0": self.cond_gamma0, "cond_gamma1": self.cond_gamma1,
                "cond_M": self.cond_M, "margin_M": self.margin_M, "all": self.all_true}


def locking_margin(a: float, c: float, M_lock: float, gamma1: float) -> float:
    """``3(M^2 + 2M) gamma1^2 - 8 c^2 gamma1 + 3 a c^2``; nonnegative is required."""
    return 3.0 * (M_lock ** 2 + 2.0 * M_lock) * gamma1 ** 2 - 8.0 * c * c * gamma1 + 3.0 * a * c * c


def theorem_conditions(a: float, c: float, M_lock: float, scenario: LoadChangeScenario) -> ConditionReport:
    g0, g1 = scenario.gamma0, scenario.gamma1
    margin = locking_margin(a, c, M_lock, g1)
    return ConditionReport(
        cond_gamma0=g0 < a / 2,
        cond_gamma1=g1 < min(a / 2, 2.0 * c * c),
        cond_M=margin >= 0,
        margin_M=margin,
    )


def andronov_mayer(A: float, B: float) -> bool:
    """Global stability of the governor's sliding segment: ``A > 0``, ``B > 0``, ``AB > 1``."""
    return A > 0 and B > 0 and A * B > 1


# --------------------------------------------------------------------------
# Lyapunov function of the loaded drilling model
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class LyapunovFrame:
    """Shifted coordinates and the quadratic ``psi`` for load ``gamma1``.

    ``psi(s) = -(gamma1/c) s^2 + a s - c gamma1 = -(gamma1 s^2 - a c s + gamma1 c^2)/c``
    so ``psi`` vanishes at the equilibrium speed ``s1`` and at ``c^2/s1 > c``.
    """

    a: float
    c: float
    gamma1: float
    s1: float

    @property
    def psi_coeffs(self) -> tuple[float, float, float]:
        """Coefficients ``(q2, q1, q0)`` of ``psi`` in decreasing powers."""
        return (-self.gamma1 / self.c, self.a, -self.c * self.gamma1)

    def psi(self, s):
        q2, q1, q0 = self.psi_coeffs
        return (q2 * s + q1) * s + q0

    def Psi(self, s):
        """Antiderivative of ``psi`` with ``Psi(0) = 0``."""
        q2, q1, q0 = self.psi_coeffs
        return ((q2 / 3.0 * s + q1 / 2.0) * s + q0) * s

    def integral(self, lo, hi):
        return self.Psi(hi) - self.Psi(lo)

    def coords(self, state) -> tuple[float, float, float]:
        """``(s, eta, z)`` from a model state ``(s, y, x)``."""
        s, y, x = np.asarray(state, dtype=float)
        eta = self.a * y + self.gamma1
        z = -x - self.gamma1 * s / (self.a * self.c)
        return float(s), float(eta), float(z)


def lyapunov_frame(a: float, c: float, gamma1: float) -> LyapunovFrame:
    if not gamma1 > 0:
        raise ValueError("gamma1 must be positive")
    return LyapunovFrame(a, c, gamma1, drilling_equilibrium(a, c, gamma1).s0)


def lyapunov_V(s, eta, z, frame: LyapunovFrame, a: Optional[float] = None):
    """``(a^2/2) z^2 + eta^2/2 + int_{s1}^{s} psi``, with the integral in closed form."""
    a = frame.a if a is None else a
    return 0.5 * a * a * z * z + 0.5 * eta * eta + frame.integral(frame.s1, s)


def lyapunov_Vdot(s, eta, z, frame: LyapunovFrame, a: Optional[float] = None,
                  c: Optional[float] = None, gamma1: Optional[float] = None):
    """Derivative of ``V`` along the ``s < c`` branch: ``-a^2 c z^2 - (a gamma1/c) eta z - c eta^2``.

    ``s`` is accepted for signature symmetry with :func:`lyapunov_V`; the form
    does not depend on it. It is negative definite in ``(eta, z)`` exactly when
    ``gamma1 < 2 c^2``.
    """
    a = frame.a if a is None else a
    c = frame.c if c is None else c
    g = frame.gamma1 if gamma1 is None else gamma1
    return -a * a * c * z * z - (a * g / c) * eta * z - c * eta * eta


@dataclass(frozen=True)
class OmegaResult:
    inside: bool
    V: float
    threshold: float
    s2: float

    def __bool__(self):
        return self.inside


def omega_bounds(frame: LyapunovFrame, M_lock: float) -> tuple[float, float]:
    """Level ``V`` threshold of the invariant set and its lower speed bound ``s2``.

    ``s2 < s1`` solves ``Psi(s2) = Psi(c) + (1+M)^2 gamma1^2 / 2``. ``psi < 0``
    below ``s1``, so ``Psi`` decreases there and grows without bound as
    ``s -> -inf``; the root is bracketed by stepping down from ``s1``.
    """
    a, c, g, s1 = frame.a, frame.c, frame.gamma1, frame.s1
    if not s1 < c:
        raise GeometryError(f"equilibrium speed s1={s1} is not below c={c}")
    k = 0.5 * (1.0 + M_lock) ** 2 * g * g
    threshold = frame.integral(s1, c) + k
    target = frame.Psi(c) + k

    def h(s):
        return frame.Psi(s) - target

    if not h(s1) < 0:
        raise GeometryError(f"no s2 below s1 for a={a}, c={c}, gamma1={g}, M={M_lock}")
    step = max(c, 1.0)
    lo = s1 - step
    for _ in range(200):
        if h(lo) > 0:
            break
        step *= 2.0
        lo = s1 - step
    else:
        raise GeometryError(f"could not bracket s2 for a={a}, c={c}, gamma1={g}, M={M_lock}")
    s2 = brentq(h, lo, s1, xtol=1e-14, rtol=4 * np.finfo(float).eps)
    return threshold, s2


def omega_membership(s, eta, z, frame: LyapunovFrame, a=None, c=None, gamma1=None,
                     M_lock: float = 1.0) -> OmegaResult:
    """Membership in ``{V <= threshold, s2 <= s <= c}``; the result is truthy when inside."""
    if (a is not None and a != frame.a) or (c is not None and c != frame.c) or \
            (gamma1 is not None and gamma1 != frame.gamma1):
        raise ValueError("parameters disagree with the Lyapunov frame")
    threshold, s2 = omega_bounds(frame, M_lock)
    V = float(lyapunov_V(s, eta, z, frame))
    inside = V <= threshold and s2 <= s <= frame.c
    return OmegaResult(bool(inside), V, float(threshold), float(s2))


@dataclass(frozen=True)
class WCheck:
    W: float
    noncontact: bool
    max_half_Wdot: float
    radius: float


def sliding_W_check(x: float, y: float, gamma1: float, a: float, radius: Optional[float] = None,
                    M_lock: Optional[float] = None, n: int = 100) -> WCheck:
    """Distance function ``W`` of the sliding dynamics and a noncontact test on a semicircle.

    On the surface the rescaled sliding motion is ``y' = -y - x - 1``,
    ``x' = -x + y``. With ``k = gamma1/a``, ``W = (x + k)^2 + (y + k)^2``
    and the upper half of ``W = R^2`` is noncontact when ``W' < 0`` at every
    one of ``n`` interior sample points.
    """
    k = gamma1 / a
    if radius is None:
        if M_lock is None:
            raise ValueError("need radius or M_lock")
        radius = (M_lock + 1.0) * k
    elif M_lock is not None and radius > (M_lock + 1.0) * k * (1 + 1e-12):
        raise ValueError(f"radius {radius} exceeds (M+1) gamma1/a = {(M_lock + 1.0) * k}")
    W = (x + k) ** 2 + (y + k) ** 2
    phi = np.linspace(0.0, np.pi, n + 2)[1:-1]
    u, v = radius * np.cos(phi), radius * np.sin(phi)
    xs, ys = u - k, v - k
    half = u * (-xs + ys) + v * (-ys - xs - 1.0)
    worst = float(np.max(half))
    return WCheck(float(W), bool(worst < 0), worst, float(radius))


# --------------------------------------------------------------------------
# convergence tests on trajectories
# --------------------------------------------------------------------------

def _tail(tr: Trajectory, fraction: float) -> Trajectory:
    t0, t1 = tr.t[0], tr.t[-1]
    return tr.window(t1 - fraction * (t1 - t0))


def point_set_diameter(points: np.ndarray, chunk: int = 1024) -> float:
    """Largest pairwise Euclidean distance, computed exactly in row blocks."""
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts[:, None]
    best = 0.0
    for i in range(0, len(pts), chunk):
        block = pts[i:i + chunk]
        d = np.sqrt(((block[:, None, :] - pts[None, :, :]) ** 2).sum(axis=-1))
        best = max(best, float(d.max()))
    return best


def converged_to(tr: Trajectory, target, tol: float = CONVERGENCE_TOL,
                 fraction: float = TAIL_FRACTION) -> tuple[bool, float]:
    """Whether the tail stays inside the ``tol`` ball around ``target``; also the terminal distance."""
    target = np.asarray(target, dtype=float)
    tail = _tail(tr, fraction)
    dist = np.linalg.norm(tail.x - target, axis=1)
    return bool(np.all(dist < tol)), float(np.linalg.norm(tr.final_state - target))


@dataclass(frozen=True)
class SegmentReport:
    """Convergence of a run onto the sliding segment ``{sigma = 0}`` of a scalar-switching model."""

    reached_sliding: bool
    terminal_sigma: float
    tail_sigma_diameter: float
    tail_state_diameter: float
    terminal_mode: Mode
    passed: bool


def segment_convergence(tr: Trajectory, component: int = 0, terminal_tol: float = 1e-6,
                        diameter_tol: float = 1e-3, fraction: float = TAIL_FRACTION) -> SegmentReport:
    """Terminal ``|x_component|`` and its tail diameter; the full-state diameter is reported too.

    Motion along the segment keeps the other coordinates drifting, so only
    the switching coordinate can settle; the state diameter is informational.
    """
    tail = _tail(tr, fraction)
    reached = any(m is Mode.SLIDING for m in tr.modes)
    term = abs(float(tr.final_state[component]))
    diam = float(np.ptp(tail.x[:, component]))
    passed = reached and term <= terminal_tol and diam <= diameter_tol
    return SegmentReport(reached, term, diam, point_set_diameter(tail.x),
                         tr.modes[-1], bool(passed))


@dataclass(frozen=True)
class AttractorReport:
    bounded: bool
    max_norm: float
    min_distances: tuple
    tail_diameter: float
    converged: bool


def attractor_diagnostics(tr: Trajectory, equilibria: Sequence = (), bound: float = 1e6,
                          tol: float = CONVERGENCE_TOL, fraction: float = TAIL_FRACTION) -> AttractorReport:
    """Boundedness, tail distances to each equilibrium and a converged/oscillating verdict."""
    norms = np.linalg.norm(tr.x, axis=1)
    max_norm = float(np.max(norms)) if np.all(np.isfinite(norms)) else float("inf")
    tail = _tail(tr, fraction)
    dists = tuple(float(np.min(np.linalg.norm(tail.x - np.asarray(e, dtype=float), axis=1)))
                  for e in equilibria)
    diam = point_set_diameter(tail.x) if np.all(np.isfinite(tail.x)) else float("inf")
    return AttractorReport(max_norm <= bound, max_norm, dists, diam, diam < tol)


# continuation schedule for localizing the hidden attractor of the chaotic circuit
HIDDEN_SCHEDULE = (4.0, 3.0, 2.0, 1.5, 1.2, 1.0, 0.5, 0.1, 1e-2, 1e-3, 1e-4)


def localize_by_continuation(sys: PiecewiseSystem, x0, horizon: float = 200.0,
                             schedule: Sequence[float] = HIDDEN_SCHEDULE,
                             cfg: Optional[SolverConfig] = None):
    """Shrink the regularization band in steps, each run starting where the last one ended.

    Wide bands make the origin unstable, so a start near it lands on the
    attractor; the attractor is then followed as the band shrinks.
    """
    return integrate_ap(sys, x0, 0.0, horizon, schedule, cfg, continuation=True)


# --------------------------------------------------------------------------
# safe-load sweep
# --------------------------------------------------------------------------

class Region(enum.Enum):
    THEOREM_SAFE = "THEOREM_SAFE"
    NUMERIC_SAFE = "NUMERIC_SAFE"
    UNSAFE = "UNSAFE"


@dataclass(frozen=True)
class RegionCell:
    gamma1: float
    label: Region
    terminal_distance: float = float("nan")
    numeric_converged: Optional[bool] = None
    diagnostic: str = ""


@dataclass(frozen=True)
class RegionMap:
    a: float
    c: float
    M_lock: float
    gamma0: float
    horizon: float
    cells: tuple

    def labels(self) -> list:
        return [cell.label for cell in self.cells]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["gamma1", "label", "terminal_distance"])
        for cell in self.cells:
            w.writerow([repr(float(cell.gamma1)), cell.label.value, repr(float(cell.terminal_distance))])
        return buf.getvalue()


def _simulate_cell(args) -> tuple[Optional[bool], float, str]:
    a, c, M, gamma0, gamma1, horizon, cfg = args
    eq = drilling_equilibrium(a, c, gamma1)
    sys = drilling_reduced(DrillingParams(a, c, gamma1, M))
    if equilibrium_residual(sys, eq.state) > 1e-10:
        return False, float("nan"), "equilibrium residual above 1e-10"
    try:
        tr = integrate_filippov(sys, post_jump_state(a, c, gamma0), 0.0, horizon, cfg)
    except IntegrationError as err:
        part = err.partial
        d = float(np.linalg.norm(part.final_state - eq.state)) if part is not None else float("nan")
        return False, d, f"integration failed: {err}"
    ok, d = converged_to(tr, eq.state)
    return ok, d, ""


def safe_load_sweep(a: float, c: float, M_lock: float, gamma0: float, gamma1_grid: Sequence[float],
                    horizon: Optional[float] = None, cfg: Optional[SolverConfig] = None,
                    simulate_certified: bool = False, workers: Optional[int] = None) -> RegionMap:
    """Label each load level after a jump from ``gamma0``.

    Certified levels are THEOREM_SAFE without simulation unless
    ``simulate_certified``; the rest are simulated from the ``gamma0`` rest
    point for ``horizon`` (default ``200/c``) and labeled NUMERIC_SAFE when the
    final 10% stays within 1e-3 of the ``gamma1`` equilibrium. Cells run in a
    process pool when ``workers > 1``; output order follows the grid.
    """
    grid = [float(g) for g in gamma1_grid]
    for g in grid:
        if not (0 < g < a / 2):
            raise ValueError(f"gamma1={g} outside (0, a/2)")
        if not g > gamma0:
            raise ValueError(f"gamma1={g} must exceed gamma0={gamma0}")
    horizon = 200.0 / c if horizon is None else float(horizon)
    cfg = cfg or SolverConfig()
    reports = [theorem_conditions(a, c, M_lock, LoadChangeScenario(gamma0, g)) for g in grid]
    todo = [i for i, r in enumerate(reports) if simulate_certified or not r.all_true]
    jobs = [(a, c, M_lock, gamma0, grid[i], horizon, cfg) for i in todo]
    if workers and workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_simulate_cell, jobs))
    else:
        results = [_simulate_cell(j) for j in jobs]
    sim = dict(zip(todo, results))
    cells = []
    for i, (g, rep) in enumerate(zip(grid, reports)):
        ok, d, diag = sim.get(i, (None, float("nan"), ""))
        if rep.all_true:
            label = Region.THEOREM_SAFE
        else:
            label = Region.NUMERIC_SAFE if ok else Region.UNSAFE
        cells.append(RegionCell(g, label, d, ok, diag))
    return RegionMap(a, c, M_lock, gamma0, horizon, tuple(cells))


def region_contains_side(tr: Trajectory, sys: PiecewiseSystem, side: Side) -> np.ndarray:
    """Mask of samples strictly on ``side`` of the switching surface."""
    return np.array([surface_side(sys.surface, t, x) is side for t, x in zip(tr.t, tr.x)])
