"""Event-driven integration of piecewise-smooth systems.

Free flight on either side of the surface and sliding along it are all plain
smooth integrations with scipy's Dormand-Prince stepper. This module adds
event location on the dense output, mode switching, post-step projection
during sliding, and the saturation regularization used for the
Aizerman-Pyatnitskiy limit.
"""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.integrate import RK45, OdeSolution
from scipy.optimize import brentq, minimize_scalar

from .core import (
    TIE_TOL,
    Field,
    PiecewiseSystem,
    SegmentSet,
    Side,
    SurfaceClass,
    classify_projections,
    gly_surface_field,
    normal_projections,
    segment_normal_range,
    sliding_velocity,
    surface_side,
)

logger = logging.getLogger(__name__)


class IntegrationError(RuntimeError):
    """Integration stopped early; carries the last valid point and partial result."""

    def __init__(self, message: str, t: float, x: np.ndarray,
                 partial: Optional["Trajectory"] = None, eps: Optional[float] = None):
        super().__init__(message)
        self.t = t
        self.x = np.asarray(x, dtype=float)
        self.partial = partial
        self.eps = eps


class ChatteringError(IntegrationError):
    """The event budget ran out (Zeno-like switching)."""


class UnsupportedModelError(ValueError):
    pass


class Mode(enum.Enum):
    FLIGHT_PLUS = "FP"
    FLIGHT_MINUS = "FM"
    SLIDING = "SL"


class EventKind(enum.Enum):
    CROSSING = "CROSSING"
    SLIDING_ENTRY = "SLIDING_ENTRY"
    SLIDING_EXIT = "SLIDING_EXIT"
    GRAZING = "GRAZING"


_FLIGHT = {Side.PLUS: Mode.FLIGHT_PLUS, Side.MINUS: Mode.FLIGHT_MINUS}


@dataclass(frozen=True)
class SolverConfig:
    """Integration, event and sliding tolerances.

    ``sample_dt`` switches sample output from accepted step ends to a uniform
    grid (plus event points), which keeps linear interpolation between samples
    accurate for trajectory comparisons. ``scan_points`` is the number of
    sub-intervals per step on which event functions are sampled.
    """

    rel_tol: float = 1e-8
    abs_tol: float = 1e-10
    max_step: float = 0.1
    event_tol: float = 1e-10
    sliding_proj_tol: float = 1e-9
    min_event_gap: float = 1e-9
    max_events: int = 10**6
    sample_dt: Optional[float] = None
    scan_points: int = 4

    def __post_init__(self):
        for name in ("rel_tol", "abs_tol", "max_step", "event_tol",
                     "sliding_proj_tol", "min_event_gap"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if not self.event_tol < self.max_step:
            raise ValueError("event_tol must be smaller than max_step")
        if self.max_events < 1 or self.scan_points < 1:
            raise ValueError("max_events and scan_points must be >= 1")
        if self.sample_dt is not None and not self.sample_dt > 0:
            raise ValueError("sample_dt must be positive")


@dataclass(frozen=True)
class Event:
    t: float
    kind: EventKind
    state: np.ndarray


@dataclass(frozen=True)
class Trajectory:
    """Time-ordered samples with mode tags and an event log.

    ``t`` has shape ``(k,)``, ``x`` shape ``(k, n)``. ``dense`` is set only by
    :func:`integrate_smooth` and evaluates the continuous extension.
    """

    t: np.ndarray
    x: np.ndarray
    modes: tuple
    events: tuple = ()
    dense: Optional[Callable[[float], np.ndarray]] = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        t = np.array(self.t, dtype=float)
        x = np.array(self.x, dtype=float).reshape(len(t), -1)
        if len(self.modes) != len(t):
            raise ValueError("one mode per sample required")
        if len(t) > 1 and not np.all(np.diff(t) > 0):
            raise ValueError("sample times must be strictly increasing")
        t.setflags(write=False)
        x.setflags(write=False)
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "modes", tuple(self.modes))
        object.__setattr__(self, "events", tuple(self.events))

    def __len__(self):
        return len(self.t)

    @property
    def samples(self):
        return list(zip(self.t, self.x, self.modes))

    @property
    def final_state(self) -> np.ndarray:
        return self.x[-1]

    @property
    def dimension(self) -> int:
        return self.x.shape[1]

    def interpolate(self, times) -> np.ndarray:
        """Piecewise-linear state at ``times`` (shape ``(len(times), n)``)."""
        times = np.atleast_1d(np.asarray(times, dtype=float))
        if len(self.t) == 1:
            return np.repeat(self.x[:1], len(times), axis=0)
        return np.column_stack([np.interp(times, self.t, self.x[:, i]) for i in range(self.dimension)])

    def window(self, t_start: float, t_end: float = np.inf) -> "Trajectory":
        keep = (self.t >= t_start) & (self.t <= t_end)
        modes = [m for m, k in zip(self.modes, keep) if k]
        events = [e for e in self.events if t_start <= e.t <= t_end]
        return Trajectory(self.t[keep], self.x[keep], modes, events)

    def events_of(self, kind: EventKind) -> list:
        return [e for e in self.events if e.kind is kind]


@dataclass(frozen=True)
class EventHit:
    t: float
    grazing: bool = False


@dataclass(frozen=True)
class APResult:
    """Per-epsilon trajectories of the regularized runs and the convergence report.

    ``distances[k]`` is the sup distance between the runs for ``eps[k]`` and
    ``eps[k + 1]``.
    """

    eps: tuple
    trajectories: tuple
    distances: tuple
    grid: float
    continuation: bool

    @property
    def decreasing(self) -> bool:
        d = self.distances
        return all(b < a for a, b in zip(d, d[1:]))

    def report(self) -> dict:
        return {
            "eps": list(self.eps),
            "distances": list(self.distances),
            "grid": self.grid,
            "continuation": self.continuation,
            "decreasing": self.decreasing,
            "final_states": [tr.final_state.tolist() for tr in self.trajectories],
        }


# --------------------------------------------------------------------------
# event location
# --------------------------------------------------------------------------

def _parabola_min(t0, t1, t2, g0, g1, g2):
    """Vertex of the parabola through three equally spaced samples, if it is an interior minimum."""
    curv = g0 - 2.0 * g1 + g2
    if curv <= 0:
        return None
    h = t1 - t0
    slope = g2 - g0
    tv = t1 - 0.5 * h * slope / curv
    if not t0 < tv < t2:
        return None
    return tv, g1 - slope * slope / (8.0 * curv)


def locate_event(g: Callable[[float], float], ta: float, tb: float, on_tol: float = 1e-9,
                 event_tol: float = 1e-10, scan: int = 4, orient: bool = True) -> Optional[EventHit]:
    """First zero of ``g`` on ``[ta, tb]``, or the first point where it grazes zero.

    ``g`` is sampled on ``scan`` sub-intervals. A sign change is refined with
    Brent's method to ``event_tol``. If ``g`` dips to within ``on_tol`` of zero
    and comes back without going below ``-on_tol`` the hit is flagged as
    grazing. With ``orient`` the sign of ``g`` at ``ta`` decides which
    direction counts; otherwise only positive-to-nonpositive changes count.
    Returns ``None`` when nothing is found.
    """
    if not tb > ta:
        return None
    ts = np.linspace(ta, tb, scan + 1)
    gs = np.array([g(t) for t in ts], dtype=float)
    if not np.all(np.isfinite(gs)):
        raise ValueError("event function is not finite on the segment")
    if orient:
        nz = gs[np.abs(gs) > on_tol]
        if len(nz) and nz[0] < 0:
            return locate_event(lambda t: -g(t), ta, tb, on_tol, event_tol, scan, orient=False)

    for i in range(scan):
        g0, g1 = gs[i], gs[i + 1]
        if g0 > 0 and g1 <= 0:
            t_root = ts[i + 1] if g1 == 0 else brentq(g, ts[i], ts[i + 1], xtol=event_tol)
            later = np.nonzero(gs[i + 2:] > 0)[0]
            if len(later):
                j = i + 2 + later[0]
                res = minimize_scalar(g, bounds=(ts[i], ts[j]), method="bounded",
                                      options={"xatol": event_tol})
                if res.fun >= -on_tol:
                    return EventHit(float(res.x), grazing=True)
            return EventHit(float(t_root))
        if i + 1 < scan and g0 > 0 and g1 > 0 and gs[i + 2] > 0:
            vertex = _parabola_min(ts[i], ts[i + 1], ts[i + 2], g0, g1, gs[i + 2])
            if vertex is None or vertex[1] > 10.0 * on_tol:
                continue
            res = minimize_scalar(g, bounds=(ts[i], ts[i + 2]), method="bounded",
                                  options={"xatol": event_tol})
            if res.fun >= min(g0, gs[i + 2]) or not ts[i] < res.x < ts[i + 2]:
                continue
            if res.fun < -on_tol:
                return EventHit(float(brentq(g, ts[i], res.x, xtol=event_tol)))
            if res.fun <= on_tol:
                return EventHit(float(res.x), grazing=True)
    return None


# --------------------------------------------------------------------------
# smooth stepping
# --------------------------------------------------------------------------

@dataclass
class _Run:
    """Output of one smooth stretch: recorded samples, hit and step bookkeeping."""

    ts: list
    xs: list
    hit: Optional[tuple] = None          # (t, x, monitor index)
    grazings: list = field(default_factory=list)
    last_h: Optional[float] = None
    interpolants: list = field(default_factory=list)
    breaks: list = field(default_factory=list)


def _grid_after(t_from: float, t_to: float, t0: float, dt: float) -> np.ndarray:
    """Grid points ``t0 + k*dt`` in the half-open interval ``(t_from, t_to]``."""
    k0 = int(np.floor((t_from - t0) / dt)) + 1
    k1 = int(np.floor((t_to - t0) / dt + 1e-9))
    if k1 < k0:
        return np.empty(0)
    pts = t0 + dt * np.arange(k0, k1 + 1)
    return pts[(pts > t_from) & (pts <= t_to)]


def _advance(fun: Field, t: float, x: np.ndarray, t_end: float, cfg: SolverConfig,
             monitors: Sequence[Callable[[float, np.ndarray], float]] = (),
             search_from: Optional[float] = None, project=None, h0: Optional[float] = None,
             on_tol: float = 1e-9, immediate: bool = False, grid_t0: float = 0.0,
             keep_dense: bool = False) -> _Run:
    """Integrate ``fun`` from ``(t, x)`` toward ``t_end``, stopping at the first monitor zero.

    Each monitor is positive while the current mode is valid. Zeros before
    ``search_from`` are ignored. With ``immediate`` a monitor that is already
    nonpositive at ``search_from`` triggers at once. ``project`` maps a state
    back to the constraint manifold; the stepper restarts when it moves the
    state.
    """
    run = _Run([], [])
    search_from = t if search_from is None else search_from
    if t_end <= t:
        return run

    def make(t_s, x_s, h):
        if h is not None:
            h = min(h, cfg.max_step, t_end - t_s)
        return RK45(fun, t_s, x_s, t_end, rtol=cfg.rel_tol, atol=cfg.abs_tol,
                    max_step=cfg.max_step, first_step=h)

    if immediate and search_from <= t:
        for i, mon in enumerate(monitors):
            if mon(t, x) <= 0:
                run.hit = (t, np.array(x), i)
                return run

    solver = make(t, np.array(x, dtype=float), h0)
    checked_immediate = not immediate or search_from <= t
    while True:
        if solver.status != "running":
            break
        msg = solver.step()
        if solver.status == "failed":
            err = IntegrationError(f"step failed: {msg}", solver.t, solver.y)
            err.run = run
            raise err
        t_old, t_new = solver.t_old, solver.t
        dense = solver.dense_output()
        run.last_h = t_new - t_old

        hit = None
        lo = max(t_old, search_from)
        if monitors and t_new > lo:
            if not checked_immediate:
                checked_immediate = True
                x_lo = dense(lo)
                for i, mon in enumerate(monitors):
                    if mon(lo, x_lo) <= 0:
                        hit = (lo, x_lo, i)
                        break
            start = lo
            while hit is None and start < t_new:
                best = None
                for i, mon in enumerate(monitors):
                    ev = locate_event(lambda s, mon=mon: mon(s, dense(s)), start, t_new,
                                      on_tol, cfg.event_tol, cfg.scan_points, orient=False)
                    if ev is not None and (best is None or ev.t < best[0].t):
                        best = (ev, i)
                if best is None:
                    break
                ev, i = best
                if ev.grazing:
                    run.grazings.append((ev.t, dense(ev.t), i))
                    start = ev.t + cfg.min_event_gap
                    continue
                hit = (ev.t, dense(ev.t), i)

        t_stop = hit[0] if hit is not None else t_new
        if cfg.sample_dt is None:
            if hit is None:
                run.ts.append(t_new)
                run.xs.append(np.array(solver.y))
        else:
            for tg in _grid_after(t_old, t_stop, grid_t0, cfg.sample_dt):
                if hit is not None and tg >= t_stop:
                    break
                run.ts.append(float(tg))
                run.xs.append(np.array(solver.y) if tg == t_new else dense(tg))
            if hit is None and solver.status == "finished" and (not run.ts or run.ts[-1] < t_new):
                run.ts.append(t_new)
                run.xs.append(np.array(solver.y))
        if keep_dense:
            run.interpolants.append(dense)
            run.breaks.append(t_stop)

        if hit is not None:
            run.hit = hit
            break

        if project is not None and solver.status == "running":
            y_proj = project(t_new, solver.y)
            if y_proj is not solver.y:
                if run.xs and run.ts[-1] == t_new:
                    run.xs[-1] = np.array(y_proj)
                solver = make(t_new, y_proj, run.last_h)
    if project is not None:
        run.xs = [project(tt, xx) for tt, xx in zip(run.ts, run.xs)]
    return run


class _Recorder:
    def __init__(self, t0, x0, mode, cfg: SolverConfig):
        self.ts = [t0]
        self.xs = [np.array(x0, dtype=float)]
        self.modes = [mode]
        self.events = []
        self.cfg = cfg

    def extend(self, run: _Run, mode: Mode):
        for tt, xx in zip(run.ts, run.xs):
            if tt > self.ts[-1] and np.all(np.isfinite(xx)):
                self.ts.append(tt)
                self.xs.append(xx)
                self.modes.append(mode)

    def event(self, t, kind, x, new_mode):
        x = np.array(x, dtype=float)
        self.events.append(Event(float(t), kind, x))
        if t > self.ts[-1]:
            self.ts.append(float(t))
            self.xs.append(x)
            self.modes.append(new_mode)
        elif kind is not EventKind.GRAZING:
            # event at the last recorded time: retag the sample
            self.xs[-1] = x
            self.modes[-1] = new_mode
        if len(self.events) > self.cfg.max_events:
            raise ChatteringError(f"more than {self.cfg.max_events} events", t, x, self.build())

    def build(self) -> Trajectory:
        return Trajectory(np.array(self.ts), np.array(self.xs), self.modes, self.events)


def _salvage(rec: _Recorder, err: IntegrationError, mode: Mode):
    """Attach everything integrated before the failure as ``err.partial``."""
    if err.partial is not None:
        return
    run = getattr(err, "run", None)
    if run is not None:
        rec.extend(run, mode)
    err.partial = rec.build()


def integrate_smooth(f: Field, x0, t0: float, t1: float, cfg: Optional[SolverConfig] = None,
                     mode: Mode = Mode.FLIGHT_PLUS) -> Trajectory:
    """Adaptive Dormand-Prince integration of a smooth field with dense output."""
    cfg = cfg or SolverConfig()
    x0 = np.asarray(x0, dtype=float)
    rec = _Recorder(t0, x0, mode, cfg)
    if t1 == t0:
        return rec.build()
    if t1 < t0:
        raise ValueError("t1 must not precede t0")
    try:
        run = _advance(f, t0, x0, t1, cfg, grid_t0=t0, keep_dense=True)
    except IntegrationError as err:
        _salvage(rec, err, mode)
        raise
    rec.extend(run, mode)
    tr = rec.build()
    dense = OdeSolution([t0] + run.breaks, run.interpolants) if run.interpolants else None
    return replace(tr, dense=dense)


# --------------------------------------------------------------------------
# Filippov / GLY event-driven integration
# --------------------------------------------------------------------------

class _SlidingLaw:
    """Sliding velocity and exit monitors for one sliding episode.

    For the Filippov definition the monitors are ``-p`` and ``m`` (both limit
    fields keep pointing at the surface). For a GLY surface set they are the
    normal projections at the two segment ends, oriented so that both are
    positive while the set still holds a tangent velocity. Monitor 0 firing
    means every admissible velocity points to the plus side, monitor 1 the
    minus side.
    """

    def __init__(self, sys: PiecewiseSystem, definition: str, t: float, x: np.ndarray,
                 tie_tol: float = TIE_TOL):
        self.sys = sys
        self.gly = definition == "gly"
        self.tie = tie_tol
        if self.gly:
            seg = sys.set_at(t, x)
            n = sys.surface.normal(t, x)
            q_lo, q_hi, _, _ = segment_normal_range(seg, n)
            # the end with the smaller projection plays the role of f_plus
            self.neg_end_hi = q_hi <= q_lo

    def _ends(self, t, x):
        seg = self.sys.set_at(t, x)
        n = self.sys.surface.normal(t, x)
        q_lo, q_hi, q0, q1 = segment_normal_range(seg, n)
        return seg, q_lo, q_hi, q0, q1

    def velocity(self, t, x):
        if self.gly:
            seg, _, _, q0, q1 = self._ends(t, x)
            return seg.at(-q0 / q1)
        _, fp, fm, p, m = normal_projections(self.sys, t, x)
        return sliding_velocity(fp, fm, p, m)[0]

    def monitors(self):
        tie = self.tie
        if self.gly:
            def q_neg(t, x):
                _, q_lo, q_hi, _, _ = self._ends(t, x)
                return tie - (q_hi if self.neg_end_hi else q_lo)

            def q_pos(t, x):
                _, q_lo, q_hi, _, _ = self._ends(t, x)
                return (q_lo if self.neg_end_hi else q_hi) + tie
            return [q_neg, q_pos]

        def minus_p(t, x):
            return tie - normal_projections(self.sys, t, x)[3]

        def m_(t, x):
            return normal_projections(self.sys, t, x)[4] + tie
        return [minus_p, m_]


def _surface_decision(sys: PiecewiseSystem, definition: str, t: float, x: np.ndarray):
    """Mode to continue in at a surface point: SLIDING or a flight side."""
    _, _, _, p, m = normal_projections(sys, t, x)
    if definition == "gly":
        if gly_surface_field(sys, t, x).tangent:
            return Mode.SLIDING, p, m
    else:
        cls = classify_projections(p, m)
        if cls.kind is SurfaceClass.ATTRACTING_SLIDING:
            return Mode.SLIDING, p, m
    if p > 0:
        return Mode.FLIGHT_PLUS, p, m
    return Mode.FLIGHT_MINUS, p, m


def integrate_filippov(sys: PiecewiseSystem, x0, t0: float, t1: float,
                       cfg: Optional[SolverConfig] = None, definition: str = "filippov") -> Trajectory:
    """Event-driven solution of the differential inclusion.

    ``definition`` selects the sliding law: ``"filippov"`` uses the convex hull
    of the limit fields, ``"gly"`` the system's own surface set with the
    extended-nonlinearity selection. Flight alternates with sliding; every
    switch is logged as an event. At repelling surface points the plus side is
    taken.
    """
    if definition not in ("filippov", "gly"):
        raise ValueError(f"unknown solution definition {definition!r}")
    cfg = cfg or SolverConfig()
    x = sys.check_state(x0).copy()
    surf = sys.surface
    gap = cfg.min_event_gap
    t = float(t0)
    if t1 < t0:
        raise ValueError("t1 must not precede t0")

    side = surface_side(surf, t, x)
    search_from = t
    if side is Side.ON:
        mode, _, _ = _surface_decision(sys, definition, t, x)
        x_run = surf.project(t, x)
        search_from = t + gap
    else:
        mode = _FLIGHT[side]
        x_run = x
    rec = _Recorder(t, x, mode, cfg)
    h = None

    def proj_event(tt, xx):
        return surf.project(tt, xx, tol=surf.on_tol * 1e-3)

    def proj_slide(tt, yy):
        if abs(surf.value(tt, yy)) <= 0.5 * cfg.sliding_proj_tol:
            return yy
        return surf.project(tt, yy, tol=0.1 * cfg.sliding_proj_tol)

    try:
        while t < t1:
            if mode is Mode.SLIDING:
                law = _SlidingLaw(sys, definition, t, x_run)
                run = _advance(law.velocity, t, x_run, t1, cfg, law.monitors(), search_from,
                               project=proj_slide, h0=h, on_tol=surf.on_tol, immediate=True,
                               grid_t0=t0)
                rec.extend(run, mode)
                h = run.last_h or h
                if run.hit is None:
                    break
                t_e, x_e, idx = run.hit
                x_e = proj_event(t_e, x_e)
                mode = Mode.FLIGHT_PLUS if idx == 0 else Mode.FLIGHT_MINUS
                rec.event(t_e, EventKind.SLIDING_EXIT, x_e, mode)
            else:
                s = 1.0 if mode is Mode.FLIGHT_PLUS else -1.0
                fun = sys.f_plus if s > 0 else sys.f_minus
                run = _advance(fun, t, x_run, t1, cfg, [lambda tt, xx: s * surf.value(tt, xx)],
                               search_from, h0=h, on_tol=surf.on_tol, grid_t0=t0)
                for tg, xg, _ in run.grazings:
                    rec.event(tg, EventKind.GRAZING, xg, mode)
                rec.extend(run, mode)
                h = run.last_h or h
                if run.hit is None:
                    break
                t_e, x_e, _ = run.hit
                x_e = proj_event(t_e, x_e)
                new_mode, p, m = _surface_decision(sys, definition, t_e, x_e)
                if new_mode is Mode.SLIDING:
                    kind = EventKind.SLIDING_ENTRY
                elif new_mode is mode or (s > 0 and p > 0) or (s < 0 and m < 0):
                    # the arriving field points away: numerically touched, not crossed
                    new_mode, kind = mode, EventKind.GRAZING
                else:
                    kind = EventKind.CROSSING
                mode = new_mode
                rec.event(t_e, kind, x_e, mode)
            t, x_run = t_e, x_e
            search_from = t + gap
    except IntegrationError as err:
        _salvage(rec, err, mode)
        raise
    return rec.build()


# --------------------------------------------------------------------------
# Aizerman-Pyatnitskiy regularization
# --------------------------------------------------------------------------

def sat(x, eps: float):
    """Saturation ``(|x/eps + 1| - |x/eps - 1|) / 2``: ``x/eps`` inside the band, ``sign(x)`` outside."""
    if not eps > 0:
        raise ValueError("eps must be positive")
    if np.ndim(x) == 0:
        u = x / eps
        return 1.0 if u >= 1.0 else (-1.0 if u <= -1.0 else u)
    return np.clip(np.asarray(x, dtype=float) / eps, -1.0, 1.0)


@dataclass(frozen=True)
class RegularizedField:
    """``smooth + gain * sat(sigma, eps)``; agrees with the branches where ``|sigma| >= eps``."""

    system: PiecewiseSystem
    eps: float

    def __call__(self, t, x):
        ch = self.system.channel
        return ch.smooth(t, x) + ch.gain(t, x) * sat(self.system.surface.sigma(t, x), self.eps)


def regularized_system(sys: PiecewiseSystem, eps: float) -> RegularizedField:
    if sys.channel is None:
        raise UnsupportedModelError(f"model {sys.name!r} declares no sign channel to regularize")
    if not eps > 0:
        raise ValueError("eps must be positive")
    return RegularizedField(sys, float(eps))


def _check_schedule(sched) -> tuple:
    eps = tuple(float(e) for e in sched)
    if not eps:
        raise ValueError("empty epsilon schedule")
    if any(e <= 0 for e in eps) or any(b >= a for a, b in zip(eps, eps[1:])):
        raise ValueError(f"epsilon schedule must be positive and strictly decreasing: {eps}")
    return eps


def integrate_ap(sys: PiecewiseSystem, x0, t0: float, t1: float, sched: Sequence[float],
                 cfg: Optional[SolverConfig] = None, continuation: bool = False,
                 grid: Optional[float] = None) -> APResult:
    """One smooth run per epsilon, plus sup distances between consecutive runs.

    With ``continuation`` each run starts from the final state of the previous
    one; this is how hidden attractors are tracked as the band shrinks.
    """
    eps = _check_schedule(sched)
    cfg = cfg or SolverConfig()
    x_start = sys.check_state(x0)
    trajectories = []
    for e in eps:
        field_e = regularized_system(sys, e)
        try:
            tr = integrate_smooth(field_e, x_start, t0, t1, cfg)
        except IntegrationError as err:
            err.eps = e
            raise
        modes = [Mode.FLIGHT_PLUS if sys.surface.sigma(tt, xx) >= 0 else Mode.FLIGHT_MINUS
                 for tt, xx in zip(tr.t, tr.x)]
        trajectories.append(replace(tr, modes=tuple(modes)))
        logger.debug("AP eps=%g done, final state %s", e, tr.final_state)
        if continuation:
            x_start = tr.final_state
    if grid is None:
        grid = cfg.sample_dt or max((t1 - t0) / 1000.0, 1e-12)
    distances = []
    if t1 > t0:
        distances = [trajectory_distance(a, b, grid) for a, b in zip(trajectories, trajectories[1:])]
    return APResult(eps, tuple(trajectories), tuple(distances), grid, continuation)


def trajectory_distance(a: Trajectory, b: Trajectory, grid: float) -> float:
    """Sup over a common time grid of the Euclidean distance, linear interpolation between samples."""
    if not grid > 0:
        raise ValueError("grid step must be positive")
    lo = max(a.t[0], b.t[0])
    hi = min(a.t[-1], b.t[-1])
    if lo > hi:
        raise ValueError(f"trajectories do not overlap in time: [{a.t[0]}, {a.t[-1]}] vs [{b.t[0]}, {b.t[-1]}]")
    n = int(np.floor((hi - lo) / grid + 1e-9))
    times = lo + grid * np.arange(n + 1)
    if times[-1] < hi:
        times = np.append(times, hi)
    diff = a.interpolate(times) - b.interpolate(times)
    return float(np.max(np.linalg.norm(diff, axis=1)))


# --------------------------------------------------------------------------
# naive reference
# --------------------------------------------------------------------------

def integrate_naive(sys: PiecewiseSystem, x0, t0: float, t1: float, h: float) -> Trajectory:
    """Fixed-step RK4 on ``smooth + gain * sign(sigma)`` with the ordinary sign (``sign(0) = 0``).

    This is the textbook mistake: the surface law is ignored and the discrete
    map chatters around the surface instead of sliding. Kept as a regression
    witness only.
    """
    if sys.channel is None:
        raise UnsupportedModelError(f"model {sys.name!r} declares no sign channel")
    if not h > 0:
        raise ValueError("step must be positive")
    ch = sys.channel

    def f(t, x):
        return ch.smooth(t, x) + ch.gain(t, x) * np.sign(sys.surface.sigma(t, x))

    n = max(int(round((t1 - t0) / h)), 0)
    ts = t0 + h * np.arange(n + 1)
    xs = np.empty((n + 1, sys.dimension))
    xs[0] = sys.check_state(x0)
    for k in range(n):
        t, x = ts[k], xs[k]
        k1 = f(t, x)
        k2 = f(t + h / 2, x + h / 2 * k1)
        k3 = f(t + h / 2, x + h / 2 * k2)
        k4 = f(t + h, x + h * k3)
        xs[k + 1] = x + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    modes = [Mode.FLIGHT_PLUS if sys.surface.sigma(tt, xx) >= 0 else Mode.FLIGHT_MINUS
             for tt, xx in zip(ts, xs)]
    return Trajectory(ts, xs, modes)
