"""Benchmark systems as :class:`~nonsmooth.core.PiecewiseSystem` values.

Each constructor validates its parameter record and returns an immutable
system with both limit fields, the switching surface, the surface law and the
sign channel used for regularization.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, fields
from typing import Mapping, Optional

import numpy as np

from .core import PiecewiseSystem, SegmentSet, SignChannel, SwitchingSurface


class ParameterError(ValueError):
    pass


def _require(cond: bool, msg: str):
    if not cond:
        raise ParameterError(msg)


@dataclass(frozen=True)
class DrillingParams:
    """Reduced drilling model: ``a = beta (SB)^2 / (I L)``, ``c = R / L``, ``gamma = T0 / I``."""

    a: float
    c: float
    gamma: float
    M_lock: float

    def __post_init__(self):
        _require(self.a > 0 and self.c > 0, "a and c must be positive")
        _require(self.gamma >= 0, "gamma must be nonnegative")
        _require(self.M_lock > 0, "M_lock must be positive")


@dataclass(frozen=True)
class DrillingMotorParams:
    L: float
    R: float
    S: float
    B: float
    I_inertia: float
    beta: float
    T0: float
    M_lock: float

    def __post_init__(self):
        for name in ("L", "R", "S", "B", "I_inertia", "beta", "M_lock"):
            _require(getattr(self, name) > 0, f"{name} must be positive")
        _require(self.T0 >= 0, "T0 must be nonnegative")

    def reduced(self) -> DrillingParams:
        """Parameters of the reduced model this motor maps to."""
        return DrillingParams(
            a=self.beta * (self.S * self.B) ** 2 / (self.I_inertia * self.L),
            c=self.R / self.L,
            gamma=self.T0 / self.I_inertia,
            M_lock=self.M_lock,
        )


@dataclass(frozen=True)
class LoadChangeScenario:
    gamma0: float
    gamma1: float
    tau: float = 0.0

    def __post_init__(self):
        _require(0 <= self.gamma0 < self.gamma1, "need 0 <= gamma0 < gamma1")


@dataclass(frozen=True)
class WattParams:
    A: float
    B: float


@dataclass(frozen=True)
class ChuaParams:
    alpha: float
    beta: float
    gamma_c: float
    m0: float
    m1: float


HIDDEN_CHUA = ChuaParams(alpha=8.4562, beta=12.0732, gamma_c=0.0052, m0=-0.1768, m1=-1.1468)
WATT_REFERENCE = WattParams(A=1.5, B=1.1)
WATT_REFERENCE_X0 = (-0.5, 1.0, 1.2)


class FrictionLaw(enum.Enum):
    SYMMETRIC = "symmetric"
    STATIC_EXCEEDS = "static"


@dataclass(frozen=True)
class FrictionParams:
    """Linear plant with a dry-friction feedback, ``x' = A x + b phi(c.x)``.

    Defaults give the unit oscillator ``x1' = x2, x2' = -x1 - phi(x2)``.
    """

    A_matrix: tuple = ((0.0, 1.0), (-1.0, 0.0))
    b: tuple = (0.0, -1.0)
    c_vec: tuple = (0.0, 1.0)
    law: FrictionLaw = FrictionLaw.SYMMETRIC
    alpha_s: float = 1.0

    def __post_init__(self):
        A = np.asarray(self.A_matrix, dtype=float)
        n = len(self.b)
        _require(A.shape == (n, n), f"A_matrix must be {n}x{n}, got {A.shape}")
        _require(len(self.c_vec) == n, "c_vec and b must have equal length")
        law = FrictionLaw(self.law)
        object.__setattr__(self, "law", law)
        if law is FrictionLaw.STATIC_EXCEEDS:
            _require(self.alpha_s > 1, "alpha_s must exceed 1 (otherwise the law is the symmetric one)")


# --------------------------------------------------------------------------
# drilling
# --------------------------------------------------------------------------

def _drilling_common(p: DrillingParams):
    a, c = p.a, p.c

    def rest(x):
        s, y, xx = x
        return -c * y - s - xx * s, -c * xx + y * s

    return a, c, rest


def drilling_reduced(p: DrillingParams) -> PiecewiseSystem:
    """State ``(s, y, x)``; ``sigma = c - s`` so the drilling region ``s < c`` is the plus side.

    The friction term is ``gamma`` for ``s < c``, ``-gamma*M`` for ``s > c``
    and the interval ``[-gamma*M, gamma]`` on ``s = c``.
    """
    a, c, rest = _drilling_common(p)
    g, M = p.gamma, p.M_lock

    def branch(fric):
        def f(t, x):
            dy, dx = rest(x)
            return np.array([a * x[1] + fric, dy, dx])
        return f

    def surface_set(t, x):
        dy, dx = rest(x)
        return SegmentSet(np.array([a * x[1], dy, dx]), np.array([1.0, 0.0, 0.0]), -g * M, g)

    def smooth(t, x):
        dy, dx = rest(x)
        return np.array([a * x[1] + 0.5 * g * (1.0 - M), dy, dx])

    gain = np.array([0.5 * g * (1.0 + M), 0.0, 0.0])
    surface = SwitchingSurface(lambda t, x: c - x[0], lambda t, x: np.array([-1.0, 0.0, 0.0]))
    return PiecewiseSystem(branch(g), branch(-g * M), surface, 3, surface_set,
                           SignChannel(smooth, lambda t, x: gain), name="drilling", params=p)


def drilling_motor(p: DrillingMotorParams) -> PiecewiseSystem:
    """State ``(i1, i2, theta, theta_dot)``; surface ``omega = theta_dot + R/L = 0``."""
    L, R, SB, I = p.L, p.R, p.S * p.B, p.I_inertia
    T0, M, beta = p.T0, p.M_lock, p.beta

    def base(x):
        i1, i2, th, thd = x
        st, ct = math.sin(th), math.cos(th)
        return np.array([
            (-R * i1 + SB * st * thd) / L,
            (-R * i2 + SB * ct * thd) / L,
            thd,
            -beta * SB * (i1 * st + i2 * ct) / I,
        ])

    e4 = np.array([0.0, 0.0, 0.0, 1.0])

    def f_plus(t, x):
        return base(x) - (T0 / I) * e4

    def f_minus(t, x):
        return base(x) + (M * T0 / I) * e4

    def surface_set(t, x):
        return SegmentSet(base(x), e4, -T0 / I, M * T0 / I)

    gain = -0.5 * (1.0 + M) * T0 / I * e4
    shift = 0.5 * (M - 1.0) * T0 / I * e4
    surface = SwitchingSurface(lambda t, x: x[3] + R / L, lambda t, x: e4)
    return PiecewiseSystem(f_plus, f_minus, surface, 4, surface_set,
                           SignChannel(lambda t, x: base(x) + shift, lambda t, x: gain),
                           name="drilling-motor", params=p)


def motor_to_reduced(state, p: DrillingMotorParams) -> np.ndarray:
    """``(i1, i2, theta, theta_dot) -> (s, y, x)``."""
    i1, i2, th, thd = state
    k = p.L / (p.S * p.B)
    st, ct = math.sin(th), math.cos(th)
    return np.array([-thd, k * (i1 * st + i2 * ct), k * (i1 * ct - i2 * st)])


def reduced_to_motor(state, theta: float, p: DrillingMotorParams) -> np.ndarray:
    """Inverse of :func:`motor_to_reduced` for a given rotor angle."""
    s, y, x = state
    k = p.S * p.B / p.L
    st, ct = math.sin(theta), math.cos(theta)
    return np.array([k * (x * ct + y * st), k * (y * ct - x * st), theta, -s])


# --------------------------------------------------------------------------
# Watt governor, Chua
# --------------------------------------------------------------------------

def watt(p: WattParams) -> PiecewiseSystem:
    """``y1' in -A y1 + y2 - Sign(y1), y2' = -B y1 + y3, y3' = -y1``."""
    A, B = p.A, p.B

    def smooth(t, y):
        return np.array([-A * y[0] + y[1], -B * y[0] + y[2], -y[0]])

    gain = np.array([-1.0, 0.0, 0.0])
    surface = SwitchingSurface(lambda t, y: y[0], lambda t, y: np.array([1.0, 0.0, 0.0]))
    return PiecewiseSystem(lambda t, y: smooth(t, y) + gain, lambda t, y: smooth(t, y) - gain,
                           surface, 3, None, SignChannel(smooth, lambda t, y: gain),
                           name="watt", params=p)


def chua(p: ChuaParams) -> PiecewiseSystem:
    """Chua system with the discontinuous characteristic ``-alpha (m0 - m1) Sign(x1)``."""
    al, be, gc, m0, m1 = p.alpha, p.beta, p.gamma_c, p.m0, p.m1
    k1 = -al * (m1 + 1.0)

    def smooth(t, x):
        return np.array([k1 * x[0] + al * x[1], x[0] - x[1] + x[2], -be * x[1] - gc * x[2]])

    gain = np.array([-al * (m0 - m1), 0.0, 0.0])
    surface = SwitchingSurface(lambda t, x: x[0], lambda t, x: np.array([1.0, 0.0, 0.0]))
    return PiecewiseSystem(lambda t, x: smooth(t, x) + gain, lambda t, x: smooth(t, x) - gain,
                           surface, 3, None, SignChannel(smooth, lambda t, x: gain),
                           name="chua", params=p)


# --------------------------------------------------------------------------
# time-optimal double integrator
# --------------------------------------------------------------------------

def double_integrator_control() -> PiecewiseSystem:
    """``x1' = x2 u1, x2' = u2`` under the first-quadrant time-optimal switching law.

    ``sigma = x1 - x2^2 / 2``. For ``sigma > 0`` the law gives ``u = (-1, 1)``,
    for ``sigma < 0`` it gives ``u = (1, -1)``.
    """

    def f_plus(t, x):
        return np.array([-x[1], 1.0])

    def f_minus(t, x):
        return np.array([x[1], -1.0])

    def in_quadrant(x):
        return x[0] >= 0.0 and x[1] >= 0.0

    surface = SwitchingSurface(lambda t, x: x[0] - 0.5 * x[1] ** 2,
                               lambda t, x: np.array([1.0, -x[1]]))
    return PiecewiseSystem(f_plus, f_minus, surface, 2, None,
                           SignChannel(lambda t, x: np.zeros(2), f_plus),
                           domain=in_quadrant, name="double-integrator")


def optimal_descent_velocity(x) -> np.ndarray:
    """Velocity along the optimal arc ``x1 = x2^2 / 2``, which no Filippov solution follows."""
    return np.array([-x[1], -1.0])


# --------------------------------------------------------------------------
# linear plant with dry friction
# --------------------------------------------------------------------------

def friction_linear(p: FrictionParams = FrictionParams()) -> PiecewiseSystem:
    A = np.asarray(p.A_matrix, dtype=float)
    b = np.asarray(p.b, dtype=float)
    cv = np.asarray(p.c_vec, dtype=float)
    half_width = p.alpha_s if p.law is FrictionLaw.STATIC_EXCEEDS else 1.0

    def surface_set(t, x):
        return SegmentSet(A @ x, b, -half_width, half_width)

    surface = SwitchingSurface(lambda t, x: float(cv @ x), lambda t, x: cv)
    return PiecewiseSystem(lambda t, x: A @ x + b, lambda t, x: A @ x - b, surface, len(b),
                           surface_set, SignChannel(lambda t, x: A @ x, lambda t, x: b),
                           name="friction-linear", params=p)


# --------------------------------------------------------------------------
# parameter records
# --------------------------------------------------------------------------

def read_param_file(path) -> dict:
    """Flat ``key = value`` (or ``key: value``) records; ``#`` starts a comment."""
    record = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            for sep in ("=", ":"):
                if sep in line:
                    key, val = line.split(sep, 1)
                    break
            else:
                raise ParameterError(f"{path}:{lineno}: expected key = value")
            key = key.strip()
            if key in record:
                raise ParameterError(f"{path}:{lineno}: duplicate key {key!r}")
            record[key] = val.strip()
    return record


def _parse_value(name: str, raw, default):
    if not isinstance(raw, str):
        return raw
    if isinstance(default, FrictionLaw) or name == "law":
        return FrictionLaw(raw.strip().lower())
    if name == "A_matrix":
        rows = [r for r in raw.split(";") if r.strip()]
        return tuple(tuple(float(v) for v in r.split(",")) for r in rows)
    if name in ("b", "c_vec"):
        return tuple(float(v) for v in raw.split(","))
    return float(raw)


def params_from_record(cls, record: Mapping, defaults: Optional[Mapping] = None):
    """Build a parameter dataclass from string values; unknown or missing keys are errors."""
    names = {f.name: f for f in fields(cls)}
    unknown = sorted(set(record) - set(names))
    if unknown:
        raise ParameterError(f"unknown parameter(s) for {cls.__name__}: {', '.join(unknown)}")
    merged = dict(defaults or {})
    merged.update(record)
    kwargs = {}
    for name, f in names.items():
        if name in merged:
            try:
                kwargs[name] = _parse_value(name, merged[name], f.default)
            except ValueError as exc:
                raise ParameterError(f"bad value for {name}: {merged[name]!r} ({exc})") from None
    try:
        return cls(**kwargs)
    except TypeError as exc:
        raise ParameterError(f"{cls.__name__}: {exc}") from None


@dataclass(frozen=True)
class ModelEntry:
    params_cls: Optional[type]
    build: object
    defaults: Mapping
    default_x0: Optional[tuple] = None


MODELS = {
    "drilling": ModelEntry(DrillingParams, drilling_reduced, {}),
    "drilling-motor": ModelEntry(DrillingMotorParams, drilling_motor, {}),
    "watt": ModelEntry(WattParams, watt, {"A": WATT_REFERENCE.A, "B": WATT_REFERENCE.B}, WATT_REFERENCE_X0),
    "chua": ModelEntry(ChuaParams, chua, {f.name: getattr(HIDDEN_CHUA, f.name) for f in fields(ChuaParams)}),
    "double-integrator": ModelEntry(None, double_integrator_control, {}),
    "friction-linear": ModelEntry(FrictionParams, friction_linear, {}),
}


def build_model(name: str, record: Optional[Mapping] = None) -> PiecewiseSystem:
    if name not in MODELS:
        raise ParameterError(f"unknown model {name!r}; choose from {', '.join(MODELS)}")
    entry = MODELS[name]
    record = dict(record or {})
    if entry.params_cls is None:
        if record:
            raise ParameterError(f"model {name!r} takes no parameters")
        return entry.build()
    return entry.build(params_from_record(entry.params_cls, record, entry.defaults))
