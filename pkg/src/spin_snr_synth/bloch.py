"""Normalized spin-1/2 Bloch dynamics restricted to the (y, z) plane.

Time is measured in units of the detection duration, so one detection
period always lasts 1. The only physical parameters are the two
dimensionless relaxation rates

    Gamma = 2*pi*Td/T2   (transverse decay of y)
    gamma = 2*pi*Td/T1   (longitudinal recovery of z toward 1)

and the controlled equation of motion is

    dy/dt = -Gamma*y - u*z
    dz/dt = gamma*(1 - z) + u*y

with a single on-resonance control field u(t). All operations here are
pure functions of value types; nothing keeps state between calls.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

from .errors import BallEscapeError, DomainError, PhysicalityError

#: Numerical slack for unit-ball membership checks.
EPS_BALL = 1e-12

#: Detection window in normalized time. Fixed by the normalization, not a knob.
DETECTION_TIME = 1.0

#: Default fixed step of the RK4 integrator.
DEFAULT_STEP = 1e-4


@dataclass(frozen=True)
class RelaxationPair:
    """Dimensionless relaxation rates (Gamma, gamma).

    Physical admissibility requires T2 <= 2*T1, i.e. 2*Gamma >= gamma.
    Construction rejects inadmissible pairs unless ``allow_unphysical``
    is set (useful for exploring the full parameter plane).
    """

    gamma_t2: float  # Gamma = 2*pi*Td/T2
    gamma_t1: float  # gamma = 2*pi*Td/T1
    allow_unphysical: bool = False

    def __post_init__(self):
        if not (self.gamma_t2 > 0.0 and math.isfinite(self.gamma_t2)):
            raise DomainError(f"Gamma must be positive and finite, got {self.gamma_t2}")
        if not (self.gamma_t1 > 0.0 and math.isfinite(self.gamma_t1)):
            raise DomainError(f"gamma must be positive and finite, got {self.gamma_t1}")
        if 2.0 * self.gamma_t2 < self.gamma_t1 and not self.allow_unphysical:
            raise PhysicalityError(
                f"2*Gamma >= gamma violated (Gamma={self.gamma_t2}, gamma={self.gamma_t1}); "
                "equivalent to T2 > 2*T1. Pass allow_unphysical=True to override."
            )


@dataclass(frozen=True)
class BlochState:
    """A magnetization state (y, z) inside the closed unit disk.

    The polar view uses the angle measured from the +y axis:
    y = r*cos(theta), z = r*sin(theta).
    """

    y: float
    z: float

    def __post_init__(self):
        r2 = self.y * self.y + self.z * self.z
        if not (r2 <= 1.0 + EPS_BALL):
            raise DomainError(f"state ({self.y}, {self.z}) lies outside the unit disk (r^2={r2})")

    @property
    def r(self) -> float:
        return math.hypot(self.y, self.z)

    @property
    def theta(self) -> float:
        return math.atan2(self.z, self.y)


EQUILIBRIUM = BlochState(0.0, 1.0)


@dataclass(frozen=True)
class ExperimentTiming:
    """Timing of the repeated pulse-and-detect experiment, in physical units.

    ``t_total`` is the full experiment duration T, ``t_detect`` the length
    Td of one detection window, ``n_cycles`` the number N of repetitions.
    T = N*(Td + Tc*Td) up to the rounding of N, so T >= N*Td always.
    """

    t_detect: float
    t_total: float
    n_cycles: int

    def __post_init__(self):
        if self.t_detect <= 0.0 or self.t_total <= 0.0:
            raise DomainError("t_detect and t_total must be positive")
        if self.n_cycles < 1:
            raise DomainError(f"n_cycles must be >= 1, got {self.n_cycles}")
        if self.t_total < self.n_cycles * self.t_detect * (1.0 - 1e-9):
            raise DomainError(
                f"t_total={self.t_total} cannot fit n_cycles={self.n_cycles} "
                f"detection windows of t_detect={self.t_detect}"
            )


def normalize_params(
    t1: float, t2: float, t_detect: float, allow_unphysical: bool = False
) -> RelaxationPair:
    """Convert physical (T1, T2, Td) to the normalized rate pair.

    Returns Gamma = 2*pi*Td/T2 and gamma = 2*pi*Td/T1. Raises
    :class:`DomainError` on non-positive inputs and
    :class:`PhysicalityError` when T2 > 2*T1 (unless overridden).
    """
    if t1 <= 0.0 or t2 <= 0.0 or t_detect <= 0.0:
        raise DomainError(f"T1, T2, Td must all be positive, got ({t1}, {t2}, {t_detect})")
    return RelaxationPair(
        gamma_t2=2.0 * math.pi * t_detect / t2,
        gamma_t1=2.0 * math.pi * t_detect / t1,
        allow_unphysical=allow_unphysical,
    )


def relax(state: BlochState, tau: float, params: RelaxationPair) -> BlochState:
    """Free evolution (u = 0) for a time tau, in closed form.

    y decays as exp(-Gamma*tau); z approaches 1 as exp(-gamma*tau).
    """
    if tau < 0.0:
        raise DomainError(f"tau must be >= 0, got {tau}")
    if tau == 0.0:
        return state
    return BlochState(
        state.y * math.exp(-params.gamma_t2 * tau),
        1.0 + (state.z - 1.0) * math.exp(-params.gamma_t1 * tau),
    )


def relax_inverse(state: BlochState, tau: float, params: RelaxationPair) -> BlochState:
    """Undo a free evolution of duration tau.

    The preimage must stay inside the closed unit disk; otherwise the
    requested state could not have come from a physical one and a
    :class:`BallEscapeError` is raised.
    """
    if tau < 0.0:
        raise DomainError(f"tau must be >= 0, got {tau}")
    y0 = state.y * math.exp(params.gamma_t2 * tau)
    z0 = 1.0 + (state.z - 1.0) * math.exp(params.gamma_t1 * tau)
    if y0 * y0 + z0 * z0 > 1.0 + EPS_BALL:
        raise BallEscapeError(
            f"preimage ({y0}, {z0}) of ({state.y}, {state.z}) after tau={tau} "
            "lies outside the unit disk"
        )
    return BlochState(y0, z0)


def rotate(state: BlochState, phi: float) -> BlochState:
    """Instantaneous rotation by phi; positive phi tips +z toward +y.

    Radius-preserving. In terms of the equation of motion this is the
    pure control flow with integral(u dt) = -phi; the sign choice keeps
    measured y positive and is legitimate by the (y, u) -> (-y, -u)
    mirror symmetry of the dynamics.
    """
    c = math.cos(phi)
    s = math.sin(phi)
    return BlochState(state.y * c + state.z * s, -state.y * s + state.z * c)


def _rhs(y: float, z: float, u: float, big_g: float, small_g: float) -> tuple[float, float]:
    return (-big_g * y - u * z, small_g * (1.0 - z) + u * y)


def integrate(
    state: BlochState,
    control: Callable[[float], float],
    duration: float,
    params: RelaxationPair,
    step: float = DEFAULT_STEP,
) -> BlochState:
    """Fixed-step RK4 integration of the controlled Bloch equation.

    ``control`` maps time (from the start of this call) to the field u.
    Global error is O(step^4). Raises :class:`BallEscapeError` if the
    numerical state leaves the unit disk by more than ``EPS_BALL``.
    """
    if duration < 0.0:
        raise DomainError(f"duration must be >= 0, got {duration}")
    if step <= 0.0:
        raise DomainError(f"step must be > 0, got {step}")
    big_g = params.gamma_t2
    small_g = params.gamma_t1
    y, z = state.y, state.z
    n_full = int(duration / step)
    for i in range(n_full + 1):
        t = i * step
        h = step if i < n_full else duration - n_full * step
        if h <= 0.0:
            break
        y, z = _rk4_step(y, z, t, h, control, big_g, small_g)
        if y * y + z * z > 1.0 + EPS_BALL:
            raise BallEscapeError(
                f"integration left the unit disk at t={t + h} (state ({y}, {z}))"
            )
    return BlochState(y, z)


def _rk4_step(
    y: float,
    z: float,
    t: float,
    h: float,
    control: Callable[[float], float],
    big_g: float,
    small_g: float,
) -> tuple[float, float]:
    u1 = control(t)
    u2 = control(t + 0.5 * h)
    u4 = control(t + h)
    k1y, k1z = _rhs(y, z, u1, big_g, small_g)
    k2y, k2z = _rhs(y + 0.5 * h * k1y, z + 0.5 * h * k1z, u2, big_g, small_g)
    k3y, k3z = _rhs(y + 0.5 * h * k2y, z + 0.5 * h * k2z, u2, big_g, small_g)
    k4y, k4z = _rhs(y + h * k3y, z + h * k3z, u4, big_g, small_g)
    return (
        y + (h / 6.0) * (k1y + 2.0 * k2y + 2.0 * k3y + k4y),
        z + (h / 6.0) * (k1z + 2.0 * k2z + 2.0 * k3z + k4z),
    )


def radial_speed(state: BlochState, params: RelaxationPair) -> float:
    """dr/dt under free evolution; independent of the control field.

    Equals -Gamma*r*cos(theta)^2 + gamma*sin(theta) - gamma*r*sin(theta)^2.
    Undefined at the origin.
    """
    r = state.r
    if r == 0.0:
        raise DomainError("radial speed is undefined at the origin")
    g = params.gamma_t1
    return (-params.gamma_t2 * state.y * state.y + g * state.z * (1.0 - state.z)) / r


def radial_speed_dtheta(state: BlochState, params: RelaxationPair) -> float:
    """Angular derivative of the radial speed at fixed radius.

    Vanishes on the z-axis (y = 0) and on the horizontal plane
    z = -gamma/(2*(Gamma - gamma)), the two singular sets of the
    time-optimal flow. Undefined at the origin.
    """
    r = state.r
    if r == 0.0:
        raise DomainError("angular derivative is undefined at the origin")
    g = params.gamma_t1
    return (abs(state.y) / r) * (2.0 * params.gamma_t2 * state.z + g - 2.0 * g * state.z)


def total_snr(q: float, timing: ExperimentTiming) -> float:
    """Accumulated SNR R = sqrt(T/Td) * q of the full experiment.

    ``q`` is the per-unit-time figure of merit y_m/sqrt(1 + Tc).
    """
    if not (0.0 <= q < 1.0):
        raise DomainError(f"q must lie in [0, 1), got {q}")
    return math.sqrt(timing.t_total / timing.t_detect) * q
