"""Independent numerical verification of the closed forms.

Nothing in this module trusts the analytic travel times or the Ernst
formulas: steady states are found by iterating the physical cycle map,
optimal flips by brute-force sweeps, and control durations by RK4
integration of the actual feedback fields with event stopping. The
closed-form layer is accepted only because these checks reproduce it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .bloch import (
    DEFAULT_STEP,
    DETECTION_TIME,
    EQUILIBRIUM,
    BlochState,
    RelaxationPair,
    integrate,
    relax,
    rotate,
)
from .ernst import _golden_max, ernst_solution, maximize_q_global
from .errors import BracketingError, ConvergenceError, DomainError
from .qsurface import build_trajectory, control_time, q_value, time_magic
from .synthesis import boundary_curves, magic_plane

#: Max rotation angle |u|*h per RK4 substep.
_KAPPA = 0.05

#: Magic-plane integration floor; the last sliver is extrapolated.
_Y_FLOOR = 1e-8


@dataclass(frozen=True)
class DeltaPulse:
    """An instantaneous rotation by ``flip`` (positive tips +z toward +y)."""

    flip: float


@dataclass(frozen=True)
class PulseSegment:
    """A finite piece of a shaped control period.

    kind "const" applies the constant field ``amplitude`` (in the raw
    equation-of-motion sign convention, so a negative amplitude tips +z
    toward +y); "magic" applies the magic-plane feedback
    u = -gamma*(1-z0)/y; "free" is u = 0.
    """

    kind: str
    duration: float
    amplitude: float = 0.0

    def __post_init__(self):
        if self.kind not in ("const", "magic", "free"):
            raise DomainError(f"unknown segment kind {self.kind!r}")
        if self.duration < 0.0:
            raise DomainError(f"segment duration must be >= 0, got {self.duration}")


@dataclass(frozen=True)
class ShapedPulse:
    segments: tuple[PulseSegment, ...]


PulsePolicy = DeltaPulse | ShapedPulse


@dataclass(frozen=True)
class CycleFixedPoint:
    """Steady state of the pulse-then-detect cycle map."""

    s: BlochState
    m: BlochState
    iterations: int
    residual: float


def _feedback_magic(params: RelaxationPair) -> Callable[[float, float], float]:
    plane = magic_plane(params)
    if not plane.present:
        raise DomainError("magic feedback undefined: plane outside the unit ball")
    c = params.gamma_t1 * (1.0 - plane.z0)
    return lambda y, z: -c / y


def _rk4_u_step(
    y: float,
    z: float,
    h: float,
    u_fn: Callable[[float, float], float],
    big_g: float,
    small_g: float,
) -> tuple[float, float]:
    # state-feedback RK4 step; u is evaluated at every stage point
    def rhs(yy: float, zz: float) -> tuple[float, float]:
        u = u_fn(yy, zz)
        return -big_g * yy - u * zz, small_g * (1.0 - zz) + u * yy

    k1y, k1z = rhs(y, z)
    k2y, k2z = rhs(y + 0.5 * h * k1y, z + 0.5 * h * k1z)
    k3y, k3z = rhs(y + 0.5 * h * k2y, z + 0.5 * h * k2z)
    k4y, k4z = rhs(y + h * k3y, z + h * k3z)
    return (
        y + (h / 6.0) * (k1y + 2.0 * k2y + 2.0 * k3y + k4y),
        z + (h / 6.0) * (k1z + 2.0 * k2z + 2.0 * k3z + k4z),
    )


def _integrate_event(
    y: float,
    z: float,
    u_fn: Callable[[float, float], float],
    event: Callable[[float, float], float],
    t_max: float,
    step: float,
    params: RelaxationPair,
    y_relative_cap: bool = False,
) -> tuple[float, float, float]:
    """Advance the state until event(y, z) >= 0; returns (t, y, z).

    Substeps are capped so each stage rotates by at most _KAPPA and, when
    ``y_relative_cap`` is set (singular magic feedback), so y changes by
    at most ~5% per step. The crossing is localized by bisecting the
    substep length, keeping the event time at RK4 accuracy.
    """
    big_g = params.gamma_t2
    small_g = params.gamma_t1
    if event(y, z) >= 0.0:
        return 0.0, y, z
    t = 0.0
    while t < t_max:
        h = min(step, t_max - t)
        u_here = abs(u_fn(y, z))
        if u_here * h > _KAPPA:
            h = _KAPPA / u_here
        if y_relative_cap:
            dy = abs(-big_g * y - u_fn(y, z) * z)
            if dy * h > 0.05 * abs(y):
                h = 0.05 * abs(y) / dy
        y2, z2 = _rk4_u_step(y, z, h, u_fn, big_g, small_g)
        if event(y2, z2) >= 0.0:
            lo, hi = 0.0, h
            for _ in range(60):
                mid = 0.5 * (lo + hi)
                ym, zm = _rk4_u_step(y, z, mid, u_fn, big_g, small_g)
                if event(ym, zm) >= 0.0:
                    hi = mid
                else:
                    lo = mid
            ym, zm = _rk4_u_step(y, z, hi, u_fn, big_g, small_g)
            return t + hi, ym, zm
        y, z = y2, z2
        t += h
    raise BracketingError(f"event not reached within t_max={t_max}")


def _integrate_duration(
    y: float,
    z: float,
    u_fn: Callable[[float, float], float],
    duration: float,
    step: float,
    params: RelaxationPair,
) -> tuple[float, float]:
    big_g = params.gamma_t2
    small_g = params.gamma_t1
    t = 0.0
    while t < duration * (1.0 - 1e-15):
        h = min(step, duration - t)
        u_here = abs(u_fn(y, z))
        if u_here * h > _KAPPA:
            h = _KAPPA / u_here
        y, z = _rk4_u_step(y, z, h, u_fn, big_g, small_g)
        t += h
    return y, z


def apply_policy(
    policy: PulsePolicy,
    state: BlochState,
    params: RelaxationPair,
    step: float = DEFAULT_STEP,
) -> BlochState:
    """Run one control period of the policy from the given state."""
    if isinstance(policy, DeltaPulse):
        return rotate(state, policy.flip)
    y, z = state.y, state.z
    for seg in policy.segments:
        if seg.kind == "const":
            u_fn = lambda yy, zz, a=seg.amplitude: a
        elif seg.kind == "magic":
            u_fn = _feedback_magic(params)
        else:
            u_fn = lambda yy, zz: 0.0
        y, z = _integrate_duration(y, z, u_fn, seg.duration, step, params)
    return BlochState(y, z)


def policy_control_time(policy: PulsePolicy) -> float:
    if isinstance(policy, DeltaPulse):
        return 0.0
    return sum(seg.duration for seg in policy.segments)


def cycle_fixed_point(
    policy: PulsePolicy,
    params: RelaxationPair,
    tol: float = 1e-12,
    max_iter: int = 10_000,
    step: float = DEFAULT_STEP,
) -> CycleFixedPoint:
    """Steady state of S -> relax(apply(policy, S), 1), from equilibrium.

    The cycle map composes a flow with the strictly contracting detection
    relaxation, so iteration converges geometrically; ``max_iter`` only
    guards pathological tolerances.
    """
    if tol <= 0.0:
        raise DomainError(f"tol must be positive, got {tol}")
    s = EQUILIBRIUM
    for i in range(1, max_iter + 1):
        m = apply_policy(policy, s, params, step)
        s_next = relax(m, DETECTION_TIME, params)
        residual = math.hypot(s_next.y - s.y, s_next.z - s.z)
        s = s_next
        if residual <= tol:
            return CycleFixedPoint(s, m, i, residual)
    raise ConvergenceError(
        f"cycle map did not reach tol={tol} in {max_iter} iterations "
        f"(last residual {residual})",
        residual=residual,
    )


def delta_pulse_fixed_point(
    flip: float, params: RelaxationPair
) -> tuple[BlochState, BlochState]:
    """Directly solved steady state (S, M) of the delta-pulse cycle.

    The cycle map is affine, S -> D*R(flip)*S + d with D the detection
    decay and d the recovery offset, so its fixed point is a 2x2 solve.
    """
    e2 = math.exp(-params.gamma_t2 * DETECTION_TIME)
    e1 = math.exp(-params.gamma_t1 * DETECTION_TIME)
    c = math.cos(flip)
    s = math.sin(flip)
    det = (1.0 - e2 * c) * (1.0 - e1 * c) + e1 * e2 * s * s
    sz = (1.0 - e1) * (1.0 - e2 * c) / det
    sy = e2 * s * sz / (1.0 - e2 * c) if abs(1.0 - e2 * c) > 1e-300 else 0.0
    steady = BlochState(sy, sz)
    return steady, rotate(steady, flip)


@dataclass(frozen=True)
class SweepResult:
    best_flip: float
    best_q: float
    table: np.ndarray = field(repr=False)  # (n, 2) columns (flip, q)


def _delta_q(flip: np.ndarray, params: RelaxationPair) -> np.ndarray:
    """Vectorized steady-state y_m(flip); equals Q since delta pulses cost no time."""
    e2 = math.exp(-params.gamma_t2 * DETECTION_TIME)
    e1 = math.exp(-params.gamma_t1 * DETECTION_TIME)
    c = np.cos(flip)
    s = np.sin(flip)
    det = (1.0 - e2 * c) * (1.0 - e1 * c) + e1 * e2 * s * s
    sz = (1.0 - e1) * (1.0 - e2 * c) / det
    sy = e2 * s * sz / (1.0 - e2 * c)
    return c * sy + s * sz


def sweep_delta_pulse(params: RelaxationPair, n: int = 2000) -> SweepResult:
    """Brute-force rediscovery of the optimal flip angle.

    Evaluates the steady-state signal on an n-point grid of flip angles
    in (0, pi), then refines the best cell by golden section.
    """
    if n < 100:
        raise DomainError(f"n must be >= 100, got {n}")
    flips = np.linspace(0.0, math.pi, n + 2)[1:-1]
    q = _delta_q(flips, params)
    i = int(np.argmax(q))
    lo = flips[i - 1] if i > 0 else 0.0
    hi = flips[i + 1] if i < len(flips) - 1 else math.pi

    def q_scalar(flip: float) -> float:
        return float(_delta_q(np.array([flip]), params)[0])

    best = _golden_max(q_scalar, lo, hi, 1e-12)
    return SweepResult(best, q_scalar(best), np.column_stack((flips, q)))


def simulate_structure(
    m: BlochState,
    params: RelaxationPair,
    bang_amplitude: float,
    step: float = DEFAULT_STEP,
) -> tuple[float, float]:
    """Realize the optimal trajectory for m with finite-amplitude bangs.

    Bangs become constant pulses of magnitude ``bang_amplitude``; the
    singular arcs run their feedback fields (u = 0 on the axis, the 1/y
    law on the magic plane) with event stopping at the planned targets.
    Returns the realized control duration and the distance from the
    achieved endpoint to m. Both converge as O(1/amplitude) + O(step^4).
    """
    if bang_amplitude <= 0.0:
        raise DomainError(f"bang_amplitude must be positive, got {bang_amplitude}")
    traj = build_trajectory(m, params, include_detection=False)
    y, z = traj.s.y, traj.s.z
    t_ctrl = 0.0
    for seg in traj.segments:
        if seg.kind == "bang":
            phi = math.atan2(z, y) - seg.end.theta
            if phi == 0.0:
                continue
            u_fn = lambda yy, zz, a=-math.copysign(bang_amplitude, phi): a
            duration = abs(phi) / bang_amplitude
            y, z = _integrate_duration(y, z, u_fn, duration, step, params)
            t_ctrl += duration
        elif seg.kind == "axis_arc":
            z_target = seg.end.z
            t, y, z = _integrate_event(
                y,
                z,
                lambda yy, zz: 0.0,
                lambda yy, zz: zz - z_target,
                seg.duration + 1.0 + step,
                step,
                params,
            )
            t_ctrl += t
        else:  # magic_arc
            y_stop = max(seg.end.y, _Y_FLOOR)
            u_fn = _feedback_magic(params)
            t, y, z = _integrate_event(
                y,
                z,
                u_fn,
                lambda yy, zz: y_stop - yy,
                seg.duration + 1.0 + step,
                step,
                params,
                y_relative_cap=True,
            )
            t_ctrl += t
            if seg.end.y < y_stop:
                # analytic sliver below the floor; the feedback is singular there
                t_ctrl += time_magic(y, seg.end.y, params)
    return t_ctrl, math.hypot(y - m.y, z - m.z)


def rk4_time_vertical(
    z1: float, z2: float, params: RelaxationPair, step: float = DEFAULT_STEP
) -> float:
    """Event-stopped RK4 measurement of the axis travel time."""
    if z2 < z1 or z2 >= 1.0:
        raise DomainError(f"need z1 <= z2 < 1, got ({z1}, {z2})")
    guard = 10.0 + 5.0 * (math.log1p(-z1) - math.log1p(-z2)) / params.gamma_t1
    t, _, _ = _integrate_event(
        0.0, z1, lambda y, z: 0.0, lambda y, z: z - z2, guard, step, params
    )
    return t


def rk4_time_magic(
    y1: float, y2: float, params: RelaxationPair, step: float = DEFAULT_STEP
) -> float:
    """Event-stopped RK4 measurement of the magic-plane travel time.

    For y2 below the integration floor the remaining sliver is
    extrapolated from the local slope of w = y^2, which is read off the
    integrated state rather than the closed form.
    """
    plane = magic_plane(params)
    if not plane.present:
        raise DomainError("magic plane does not intersect the unit ball for these rates")
    if y2 < 0.0 or y1 < y2:
        raise DomainError(f"need y1 >= y2 >= 0, got ({y1}, {y2})")
    if y1 == y2:
        return 0.0
    u_fn = _feedback_magic(params)
    y_stop = max(y2, _Y_FLOOR)
    guard = 10.0 + 10.0 / params.gamma_t2
    t, y, z = _integrate_event(
        y1,
        plane.z0,
        u_fn,
        lambda yy, zz: y_stop - yy,
        guard,
        step,
        params,
        y_relative_cap=True,
    )
    if y2 < y_stop:
        u = u_fn(y, z)
        w_rate = 2.0 * y * (-params.gamma_t2 * y - u * z)
        t += (y * y - y2 * y2) / abs(w_rate)
    return t


def sample_measurement_points(
    rng: np.random.Generator, n: int, r_max: float = 0.999
) -> list[BlochState]:
    """n points drawn uniformly (by area) from the open half-disk."""
    r = r_max * np.sqrt(rng.uniform(size=n))
    phi = rng.uniform(-0.5 * math.pi, 0.5 * math.pi, size=n)
    return [BlochState(float(ri * math.cos(p)), float(ri * math.sin(p))) for ri, p in zip(r, phi)]


def verify_q_surface(
    params: RelaxationPair,
    n_samples: int,
    bang_amplitude: float,
    seed: int = 0,
    step: float = DEFAULT_STEP,
    q_bias: float = 0.0,
) -> float:
    """Worst |Q_analytic - Q_simulated| over random M points.

    ``q_bias`` is a test-harness hook that perturbs the analytic value,
    so the check provably fails when the formula path is wrong.
    """
    if n_samples < 1:
        raise DomainError(f"n_samples must be >= 1, got {n_samples}")
    rng = np.random.default_rng(seed)
    worst = 0.0
    for m in sample_measurement_points(rng, n_samples):
        t_sim, _ = simulate_structure(m, params, bang_amplitude, step)
        q_sim = m.y / math.sqrt(1.0 + t_sim)
        q_ana = q_value(m, params).q + q_bias
        worst = max(worst, abs(q_ana - q_sim))
    return worst


@dataclass(frozen=True)
class VerificationCheck:
    name: str
    tolerance: float
    measured: float
    passed: bool


@dataclass(frozen=True)
class VerificationReport:
    params: RelaxationPair
    seed: int
    checks: tuple[VerificationCheck, ...]

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def to_dict(self) -> dict:
        return {
            "params": {"Gamma": self.params.gamma_t2, "gamma": self.params.gamma_t1},
            "seed": self.seed,
            "passed": self.passed,
            "checks": [
                {
                    "name": c.name,
                    "tolerance": c.tolerance,
                    "measured": c.measured,
                    "passed": c.passed,
                }
                for c in self.checks
            ],
        }


def run_verification(
    params: RelaxationPair,
    seed: int = 12345,
    n_transfers: int = 100,
    n_structure: int = 200,
    n_qsurface: int = 200,
    bang_amplitude: float = 1e4,
    step: float = DEFAULT_STEP,
    q_bias: float = 0.0,
) -> VerificationReport:
    """Full oracle suite against the closed-form layer for one rate pair.

    ``q_bias`` feeds :func:`verify_q_surface` and exists only so tests can
    confirm that a perturbed formula is caught.
    """
    rng = np.random.default_rng(seed)
    checks: list[VerificationCheck] = []

    def add(name: str, tolerance: float, measured: float) -> None:
        measured = float(measured)
        checks.append(VerificationCheck(name, tolerance, measured, measured <= tolerance))

    sol = ernst_solution(params)
    closure = rotate(sol.s, sol.flip)
    add(
        "ernst-cycle-closure",
        1e-12,
        math.hypot(closure.y - sol.m.y, closure.z - sol.m.z),
    )
    add("ernst-radius-balance", 1e-12, abs(sol.s.r - sol.m.r))

    fp = cycle_fixed_point(DeltaPulse(sol.flip), params, tol=1e-14)
    add(
        "cycle-iteration-matches-closed-form",
        1e-9,
        math.hypot(fp.m.y - sol.m.y, fp.m.z - sol.m.z),
    )
    worst_affine = 0.0
    for flip in rng.uniform(0.1, math.pi - 0.1, size=8):
        s_direct, _ = delta_pulse_fixed_point(float(flip), params)
        s_iter = cycle_fixed_point(DeltaPulse(float(flip)), params, tol=1e-14).s
        worst_affine = max(
            worst_affine, math.hypot(s_direct.y - s_iter.y, s_direct.z - s_iter.z)
        )
    add("affine-vs-iterated-fixed-point", 1e-12, worst_affine)

    sweep = sweep_delta_pulse(params)
    add("sweep-flip-vs-closed-form", 1e-6, abs(sweep.best_flip - sol.flip))
    add("sweep-q-vs-closed-form", 1e-8, abs(sweep.best_q - sol.q))

    worst_axis = 0.0
    for _ in range(n_transfers):
        z1 = float(rng.uniform(-0.95, 0.9))
        z2 = float(rng.uniform(z1, 0.95))
        analytic = (math.log1p(-z1) - math.log1p(-z2)) / params.gamma_t1
        worst_axis = max(worst_axis, abs(rk4_time_vertical(z1, z2, params, step) - analytic))
    add("axis-time-vs-rk4", 1e-6, worst_axis)

    plane = magic_plane(params)
    if plane.present:
        worst_magic = 0.0
        y_max = math.sqrt(max(0.0, 1.0 - plane.z0 * plane.z0)) * 0.98
        for _ in range(n_transfers):
            y1 = float(rng.uniform(0.05, y_max))
            y2 = float(rng.uniform(0.0, y1))
            worst_magic = max(
                worst_magic,
                abs(rk4_time_magic(y1, y2, params, step) - time_magic(y1, y2, params)),
            )
        add("magic-time-vs-rk4", 1e-6, worst_magic)

    worst_t = 0.0
    worst_term = 0.0
    for m in sample_measurement_points(rng, n_structure):
        _, t_closed = control_time(m, params)
        t_sim, term = simulate_structure(m, params, bang_amplitude, step)
        worst_t = max(worst_t, abs(t_sim - t_closed))
        worst_term = max(worst_term, term)
    add("structure-time-vs-simulation", 1e-3, worst_t)
    add("structure-terminal-error", 1e-3, worst_term)

    add(
        "qsurface-vs-simulation",
        1e-3,
        verify_q_surface(
            params, n_qsurface, bang_amplitude, seed=seed + 1, step=step, q_bias=q_bias
        ),
    )

    add("q-continuity-across-boundaries", 1e-4, boundary_q_jump(params, 200, 1e-6))

    arg, q_best = maximize_q_global(params, coarse_n=256)
    add(
        "global-max-at-ernst-point",
        1e-6,
        math.hypot(arg.y - sol.m.y, arg.z - sol.m.z),
    )
    add("global-max-q-vs-closed-form", 1e-8, abs(q_best - sol.q))

    return VerificationReport(params, seed, tuple(checks))


def boundary_q_jump(params: RelaxationPair, n_per_curve: int, offset: float) -> float:
    """Largest |Q(+) - Q(-)| across the boundary curves at +-offset along the normal."""
    curves = boundary_curves(params, n_per_curve + 2)
    e2 = math.exp(-2.0 * params.gamma_t2 * DETECTION_TIME)
    e1 = math.exp(-params.gamma_t1 * DETECTION_TIME)
    worst = 0.0

    def probe(y: float, z: float, ny: float, nz: float) -> float:
        norm = math.hypot(ny, nz)
        if norm == 0.0:
            return 0.0
        ny, nz = ny / norm, nz / norm
        pts = []
        for sign in (1.0, -1.0):
            yy = y + sign * offset * ny
            zz = z + sign * offset * nz
            if yy <= 0.0 or yy * yy + zz * zz >= 1.0:
                return 0.0
            pts.append(q_value(BlochState(yy, zz), params).q)
        return abs(pts[0] - pts[1])

    for y, z in curves.ernst_ellipsoid:
        if y < 10.0 * offset:
            continue
        # gradient of r_s^2 - r_m^2
        zs = 1.0 + (z - 1.0) * e1
        worst = max(worst, probe(y, z, 2.0 * y * (e2 - 1.0), 2.0 * (zs * e1 - z)))
    for y, z in curves.magic_radius_circle:
        if y < 10.0 * offset:
            continue
        worst = max(worst, probe(y, z, y, z))
    for y, z in curves.magic_radius_preimage:
        if y < 10.0 * offset or y * y + z * z > (1.0 - 10.0 * offset) ** 2:
            continue
        zs = 1.0 + (z - 1.0) * e1
        worst = max(worst, probe(y, z, 2.0 * y * e2, 2.0 * zs * e1))
    return worst
