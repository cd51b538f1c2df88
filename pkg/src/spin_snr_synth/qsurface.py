"""Control times along the singular sets and the figure-of-merit surface Q.

With unbounded control the bangs are instantaneous, so the control time
Tc(M) is spent only on the z-axis and on the magic plane. Both travel
times have exact closed forms: on the axis z obeys dz/dt = gamma*(1-z);
on the magic plane w = y^2 obeys the linear equation
dw/dt = -2*Gamma*w + 2*gamma*(1-z0)*z0. Q(M) = y_m/sqrt(1 + Tc(M)) is
continuous but not smooth across the region boundaries; composing Tc
from trajectory segments (rather than one formula per sheet) makes that
continuity automatic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .bloch import DETECTION_TIME, BlochState, RelaxationPair, relax
from .errors import DomainError
from .synthesis import CLASSIFY_TOL, ControlStructure, MagicPlane, _classify_radii, magic_plane


def time_vertical(z1: float, z2: float, params: RelaxationPair) -> float:
    """Free travel time along the z-axis from z1 up to z2 (z1 <= z2 < 1)."""
    if z2 >= 1.0:
        raise DomainError(f"z2 must be < 1 (the pole is reached only asymptotically), got {z2}")
    if z2 < z1:
        raise DomainError(f"free axis motion is upward only, got z1={z1} > z2={z2}")
    return (math.log1p(-z1) - math.log1p(-z2)) / params.gamma_t1


def _w_inf(params: RelaxationPair, z0: float) -> float:
    # Asymptote of w = y^2 on the magic plane; negative whenever the plane exists.
    return params.gamma_t1 * (1.0 - z0) * z0 / params.gamma_t2


def time_magic(y1: float, y2: float, params: RelaxationPair) -> float:
    """Feedback travel time along the magic plane from y1 down to y2 >= 0.

    Finite even for y2 = 0 because w = y^2 crosses zero on its way to a
    negative asymptote.
    """
    plane = magic_plane(params)
    if not plane.present:
        raise DomainError("magic plane does not intersect the unit ball for these rates")
    if y2 < 0.0 or y1 < y2:
        raise DomainError(f"magic-plane motion needs y1 >= y2 >= 0, got ({y1}, {y2})")
    w_inf = _w_inf(params, plane.z0)
    return math.log((y1 * y1 - w_inf) / (y2 * y2 - w_inf)) / (2.0 * params.gamma_t2)


def control_time(
    m: BlochState, params: RelaxationPair, tol: float = CLASSIFY_TOL
) -> tuple[ControlStructure, float]:
    """Structure tag and control duration Tc for the measurement point m."""
    if m.y < 0.0:
        raise DomainError(f"measurement point must have y >= 0, got y={m.y}")
    r_m = m.r
    if r_m >= 1.0:
        raise DomainError(f"measurement point must lie in the open unit disk, |m|={r_m}")
    r_s = relax(m, DETECTION_TIME, params).r
    plane = magic_plane(params)
    structure = _classify_radii(r_m, r_s, plane, tol)
    return structure, _segment_time(structure, r_m, r_s, plane, params)


def _segment_time(
    structure: ControlStructure,
    r_m: float,
    r_s: float,
    plane: MagicPlane,
    params: RelaxationPair,
) -> float:
    if structure is ControlStructure.B:
        return 0.0
    if structure is ControlStructure.BSvPosB:
        return time_vertical(r_s, r_m, params)
    if structure is ControlStructure.BSvNegB:
        return time_vertical(-r_s, -r_m, params)
    z0 = plane.z0
    y_in = math.sqrt(max(0.0, r_s * r_s - z0 * z0))
    if structure is ControlStructure.BShB:
        y_out = math.sqrt(max(0.0, r_m * r_m - z0 * z0))
        return time_magic(y_in, y_out, params)
    # BShSvNegB: ride the plane to the axis, then the axis up to -r_m.
    return time_magic(y_in, 0.0, params) + time_vertical(z0, -r_m, params)


@dataclass(frozen=True)
class QSample:
    """One evaluated point of the Q surface."""

    m: BlochState
    structure: ControlStructure
    t_control: float
    q: float


@dataclass(frozen=True)
class QGrid:
    """Row-major lattice evaluation of Q over the open half-disk."""

    params: RelaxationPair
    resolution: tuple[int, int]
    samples: list[QSample] = field(repr=False)


def q_value(m: BlochState, params: RelaxationPair) -> QSample:
    """Figure of merit Q = y_m/sqrt(1 + Tc) at a single M point."""
    structure, t_c = control_time(m, params)
    return QSample(m, structure, t_c, m.y / math.sqrt(1.0 + t_c))


_STRUCTURE_CODES = tuple(ControlStructure)  # index -> structure


def q_grid_arrays(
    params: RelaxationPair, n_y: int, n_z: int
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Vectorized Q evaluation on the (n_y, n_z) lattice of the half-disk.

    Returns flat arrays (y, z, code, t_control, q) in row-major order
    (y outer, z inner), restricted to {0 < y, y^2 + z^2 < 1}. ``code``
    indexes into ``tuple(ControlStructure)``.
    """
    if n_y < 2 or n_z < 2:
        raise DomainError(f"grid resolution must be >= 2, got ({n_y}, {n_z})")
    return q_lattice_arrays(params, np.linspace(0.0, 1.0, n_y), np.linspace(-1.0, 1.0, n_z))


def q_lattice_arrays(
    params: RelaxationPair, y_axis: np.ndarray, z_axis: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Same as :func:`q_grid_arrays` for explicit axis vectors (chunkable)."""
    yy, zz = np.meshgrid(y_axis, z_axis, indexing="ij")
    y = yy.ravel()
    z = zz.ravel()
    keep = (y > 0.0) & (y * y + z * z < 1.0)
    y = y[keep]
    z = z[keep]

    big_g = params.gamma_t2
    small_g = params.gamma_t1
    r_m = np.hypot(y, z)
    ys = y * math.exp(-big_g * DETECTION_TIME)
    zs = 1.0 + (z - 1.0) * math.exp(-small_g * DETECTION_TIME)
    r_s = np.hypot(ys, zs)

    plane = magic_plane(params)
    codes = np.empty(y.shape, dtype=np.int8)
    t_c = np.zeros(y.shape, dtype=float)

    is_b = np.abs(r_s - r_m) <= CLASSIFY_TOL
    is_pos = ~is_b & (r_s < r_m)
    rest = ~is_b & ~is_pos
    if plane.present:
        za = abs(plane.z0)
        is_hv = rest & (r_s > za) & (za > r_m)
        is_h = rest & ~is_hv & (r_m >= za)
        is_neg = rest & ~is_hv & ~is_h
    else:
        is_hv = np.zeros(y.shape, dtype=bool)
        is_h = np.zeros(y.shape, dtype=bool)
        is_neg = rest

    order = (is_b, is_pos, is_neg, is_h, is_hv)
    for code, mask in enumerate(order):
        codes[mask] = code

    t_c[is_pos] = (np.log1p(-r_s[is_pos]) - np.log1p(-r_m[is_pos])) / small_g
    t_c[is_neg] = (np.log1p(r_s[is_neg]) - np.log1p(r_m[is_neg])) / small_g
    if plane.present:
        z0 = plane.z0
        w_inf = _w_inf(params, z0)
        w_s = np.maximum(r_s * r_s - z0 * z0, 0.0)
        w_m = np.maximum(r_m * r_m - z0 * z0, 0.0)
        two_g = 2.0 * big_g
        t_c[is_h] = np.log((w_s[is_h] - w_inf) / (w_m[is_h] - w_inf)) / two_g
        t_c[is_hv] = np.log((w_s[is_hv] - w_inf) / -w_inf) / two_g + (
            np.log1p(-z0) - np.log1p(r_m[is_hv])
        ) / small_g

    q = y / np.sqrt(1.0 + t_c)
    return y, z, codes, t_c, q


def q_grid(params: RelaxationPair, n_y: int, n_z: int) -> QGrid:
    """Lattice evaluation of :func:`q_value` over the open half-disk."""
    y, z, codes, t_c, q = q_grid_arrays(params, n_y, n_z)
    samples = [
        QSample(BlochState(yi, zi), _STRUCTURE_CODES[ci], ti, qi)
        for yi, zi, ci, ti, qi in zip(
            y.tolist(), z.tolist(), codes.tolist(), t_c.tolist(), q.tolist()
        )
    ]
    return QGrid(params, (n_y, n_z), samples)


@dataclass(frozen=True)
class Segment:
    """One leg of the optimal cycle.

    kind is one of "bang" (instantaneous rotation by ``flip``),
    "magic_arc", "axis_arc" (feedback / free arcs of the given duration)
    and "detection" (the free relaxation of length 1 from M back to S).
    ``params`` is carried only by detection segments, whose path is the
    relaxation curve rather than a straight line or circular arc.
    """

    kind: str
    start: BlochState
    end: BlochState
    duration: float
    flip: float | None = None
    params: RelaxationPair | None = None

    def polyline(self, n: int = 32) -> np.ndarray:
        """(n, 2) sample of the segment path for plotting."""
        if self.kind == "bang":
            angles = self.start.theta - np.linspace(0.0, self.flip, n)
            r = self.start.r
            return np.column_stack((r * np.cos(angles), r * np.sin(angles)))
        if self.kind == "detection":
            pts = [relax(self.start, t, self.params) for t in np.linspace(0.0, self.duration, n)]
            return np.array([[p.y, p.z] for p in pts])
        ys = np.linspace(self.start.y, self.end.y, n)
        zs = np.linspace(self.start.z, self.end.z, n)
        return np.column_stack((ys, zs))


@dataclass(frozen=True)
class Trajectory:
    """Ordered segments of one optimal cycle for a measurement point."""

    m: BlochState
    s: BlochState
    structure: ControlStructure
    segments: tuple[Segment, ...]
    t_control: float


def build_trajectory(
    m: BlochState, params: RelaxationPair, include_detection: bool = True
) -> Trajectory:
    """Construct the segment list realizing the optimal structure for m.

    Bangs are recorded with their signed flip angle (positive tips +z
    toward +y) and zero duration; arc durations come from the closed-form
    travel times.
    """
    structure, t_total = control_time(m, params)
    s = relax(m, DETECTION_TIME, params)
    plane = magic_plane(params)
    r_m, r_s = m.r, s.r
    segs: list[Segment] = []

    def bang(a: BlochState, b: BlochState) -> None:
        segs.append(Segment("bang", a, b, 0.0, flip=a.theta - b.theta))

    if structure is ControlStructure.B:
        bang(s, m)
    elif structure is ControlStructure.BSvPosB:
        p1 = BlochState(0.0, r_s)
        p2 = BlochState(0.0, r_m)
        bang(s, p1)
        segs.append(Segment("axis_arc", p1, p2, time_vertical(r_s, r_m, params)))
        bang(p2, m)
    elif structure is ControlStructure.BSvNegB:
        p1 = BlochState(0.0, -r_s)
        p2 = BlochState(0.0, -r_m)
        bang(s, p1)
        segs.append(Segment("axis_arc", p1, p2, time_vertical(-r_s, -r_m, params)))
        bang(p2, m)
    else:
        z0 = plane.z0
        y1 = math.sqrt(max(0.0, r_s * r_s - z0 * z0))
        p1 = BlochState(y1, z0)
        bang(s, p1)
        if structure is ControlStructure.BShB:
            y2 = math.sqrt(max(0.0, r_m * r_m - z0 * z0))
            p2 = BlochState(y2, z0)
            segs.append(Segment("magic_arc", p1, p2, time_magic(y1, y2, params)))
            bang(p2, m)
        else:  # BShSvNegB
            p2 = BlochState(0.0, z0)
            p3 = BlochState(0.0, -r_m)
            segs.append(Segment("magic_arc", p1, p2, time_magic(y1, 0.0, params)))
            segs.append(Segment("axis_arc", p2, p3, time_vertical(z0, -r_m, params)))
            bang(p3, m)

    if include_detection:
        segs.append(Segment("detection", m, s, DETECTION_TIME, params=params))
    return Trajectory(m, s, structure, tuple(segs), t_total)
