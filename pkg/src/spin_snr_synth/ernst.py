"""The Ernst solution and the global maximization of Q.

The maximum of Q over the half-disk sits on the Ernst ellipsoid, where a
single instantaneous pulse closes the cycle (Tc = 0) and Q reduces to
y_m. Maximizing y along the ellipsoid gives the closed form

    z_m = 1/(1 + e^gamma)
    y_m = e^Gamma/(1 + e^gamma) * sqrt((e^(2*gamma) - 1)/(e^(2*Gamma) - 1))

and the flip angle of the closing pulse is the classical Ernst angle
arccos((e^-gamma + e^-Gamma)/(1 + e^-(Gamma+gamma))). The numeric
optimizers in this module rediscover that point without using the
closed form, which is how the formulas get verified.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import optimize

from .bloch import DETECTION_TIME, BlochState, RelaxationPair, relax
from .errors import BracketingError, DomainError
from .qsurface import q_grid_arrays, q_value
from .synthesis import SynthesisRegime, ellipsoid_y, regime, regime_boundaries

_INV_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class ErnstSolution:
    """Optimal steady-state cycle: measurement point, steady state, Q, flip."""

    m: BlochState
    s: BlochState
    q: float
    flip: float


def ernst_solution(params: RelaxationPair) -> ErnstSolution:
    """Closed-form optimal point and Ernst angle for the given rates."""
    big_g = params.gamma_t2
    small_g = params.gamma_t1
    z_m = 1.0 / (1.0 + math.exp(small_g))
    # e^G/sqrt(e^(2G)-1) = 1/sqrt(1-e^(-2G)) avoids overflow at large Gamma
    y_m = math.sqrt(math.expm1(2.0 * small_g)) / (
        (1.0 + math.exp(small_g)) * math.sqrt(-math.expm1(-2.0 * big_g))
    )
    flip = math.acos(
        (math.exp(-small_g) + math.exp(-big_g)) / (1.0 + math.exp(-big_g - small_g))
    )
    m = BlochState(y_m, z_m)
    return ErnstSolution(m, relax(m, DETECTION_TIME, params), y_m, flip)


def _golden_max(f, lo: float, hi: float, tol: float) -> float:
    """Abscissa of the maximum of a unimodal f on [lo, hi]."""
    x1 = hi - _INV_GOLDEN * (hi - lo)
    x2 = lo + _INV_GOLDEN * (hi - lo)
    f1, f2 = f(x1), f(x2)
    while hi - lo > tol:
        if f1 < f2:
            lo, x1, f1 = x1, x2, f2
            x2 = lo + _INV_GOLDEN * (hi - lo)
            f2 = f(x2)
        else:
            hi, x2, f2 = x2, x1, f1
            x1 = hi - _INV_GOLDEN * (hi - lo)
            f1 = f(x1)
    return 0.5 * (lo + hi)


def maximize_on_ellipsoid(params: RelaxationPair) -> ErnstSolution:
    """Numerically maximize y along the Ernst ellipsoid.

    Golden-section on the z parameterization locates the peak; a
    finite-difference stationarity bisection then polishes it past the
    comparison noise floor of the flat top. Must coincide with
    :func:`ernst_solution` to ~1e-9 in both coordinates.
    """

    def y_of(z: float) -> float:
        y = ellipsoid_y(z, params, tol=1e-15)
        if y is None:
            raise BracketingError(f"no ellipsoid point at z={z}")
        return y

    z_star = _golden_max(y_of, 1e-9, 1.0 - 1e-9, 1e-12)

    # dy/dz changes sign across the peak; bisect it on a small bracket.
    h = 1e-5

    def slope(z: float) -> float:
        return (y_of(z + h) - y_of(z - h)) / (2.0 * h)

    lo, hi = z_star - 1e-4, z_star + 1e-4
    s_lo, s_hi = slope(lo), slope(hi)
    if s_lo > 0.0 > s_hi:
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            if slope(mid) > 0.0:
                lo = mid
            else:
                hi = mid
        z_star = 0.5 * (lo + hi)

    m = BlochState(y_of(z_star), z_star)
    s = relax(m, DETECTION_TIME, params)
    return ErnstSolution(m, s, m.y, s.theta - m.theta)


def maximize_q_global(
    params: RelaxationPair, coarse_n: int = 512
) -> tuple[BlochState, float]:
    """Global maximum of Q over the open half-disk.

    Coarse lattice scan followed by Nelder-Mead refinement from the five
    best cells, with shrinking-simplex restarts because the maximum sits
    on a ridge where Q is continuous but not smooth.
    """
    if coarse_n < 64:
        raise DomainError(f"coarse_n must be >= 64, got {coarse_n}")
    y, z, _, _, q = q_grid_arrays(params, coarse_n, coarse_n)

    def neg_q(x: np.ndarray) -> float:
        yy, zz = float(x[0]), float(x[1])
        if yy <= 0.0 or yy * yy + zz * zz >= 1.0:
            return np.inf
        return -q_value(BlochState(yy, zz), params).q

    starts = np.argsort(q)[-5:]
    best_x = None
    best_val = np.inf
    for idx in starts:
        x0 = np.array([y[idx], z[idx]])
        val = -q[idx]
        for scale in (2.0 / coarse_n, 1e-5, 1e-7):
            res = optimize.minimize(
                neg_q,
                x0,
                method="Nelder-Mead",
                options={
                    "xatol": 1e-12,
                    "fatol": 1e-14,
                    "maxiter": 4000,
                    "initial_simplex": _simplex(x0, scale),
                },
            )
            if res.fun < val:
                x0, val = res.x, res.fun
        if val < best_val:
            best_x, best_val = x0, val
    return BlochState(float(best_x[0]), float(best_x[1])), -best_val


def _simplex(x0: np.ndarray, scale: float) -> np.ndarray:
    return np.array([x0, x0 + [scale, 0.0], x0 + [0.0, scale]])


@dataclass(frozen=True)
class QMaxSurface:
    """Ernst-solution Q over a (gamma, Gamma) lattice.

    ``q`` and ``regimes`` are indexed [i_gamma, i_Gamma]; unphysical
    cells (2*Gamma < gamma) carry q = nan and physical = False.
    ``gamma_ab``/``gamma_bc`` are the two regime-transition curves and
    ``gamma_phys`` the physicality line Gamma = gamma/2, all sampled on
    the gamma axis.
    """

    gamma: np.ndarray
    big_gamma: np.ndarray
    q: np.ndarray
    regimes: np.ndarray
    physical: np.ndarray
    gamma_ab: np.ndarray
    gamma_bc: np.ndarray
    gamma_phys: np.ndarray


def ernst_q(big_g: np.ndarray, small_g: np.ndarray) -> np.ndarray:
    """Vectorized closed-form optimal Q (the y coordinate of the Ernst point)."""
    return np.sqrt(np.expm1(2.0 * small_g)) / (
        (1.0 + np.exp(small_g)) * np.sqrt(-np.expm1(-2.0 * big_g))
    )


def q_max_surface(
    gamma_range: tuple[float, float],
    big_gamma_range: tuple[float, float],
    n: tuple[int, int],
) -> QMaxSurface:
    """Evaluate the optimal Q over a rate lattice with regime annotations."""
    (g_lo, g_hi), (bg_lo, bg_hi) = gamma_range, big_gamma_range
    n_g, n_bg = n
    if g_lo <= 0.0 or bg_lo <= 0.0 or g_hi <= g_lo or bg_hi <= bg_lo:
        raise DomainError("rate ranges must be positive and increasing")
    if n_g < 2 or n_bg < 2:
        raise DomainError(f"lattice resolution must be >= 2, got {n}")

    gamma = np.linspace(g_lo, g_hi, n_g)
    big_gamma = np.linspace(bg_lo, bg_hi, n_bg)
    gg, bb = np.meshgrid(gamma, big_gamma, indexing="ij")
    physical = 2.0 * bb >= gg
    q = ernst_q(bb, gg)
    q[~physical] = np.nan

    ab = np.array([regime_boundaries(g)[0] for g in gamma])
    bc = 1.5 * gamma
    regimes = np.where(bb <= bc[:, None], SynthesisRegime.C.value,
                       np.where(bb >= ab[:, None], SynthesisRegime.A.value,
                                SynthesisRegime.B.value))
    return QMaxSurface(gamma, big_gamma, q, regimes, physical, ab, bc, 0.5 * gamma)
