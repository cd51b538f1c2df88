"""Steady-state SNR-per-unit-time synthesis for a pulsed spin-1/2 ensemble.

Exact planar Bloch dynamics, the five-way optimal-control classification
of measurement points, the analytic figure-of-merit surface Q, the Ernst
solution, and an ODE-based oracle that independently verifies every
closed form.
"""

from .bloch import (
    DEFAULT_STEP,
    DETECTION_TIME,
    EPS_BALL,
    EQUILIBRIUM,
    BlochState,
    ExperimentTiming,
    RelaxationPair,
    integrate,
    normalize_params,
    radial_speed,
    radial_speed_dtheta,
    relax,
    relax_inverse,
    rotate,
    total_snr,
)
from .ernst import (
    ErnstSolution,
    QMaxSurface,
    ernst_q,
    ernst_solution,
    maximize_on_ellipsoid,
    maximize_q_global,
    q_max_surface,
)
from .errors import (
    BallEscapeError,
    BracketingError,
    ConvergenceError,
    DomainError,
    PhysicalityError,
    SpinSnrError,
)
from .oracle import (
    CycleFixedPoint,
    DeltaPulse,
    PulseSegment,
    ShapedPulse,
    SweepResult,
    VerificationCheck,
    VerificationReport,
    cycle_fixed_point,
    delta_pulse_fixed_point,
    rk4_time_magic,
    rk4_time_vertical,
    run_verification,
    simulate_structure,
    sweep_delta_pulse,
    verify_q_surface,
)
from .qsurface import (
    QGrid,
    QSample,
    Segment,
    Trajectory,
    build_trajectory,
    control_time,
    q_grid,
    q_grid_arrays,
    q_value,
    time_magic,
    time_vertical,
)
from .synthesis import (
    CLASSIFY_TOL,
    BoundaryCurves,
    ControlStructure,
    MagicPlane,
    SynthesisRegime,
    boundary_curves,
    classify,
    ellipsoid_y,
    ernst_ellipsoid_residual,
    magic_plane,
    regime,
    regime_boundaries,
    zero_radial_speed_residual,
)

__version__ = "0.1.0"
