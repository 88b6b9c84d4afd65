"""Classical transport, quantum eigenstates and localization statistics for the
billiard family ``w = z + lam * z**2``."""
from .classical import ChaoticGrid, PhasePoint, TransportResult, alpha, bounce, chaotic_grid, transport_time
from .geometry import BilliardShape, BoundaryPoint, arclength_of_theta, area, boundary_point, theta_of_arclength
from .husimi import (
    HusimiGrid,
    LocalizationRecord,
    classify,
    coherent_overlap,
    entropy_A,
    husimi_grid,
    nipr,
    overlap_index,
)
from .quantum import (
    EigenstateRecord,
    SolverOptions,
    SpectralWindow,
    circle_oracle,
    solve_window,
    wavefunction_at,
    weyl_count,
)

__all__ = [
    "BilliardShape", "BoundaryPoint", "boundary_point", "arclength_of_theta", "theta_of_arclength", "area",
    "PhasePoint", "TransportResult", "ChaoticGrid", "bounce", "transport_time", "chaotic_grid", "alpha",
    "EigenstateRecord", "SpectralWindow", "SolverOptions", "solve_window", "circle_oracle", "wavefunction_at",
    "weyl_count", "HusimiGrid", "LocalizationRecord", "coherent_overlap", "husimi_grid", "entropy_A", "nipr",
    "overlap_index", "classify",
]
