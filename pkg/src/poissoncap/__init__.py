"""Capacity tools for the discrete-time Poisson channel behind a threshold ADC.

The package computes the capacity and the capacity-achieving discrete input
distribution of a photon-counting channel with dark current, observed
through a low-precision threshold quantizer, under peak and average power
constraints.  The workhorse is an alternating optimization: tilted
Blahut-Arimoto rounds on the probabilities (with a Newton-solved power
multiplier) alternate with Armijo gradient ascent on the mass-point
amplitudes, and results are certified against the Kuhn-Tucker optimality
conditions.
"""

from .channel import (
    ChannelSpec,
    InputDistribution,
    Quantizer,
    bin_probability,
    build_transition,
    count_ceiling,
    output_pmf,
    poisson_log_pmf,
    poisson_pmf,
)
from .ba import (
    EtaState,
    Posterior,
    ba_update,
    mutual_information,
    newton_eta,
    posterior,
    tilted_score,
)
from .amplitudes import (
    GradientReport,
    amplitude_gradient,
    armijo_ascent,
    merge_mass_points,
    transition_derivative,
)
from .solver import (
    KktCertificate,
    SolveReport,
    SolverConfig,
    information_density,
    kkt_certify,
    solve,
    unquantized_capacity,
)
from .thresholds import ThresholdSearchResult, search_1bit, search_multibit
from .bench import SweepRow, run_sweep, uniform_pam_baseline
from .exceptions import (
    DegenerateDistributionError,
    InfeasibleConstraintError,
    PoissonCapError,
)

__version__ = "0.1.0"

__all__ = [
    "ChannelSpec",
    "Quantizer",
    "InputDistribution",
    "poisson_pmf",
    "poisson_log_pmf",
    "bin_probability",
    "build_transition",
    "output_pmf",
    "count_ceiling",
    "Posterior",
    "EtaState",
    "posterior",
    "tilted_score",
    "newton_eta",
    "ba_update",
    "mutual_information",
    "GradientReport",
    "transition_derivative",
    "amplitude_gradient",
    "armijo_ascent",
    "merge_mass_points",
    "SolverConfig",
    "SolveReport",
    "KktCertificate",
    "information_density",
    "kkt_certify",
    "solve",
    "unquantized_capacity",
    "ThresholdSearchResult",
    "search_1bit",
    "search_multibit",
    "SweepRow",
    "run_sweep",
    "uniform_pam_baseline",
    "PoissonCapError",
    "DegenerateDistributionError",
    "InfeasibleConstraintError",
]
