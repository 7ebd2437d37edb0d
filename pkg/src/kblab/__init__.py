"""kblab: a numerical laboratory for the forced Burgers system.

The package couples three conjugated flows (linear heat, mean-normalized
heat, forced Burgers) through the Cole-Hopf pair, expands the nonlinear
flows into explicit product-mode series with machine-checkable convergence
certificates, and ships an independent finite-difference time stepper as a
cross-check oracle.
"""

from .cole_hopf import State, StateTag, cole, hopf
from .errors import (
    CertificateError,
    DiscretizationError,
    KblabError,
    NumericalError,
    RangeError,
    ResolutionError,
    SizeGuardError,
    StabilityError,
    ValidationError,
)
from .flows import (
    BlowupReport,
    Trajectory,
    burgers_fd_oracle,
    burgers_flow,
    fd_burgers_trajectory,
    heat_flow,
    heat_mean,
    nonlinear_heat_flow,
    nonlinear_heat_general,
    sink_burgers,
    sink_heat,
)
from .grid import FieldNorms, Grid, ScalarField
from .koopman import (
    ALWAYS_VALID,
    ConvergenceProfile,
    KoopmanTerm,
    MultiIndex,
    SeriesCertificate,
    TruncationSpec,
    absolute_tail_bound,
    burgers_series,
    enumerate_indices,
    heat_series,
    in_omega_b,
    in_omega_n,
    lambda_of,
    mode_a,
    mode_b,
    phi,
    psi,
    sigma,
    tau_b,
    tau_n,
    tau_tilde_b,
    tau_tilde_n,
    verify_estimates,
)
from .spectral import Potential, SpectralBasis, solve_eigen

__version__ = "0.1.0"

__all__ = [
    "ALWAYS_VALID",
    "BlowupReport",
    "CertificateError",
    "ConvergenceProfile",
    "DiscretizationError",
    "FieldNorms",
    "Grid",
    "KblabError",
    "KoopmanTerm",
    "MultiIndex",
    "NumericalError",
    "Potential",
    "RangeError",
    "ResolutionError",
    "ScalarField",
    "SeriesCertificate",
    "SizeGuardError",
    "SpectralBasis",
    "StabilityError",
    "State",
    "StateTag",
    "Trajectory",
    "TruncationSpec",
    "ValidationError",
    "absolute_tail_bound",
    "burgers_fd_oracle",
    "burgers_flow",
    "burgers_series",
    "cole",
    "enumerate_indices",
    "fd_burgers_trajectory",
    "heat_flow",
    "heat_mean",
    "heat_series",
    "hopf",
    "in_omega_b",
    "in_omega_n",
    "lambda_of",
    "mode_a",
    "mode_b",
    "nonlinear_heat_flow",
    "nonlinear_heat_general",
    "phi",
    "psi",
    "sigma",
    "sink_burgers",
    "sink_heat",
    "solve_eigen",
    "tau_b",
    "tau_n",
    "tau_tilde_b",
    "tau_tilde_n",
    "verify_estimates",
    "__version__",
]
