"""Confidence intervals and discovery significance for Poisson counting
experiments whose background is known with Gaussian uncertainty or estimated
from off-zone measurements with per-zone efficiency systematics."""

from ._backend import available_backends, backend_name, set_backend
from .bayes import (
    IntervalResult,
    ScanGrid,
    bayes_limit_flux,
    bayes_limit_onoff,
    bayes_limit_onoff_sys,
    bayes_limit_profile_known_bkg,
    bayes_upper_limit_poisson,
    chi2_approx_limit,
    credible_interval,
    default_grid,
)
from .errors import (
    BracketingError,
    DomainError,
    EmptyConfidenceSetError,
    QuadratureError,
)
from .likelihoods import (
    CountingObservation,
    FluxCalibration,
    KnownBackgroundModel,
    NuisanceState,
    OnOffObservation,
    log_flux_known_bkg,
    log_flux_onoff_sys,
    log_known_bkg_sys,
    log_marginal_known_bkg,
    log_onoff,
    log_onoff_sys,
    log_poisson_known_bkg,
)
from .neyman import (
    ConfidenceBelt,
    build_belt,
    fc_interval,
    fc_marginal_interval,
    fc_rank,
    load_belt,
    save_belt,
)
from .profiler import (
    ProfileSolution,
    profile_b_known_bkg,
    profile_b_onoff,
    profile_flux_known_bkg,
    profile_flux_onoff_sys,
    profile_onoff_sys,
)
from .significance import (
    SignificanceResult,
    lima_significance,
    onoff_sys_significance,
)
from .toymc import (
    CoverageSummary,
    StudySummary,
    ToyConfig,
    coverage_study,
    generate_onoff,
    significance_study,
)

__version__ = "0.1.0"

__all__ = [
    "available_backends",
    "backend_name",
    "set_backend",
    "IntervalResult",
    "ScanGrid",
    "bayes_limit_flux",
    "bayes_limit_onoff",
    "bayes_limit_onoff_sys",
    "bayes_limit_profile_known_bkg",
    "bayes_upper_limit_poisson",
    "chi2_approx_limit",
    "credible_interval",
    "default_grid",
    "BracketingError",
    "DomainError",
    "EmptyConfidenceSetError",
    "QuadratureError",
    "CountingObservation",
    "FluxCalibration",
    "KnownBackgroundModel",
    "NuisanceState",
    "OnOffObservation",
    "log_flux_known_bkg",
    "log_flux_onoff_sys",
    "log_known_bkg_sys",
    "log_marginal_known_bkg",
    "log_onoff",
    "log_onoff_sys",
    "log_poisson_known_bkg",
    "ConfidenceBelt",
    "build_belt",
    "fc_interval",
    "fc_marginal_interval",
    "fc_rank",
    "load_belt",
    "save_belt",
    "ProfileSolution",
    "profile_b_known_bkg",
    "profile_b_onoff",
    "profile_flux_known_bkg",
    "profile_flux_onoff_sys",
    "profile_onoff_sys",
    "SignificanceResult",
    "lima_significance",
    "onoff_sys_significance",
    "CoverageSummary",
    "StudySummary",
    "ToyConfig",
    "coverage_study",
    "generate_onoff",
    "significance_study",
]
