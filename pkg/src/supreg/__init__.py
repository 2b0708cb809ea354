"""Design-adaptive sup-norm nonparametric regression.

Local polynomial estimation with data-driven bandwidth selection whose
accuracy adapts to the local design density, including designs that vanish
at interior points; plus the rate benchmark, lower-bound testing harness and
Monte Carlo studies that go with it.
"""

from .density import (
    DesignDensity,
    EmpiricalMeasure,
    Sample,
    custom_density,
    density_from_config,
    empirical_mass,
    interval_mass,
    localized_inner,
    localized_norm,
    piecewise_density,
    power_cusp_density,
    sample_model,
    uniform_density,
)
from .errors import (
    EmptyFamily,
    EmptyGrid,
    EmptyWindow,
    InputError,
    NoRoot,
    SingularFit,
    SupregError,
)
from .locpoly import (
    GramSystem,
    LocalFit,
    bias_variance_diagnostic,
    build_gram,
    evaluate,
    evaluate_derivative,
    fit_local,
)
from .rates import (
    HolderSpec,
    RateCurve,
    example_alpha_closed_form,
    holder_seminorm,
    make_holder_test_functions,
    rate_curve,
    solve_h,
)
from .reconstruct import (
    DyadicLayout,
    EstimatorModel,
    check_moment_condition,
    fit_all_knots,
    predict,
    quadrature_matrix,
    sup_norm_error,
)
from .selection import (
    BandwidthGrid,
    ComparisonRecord,
    SelectionTrace,
    ThresholdParams,
    build_grid,
    compare,
    estimate_sigma_mad,
    ideal_window,
    select_and_fit,
    select_bandwidth,
    threshold,
)
from .studies import (
    BayesStats,
    BumpFamily,
    RiskReport,
    build_bump_family,
    loglog_slope,
    run_localized_study,
    run_lower_bound_study,
    run_upper_bound_study,
)

__version__ = "0.1.0"

__all__ = [
    "DesignDensity", "EmpiricalMeasure", "Sample", "custom_density",
    "density_from_config", "empirical_mass", "interval_mass",
    "localized_inner", "localized_norm", "piecewise_density",
    "power_cusp_density", "sample_model", "uniform_density",
    "SupregError", "InputError", "EmptyWindow", "NoRoot", "SingularFit",
    "EmptyGrid", "EmptyFamily",
    "GramSystem", "LocalFit", "build_gram", "fit_local", "evaluate",
    "evaluate_derivative", "bias_variance_diagnostic",
    "HolderSpec", "RateCurve", "solve_h", "rate_curve",
    "example_alpha_closed_form", "make_holder_test_functions",
    "holder_seminorm",
    "DyadicLayout", "EstimatorModel", "fit_all_knots", "predict",
    "sup_norm_error", "check_moment_condition", "quadrature_matrix",
    "BandwidthGrid", "ComparisonRecord", "SelectionTrace", "ThresholdParams",
    "build_grid", "compare", "estimate_sigma_mad", "ideal_window",
    "select_and_fit", "select_bandwidth", "threshold",
    "BayesStats", "BumpFamily", "RiskReport", "build_bump_family",
    "loglog_slope", "run_localized_study", "run_lower_bound_study",
    "run_upper_bound_study",
    "__version__",
]
