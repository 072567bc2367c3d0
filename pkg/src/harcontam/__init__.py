"""Long-run variance estimation and HAR inference under low frequency contamination."""
__version__ = "0.1.0"

from .errors import (
    BoundaryError,
    DegenerateVarianceError,
    DomainError,
    HarContamError,
    NumericError,
    SchemaError,
    SpecificationError,
    UnknownNameError,
    UnsupportedModelError,
)
from .models import (
    OutlierRule,
    ParamFunc,
    RegimeSpec,
    SlsSpec,
    TimeSeries,
    builtin_spec,
    d_star_true,
    local_autocov_true,
    local_spectrum,
    simulate_path,
    theoretical_gamma,
)
from .spectral import (
    d_star_hat,
    dk_autocov,
    dk_autocov_kernel,
    local_autocov_hat,
    local_periodogram,
    periodogram,
    sample_autocov,
)
from .lrv import LrvEstimate, dk_bandwidths, dk_hac, estimate_lrv
from .inference import DmDesign, TestResult, dm_forecast_harness, dm_test, t_test_location
from .edgeworth import EdgeworthCdf, cbar1, cbar2, edgeworth_cdf, spectral_summary_tvar1
from .montecarlo import (
    Experiment,
    ExperimentTable,
    builtin_experiment,
    compare_to_reference,
    run_experiment,
)
