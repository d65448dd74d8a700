"""Repetitive-control design toolkit and simulated ventilation testbench."""

from .errors import (
    ConfigurationError,
    DesignError,
    ExperimentDiverged,
    FitConvergenceWarning,
    IdentificationError,
    SingularityError,
    UnstableFilterWarning,
    VentrcError,
)
from .lti import (
    DelayLine,
    DiscreteTransferFunction,
    FirKernel,
    FrequencyResponse,
    StreamingFilter,
    apply_fir_zero_phase,
    evaluate,
    filter_stream,
)
from .plant import (
    CircuitParameters,
    PatientScenario,
    VentilatorPlant,
    airway_pressure_node,
    load_scenario,
    reference_profile,
)
from .sysid import (
    MultisineSpec,
    average_frf,
    estimate_delay,
    estimate_frf,
    fit_rational,
)
from .rc_design import (
    RcFilterSet,
    StabilityReport,
    check_stability,
    compute_modifying_sensitivity,
    default_stability_grid,
    design_pipeline,
    design_q_fir,
    zpetc_invert,
)
from .control_rt import (
    BENCHMARK_INTEGRAL_GAIN,
    ControllerConfig,
    IntegralController,
    RepetitiveController,
    VentilatorController,
    benchmark_controller_tf,
    rc_transfer_function,
)
from .harness import (
    BreathLog,
    ComparisonTable,
    ExperimentSpec,
    compare_runs,
    emit_report,
    run_experiment,
    run_full_pipeline,
)

__version__ = "0.1.0"
