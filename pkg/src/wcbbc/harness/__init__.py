from .checks import (
    FAMILIES,
    FuzzReport,
    LivenessReport,
    MessageCountReport,
    Scenario,
    ScenarioOutcome,
    fuzz_safety,
    make_scenario,
    message_count_model_check,
    post_gst_liveness,
    run_scenario,
)
from .experiment import (
    SIM_TIMERS,
    ExperimentSpec,
    MetricsRow,
    RunRecord,
    SafetyViolation,
    aggregate,
    draw_proposals,
    records_from_csv,
    run_experiment,
    to_csv,
    write_outputs,
)

__all__ = [
    "ExperimentSpec", "FAMILIES", "FuzzReport", "LivenessReport", "MessageCountReport", "MetricsRow", "RunRecord",
    "SIM_TIMERS", "SafetyViolation", "Scenario", "ScenarioOutcome", "aggregate", "draw_proposals",
    "fuzz_safety", "make_scenario", "message_count_model_check", "post_gst_liveness", "records_from_csv",
    "run_experiment", "run_scenario", "to_csv", "write_outputs",
]
