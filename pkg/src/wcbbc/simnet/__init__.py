from .adversary import Adversary, ForgeryError, adversary_step
from .invariants import (
    InvariantReport,
    InvariantResult,
    assert_trace_invariants,
    check_post_gst_bound,
    check_reliable_delivery,
)
from .model import AdversaryStrategy, ProcessOutcome, RunResult, ScriptedSend, SynchronyModel
from .world import DEFAULT_ROUND_CAP, SimWorld, TraceRecord, export_trace, run_instance

__all__ = [
    "Adversary", "AdversaryStrategy", "DEFAULT_ROUND_CAP", "ForgeryError", "InvariantReport",
    "InvariantResult", "ProcessOutcome", "RunResult", "ScriptedSend", "SimWorld", "SynchronyModel",
    "TraceRecord", "adversary_step", "assert_trace_invariants", "check_post_gst_bound",
    "check_reliable_delivery", "export_trace", "run_instance",
]
