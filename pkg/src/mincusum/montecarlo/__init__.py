from .enumeration import ExactOutcome, exact_enumeration
from .estimators import (
    Estimate,
    ExperimentConfig,
    TailRow,
    estimate_arl,
    estimate_conditional_misid,
    estimate_delay,
    estimate_L,
    estimate_partial_misid,
    misid_from_results,
    unconditional_tail,
    verify_condition34,
)
from .kernel import DominanceRow, dkw_band, monotone_kernel_check
from .simulate import (
    DEFAULT_HORIZON,
    PathResults,
    block_rng,
    default_workers,
    simulate,
    simulate_path,
    simulate_single,
)

__all__ = [
    "DEFAULT_HORIZON",
    "DominanceRow",
    "Estimate",
    "ExactOutcome",
    "ExperimentConfig",
    "PathResults",
    "TailRow",
    "block_rng",
    "default_workers",
    "dkw_band",
    "estimate_L",
    "estimate_arl",
    "estimate_conditional_misid",
    "estimate_delay",
    "estimate_partial_misid",
    "exact_enumeration",
    "misid_from_results",
    "monotone_kernel_check",
    "simulate",
    "simulate_path",
    "simulate_single",
    "unconditional_tail",
    "verify_condition34",
]
