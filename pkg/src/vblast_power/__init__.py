"""Transmit power allocation for unordered zero-forcing V-BLAST over Rayleigh fading."""

from .allocator import (
    AllocationSolution,
    AllocMethod,
    Criterion,
    closed_form_allocation,
    lagrange_high_snr,
    low_snr_allocation,
    numerical_allocation,
    simplified_allocation,
)
from .analytic import (
    avg_bler,
    avg_step_ber,
    avg_tber,
    avg_tber_grouped,
    error_propagation_factor,
    maclaurin_coeffs,
    mrc_ber_bpsk,
)
from .core import (
    ConvergenceError,
    InvalidAllocation,
    ModelError,
    Modulation,
    PowerAllocation,
    SnrPoint,
    SystemConfig,
    db_to_linear,
    linear_to_db,
    uniform_allocation,
)
from .gain import (
    GainResult,
    gain_high_snr_approx,
    gain_low_snr_limit,
    snr_gain,
    tber_high_snr_limit,
    verify_gain_monotonicity,
)
from .robustness import finite_robustness, global_bound_check, local_robustness, preset_allocation_eval
from .simulation import (
    ChannelRealization,
    McEstimate,
    Strategy,
    detect,
    instantaneous_allocation,
    instantaneous_bler,
    instantaneous_tber,
    monte_carlo_rates,
    nulling_weights,
    sample_channel,
)

__version__ = "0.1.0"

__all__ = [
    "AllocMethod",
    "AllocationSolution",
    "ChannelRealization",
    "ConvergenceError",
    "Criterion",
    "GainResult",
    "InvalidAllocation",
    "McEstimate",
    "ModelError",
    "Modulation",
    "PowerAllocation",
    "SnrPoint",
    "Strategy",
    "SystemConfig",
    "avg_bler",
    "avg_step_ber",
    "avg_tber",
    "avg_tber_grouped",
    "closed_form_allocation",
    "db_to_linear",
    "detect",
    "error_propagation_factor",
    "finite_robustness",
    "gain_high_snr_approx",
    "gain_low_snr_limit",
    "global_bound_check",
    "instantaneous_allocation",
    "instantaneous_bler",
    "instantaneous_tber",
    "lagrange_high_snr",
    "linear_to_db",
    "local_robustness",
    "low_snr_allocation",
    "maclaurin_coeffs",
    "monte_carlo_rates",
    "mrc_ber_bpsk",
    "nulling_weights",
    "numerical_allocation",
    "preset_allocation_eval",
    "sample_channel",
    "simplified_allocation",
    "snr_gain",
    "tber_high_snr_limit",
    "uniform_allocation",
    "verify_gain_monotonicity",
]
