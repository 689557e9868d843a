"""Mixed-ADC PMCW MIMO radar: simulation, bounds, and sparse imaging."""

from .baseline import matched_filter
from .crb import (
    CrbReport,
    DerivativeBundle,
    crb_mixed_bounds,
    crb_report,
    derivative_bundle,
    fim_hp_blocks,
    fim_hp_khatri_rao,
    fim_mixed,
    fim_onebit,
    fim_unknown_sigma,
)
from .likelihood import TargetEstimate, fit_amplitudes, nll, nll_grad
from .mlikes import MlikesOptions, SparseEstimate, mlikes_run
from .quantize import (
    AdcConfig,
    MeasurementSet,
    avg_received_power,
    gen_thresholds,
    quantize_mixed,
    signc,
)
from .refine import Peak, RefineResult, cyclic_refine, mbic_select, pick_peaks
from .signal_model import (
    Grid,
    RadarSystem,
    Scene,
    atom,
    dictionary,
    doppler_vec,
    gen_code,
    simulate,
    steering_rx,
    steering_tx,
    vec,
)
from .special import f_prime, g_func, log_phi

__version__ = "0.1.0"
