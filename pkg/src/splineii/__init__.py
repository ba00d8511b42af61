"""Indirect inference with dyadic B-spline projection density estimators."""

from .density import SplineDensity, fit_from_points, resolution_rule, simulated_coeffs, theta_gradient_coeffs
from .errors import ContractError, NumericalError
from .harness import McConfig, McReport, emit_csv, emit_svg_hist, mix64, rate_check, run_montecarlo
from .inference import (
    EstimationConfig,
    EstimationResult,
    ideal_estimate,
    indirect_inference_estimate,
    mle_oracle,
    variance_estimate,
)
from .models import SharedDraws, fisher_information, get_model, simulate_sample
from .objective import eval_Q_pop, eval_Qn, eval_Qnk, precompute
from .optimize import OptConfig, OptResult, minimize
from .spline_core import SplineBasis, gram_matrix, inf_norm_inverse_gram, project, spline_eval

__version__ = "0.1.0"
