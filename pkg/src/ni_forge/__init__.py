"""Negative-imaginary analysis and nearest-NI controller synthesis."""

from .analysis import (NiVerdict, dc_gain_condition, ni_lmi_matrix, ni_lmi_residual, ni_margins,
                       ni_sample_check, sni_check)
from .lqg import LqgWeights, RiccatiError, care_residual, kalman_gain, lqg_controller, lqr_gain, solve_care
from .lti import (IllPosedInterconnectionError, MinimalityWarning, ModeSpec, PoleEvaluationError, StateSpace,
                  dc_gain, default_grid, flex_plant, freq_response, is_hurwitz, make_grid, poles,
                  positive_feedback, step_response, tf_eval, tf_to_ss)
from .ph import PhForm, admissibility_residual, assemble, assemble_system, project_pd, project_psd, project_skew
from .solver import (DcConstraint, DcRescaleWarning, NearestNiProblem, PerturbationReport, SolverConfig,
                     SolverDivergenceError, SolverResult, dc_gain_rescale, gradients, init_lmi, init_standard,
                     objective, perturbation_report, solve)

__version__ = "0.1.0"
