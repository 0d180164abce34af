from .cf import ControlFunctionFit, fit_lpm_cf, fit_poisson_cf, two_stage_least_squares
from .fe_logit import conditional_loglik_bruteforce, fit_conditional_logit_fe
from .hazard import HazardFit, fit_hazard_calibration, risk_set, simulate_hazard_panel
from .linear import FitResult, WaldTest, classical_ols_cov, dummies, fit_reduced_form, ols
from .logit import fit_logit, fit_poisson, fit_structural_logit, logit_predict, structural_design
from .report import fits_report
from .structural import StructuralEstimates, recover_structural

__all__ = [
    "ControlFunctionFit",
    "FitResult",
    "HazardFit",
    "StructuralEstimates",
    "WaldTest",
    "classical_ols_cov",
    "conditional_loglik_bruteforce",
    "dummies",
    "fit_conditional_logit_fe",
    "fit_hazard_calibration",
    "fit_logit",
    "fit_lpm_cf",
    "fit_poisson",
    "fit_poisson_cf",
    "fit_reduced_form",
    "fit_structural_logit",
    "fits_report",
    "logit_predict",
    "ols",
    "recover_structural",
    "risk_set",
    "simulate_hazard_panel",
    "structural_design",
    "two_stage_least_squares",
]
