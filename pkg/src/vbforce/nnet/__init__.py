"""From-scratch neural building blocks with exact analytic gradients."""

from .cnn import CnnConfig, FeatureCnn
from .features import FeatureVector, concat_features
from .gradcheck import GradCheckReport, NumericError, grad_check, relative_error
from .lstm import (CifgLayer, LstmConfig, LstmStack, cifg_step,
                   cifg_step_backward, sigmoid)
from .params import ParamStore, glorot_uniform

__all__ = [
    "CnnConfig", "FeatureCnn",
    "FeatureVector", "concat_features",
    "CifgLayer", "LstmConfig", "LstmStack", "cifg_step", "cifg_step_backward",
    "sigmoid",
    "ParamStore", "glorot_uniform",
    "GradCheckReport", "NumericError", "grad_check", "relative_error",
]
