"""Nearness-of-neighbors attention (NONA) regression with SoftStep masking."""
from .kernels import BACKEND
from .layer import NonaHead
from .similarity import SimilarityKind, pairwise_similarity
from .softstep import SoftStep, SoftStepConfig, SoftStepFamily, ParamMode
from .tensor import Parameter, Tape, Tensor

__all__ = [
    "BACKEND", "NonaHead", "SimilarityKind", "pairwise_similarity", "SoftStep",
    "SoftStepConfig", "SoftStepFamily", "ParamMode", "Parameter", "Tape", "Tensor",
]
__version__ = "0.1.0"
