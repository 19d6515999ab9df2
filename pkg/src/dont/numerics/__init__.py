from .autodiff import (
    Tape,
    Tensor,
    abs_power,
    custom_op,
    grad,
    matmul,
    tanh,
    tensor_mean,
    tensor_sum,
    transpose,
)
from .gradcheck import central_difference, gradients_match
from .linalg import psd_inv_sqrt, psd_sqrt
from .rng import Rng

__all__ = [
    "Tape",
    "Tensor",
    "abs_power",
    "custom_op",
    "grad",
    "matmul",
    "tanh",
    "tensor_mean",
    "tensor_sum",
    "transpose",
    "central_difference",
    "gradients_match",
    "psd_inv_sqrt",
    "psd_sqrt",
    "Rng",
]
