from . import nn, ops
from .gradcheck import grad_check
from .ops import (
    add, concat, conv2d, conv_temporal, exp, index, log, log_softmax, matmul, mean, mul,
    pool_avg_temporal, relu, reshape, sigmoid, softmax, standardize, sub, sum, swish,
    transpose,
)
from .tensor import (
    Parameter, Tape, Tensor, as_tensor, default_dtype, make_rng, no_grad, precision,
)

# ops.sum shadows the builtin inside this namespace only
__all__ = [
    "nn", "ops", "grad_check", "Parameter", "Tape", "Tensor", "as_tensor", "default_dtype",
    "make_rng", "no_grad", "precision", "add", "concat", "conv2d", "conv_temporal", "exp",
    "index", "log", "log_softmax", "matmul", "mean", "mul", "pool_avg_temporal", "relu",
    "reshape", "sigmoid", "softmax", "standardize", "sub", "sum", "swish", "transpose",
]
