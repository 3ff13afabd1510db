"""Small float64 autodiff engine with the layers the navigation policy needs."""

from .checkpoint import CheckpointError, dump_params, load_into, parse_checkpoint
from .functional import (
    AttnParams,
    BlockParams,
    ShapeError,
    attention_weights,
    conv2d,
    conv2d_nhwc,
    cross_entropy_weighted,
    gelu,
    layer_norm,
    linear,
    log_softmax,
    mhsa,
    relu,
    softmax,
    transformer_block,
)
from .gradcheck import grad_check, relative_error
from .tensor import Param, Tensor, as_tensor, concat, getitem, matmul, mean, no_grad, reshape, take_rows, transpose

__all__ = [
    "AttnParams", "BlockParams", "CheckpointError", "Param", "ShapeError", "Tensor", "as_tensor",
    "attention_weights", "concat", "conv2d", "conv2d_nhwc", "cross_entropy_weighted", "dump_params", "gelu", "getitem",
    "grad_check", "layer_norm", "linear", "load_into", "log_softmax", "matmul", "mean", "mhsa", "no_grad", "relu",
    "parse_checkpoint", "relative_error", "reshape", "softmax", "take_rows", "transformer_block", "transpose",
]
