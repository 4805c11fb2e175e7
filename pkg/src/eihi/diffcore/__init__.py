"""Differentiable compute core: tensors, the feature capture network,
checkpoints, and finite-difference gradient verification."""

from .tensor import (
    Tensor,
    as_tensor,
    add,
    sub,
    mul,
    div,
    exp,
    log,
    sqrt,
    relu,
    matmul,
    transpose2d,
    reshape,
    tsum,
    tmean,
    concat,
    select_columns,
    softmax,
    log_softmax,
    l2_normalize,
    conv2d,
    avgpool2,
    backward,
    gradients,
)
from .backbone import (
    BackboneParams,
    BackboneSpec,
    ConvBlockSpec,
    default_backbone_spec,
    forward_backbone,
    init_backbone,
    make_rng,
)
from .checkpoint import (
    checkpoint_bytes,
    checkpoint_from_bytes,
    load_checkpoint,
    params_checksum,
    save_checkpoint,
)
from .gradcheck import GradReport, finite_diff_check, relative_error

__all__ = [
    "Tensor", "as_tensor", "add", "sub", "mul", "div", "exp", "log", "sqrt",
    "relu", "matmul", "transpose2d", "reshape", "tsum", "tmean", "concat",
    "select_columns", "softmax", "log_softmax", "l2_normalize", "conv2d",
    "avgpool2", "backward", "gradients",
    "BackboneParams", "BackboneSpec", "ConvBlockSpec", "default_backbone_spec",
    "forward_backbone", "init_backbone", "make_rng",
    "checkpoint_bytes", "checkpoint_from_bytes", "load_checkpoint",
    "params_checksum", "save_checkpoint",
    "GradReport", "finite_diff_check", "relative_error",
]
