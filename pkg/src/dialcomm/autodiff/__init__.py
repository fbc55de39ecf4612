from .tensor import (
    Tensor,
    Parameter,
    TapeNode,
    ShapeError,
    no_grad,
    forward_op,
    custom_unary,
    straight_through,
    backward,
    backward_order,
    add,
    sub,
    mul,
    div,
    matmul,
    concat,
    index_select,
    gather,
    sum_,
    mean,
    sigmoid,
    tanh,
    softmax,
    log_softmax,
    log,
    exp,
    square,
    abs_,
    max_,
    reshape,
    neg,
    as_tensor,
)
from .nn import MlpSpec, Mlp, Adam, AdamState, adam_step, soft_update, mlp_forward, mlp_predict, init_mlp_params
from .checkpoint import save_params, load_params, CheckpointError
