from .adam import AdamState, NonFiniteGradient, adam_step
from .autodiff import Tensor
from .checkpoint import CheckpointError, load_checkpoint, read_spec_hash, save_checkpoint
from .gradcheck import GradCheckReport, grad_check
from .network import (
    BC_PARTS,
    CRITIC_PARTS,
    ENCODER_PARTS,
    PARTITIONS,
    POLICY_PARTS,
    ForwardResult,
    Network,
    NetworkSpec,
    ParamSet,
    backward,
    forward,
    init_params,
    squash,
    squash_t,
)

__all__ = [
    "AdamState", "BC_PARTS", "CRITIC_PARTS", "CheckpointError", "ENCODER_PARTS", "ForwardResult",
    "GradCheckReport", "Network", "NetworkSpec", "NonFiniteGradient", "PARTITIONS", "POLICY_PARTS",
    "ParamSet", "Tensor", "adam_step", "backward", "forward", "grad_check", "init_params",
    "load_checkpoint", "read_spec_hash", "save_checkpoint", "squash", "squash_t",
]
