from .buffer import Batch, DemoBuffer, ReplayBuffer
from .rollout import (
    ConstantActor,
    EpisodeRecord,
    MentorActor,
    PolicyActor,
    RandomActor,
    Workers,
    collect,
    run_episodes,
    seed_sequence,
)
from .sac import (
    Agent,
    SacConfig,
    UpdateAborted,
    bc_loss,
    bc_update,
    critic_loss,
    policy_loss,
    q_targets,
    sac_update,
    select_action,
)
from .train import METRIC_COLUMNS, RunSpec, TrainConfig, TrainedModel, Trainer, train

__all__ = [
    "Agent", "Batch", "ConstantActor", "DemoBuffer", "EpisodeRecord", "METRIC_COLUMNS", "MentorActor",
    "PolicyActor", "RandomActor", "ReplayBuffer", "RunSpec", "SacConfig", "TrainConfig", "TrainedModel",
    "Trainer", "UpdateAborted", "Workers", "bc_loss", "bc_update", "collect", "critic_loss",
    "policy_loss", "q_targets", "run_episodes", "sac_update", "seed_sequence", "select_action", "train",
]
