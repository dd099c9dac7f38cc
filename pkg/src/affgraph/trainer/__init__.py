from .config import ExperimentConfig, Task, build_config, load_config
from .loops import TrainingLog, run, train_batch_affinity, train_relation_attention

__all__ = [
    "ExperimentConfig",
    "Task",
    "TrainingLog",
    "build_config",
    "load_config",
    "run",
    "train_batch_affinity",
    "train_relation_attention",
]
