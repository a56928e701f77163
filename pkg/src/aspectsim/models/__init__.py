from .config import MODEL_REGISTRY, ModelConfig
from .training import (
    ModelNotFoundError,
    PredictionRecord,
    TrainedModel,
    TrainingError,
    VocabularyMismatchError,
    predict,
    train,
)

__all__ = [
    "MODEL_REGISTRY",
    "ModelConfig",
    "ModelNotFoundError",
    "PredictionRecord",
    "TrainedModel",
    "TrainingError",
    "VocabularyMismatchError",
    "predict",
    "train",
]
