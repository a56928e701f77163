from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

# friendly name -> checkpoint identifier; all BASE-size encoders
MODEL_REGISTRY = {
    "bert-base": "bert-base-uncased",
    "scibert": "allenai/scibert_scivocab_uncased",
    "covid-bert": "deepset/covid_bert_base",
    "roberta": "roberta-base",
    "xlnet": "xlnet-base-cased",
    "electra-discriminator": "google/electra-base-discriminator",
    "lstm-baseline": None,
}


@dataclass
class ModelConfig:
    """Training configuration; defaults are the transformer fine-tuning setup.

    Use :meth:`for_model` to get the LSTM baseline defaults.
    """

    model_kind: str = "transformer"
    checkpoint_name: str | None = "allenai/scibert_scivocab_uncased"
    embedding_path: str | None = None
    epochs: int = 4
    learning_rate: float = 2e-5
    batch_size: int = 8
    adam_epsilon: float = 1e-8
    weight_decay: float = 0.0
    max_grad_norm: float | None = 1.0
    schedule: str = "linear"
    warmup_steps: int = 0
    dropout: float = 0.1
    hidden_size: int = 100
    num_layers: int = 2
    attention: bool = True
    embedding_dim: int = 100
    freeze_embeddings: bool = False
    fasttext_epochs: int = 10
    max_length: int = 512
    classification_threshold: float = 0.5
    rng_seed: int = 0
    eval_batch_size: int = 32

    def __post_init__(self):
        if self.model_kind not in ("transformer", "lstm"):
            raise ValueError(f"unknown model_kind {self.model_kind!r}")
        if not 0.0 < self.classification_threshold < 1.0:
            raise ValueError("classification_threshold must be in (0, 1)")
        if self.model_kind == "transformer" and not self.checkpoint_name:
            raise ValueError("transformer models need a checkpoint_name")

    @classmethod
    def for_model(cls, name: str, **overrides) -> ModelConfig:
        """Config for a registry name (``scibert``, ``lstm-baseline``, ...) or a raw checkpoint id/path."""
        if name == "lstm-baseline":
            base = cls(
                model_kind="lstm",
                checkpoint_name=None,
                epochs=10,
                learning_rate=1e-5,
                batch_size=8,
                schedule="constant",
                max_grad_norm=None,
            )
        else:
            base = cls(checkpoint_name=MODEL_REGISTRY.get(name, name))
        return dataclasses.replace(base, **overrides)

    def to_json(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_json(cls, d: dict) -> ModelConfig:
        known = {f.name for f in dataclasses.fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in known})

    def config_hash(self) -> str:
        blob = json.dumps(self.to_json(), sort_keys=True)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def save(self, path: str | Path) -> None:
        data = {**self.to_json(), "config_hash": self.config_hash()}
        Path(path).write_text(json.dumps(data, indent=2, sort_keys=True) + "\n", encoding="utf-8")
