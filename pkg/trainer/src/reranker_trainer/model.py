"""Linear pairwise scorer with the listwise softmax cross-entropy objective.

Per group the loss is the negative log-softmax of the positive's score
against all k scores in the group; a batch averages its groups. Gradients
are exact (softmax minus one-hot), so full-batch descent on a separable
fixture converges monotonically.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .features import FEATURE_DIM, featurize


def group_loss(scores: np.ndarray, pos_index: int) -> float:
    """-log softmax(scores)[pos_index], computed stably."""
    shifted = scores - np.max(scores)
    log_denom = float(np.log(np.sum(np.exp(shifted))))
    return -(float(shifted[pos_index]) - log_denom)


def group_loss_grad(scores: np.ndarray, pos_index: int) -> np.ndarray:
    """d loss / d scores: softmax minus the one-hot positive."""
    shifted = np.exp(scores - np.max(scores))
    probs = shifted / np.sum(shifted)
    probs[pos_index] -= 1.0
    return probs


@dataclass
class TrainConfig:
    group_size: int = 4
    batch_size: int = 32
    epochs: int = 50
    learning_rate: float = 0.5
    base_model: str = "lexical-v1"
    seed: int = 0
    holdout_fraction: float = 0.2

    def __post_init__(self):
        if self.group_size < 2:
            raise ValueError("group_size must be >= 2")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")


@dataclass
class PairScorer:
    base_model: str
    weights: np.ndarray

    @classmethod
    def initial(cls, base_model: str) -> "PairScorer":
        return cls(base_model=base_model, weights=np.zeros(FEATURE_DIM[base_model]))

    def score(self, query: str, doc: str) -> float:
        return float(self.weights @ featurize(self.base_model, query, doc))

    def save(self, directory: str | Path):
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        (directory / "model.json").write_text(
            json.dumps(
                {"base_model": self.base_model, "weights": self.weights.tolist()},
                indent=2,
            ),
            encoding="utf-8",
        )

    @classmethod
    def load(cls, directory: str | Path) -> "PairScorer":
        data = json.loads((Path(directory) / "model.json").read_text(encoding="utf-8"))
        return cls(base_model=data["base_model"], weights=np.asarray(data["weights"]))


def dataset_loss(scorer: PairScorer, feature_groups: list[np.ndarray]) -> float:
    """Mean group loss with the positive always at row 0."""
    total = 0.0
    for feats in feature_groups:
        total += group_loss(feats @ scorer.weights, 0)
    return total / len(feature_groups)


def evaluate_ranking(scorer: PairScorer, groups) -> float:
    """Accuracy@1: fraction of groups whose positive scores strictly highest.

    Ties count as failures.
    """
    if not groups:
        return 0.0
    wins = 0
    for g in groups:
        pos = scorer.score(g.query, g.pos)
        if all(pos > scorer.score(g.query, n) for n in g.negs):
            wins += 1
    return wins / len(groups)
