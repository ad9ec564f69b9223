"""Training loop and artifact export.

Outputs per run: a model directory (weights + featurizer id), a
loss_curve.csv (epoch, mean loss over all training groups), and a
scores.tsv replay table of (query-hash, doc-hash, score) rows covering
every pair in the input file. Hashes are the first 16 hex chars of the
sha256 of the text, matching the synthesis engine's replay provider.
"""

from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data import Group, load_groups, shape_groups, split_holdout
from .features import featurize
from .model import PairScorer, TrainConfig, dataset_loss, evaluate_ranking, group_loss_grad


def text_key(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()[:16]


@dataclass
class TrainResult:
    scorer: PairScorer
    loss_curve: list[float]
    heldout_accuracy: float
    groups_trained: int
    groups_heldout: int
    skipped_lines: int


def _feature_groups(groups: list[Group], base_model: str) -> list[np.ndarray]:
    out = []
    for g in groups:
        rows = [featurize(base_model, g.query, g.pos)]
        rows.extend(featurize(base_model, g.query, n) for n in g.negs)
        out.append(np.stack(rows))
    return out


def train(groups_path: str | Path, config: TrainConfig, out_dir: str | Path) -> TrainResult:
    raw_groups, skipped = load_groups(groups_path)
    scorer = PairScorer.initial(config.base_model)
    shaped = shape_groups(raw_groups, config.group_size, scorer.score, seed=config.seed)
    train_groups, heldout = split_holdout(shaped, config.holdout_fraction, seed=config.seed)
    if not train_groups:
        raise ValueError("no training groups after the holdout split")

    feats = _feature_groups(train_groups, config.base_model)
    curve = [dataset_loss(scorer, feats)]  # epoch 0: untouched model
    for _ in range(config.epochs):
        for start in range(0, len(feats), config.batch_size):
            batch = feats[start : start + config.batch_size]
            grad = np.zeros_like(scorer.weights)
            for rows in batch:
                scores = rows @ scorer.weights
                grad += group_loss_grad(scores, 0) @ rows
            scorer.weights -= config.learning_rate * grad / len(batch)
        curve.append(dataset_loss(scorer, feats))

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    scorer.save(out_dir / "model")
    with (out_dir / "loss_curve.csv").open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "loss"])
        for epoch, loss in enumerate(curve):
            writer.writerow([epoch, f"{loss:.8f}"])

    export_scores(scorer, raw_groups, out_dir / "scores.tsv")
    result = TrainResult(
        scorer=scorer,
        loss_curve=curve,
        heldout_accuracy=evaluate_ranking(scorer, heldout) if heldout else float("nan"),
        groups_trained=len(train_groups),
        groups_heldout=len(heldout),
        skipped_lines=skipped,
    )
    (out_dir / "train_summary.json").write_text(
        json.dumps(
            {
                "initial_loss": curve[0],
                "final_loss": curve[-1],
                "epochs": config.epochs,
                "heldout_accuracy": result.heldout_accuracy,
                "groups_trained": result.groups_trained,
                "groups_heldout": result.groups_heldout,
                "skipped_lines": skipped,
            },
            indent=2,
        ),
        encoding="utf-8",
    )
    return result


def export_scores(scorer: PairScorer, groups: list[Group], path: str | Path):
    """Replay table over every (query, doc) pair seen in the groups file."""
    rows = {}
    for g in groups:
        for doc in [g.pos, *g.negs]:
            rows[(text_key(g.query), text_key(doc))] = scorer.score(g.query, doc)
    with Path(path).open("w", encoding="utf-8") as fh:
        for (qh, dh), score in sorted(rows.items()):
            fh.write(f"{qh}\t{dh}\t{score:.8f}\n")
