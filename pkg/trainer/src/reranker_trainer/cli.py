"""Command line: train a scorer from an exported groups file."""

from __future__ import annotations

import argparse
import sys

from .data import GroupFileError
from .model import TrainConfig
from .train import train


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="reranker-trainer")
    parser.add_argument("groups", help="contrastive groups JSONL (query/pos/negs)")
    parser.add_argument("--out", required=True, help="output directory")
    parser.add_argument("--k", type=int, default=4, help="group size (1 positive + k-1 negatives)")
    parser.add_argument("--batch-size", type=int, default=32)
    parser.add_argument("--epochs", type=int, default=50)
    parser.add_argument("--lr", type=float, default=0.5)
    parser.add_argument("--base-model", default="lexical-v1")
    parser.add_argument("--holdout", type=float, default=0.2)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args(argv)

    config = TrainConfig(
        group_size=args.k,
        batch_size=args.batch_size,
        epochs=args.epochs,
        learning_rate=args.lr,
        base_model=args.base_model,
        seed=args.seed,
        holdout_fraction=args.holdout,
    )
    try:
        result = train(args.groups, config, args.out)
    except (GroupFileError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(
        f"trained on {result.groups_trained} groups "
        f"(loss {result.loss_curve[0]:.4f} -> {result.loss_curve[-1]:.4f}, "
        f"heldout acc@1 {result.heldout_accuracy:.3f}, "
        f"{result.skipped_lines} lines skipped)"
    )
    return 0


if __name__ == "__main__":
    sys.exit(main())
