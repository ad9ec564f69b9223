"""Group-file loading plus the pad/trim rule for ragged groups.

Input is the exported contrastive-group format: one JSON object per line
with keys `query`, `pos` (document text) and `negs` (list of document
texts). Malformed lines are skipped and counted; more than 5% skipped
aborts the load.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass
from pathlib import Path


class GroupFileError(Exception):
    pass


@dataclass
class Group:
    query: str
    pos: str
    negs: list[str]


def load_groups(path: str | Path, max_skip_ratio: float = 0.05) -> tuple[list[Group], int]:
    groups: list[Group] = []
    skipped = 0
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    for line in lines:
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
            negs = [str(n) for n in rec["negs"]]
            if not negs:
                raise KeyError("negs empty")
            groups.append(Group(query=str(rec["query"]), pos=str(rec["pos"]), negs=negs))
        except (json.JSONDecodeError, KeyError, TypeError):
            skipped += 1
    total = len(groups) + skipped
    if total == 0:
        raise GroupFileError(f"no group records in {path}")
    if skipped / total > max_skip_ratio:
        raise GroupFileError(f"{skipped}/{total} malformed group lines exceeds 5% limit")
    return groups, skipped


def shape_groups(groups: list[Group], k: int, scorer, seed: int = 0) -> list[Group]:
    """Give every group exactly k-1 negatives.

    Oversized groups keep their k-1 hardest negatives under the current
    scorer; undersized groups are padded with negatives sampled (seeded)
    from other groups.
    """
    if k < 2:
        raise ValueError("group size k must be >= 2")
    rng = random.Random(seed)
    pool = [n for g in groups for n in g.negs]
    shaped = []
    for gi, group in enumerate(groups):
        negs = list(group.negs)
        if len(negs) > k - 1:
            scored = sorted(negs, key=lambda n: -scorer(group.query, n))
            negs = scored[: k - 1]
        elif len(negs) < k - 1:
            own = set(negs) | {group.pos}
            foreign = [n for n in pool if n not in own]
            while len(negs) < k - 1 and foreign:
                pick = rng.choice(foreign)
                negs.append(pick)
                foreign.remove(pick)
            if len(negs) < k - 1:
                negs.extend(negs[: k - 1 - len(negs)])  # tiny corpora: repeat
        shaped.append(Group(query=group.query, pos=group.pos, negs=negs))
    return shaped


def split_holdout(groups: list[Group], fraction: float, seed: int = 0) -> tuple[list[Group], list[Group]]:
    rng = random.Random(seed)
    indices = list(range(len(groups)))
    rng.shuffle(indices)
    cut = max(1, int(len(groups) * fraction)) if 0 < fraction < 1 and len(groups) > 1 else 0
    held = {i for i in indices[:cut]}
    train = [g for i, g in enumerate(groups) if i not in held]
    heldout = [g for i, g in enumerate(groups) if i in held]
    return train, heldout
