"""Text-pair featurizers backing the trainable scorer.

The default "lexical-v1" featurizer scores a (query, document) pair by
overlap statistics; it is deliberately lightweight so training runs
anywhere, while the exported score table stays serving-compatible with
any consumer that can replay (query, doc) -> score.
"""

from __future__ import annotations

import math
import re

import numpy as np

_TOKEN_RE = re.compile(r"\w+")


def tokens(text: str) -> set[str]:
    return set(_TOKEN_RE.findall(text.lower()))


def char_ngrams(text: str, n: int = 3) -> set[str]:
    s = text.lower()
    return {s[i : i + n] for i in range(max(len(s) - n + 1, 0))}


def lexical_features(query: str, doc: str) -> np.ndarray:
    q = tokens(query)
    d = tokens(doc)
    inter = len(q & d)
    union = len(q | d) or 1
    qg = char_ngrams(query)
    dg = char_ngrams(doc)
    g_union = len(qg | dg) or 1
    return np.array(
        [
            inter / (len(q) or 1),          # query-token coverage
            inter / (len(d) or 1),          # doc-token coverage
            inter / union,                  # token jaccard
            len(qg & dg) / g_union,         # char-3gram jaccard
            math.log1p(len(d)) / 10.0,      # doc length
            1.0,                            # bias
        ]
    )


FEATURIZERS = {"lexical-v1": lexical_features}
FEATURE_DIM = {"lexical-v1": 6}


def featurize(base_model: str, query: str, doc: str) -> np.ndarray:
    if base_model not in FEATURIZERS:
        raise ValueError(f"unknown base model {base_model!r}; known: {sorted(FEATURIZERS)}")
    return FEATURIZERS[base_model](query, doc)
