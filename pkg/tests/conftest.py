from __future__ import annotations

import numpy as np
import pytest

from arrangerank.data import Instance
from arrangerank.model import ModelDims, init_params
from arrangerank.reader import CandidateSet, UserContext


def tiny_dims(n_features: int = 4, embed: int = 6, max_list_len: int = 6) -> ModelDims:
    return ModelDims(feature_dim=n_features, profile_dim=n_features, embed=embed,
                     attn_width=embed, mlp_hidden=embed, max_list_len=max_list_len)


def make_instance(seed: int = 0, n: int = 4, n_features: int = 4, hist_len: int = 2,
                  labels: dict[int, int] | None = None, ids=None) -> Instance:
    rng = np.random.default_rng(seed)
    ids = list(ids) if ids is not None else list(range(n))
    if labels is None:
        labels = {i: int(rng.integers(0, 5)) for i in ids}
    return Instance(
        query_id=f"test:{seed}",
        ctx=UserContext(rng.normal(size=n_features),
                        [rng.normal(size=n_features) for _ in range(hist_len)],
                        feature_dim=n_features),
        cands=CandidateSet((i, rng.normal(size=n_features)) for i in ids),
        labels=labels,
    )


def spread_params(kind: str, dims: ModelDims, seed: int, gain: float = 2.0):
    """Random params scaled up so per-step score gaps are non-trivial."""
    params = init_params(kind, dims, seed)
    for _, p in params.items():
        p.values *= gain
    return params


def separable_rank_split(n_users: int, n: int = 6, n_features: int = 8, seed: int = 9):
    """Cleanly separable ranking data: one shared taste vector, grades are the
    within-slate ranks of the taste-feature affinity (no label ties)."""
    from arrangerank.data import DatasetSplit

    rng = np.random.default_rng(seed)
    taste = rng.normal(size=n_features)
    taste /= np.linalg.norm(taste)
    split = DatasetSplit(kept_users=n_users)
    next_id = 0
    for u in range(n_users):
        feats = rng.normal(size=(n, n_features))
        feats /= np.linalg.norm(feats, axis=1, keepdims=True)
        ranks = np.argsort(np.argsort(-(feats @ taste)))
        ids = list(range(next_id, next_id + n))
        next_id += n
        split.train.append(Instance(
            query_id=f"{u}:train",
            ctx=UserContext(taste + 0.05 * rng.normal(size=n_features), [],
                            feature_dim=n_features),
            cands=CandidateSet((ids[k], feats[k]) for k in range(n)),
            labels={ids[k]: int(n - 1 - ranks[k]) for k in range(n)},
        ))
    return split


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
