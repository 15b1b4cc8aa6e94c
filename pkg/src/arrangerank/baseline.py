"""Score-and-sort reference ranker: per-item MLP score, descending sort.

The classic pipeline the arranger is measured against: each candidate gets
an independent score from concat(item features, user vector), trained with
squared error against grade / r_max, and the ranking is a stable descending
sort with ties broken by item id. No cross-candidate information flows
anywhere, which is exactly the limitation the comparison is about.
"""
from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .loss import LossReport
from .params import ParamStore
from .permutation import Permutation
from .reader import CandidateSet


def score(features, user_vec: Tensor, params: ParamStore) -> Tensor:
    """Scalar score of one item in the context of the user vector."""
    x = Tensor(np.asarray(features, dtype=np.float64)[None, :])
    u_part = ad.add(ad.matvec(params["pw.W1u"], user_vec), params["pw.b1"])
    hid = ad.tanh(ad.add_rows(ad.matmul(x, params["pw.W1x"]), u_part))
    return ad.pick(ad.add(ad.matvec(hid, params["pw.w2"]), params["pw.b2"]), 0)


def score_all(cands: CandidateSet, user_vec: Tensor, params: ParamStore) -> Tensor:
    """Scores for a whole candidate set at once (rows follow cands.ids)."""
    x = Tensor(cands.features)
    u_part = ad.add(ad.matvec(params["pw.W1u"], user_vec), params["pw.b1"])
    hid = ad.tanh(ad.add_rows(ad.matmul(x, params["pw.W1x"]), u_part))
    return ad.add(ad.matvec(hid, params["pw.w2"]), params["pw.b2"])


def rank_by_sort(scores: dict[int, float]) -> Permutation:
    """Descending by score; exact ties broken by ascending item id."""
    return Permutation(sorted(scores, key=lambda i: (-scores[i], i)))


def pointwise_loss(inst, user_vec: Tensor, params: ParamStore, r_max: int) -> LossReport:
    """Mean squared error of scores against grade / r_max."""
    scores = score_all(inst.cands, user_vec, params)
    targets = np.array([inst.labels[i] / r_max for i in inst.cands.ids])
    diff = ad.add(scores, Tensor(-targets))
    sq = ad.mul(diff, diff)
    total = ad.scale(ad.sum_all(sq), 1.0 / len(inst.cands.ids))
    return LossReport(total=float(total.values),
                      per_position=(sq.values / len(inst.cands.ids)).tolist(),
                      tensor=total)
