"""List-wise training loss: negative log-likelihood of the target permutation.

The decoder is teacher-forced along the ground-truth order, so term i is
-log P(position i takes the target item | target prefix), with the softmax
support shrinking as items are placed. A deliberately weaker per-position
summation loss (full-support softmax, state driven by the model's own
greedy picks) is kept as a diagnostic foil.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .arranger import _advance, _step_logits, _w2h, new_decoder_state, permutation_log_prob
from .params import ParamStore
from .permutation import Permutation
from .reader import ReaderOutput


@dataclass
class LossReport:
    """Scalar loss plus its per-position breakdown; ``tensor`` carries gradients."""

    total: float
    per_position: list[float]
    tensor: Tensor

    def __post_init__(self):
        # guard against -0.0-scale float noise in the reported breakdown
        self.per_position = [max(0.0, t) for t in self.per_position]
        self.total = max(0.0, self.total)


def listwise_loss(rout: ReaderOutput, params: ParamStore, pi_star: Permutation) -> LossReport:
    """Differentiable -log P(pi_star) with per-position terms."""
    log_p, terms = permutation_log_prob(rout, params, pi_star, want_terms=True)
    total = ad.scale(log_p, -1.0)
    return LossReport(
        total=float(total.values),
        per_position=[-float(t.values) for t in terms],
        tensor=total,
    )


def pointwise_summation_loss(rout: ReaderOutput, params: ParamStore,
                             pi_star: Permutation) -> LossReport:
    """Per-position cross-entropy over ALL items, no masking, no teacher forcing.

    The decoder state follows the model's own greedy choices, so the loss
    ignores which items the target prefix removed from contention. Kept only
    to demonstrate how much that contextual bookkeeping matters.
    """
    pi_star.validate_against(rout.ids)
    index_of = {item: k for k, item in enumerate(rout.ids)}
    n = len(rout.ids)
    state = new_decoder_state(rout, params)
    w2h = _w2h(rout, params)
    full = np.ones(n, dtype=bool)
    terms = []
    for item in pi_star:
        logits = _step_logits(state, rout, params, w2h)
        terms.append(ad.scale(ad.masked_log_prob(logits, full, index_of[item]), -1.0))
        greedy = int(np.argmax(np.where(state.mask, logits.values, -np.inf)))
        _advance(state, rout, params, greedy)
    total = terms[0]
    for t in terms[1:]:
        total = ad.add(total, t)
    return LossReport(
        total=float(total.values),
        per_position=[float(t.values) for t in terms],
        tensor=total,
    )
