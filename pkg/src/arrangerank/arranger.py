"""Plackett-Luce pointer decoder: assigns candidates to positions one by one.

At step i the decoder holds a recurrent context vector p_i seeded from the
user vector; the score of placing remaining item d is

    s^i_d = (P tanh(W2 h_d + W3 p_i + b2)) . u

and the next-item distribution is a softmax over the not-yet-arranged items
(arranged items get exactly probability 0). Once an item is placed, its
representation h_d is fed into the decoder cell together with a one-hot
position indicator to produce the next context vector.

Greedy decoding breaks exact ties by smallest item id, never by storage
position, so results are invariant to candidate storage order.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .params import ParamStore
from .permutation import Permutation
from .reader import ReaderOutput


@dataclass
class DecoderState:
    """Mutable per-instance decode state: next position, arranged set, cell state."""

    step: int                 # 1-based position being filled next
    arranged: list[int]       # item ids already placed
    mask: np.ndarray          # True where the item is still unarranged
    h: Tensor                 # context vector p_i (decoder hidden state)
    c: Tensor
    prev_repr: Tensor         # representation fed at the next cell update
    logits: dict[int, float] | None = field(default=None)

    @property
    def remaining_ids(self) -> list[int]:
        return [i for i, keep in zip(self._ids, self.mask) if keep]

    _ids: tuple[int, ...] = field(default=())


def new_decoder_state(rout: ReaderOutput, params: ParamStore) -> DecoderState:
    """Context for scoring position 1: cell over the start vector, state from u."""
    n = len(rout.ids)
    state = DecoderState(
        step=1,
        arranged=[],
        mask=np.ones(n, dtype=bool),
        h=rout.user_vec,
        c=Tensor(np.zeros(rout.user_vec.values.shape[0])),
        prev_repr=params["dec.start"],
        _ids=rout.ids,
    )
    _cell_update(state, params)
    return state


def _max_positions(params: ParamStore) -> int:
    hidden = params["dec.W"].values.shape[0] // 4
    return params["dec.W"].values.shape[1] - 2 * hidden


def _cell_update(state: DecoderState, params: ParamStore) -> None:
    """Advance the context vector: input is the last-placed item (or the start
    vector) concatenated with the one-hot of the position being scored next."""
    from .reader import _cell_step

    n_pos = _max_positions(params)
    onehot = np.zeros(n_pos)
    onehot[min(state.step, n_pos) - 1] = 1.0
    inp = ad.concat([state.prev_repr, Tensor(onehot)])
    state.h, state.c = _cell_step(params, "dec", inp, state.h, state.c)


def _advance(state: DecoderState, rout: ReaderOutput, params: ParamStore, chosen_idx: int) -> None:
    """Place an item: its representation becomes the next cell input, so the
    very next position's scores already condition on it."""
    state.prev_repr = ad.row(rout.reprs, chosen_idx)
    state.mask = state.mask.copy()
    state.mask[chosen_idx] = False
    state.arranged.append(rout.ids[chosen_idx])
    state.step += 1
    if state.mask.any():
        _cell_update(state, params)


def _step_logits(state: DecoderState, rout: ReaderOutput, params: ParamStore,
                 w2h: Tensor) -> Tensor:
    """Scores for every candidate at the current step (mask applied downstream)."""
    ctx = ad.add(ad.matvec(params["ptr.W3"], state.h), params["ptr.b2"])
    return ad.pointer_logits(w2h, ctx, params["ptr.P"], rout.user_vec)


def _w2h(rout: ReaderOutput, params: ParamStore) -> Tensor:
    # position-independent half of the score; computed once per decode
    return ad.matmul(rout.reprs, params["ptr.W2"])


def step_scores(state: DecoderState, rout: ReaderOutput, params: ParamStore) -> dict[int, float]:
    """Placement scores s^i_d for the items not yet arranged."""
    if not state.mask.any():
        raise ValueError("no unarranged item left")
    logits = _step_logits(state, rout, params, _w2h(rout, params))
    state.logits = {i: float(logits.values[k])
                    for k, i in enumerate(rout.ids) if state.mask[k]}
    return state.logits


def arrange_greedy(rout: ReaderOutput, params: ParamStore) -> Permutation:
    pi, _ = greedy_step_probs(rout, params)
    return pi


def greedy_step_probs(rout: ReaderOutput, params: ParamStore) -> tuple[Permutation, np.ndarray]:
    """Greedy decode plus the per-step pointing distribution (positions x items).

    Row i holds P(position i+1 takes item j | choices so far); entries of
    already-arranged items are exactly 0.
    """
    n = len(rout.ids)
    if n == 0:
        raise ValueError("cannot arrange an empty candidate set")
    state = new_decoder_state(rout, params)
    w2h = _w2h(rout, params)
    probs = np.zeros((n, n))
    for i in range(n):
        logits = _step_logits(state, rout, params, w2h)
        p = ad.softmax_masked(logits, state.mask)
        probs[i] = p.values
        chosen = int(np.argmax(p.values))  # exact ties: first index = smallest id
        _advance(state, rout, params, chosen)
    return Permutation(state.arranged), probs


def arrange_sample(rout: ReaderOutput, params: ParamStore, seed: int) -> tuple[Permutation, float]:
    """Sample a permutation position by position; returns its log probability."""
    n = len(rout.ids)
    if n == 0:
        raise ValueError("cannot arrange an empty candidate set")
    rng = np.random.default_rng(seed)
    state = new_decoder_state(rout, params)
    w2h = _w2h(rout, params)
    log_prob = 0.0
    for _ in range(n):
        logits = _step_logits(state, rout, params, w2h)
        p = ad.softmax_masked(logits, state.mask)
        support = np.flatnonzero(state.mask)
        weights = p.values[support]
        chosen = int(support[rng.choice(len(support), p=weights / weights.sum())])
        log_prob += float(ad.masked_log_prob(logits, state.mask, chosen).values)
        _advance(state, rout, params, chosen)
    return Permutation(state.arranged), log_prob


def permutation_log_prob(rout: ReaderOutput, params: ParamStore, pi: Permutation,
                         want_terms: bool = False):
    """Differentiable log P(pi) with the decoder teacher-forced along pi.

    Equals the sum over positions of the log masked-softmax probability of
    pi's item given the already-placed prefix. With ``want_terms`` returns
    (total, [per-position scalar Tensors]).
    """
    pi.validate_against(rout.ids)
    index_of = {item: k for k, item in enumerate(rout.ids)}
    state = new_decoder_state(rout, params)
    w2h = _w2h(rout, params)
    terms = []
    for item in pi:
        logits = _step_logits(state, rout, params, w2h)
        terms.append(ad.masked_log_prob(logits, state.mask, index_of[item]))
        _advance(state, rout, params, index_of[item])
    total = terms[0]
    for t in terms[1:]:
        total = ad.add(total, t)
    if want_terms:
        return total, terms
    return total
