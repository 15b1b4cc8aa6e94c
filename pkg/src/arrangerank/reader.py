"""Encoders for the two input kinds: ordered browse history, unordered candidates.

The browse history is order-sensitive, so it runs through a gated recurrent
cell whose initial hidden state is a learned projection of the user profile.
The candidate set is order-free: it is canonicalized to ascending item id on
construction and encoded per item with a tanh layer plus an attention weight
against the user vector, so results never depend on storage order.

MLP variants of both encoders are provided as ablation foils: a
mean-pooled history encoder (order-insensitive on purpose) and a plain
per-item MLP candidate encoder with uniform attention.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .params import ParamStore


class EmptyInputError(ValueError):
    """Operation needs at least one item."""


@dataclass
class DropoutPlan:
    """Training-only dropout: rate plus the stream that draws the masks."""

    rate: float
    rng: np.random.Generator


@dataclass
class UserContext:
    """User profile vector plus the time-ordered browsed-item features."""

    profile: np.ndarray
    history: np.ndarray  # (T, feature_dim); T may be 0

    def __init__(self, profile, history, feature_dim: int | None = None):
        self.profile = np.asarray(profile, dtype=np.float64)
        rows = [np.asarray(r, dtype=np.float64) for r in history]
        if rows:
            self.history = np.stack(rows)
        else:
            if feature_dim is None:
                raise ValueError("feature_dim is required for an empty history")
            self.history = np.zeros((0, feature_dim))


class CandidateSet:
    """Unordered candidate items; stored in ascending item-id order.

    Canonical storage order is what makes every downstream computation
    independent of the order the caller happened to supply.
    """

    def __init__(self, items: Iterable[tuple[int, Sequence[float]]]):
        pairs = sorted(((int(i), np.asarray(x, dtype=np.float64)) for i, x in items),
                       key=lambda p: p[0])
        ids = [i for i, _ in pairs]
        if len(set(ids)) != len(ids):
            raise ValueError(f"duplicate item ids in candidate set: {ids}")
        self.ids: tuple[int, ...] = tuple(ids)
        self.features: np.ndarray = np.stack([x for _, x in pairs]) if pairs else np.zeros((0, 0))

    def __len__(self) -> int:
        return len(self.ids)

    def index_of(self, item_id: int) -> int:
        return self.ids.index(item_id)


@dataclass
class ReaderOutput:
    """Encoded instance: user vector, per-candidate representations, attention."""

    ids: tuple[int, ...]
    user_vec: Tensor          # (embed,)
    reprs: Tensor             # (n, embed), rows follow ``ids``
    betas: Tensor             # (n,) attention weights

    @property
    def cand_reprs(self) -> dict[int, np.ndarray]:
        return {i: self.reprs.values[k] for k, i in enumerate(self.ids)}

    @property
    def attn_weights(self) -> dict[int, float]:
        return {i: float(self.betas.values[k]) for k, i in enumerate(self.ids)}


def _cell_step(params: ParamStore, prefix: str, inp: Tensor, h: Tensor, c: Tensor):
    """One gated (LSTM-style) cell update on concat(inp, h)."""
    z = ad.concat([inp, h])
    return ad.gated_cell(params[f"{prefix}.W"], params[f"{prefix}.b"], z, c)


def encode_history(ctx: UserContext, params: ParamStore,
                   drop: DropoutPlan | None = None) -> Tensor:
    """Order-sensitive user vector: recurrent pass over the browse history.

    The hidden state starts from a learned projection of the profile, so an
    empty history yields exactly that projection.
    """
    w0 = params["hist.U0"]
    if ctx.profile.shape[0] != w0.values.shape[1]:
        raise ad.ShapeError(
            f"profile dim {ctx.profile.shape[0]} does not match configured {w0.values.shape[1]}")
    h = ad.add(ad.matvec(w0, Tensor(ctx.profile)), params["hist.u0_b"])
    if len(ctx.history):
        expect = params["hist.W"].values.shape[1] - h.values.shape[0]
        if ctx.history.shape[1] != expect:
            raise ad.ShapeError(
                f"history feature dim {ctx.history.shape[1]} does not match configured {expect}")
        c = Tensor(np.zeros(h.values.shape[0]))
        for t in range(ctx.history.shape[0]):
            h, c = _cell_step(params, "hist", Tensor(ctx.history[t]), h, c)
    if drop is not None:
        h = ad.dropout(h, drop.rate, drop.rng)
    return h


def encode_history_mlp(ctx: UserContext, params: ParamStore,
                       drop: DropoutPlan | None = None) -> Tensor:
    """Ablation variant: mean-pooled history through an MLP (order-insensitive).

    Each feature column is sorted before summation, so the pooled vector is
    bitwise identical for any ordering of the same history items.
    """
    if len(ctx.history):
        pooled = np.sort(ctx.history, axis=0).sum(axis=0) / ctx.history.shape[0]
    else:
        pooled = np.zeros(ctx.history.shape[1])
    inp = Tensor(np.concatenate([pooled, ctx.profile]))
    hid = ad.tanh(ad.add(ad.matvec(params["psmlp.W1"], inp), params["psmlp.b1"]))
    if drop is not None:
        hid = ad.dropout(hid, drop.rate, drop.rng)
    return ad.add(ad.matvec(params["psmlp.W2"], hid), params["psmlp.b2"])


def encode_candidates(cands: CandidateSet, user_vec: Tensor, params: ParamStore,
                      drop: DropoutPlan | None = None,
                      beta_mode: str = "softmax") -> ReaderOutput:
    """Attention encoding of the candidate set against the user vector.

    Per item: z_d = tanh(W1 x_d + b1), embedding h'_d = V z_d, attention
    logit = h'_d . u, beta = softmax over the set, h_d = beta_d h'_d.
    ``beta_mode="ratio"`` uses the raw dot-product ratio instead of softmax
    and refuses denominators <= 1e-9.
    """
    n = len(cands)
    if n == 0:
        raise EmptyInputError("candidate set is empty")
    if user_vec.values.shape[0] != params["attn.V"].values.shape[1]:
        raise ad.ShapeError(
            f"user vector dim {user_vec.values.shape[0]} does not match "
            f"attention output dim {params['attn.V'].values.shape[1]}")
    x = Tensor(cands.features)
    z = ad.tanh(ad.add_rows(ad.matmul(x, params["attn.W1"]), params["attn.b1"]))
    if drop is not None:
        z = ad.dropout(z, drop.rate, drop.rng)
    h_pre = ad.matmul(z, params["attn.V"])          # (n, embed)
    logits = ad.matvec(h_pre, user_vec)             # (n,)
    if beta_mode == "softmax":
        betas = ad.softmax_masked(logits, np.ones(n, dtype=bool))
    elif beta_mode == "ratio":
        denom = ad.sum_all(logits)
        if float(denom.values) <= 1e-9:
            raise ad.DomainError(
                f"ratio attention denominator {float(denom.values):.3e} <= 1e-9; "
                "use the softmax mode")
        betas = ad.mul(logits, ad.exp(ad.scale(ad.log(denom), -1.0)))
    else:
        raise ValueError(f"unknown beta_mode {beta_mode!r}")
    reprs = ad.scale_rows(h_pre, betas)
    return ReaderOutput(ids=cands.ids, user_vec=user_vec, reprs=reprs, betas=betas)


def encode_candidates_mlp(cands: CandidateSet, user_vec: Tensor, params: ParamStore,
                          drop: DropoutPlan | None = None) -> ReaderOutput:
    """Ablation variant: per-item MLP over concat(x_d, u); uniform attention."""
    n = len(cands)
    if n == 0:
        raise EmptyInputError("candidate set is empty")
    x = Tensor(cands.features)
    u_part = ad.add(ad.matvec(params["pimlp.W1u"], user_vec), params["pimlp.b1"])
    hid = ad.tanh(ad.add_rows(ad.matmul(x, params["pimlp.W1x"]), u_part))
    if drop is not None:
        hid = ad.dropout(hid, drop.rate, drop.rng)
    reprs = ad.add_rows(ad.matmul(hid, params["pimlp.W2"]), params["pimlp.b2"])
    betas = Tensor(np.full(n, 1.0 / n))
    return ReaderOutput(ids=cands.ids, user_vec=user_vec, reprs=reprs, betas=betas)
