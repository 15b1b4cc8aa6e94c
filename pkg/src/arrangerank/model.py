"""Model kinds: parameter initialization and per-instance forward dispatch.

Four trainable rankers share this interface:

* ``starank``             recurrent history encoder + attention candidates + pointer decoder
* ``starank_pi_mlp``      same, but candidates through a plain MLP (uniform attention)
* ``starank_ps_mlp``      same, but history mean-pooled through an MLP
* ``pointwise_baseline``  recurrent history encoder + per-item MLP score, ranked by sort

Two parameter-free kinds exist for evaluation harness baselines:
``oracle_replay`` (emits the stored oracle) and ``uniform_random`` (seeded
shuffle; pass the seed as ``params``).
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

from . import baseline
from .arranger import arrange_greedy
from .loss import LossReport, listwise_loss, pointwise_summation_loss
from .data import Instance
from .params import ParamStore
from .permutation import Permutation
from .reader import (DropoutPlan, ReaderOutput, encode_candidates, encode_candidates_mlp,
                     encode_history, encode_history_mlp)

KINDS = ("starank", "starank_pi_mlp", "starank_ps_mlp", "pointwise_baseline")


@dataclass
class ModelDims:
    feature_dim: int
    profile_dim: int
    embed: int = 64
    attn_width: int = 64
    mlp_hidden: int = 64
    max_list_len: int = 10


def normalize_kind(kind: str) -> str:
    k = kind.replace("-", "_")
    if k == "pointwise":
        k = "pointwise_baseline"
    if k not in KINDS:
        raise ValueError(f"unknown model kind {kind!r}; expected one of {KINDS}")
    return k


def param_shapes(kind: str, dims: ModelDims) -> dict[str, tuple]:
    """Parameter table layout for a model kind (drives init and checkpoint checks)."""
    f, p, e = dims.feature_dim, dims.profile_dim, dims.embed
    a, m, lmax = dims.attn_width, dims.mlp_hidden, dims.max_list_len
    kind = normalize_kind(kind)
    shapes: dict[str, tuple] = {}

    def cell(prefix: str, in_dim: int) -> None:
        # packed gate pre-activations: input, forget, output, candidate
        shapes[f"{prefix}.W"] = (4 * e, in_dim + e)
        shapes[f"{prefix}.b"] = (4 * e,)

    if kind == "starank_ps_mlp":
        shapes["psmlp.W1"] = (m, f + p)
        shapes["psmlp.b1"] = (m,)
        shapes["psmlp.W2"] = (e, m)
        shapes["psmlp.b2"] = (e,)
    else:
        shapes["hist.U0"] = (e, p)
        shapes["hist.u0_b"] = (e,)
        cell("hist", f)
    if kind == "pointwise_baseline":
        shapes["pw.W1x"] = (f, m)
        shapes["pw.W1u"] = (m, e)
        shapes["pw.b1"] = (m,)
        shapes["pw.w2"] = (m,)
        shapes["pw.b2"] = ()
        return shapes
    if kind == "starank_pi_mlp":
        shapes["pimlp.W1x"] = (f, m)
        shapes["pimlp.W1u"] = (m, e)
        shapes["pimlp.b1"] = (m,)
        shapes["pimlp.W2"] = (m, e)
        shapes["pimlp.b2"] = (e,)
    else:
        shapes["attn.W1"] = (f, a)
        shapes["attn.b1"] = (a,)
        shapes["attn.V"] = (a, e)
    shapes["dec.start"] = (e,)
    cell("dec", e + lmax)
    shapes["ptr.W2"] = (e, a)
    shapes["ptr.W3"] = (a, e)
    shapes["ptr.b2"] = (a,)
    shapes["ptr.P"] = (a, e)
    return shapes


def init_params(kind: str, dims: ModelDims, seed: int) -> ParamStore:
    """Uniform fan-scaled init; biases zero except forget gates at 1."""
    rng = np.random.default_rng([seed, 0xA11])
    params = ParamStore()
    e = dims.embed
    for name, shape in param_shapes(kind, dims).items():
        if not shape or len(shape) == 1:
            vals = np.zeros(shape)
            if name.endswith(".b") and shape == (4 * e,):
                vals[e : 2 * e] = 1.0  # forget-gate block
        else:
            fan = shape[0] + shape[1]
            if name.endswith(".W") and shape[0] == 4 * e:
                fan = e + shape[1]  # per-gate fan, not the packed 4x block
            lim = np.sqrt(6.0 / fan)
            vals = rng.uniform(-lim, lim, size=shape)
        params.create(name, vals)
    return params


def read_instance(kind: str, params: ParamStore, inst: Instance,
                  drop: DropoutPlan | None = None) -> ReaderOutput:
    kind = normalize_kind(kind)
    if kind == "starank_ps_mlp":
        user_vec = encode_history_mlp(inst.ctx, params, drop)
    else:
        user_vec = encode_history(inst.ctx, params, drop)
    if kind == "starank_pi_mlp":
        return encode_candidates_mlp(inst.cands, user_vec, params, drop)
    if kind == "pointwise_baseline":
        raise ValueError("the pointwise baseline has no candidate-set encoder")
    return encode_candidates(inst.cands, user_vec, params, drop)


def instance_loss(kind: str, params: ParamStore, inst: Instance,
                  r_max: int = 4, drop: DropoutPlan | None = None,
                  loss_variant: str = "listwise") -> LossReport:
    kind = normalize_kind(kind)
    if kind == "pointwise_baseline":
        user_vec = encode_history(inst.ctx, params, drop)
        return baseline.pointwise_loss(inst, user_vec, params, r_max)
    if inst.oracle is None:
        raise ValueError(f"instance {inst.query_id} has no oracle permutation")
    rout = read_instance(kind, params, inst, drop)
    if loss_variant == "summation":
        return pointwise_summation_loss(rout, params, inst.oracle)
    if loss_variant != "listwise":
        raise ValueError(f"unknown loss variant {loss_variant!r}")
    return listwise_loss(rout, params, inst.oracle)


def _stable_int(text: str) -> int:
    return int.from_bytes(hashlib.sha256(text.encode()).digest()[:8], "big")


def rank_instance(kind: str, params, inst: Instance) -> Permutation:
    """Greedy ranking for trainable kinds; see module docstring for the rest."""
    if kind == "oracle_replay":
        if inst.oracle is None:
            raise ValueError(f"instance {inst.query_id} has no oracle to replay")
        return inst.oracle
    if kind == "uniform_random":
        rng = np.random.default_rng([int(params), _stable_int(inst.query_id)])
        order = list(inst.cands.ids)
        rng.shuffle(order)
        return Permutation(order)
    kind = normalize_kind(kind)
    if kind == "pointwise_baseline":
        user_vec = encode_history(inst.ctx, params)
        scores = baseline.score_all(inst.cands, user_vec, params)
        return baseline.rank_by_sort(dict(zip(inst.cands.ids, scores.values.tolist())))
    return arrange_greedy(read_instance(kind, params, inst), params)
