"""Reproducible end-to-end experiment recipes on synthetic data.

Two studies back the package's headline claims:

* ``comparative_experiment`` — does arranging beat score-and-sort on data
  whose grades depend on slate context? Trains both models over several
  seeds and reports test N@5 per seed.
* ``supervision_variant_experiment`` — what changes when the training
  oracles come from a click-model metric instead of the gain-discount
  metric? Reports the fraction of training oracles that differ and the
  simulated-click quality of both trained models.

Both run at deliberately small dimensions so a full multi-seed study fits
in minutes on one core.
"""
from __future__ import annotations

import copy
import time
from dataclasses import dataclass, field

import numpy as np

from .arranger import arrange_greedy
from .clickmodels import ClickModelSpec, metric_fingerprint, oracle_permutation
from .data import DatasetSplit, Instance, generate_synthetic, oracle_seed, temporal_split
from .evaluation import evaluate
from .model import ModelDims, init_params, read_instance
from .reader import CandidateSet, UserContext
from .training import TrainConfig, train


def small_config(seed: int, epochs: int, embedding_dim: int = 16,
                 optimizer: str = "adam", lr: float = 5e-3) -> TrainConfig:
    """Desk-scale hyperparameters: small embeddings, constant lr, no dropout."""
    return TrainConfig(
        lr_initial=lr, lr_final=lr, epochs=epochs, batch_size=100,
        l2_weight=4e-5, dropout_rate=0.0, seed=seed,
        embedding_dim=embedding_dim, optimizer=optimizer)


@dataclass
class ComparativeResult:
    starank_n5: list[float] = field(default_factory=list)
    pointwise_n5: list[float] = field(default_factory=list)

    @property
    def relative_gain(self) -> float:
        return float(np.mean(self.starank_n5) / np.mean(self.pointwise_n5) - 1.0)


def _fresh_split(split: DatasetSplit) -> DatasetSplit:
    out = copy.copy(split)
    out.train = [copy.copy(inst) for inst in split.train]
    return out


def comparative_experiment(n_users: int = 2000, context_strength: float = 1.0,
                           n_seeds: int = 10, epochs: int = 4,
                           history_len: int = 8, data_seed: int = 97,
                           eval_limit: int | None = None) -> ComparativeResult:
    """Arranger vs pointwise baseline on context-dependent synthetic slates."""
    logs = generate_synthetic(n_users, history_len=history_len,
                              context_strength=context_strength, seed=data_seed)
    split = temporal_split(logs)
    test = split.test[:eval_limit] if eval_limit else split.test
    result = ComparativeResult()
    for seed in range(n_seeds):
        for kind, bucket in (("starank", result.starank_n5),
                             ("pointwise_baseline", result.pointwise_n5)):
            cfg = small_config(seed=seed, epochs=epochs)
            params, _ = train(kind, _fresh_split(split), "ndcg", cfg)
            table = evaluate(params, kind, test, ks=(5,))
            bucket.append(table.means["N@5"])
    return result


@dataclass
class SupervisionVariantResult:
    changed_fraction: float = 0.0
    p_at_k: dict[str, dict[int, list[float]]] = field(default_factory=dict)

    def pooled_gap_in_se(self, k: int) -> float:
        """(PBM-supervised minus NDCG-supervised P@k) in pooled standard errors."""
        a = np.array(self.p_at_k["pbm"][k])
        b = np.array(self.p_at_k["ndcg"][k])
        se = np.sqrt(a.var(ddof=1) / len(a) + b.var(ddof=1) / len(b))
        return float((a.mean() - b.mean()) / se) if se > 0 else 0.0


def supervision_variant_experiment(n_users: int = 800, context_strength: float = 1.0,
                                   n_seeds: int = 5, epochs: int = 4,
                                   history_len: int = 8, data_seed: int = 131,
                                   ks: tuple[int, ...] = (5, 10)) -> SupervisionVariantResult:
    """Train under gain-discount vs position-based-click oracles and compare."""
    logs = generate_synthetic(n_users, history_len=history_len,
                              context_strength=context_strength, seed=data_seed)
    base_split = temporal_split(logs)
    pbm = ClickModelSpec(kind="pbm")
    result = SupervisionVariantResult(p_at_k={"ndcg": {k: [] for k in ks},
                                              "pbm": {k: [] for k in ks}})

    # fraction of training instances whose oracle differs between supervisions
    changed = 0
    for inst in base_split.train:
        pi_by_metric = [
            oracle_permutation(inst.labels, m,
                               oracle_seed(data_seed, metric_fingerprint(m), inst.query_id))
            for m in ("ndcg", pbm)]
        if pi_by_metric[0].order != pi_by_metric[1].order:
            changed += 1
    result.changed_fraction = changed / len(base_split.train)

    for seed in range(n_seeds):
        for name, metric in (("ndcg", "ndcg"), ("pbm", pbm)):
            cfg = small_config(seed=seed, epochs=epochs)
            params, _ = train("starank", _fresh_split(base_split), metric, cfg)
            table = evaluate(params, "starank", base_split.test, ks=ks,
                             click_specs={"P": pbm})
            for k in ks:
                result.p_at_k[name][k].append(table.means[f"P@{k}"])
    return result


def decode_scaling(sizes: tuple[int, ...] = (5, 10, 20, 40), repeats: int = 7,
                   width: int = 4096, embed: int = 8, seed: int = 0
                   ) -> tuple[list[float], float]:
    """Greedy-decode wall time per candidate count and the fitted growth exponent.

    Uses a wide pointer layer and a small context dimension so the per-step
    score computation (work proportional to the candidate count) dominates
    fixed per-step overhead; total decode work then grows as roughly the
    square of the list length. All sizes get a warm-up pass first and each
    timing is the median over ``repeats`` runs, interleaved across sizes to
    spread clock drift evenly.
    """
    rng = np.random.default_rng(seed)
    fdim = 16
    dims = ModelDims(feature_dim=fdim, profile_dim=fdim, embed=embed,
                     attn_width=width, mlp_hidden=embed, max_list_len=max(sizes))
    params = init_params("starank", dims, seed)
    routs = []
    for n in sizes:
        inst = Instance(
            query_id=f"bench:{n}",
            ctx=UserContext(rng.normal(size=fdim), [rng.normal(size=fdim) for _ in range(5)]),
            cands=CandidateSet((i, rng.normal(size=fdim)) for i in range(n)),
            labels={i: 0 for i in range(n)},
        )
        rout = read_instance("starank", params, inst)
        arrange_greedy(rout, params)  # warm-up, caches and kernels
        arrange_greedy(rout, params)
        routs.append(rout)
    samples = [[] for _ in sizes]
    for _ in range(max(3, repeats)):
        for k, rout in enumerate(routs):
            t0 = time.perf_counter()
            arrange_greedy(rout, params)
            samples[k].append(time.perf_counter() - t0)
    times = [float(np.median(s)) for s in samples]
    exponent = float(np.polyfit(np.log(sizes), np.log(times), 1)[0])
    return times, exponent
