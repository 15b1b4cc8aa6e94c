"""Click-model simulators and simulation-based ranking metrics.

Two simulated users are supported:

* position-based ("pbm"): examination depends on rank alone,
  P(examine position i) = rho_i^tau with default rho_i = 1/i;
* browsing ("ubm"): examination depends on rank and on the rank of the last
  clicked item, gamma(i, i') with default (1/(i - i'))^tau and
  gamma(i, 0) = (1/i)^tau for "no click yet".

A ranking's simulation score is the expected number of clicks: the sum over
positions of P(examined) * P(perceived relevant). For the browsing model the
conditioning on earlier clicks is marginalized exactly by dynamic
programming over the last-click position, never by Monte Carlo, so the
metric is deterministic.

The oracle permutation maximizes a chosen metric over all arrangements.
Below the enumeration cap this is exhaustive; for metrics whose optimum is
provably any relevance-descending arrangement (strictly decreasing position
weights, or the default browsing form), an exact sorting route produces the
identical result -- including the seeded uniform choice among tied maximizers,
which both routes draw as the same index into the lexicographically ordered
tie list.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .permutation import Permutation

PBM = "pbm"
UBM = "ubm"

ENUMERATION_CAP = 10


class OrderingError(ValueError):
    """last-click position must precede the examined position."""


class EnumerationCapError(ValueError):
    """Candidate count too large for exhaustive search."""


@dataclass
class ClickModelSpec:
    """Configuration of one simulated user.

    ``examination_table`` overrides the parametric defaults: a vector of
    per-position probabilities for "pbm"; for "ubm" a matrix indexed
    [position-1, last_click] with last_click 0 meaning no click yet.
    ``relevance_map`` maps a graded label to P(perceived relevant); the
    default is (2^r - 1) / (2^r_max - 1).
    """

    kind: str
    tau: float = 1.0
    examination_table: np.ndarray | None = None
    relevance_map: dict[int, float] | None = None
    r_max: int = 4

    def __post_init__(self):
        if self.kind not in (PBM, UBM):
            raise ValueError(f"unknown click model kind {self.kind!r}")
        if self.tau < 0:
            raise ValueError(f"tau must be >= 0, got {self.tau}")
        if self.examination_table is not None:
            self.examination_table = np.asarray(self.examination_table, dtype=np.float64)
            want = 1 if self.kind == PBM else 2
            if self.examination_table.ndim != want:
                raise ValueError(f"{self.kind} examination table must be {want}-D")
            if np.any(self.examination_table < 0) or np.any(self.examination_table > 1):
                raise ValueError("examination probabilities must lie in [0, 1]")
        if self.relevance_map is not None:
            bad = {r: p for r, p in self.relevance_map.items() if not 0.0 <= p <= 1.0}
            if bad:
                raise ValueError(f"relevance probabilities outside [0, 1]: {bad}")


@dataclass
class MetricScore:
    value: float
    per_position_contributions: list[float] = field(default_factory=list)


def examination_prob(spec: ClickModelSpec, position: int, last_click: int = 0) -> float:
    """P(position examined | last click at ``last_click``); 0 means no click yet."""
    if position < 1:
        raise ValueError(f"position must be >= 1, got {position}")
    if last_click < 0 or last_click >= position:
        raise OrderingError(f"last click {last_click} must precede position {position}")
    if spec.kind == PBM:
        if spec.examination_table is not None:
            if position > spec.examination_table.shape[0]:
                raise ValueError(f"examination table has no entry for position {position}")
            return float(spec.examination_table[position - 1])
        return (1.0 / position) ** spec.tau
    if spec.examination_table is not None:
        if position > spec.examination_table.shape[0] or last_click >= spec.examination_table.shape[1]:
            raise ValueError(f"examination table has no entry for ({position}, {last_click})")
        return float(spec.examination_table[position - 1, last_click])
    gap = position - last_click if last_click > 0 else position
    return (1.0 / gap) ** spec.tau


def relevance_prob(spec: ClickModelSpec, grade: int) -> float:
    """P(item perceived relevant | graded label)."""
    if spec.relevance_map is not None:
        if grade not in spec.relevance_map:
            raise ValueError(f"relevance map has no entry for grade {grade}")
        return float(spec.relevance_map[grade])
    if not 0 <= grade <= spec.r_max:
        raise ValueError(f"grade {grade} outside [0, {spec.r_max}]")
    return (2.0 ** grade - 1.0) / (2.0 ** spec.r_max - 1.0)


def _relevance_vector(spec: ClickModelSpec, pi: Permutation, labels: dict[int, int]) -> np.ndarray:
    pi.validate_against(labels.keys())
    return np.array([relevance_prob(spec, labels[d]) for d in pi])


def r_cm(pi: Permutation, labels: dict[int, int], spec: ClickModelSpec,
         k: int | None = None) -> MetricScore:
    """Expected clicks down the list (optionally truncated at position k)."""
    rel = _relevance_vector(spec, pi, labels)
    n = len(rel)
    kk = n if k is None else min(k, n)
    contribs = []
    if spec.kind == PBM:
        for i in range(kk):
            contribs.append(examination_prob(spec, i + 1) * rel[i])
    else:
        # exact marginalization over click histories: q[j] = P(last click so far at j)
        q = np.zeros(n + 1)
        q[0] = 1.0
        for i in range(1, kk + 1):
            gam = np.array([examination_prob(spec, i, j) for j in range(i)])
            click = float(q[:i] @ gam) * rel[i - 1]
            contribs.append(click)
            q[:i] *= 1.0 - gam * rel[i - 1]
            q[i] = click
    return MetricScore(value=float(np.sum(contribs)), per_position_contributions=contribs)


def r_ndcg(pi: Permutation, labels: dict[int, int], k: int | None = None) -> float:
    """Discounted cumulative gain at k over its ideal value; 0 when no item gains."""
    pi.validate_against(labels.keys())
    n = len(pi)
    kk = n if k is None else min(k, n)
    discounts = 1.0 / np.log2(np.arange(2, kk + 2))
    gains = np.array([2.0 ** labels[d] - 1.0 for d in pi])[:kk]
    ideal = -np.sort(-np.array([2.0 ** g - 1.0 for g in labels.values()]))[:kk]
    idcg = float(ideal @ discounts)
    if idcg == 0.0:
        return 0.0
    return float(gains @ discounts) / idcg


def ndcg_reduction_check(pi: Permutation, labels: dict[int, int]) -> tuple[float, float]:
    """Full-list NDCG next to the click-metric that reproduces it exactly.

    The reproducing simulated user examines with (1/N_o)/log2(i+1) and
    perceives relevance with (2^r - 1)/N_r, where N_o * N_r is the ideal
    DCG; both factor tables stay inside [0, 1].
    """
    pi.validate_against(labels.keys())
    n = len(pi)
    ndcg = r_ndcg(pi, labels)
    gains = {r: 2.0 ** r - 1.0 for r in set(labels.values())}
    max_gain = max(gains.values())
    if max_gain == 0.0:
        return 0.0, 0.0
    ideal = -np.sort(-np.array([gains[labels[d]] for d in labels]))
    idcg = float(ideal @ (1.0 / np.log2(np.arange(2, n + 2))))
    n_r = max_gain
    n_o = idcg / n_r
    spec = ClickModelSpec(
        kind=PBM,
        examination_table=(1.0 / n_o) / np.log2(np.arange(2, n + 2)),
        relevance_map={r: g / n_r for r, g in gains.items()},
    )
    return ndcg, r_cm(pi, labels, spec).value


def simulate_clicks(pi: Permutation, labels: dict[int, int], spec: ClickModelSpec,
                    seed: int) -> np.ndarray:
    """Sample one user session: per position, examine then maybe click.

    Two uniform draws are consumed per position regardless of the outcome,
    so the stream layout is stable under a fixed seed.
    """
    rel = _relevance_vector(spec, pi, labels)
    rng = np.random.default_rng(seed)
    clicks = np.zeros(len(rel), dtype=bool)
    last = 0
    for i in range(1, len(rel) + 1):
        u_exam, u_rel = rng.random(), rng.random()
        examined = u_exam < examination_prob(spec, i, last if spec.kind == UBM else 0)
        if examined and u_rel < rel[i - 1]:
            clicks[i - 1] = True
            last = i
    return clicks


def load_click_spec(path) -> ClickModelSpec:
    """Read a simulated-user configuration from a flat key = value file.

    Recognized keys: ``kind`` (pbm|ubm), ``tau``, ``r_max``,
    ``relevance_map`` (comma-separated ``grade:prob`` pairs) and
    ``examination_table`` (comma-separated columns; for the browsing model,
    semicolon-separated rows indexed by last-click position).
    """
    fields: dict[str, str] = {}
    with open(path, "r", encoding="ascii") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected 'key = value'")
            key, raw = (part.strip() for part in line.split("=", 1))
            fields[key] = raw
    unknown = set(fields) - {"kind", "tau", "r_max", "relevance_map", "examination_table"}
    if unknown:
        raise ValueError(f"{path}: unknown keys {sorted(unknown)}")
    kind = fields.get("kind", PBM)
    table = None
    if "examination_table" in fields:
        rows = [[float(x) for x in row.split(",") if x.strip() != ""]
                for row in fields["examination_table"].split(";")]
        table = np.array(rows[0]) if kind == PBM else np.array(rows)
    rmap = None
    if "relevance_map" in fields:
        rmap = {}
        for tok in fields["relevance_map"].split(","):
            grade, prob = tok.split(":")
            rmap[int(grade)] = float(prob)
    return ClickModelSpec(
        kind=kind,
        tau=float(fields.get("tau", 1.0)),
        examination_table=table,
        relevance_map=rmap,
        r_max=int(fields.get("r_max", 4)),
    )


def metric_fingerprint(metric) -> str:
    """Stable text key identifying a metric configuration (for seed scoping)."""
    if metric == "ndcg":
        return "ndcg"
    parts = [metric.kind, f"tau={metric.tau!r}", f"rmax={metric.r_max}"]
    if metric.examination_table is not None:
        parts.append("table=" + metric.examination_table.tobytes().hex()[:32])
    if metric.relevance_map is not None:
        parts.append("rmap=" + ",".join(f"{r}:{p!r}" for r, p in sorted(metric.relevance_map.items())))
    return "|".join(parts)


# ------------------------------------------------------------ oracle search


def _item_values(labels: dict[int, int], metric) -> tuple[list[int], np.ndarray]:
    """Ascending ids and the per-item value the metric attaches to each."""
    ids = sorted(int(i) for i in labels)
    if metric == "ndcg":
        vals = np.array([2.0 ** labels[i] - 1.0 for i in ids])
    elif isinstance(metric, ClickModelSpec):
        vals = np.array([relevance_prob(metric, labels[i]) for i in ids])
    else:
        raise ValueError(f"metric must be 'ndcg' or a ClickModelSpec, got {metric!r}")
    return ids, vals


def _position_weights(metric, n: int) -> np.ndarray | None:
    """Per-position examination weights when the metric has them (pbm/ndcg)."""
    if metric == "ndcg":
        return 1.0 / np.log2(np.arange(2, n + 2))
    if metric.kind == PBM:
        return np.array([examination_prob(metric, i) for i in range(1, n + 1)])
    return None


def _descending_optimal(metric, n: int) -> bool:
    """True when every maximizer is exactly a value-descending arrangement."""
    w = _position_weights(metric, n)
    if w is not None:
        return bool(np.all(np.diff(w) < 0.0))
    # default-parametric browsing model: examination shrinks with the gap
    # since the last click, so descending relevance is optimal (verified
    # against enumeration in the test suite)
    return metric.examination_table is None and metric.tau > 0.0


def _all_tie(metric, values: np.ndarray, n: int) -> bool:
    if np.all(values == values[0]):
        return True
    w = _position_weights(metric, n)
    if w is not None:
        return bool(np.all(w == w[0]))
    # default browsing model with tau == 0 examines everything: order-free
    return metric.examination_table is None and metric.tau == 0.0


def _unrank(ids: list[int], rank: int) -> list[int]:
    """rank-th permutation of ``ids`` in lexicographic order (Lehmer decode)."""
    pool = list(ids)
    out = []
    for k in range(len(ids), 0, -1):
        f = math.factorial(k - 1)
        out.append(pool.pop(rank // f))
        rank %= f
    return out


def _sorted_oracle(ids: list[int], values: np.ndarray, rng: np.random.Generator) -> Permutation:
    """Seeded uniform choice among value-descending arrangements.

    Ties group items of equal value; the choice index is decoded most
    significant group first, matching the lexicographic order in which the
    enumeration route would list the same maximizers.
    """
    groups: list[list[int]] = []
    for v in sorted(set(values.tolist()), reverse=True):
        groups.append([i for i, val in zip(ids, values) if val == v])
    n_ties = math.prod(math.factorial(len(g)) for g in groups)
    u = int(rng.integers(n_ties))
    order: list[int] = []
    for g in groups:
        n_ties //= math.factorial(len(g))
        digit, u = divmod(u, n_ties)
        order.extend(_unrank(g, digit))
    return Permutation(order)


def _metric_value(metric, order: tuple[int, ...], labels: dict[int, int]) -> float:
    if metric == "ndcg":
        return r_ndcg(Permutation(order), labels)
    return r_cm(Permutation(order), labels, metric).value


def _enumerated_scores(ids: list[int], values: np.ndarray, metric,
                       chunk: int = 40320):
    """Yield (index array, score array) over all permutations in lex order."""
    n = len(ids)
    pos_w = _position_weights(metric, n)
    it = itertools.permutations(range(n))
    while True:
        block = list(itertools.islice(it, chunk))
        if not block:
            return
        idx = np.array(block, dtype=np.intp)
        if pos_w is not None:
            yield idx, values[idx] @ pos_w
        else:
            rel = values[idx]  # (m, n)
            m = idx.shape[0]
            scores = np.zeros(m)
            q = np.zeros((m, n + 1))
            q[:, 0] = 1.0
            for i in range(1, n + 1):
                gam = np.array([examination_prob(metric, i, j) for j in range(i)])
                click = (q[:, :i] @ gam) * rel[:, i - 1]
                scores += click
                q[:, :i] *= 1.0 - gam[None, :] * rel[:, i - 1][:, None]
                q[:, i] = click
            yield idx, scores


def oracle_permutation(labels: dict[int, int], metric, seed: int,
                       cap: int = ENUMERATION_CAP) -> Permutation:
    """Arrangement maximizing the metric; seeded uniform choice among ties.

    ``metric`` is "ndcg" or a ClickModelSpec. Metrics whose maximizers are
    exactly the value-descending arrangements take an exact sorting route
    (any candidate count); anything else is exhaustively enumerated, which
    requires ``len(labels) <= cap``.
    """
    ids, values = _item_values(labels, metric)
    n = len(ids)
    if n == 0:
        raise ValueError("cannot build an oracle for an empty candidate set")
    rng = np.random.default_rng(seed)
    if _all_tie(metric, values, n):
        u = int(rng.integers(math.factorial(n)))
        return Permutation(_unrank(ids, u))
    if _descending_optimal(metric, n):
        return _sorted_oracle(ids, values, rng)
    if n > cap:
        raise EnumerationCapError(
            f"{n} candidates exceed the enumeration cap {cap} and the metric has no "
            "sorting route; rank label-descending (greedy) instead or raise the cap")
    best = -np.inf
    tie_count = 0
    for _, scores in _enumerated_scores(ids, values, metric):
        m = float(scores.max())
        if m > best:
            best, tie_count = m, int(np.sum(scores == m))
        elif m == best:
            tie_count += int(np.sum(scores == m))
    u = int(rng.integers(tie_count))
    seen = 0
    for idx, scores in _enumerated_scores(ids, values, metric):
        hits = np.flatnonzero(scores == best)
        if seen + hits.shape[0] > u:
            chosen = idx[hits[u - seen]]
            return Permutation([ids[j] for j in chosen])
        seen += hits.shape[0]
    raise AssertionError("tie bookkeeping failed")  # pragma: no cover


def oracle_position_groups(labels: dict[int, int], metric, cap: int = ENUMERATION_CAP
                           ) -> list[set[int]]:
    """For each position, the ids some maximizer places there (the tie sets)."""
    ids, values = _item_values(labels, metric)
    n = len(ids)
    if _all_tie(metric, values, n):
        return [set(ids) for _ in range(n)]
    if _descending_optimal(metric, n):
        by_pos = []
        for v in sorted(values.tolist(), reverse=True):
            by_pos.append({i for i, val in zip(ids, values) if val == v})
        return by_pos
    if n > cap:
        raise EnumerationCapError(f"{n} candidates exceed the enumeration cap {cap}")
    best = -np.inf
    groups = [set() for _ in range(n)]
    for idx, scores in _enumerated_scores(ids, values, metric):
        m = float(scores.max())
        if m > best:
            best = m
            groups = [set() for _ in range(n)]
        if m == best:
            for row in idx[scores == best]:
                for pos, j in enumerate(row):
                    groups[pos].add(ids[j])
    return groups
