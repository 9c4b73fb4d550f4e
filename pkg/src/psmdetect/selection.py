"""Picking suspected accounts from causality scores.

Three selectors share one score convention: a score map ``{user: value}``
where an undefined score is simply absent (or ``None``). Undefined users are
never selected.

* :func:`threshold_select` keeps users at or above a cut-off.
* :func:`combo_select` keeps users that clear at least ``k`` of the four
  per-metric cut-offs.
* :func:`prosel` seeds with high scorers and then spreads through shared
  cascades: a cascade that holds a selected user admits any other member
  whose score is within ``lam`` of the lowest selected score there, provided
  it also clears the global floor ``min_score``.
"""
import json
import math
from dataclasses import dataclass, field
from typing import Mapping, Optional

import numpy as np

from .action_log import CascadeSet
from .causality import METRICS, CausalityScores
from .errors import InvariantError, ParameterError, SchemaError

SEED = None  # activating message of a seed user

# per-metric defaults: the relative-likelihood metric lives on a wider scale
DEFAULT_MIN_SCORE = {"km": 0.7, "rel": 7.0, "nb": 0.7, "wnb": 0.7}
DEFAULT_THETA = {"km": 0.9, "rel": 9.0, "nb": 0.9, "wnb": 0.9}
DEFAULT_LAMBDA = {"km": 0.1, "rel": 1.0, "nb": 0.1, "wnb": 0.1}


def _check_metric(metric):
    if metric not in METRICS:
        raise ParameterError(f"unknown metric {metric!r}; expected one of {METRICS}")
    return metric


@dataclass(frozen=True)
class SelectionConfig:
    metric: str = "wnb"
    theta: Optional[float] = None
    lam: Optional[float] = None
    min_score: Optional[float] = None
    combo_k: int = 3
    combo_thresholds: Optional[Mapping] = None

    def __post_init__(self):
        m = _check_metric(self.metric)
        fill = {"theta": DEFAULT_THETA[m], "lam": DEFAULT_LAMBDA[m], "min_score": DEFAULT_MIN_SCORE[m]}
        for name, default in fill.items():
            if getattr(self, name) is None:
                object.__setattr__(self, name, default)
            v = float(getattr(self, name))
            if not math.isfinite(v):
                raise ParameterError(f"{name} must be finite, got {v}")
            object.__setattr__(self, name, v)
        if self.combo_thresholds is None:
            object.__setattr__(self, "combo_thresholds", dict(DEFAULT_MIN_SCORE))
        if not self.lam > 0:
            raise ParameterError(f"lambda must be > 0, got {self.lam}")
        if self.theta < self.min_score:
            raise ParameterError(f"theta ({self.theta}) must be >= min_score ({self.min_score})")
        _check_combo(self.combo_thresholds, self.combo_k)


def _check_combo(thresholds, k):
    if isinstance(k, bool) or not isinstance(k, (int, np.integer)) or not 1 <= k <= 4:
        raise ParameterError(f"combo_k must be an integer in [1, 4], got {k!r}")
    missing = set(METRICS) - set(thresholds)
    if missing:
        raise ParameterError(f"combo_thresholds lacks metrics {sorted(missing)}")


@dataclass
class SelectionResult:
    """Selected users with the iteration and cascade that admitted each one.

    ``provenance[u] == (0, SEED)`` for seeds. ``h_trace`` records, per
    cascade, the ``(iteration, running minimum)`` values in order.
    """

    selected: frozenset
    provenance: dict
    iterations: int
    metric: Optional[str] = None
    h_trace: dict = field(default_factory=dict)

    @property
    def seeds(self):
        return frozenset(u for u, (it, _) in self.provenance.items() if it == 0)

    def layers(self):
        out = [set() for _ in range(max((it for it, _ in self.provenance.values()), default=-1) + 1)]
        for u, (it, _) in self.provenance.items():
            out[it].add(u)
        return out


def score_map(scores, metric=None) -> dict:
    """Normalise a :class:`CausalityScores` or a plain mapping to ``{user: float}`` (defined only)."""
    if isinstance(scores, CausalityScores):
        return scores.metric(_check_metric(metric or "wnb"))
    out = {}
    for u, v in scores.items():
        if v is None:
            continue
        v = float(v)
        if not math.isnan(v):
            out[u] = v
    return out


def threshold_select(scores, metric, theta) -> set:
    """Users whose ``metric`` score is defined and ``>= theta``."""
    _check_metric(metric)
    theta = float(theta)
    if not math.isfinite(theta):
        raise ParameterError(f"theta must be finite, got {theta}")
    return {u for u, v in score_map(scores, metric).items() if v >= theta}


def combo_select(scores: CausalityScores, combo_thresholds=None, combo_k=3) -> set:
    """Users meeting their per-metric threshold on at least ``combo_k`` metrics."""
    thresholds = dict(DEFAULT_MIN_SCORE) if combo_thresholds is None else dict(combo_thresholds)
    _check_combo(thresholds, combo_k)
    hits = {}
    for m in METRICS:
        for u in threshold_select(scores, m, thresholds[m]):
            hits[u] = hits.get(u, 0) + 1
    return {u for u, n in hits.items() if n >= combo_k}


def _memberships(cascades):
    if isinstance(cascades, CascadeSet):
        users = cascades.user_ids
        ptr = cascades.ptr
        pu = cascades.part_user.tolist()
        return {m: tuple(users[c] for c in pu[ptr[k]:ptr[k + 1]])
                for k, m in enumerate(cascades.message_ids)}
    return {m: tuple(dict.fromkeys(members)) for m, members in cascades.items()}


def prosel(cascades, scores, config: Optional[SelectionConfig] = None) -> SelectionResult:
    """Seed-and-spread selection over the cascade hypergraph.

    ``cascades`` is a :class:`CascadeSet` or a mapping ``message_id -> users``.
    Candidates in one iteration are all judged against the running minima as
    they stood when the iteration began, so the result does not depend on
    visiting order. Stops when an iteration admits nobody.
    """
    config = config or SelectionConfig()
    score = score_map(scores, config.metric)
    members = _memberships(cascades)
    user_cascades = {}
    for m in sorted(members):
        for u in members[m]:
            user_cascades.setdefault(u, []).append(m)

    seeds = sorted(u for u, v in score.items() if v >= config.theta)
    provenance = {u: (0, SEED) for u in seeds}
    h = {}
    h_trace = {}
    frontier = seeds
    iterations = 0
    while frontier:
        iterations += 1
        touched = set()
        for u in frontier:
            for m in user_cascades.get(u, ()):
                if score[u] < h.get(m, math.inf):
                    h[m] = score[u]
                touched.add(m)
        for m in touched:
            h_trace.setdefault(m, []).append((iterations, h[m]))
        # untouched cascades keep their minimum, so their members were already judged
        admitted = {}
        for m in sorted(touched):
            for u in members[m]:
                if u in provenance or u in admitted:
                    continue
                v = score.get(u)
                if v is not None and v >= h[m] - config.lam and v >= config.min_score:
                    admitted[u] = m
        for u, m in admitted.items():
            provenance[u] = (iterations, m)
        frontier = sorted(admitted)
    return SelectionResult(frozenset(provenance), provenance, iterations, config.metric, h_trace)


def check_prosel(result: SelectionResult, cascades, scores, config: SelectionConfig):
    """Raise :class:`InvariantError` if ``result`` breaks a ProSel guarantee.

    Checks seeds against ``theta``, the ``min_score`` floor, per-cascade H
    monotonicity, that each admitted user sat in its activating cascade next
    to someone selected strictly earlier, and the iteration bound.
    """
    score = score_map(scores, config.metric)
    members = {m: set(us) for m, us in _memberships(cascades).items()}
    seeds = {u for u, v in score.items() if v >= config.theta}
    problems = []
    if not seeds <= set(result.selected):
        problems.append("seed set not contained in result")
    for u, (it, m) in result.provenance.items():
        v = score.get(u)
        if v is None or v < config.min_score:
            problems.append(f"{u} selected below min_score")
        elif it == 0 and (m is not SEED or v < config.theta):
            problems.append(f"{u} marked as seed without reaching theta")
        elif it > 0:
            earlier = [w for w in members.get(m, ()) if w != u and w in result.provenance
                       and result.provenance[w][0] < it]
            if u not in members.get(m, ()) or not earlier:
                problems.append(f"{u} has no earlier-selected mate in {m}")
            elif v < min(score[w] for w in earlier) - config.lam:
                problems.append(f"{u} admitted below H - lambda in {m}")
    for m, trace in result.h_trace.items():
        hs = [h for _, h in trace]
        if any(b > a for a, b in zip(hs, hs[1:])):
            problems.append(f"H increased in {m}")
    if result.iterations > len(result.selected):
        problems.append("more iterations than selected users")
    if problems:
        raise InvariantError("; ".join(problems[:5]))


def score_quantile(scores, metric, q) -> float:
    """The ``q`` quantile of the defined ``metric`` scores (linear interpolation)."""
    if not 0 <= q <= 1:
        raise ParameterError(f"quantile must lie in [0, 1], got {q}")
    values = np.array(sorted(score_map(scores, metric).values()), dtype=float)
    if not len(values):
        raise ParameterError(f"no defined {metric} scores to calibrate on")
    return float(np.quantile(values, q))


def calibrated_config(scores, metric, floor_quantile=0.8, seed_quantile=0.98,
                      lambda_fraction=0.5) -> SelectionConfig:
    """ProSel settings placed on the score distribution instead of absolute values.

    ``min_score`` sits at ``floor_quantile``, ``theta`` at ``seed_quantile``
    and ``lam`` spans ``lambda_fraction`` of the gap between them.
    """
    if not floor_quantile <= seed_quantile:
        raise ParameterError("floor_quantile must not exceed seed_quantile")
    if not lambda_fraction > 0:
        raise ParameterError("lambda_fraction must be > 0")
    floor = score_quantile(scores, metric, floor_quantile)
    theta = score_quantile(scores, metric, seed_quantile)
    gap = theta - floor
    lam = gap * lambda_fraction if gap > 0 else math.ulp(max(abs(theta), 1.0))
    return SelectionConfig(metric=metric, theta=theta, lam=lam, min_score=floor)


def random_baseline(users, n, seed=None) -> set:
    """``n`` users drawn uniformly without replacement; reproducible per ``seed``."""
    pool = sorted(set(users))
    if isinstance(n, bool) or int(n) != n or n < 0:
        raise ParameterError(f"sample size must be a non-negative integer, got {n!r}")
    n = int(n)
    if n > len(pool):
        raise ParameterError(f"cannot sample {n} users from {len(pool)}")
    rng = np.random.default_rng(seed)
    picks = rng.choice(len(pool), size=n, replace=False)
    return {pool[k] for k in picks.tolist()}


def write_selection(fh, selected, scores=None, metric=None, provenance=None):
    """Selection JSONL: one object per user, seeds/threshold picks have iteration 0."""
    values = score_map(scores, metric) if scores is not None else {}
    provenance = provenance or {}
    rows = sorted(selected, key=lambda u: (provenance.get(u, (0, None))[0], u))
    for u in rows:
        it, m = provenance.get(u, (0, SEED))
        fh.write(json.dumps({"user_id": u, "metric": metric, "score": values.get(u),
                             "iteration": it, "message_id": m}) + "\n")


def read_selection(fh) -> list:
    """User ids from a selection JSONL file, in file order."""
    out = []
    for line_no, line in enumerate(fh, 1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
            out.append(str(obj["user_id"]))
        except (ValueError, KeyError, TypeError):
            raise SchemaError(f"line {line_no}: not a selection record") from None
    return out
