"""Causality metrics over viral cascades.

For an ordered user pair ``(i, j)`` the scorer needs four integer counts:

* cascades where ``i`` strictly precedes ``j``, and how many of them are viral
  (``p_ij`` is their ratio);
* cascades containing ``j`` in which ``i`` does not act earlier than ``j``, and
  how many of them are viral (``p_not_ij``; 0 when there are none).

Pairs are only counted for ``j`` in ``R(i)``: both users are key users of a
common viral cascade with ``i`` strictly first (and, by default, both are
prima facie causal). Counting goes through an inverted index of sorted pair
keys, so cost scales with the co-occurrences actually needed rather than with
``|U|**2``. All probabilities come from exact integer counts evaluated in a
fixed order, so results do not depend on the number of workers.

Undefined metric values are ``None`` in the per-user API and ``NaN`` in the
column arrays of :class:`CausalityScores`.
"""
import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property
from typing import Mapping, Optional

import numpy as np

from .action_log import CascadeSet, as_fraction
from .errors import ParameterError, SchemaError

METRICS = ("km", "rel", "nb", "wnb")
PAIR_SCOPES = ("all", "key_users")
WEIGHT_SCHEMES = ("viral_participant", "viral_key", "uniform")
DEFAULT_ALPHA = 1e-9

# upper bound on candidate (i, j) slots materialised per counting batch
_BATCH_SLOTS = 4_000_000


@dataclass(frozen=True)
class ScoringConfig:
    """Knobs for :func:`score_all`. ``phi`` and the viral threshold live on the CascadeSet."""

    alpha: float = DEFAULT_ALPHA
    prima_facie: bool = True
    pair_scope: str = "all"
    weight_scheme: str = "viral_participant"
    workers: int = 1

    def __post_init__(self):
        if not as_fraction(self.alpha) > 0:
            raise ParameterError(f"alpha must be > 0, got {self.alpha}")
        if self.pair_scope not in PAIR_SCOPES:
            raise ParameterError(f"pair_scope must be one of {PAIR_SCOPES}, got {self.pair_scope!r}")
        if self.weight_scheme not in WEIGHT_SCHEMES:
            raise ParameterError(
                f"weight_scheme must be one of {WEIGHT_SCHEMES}, got {self.weight_scheme!r}")
        if int(self.workers) < 1:
            raise ParameterError(f"workers must be >= 1, got {self.workers}")


@dataclass(frozen=True)
class PairStats:
    i: str
    j: str
    n_viral_precede: int
    n_precede: int
    n_viral_alone: int
    n_alone: int

    @property
    def pair(self):
        return self.i, self.j


@dataclass(frozen=True)
class UserViralStats:
    user: str
    n_viral_key: int
    n_key: int
    n_viral_participant: int
    n_participant: int

    @property
    def p_viral_given_key(self) -> Optional[Fraction]:
        return Fraction(self.n_viral_key, self.n_key) if self.n_key else None


class UserCounts:
    """Per-user participation counts as arrays indexed by user code."""

    def __init__(self, cascades: CascadeSet):
        U = cascades.n_users
        viral_slot = cascades.viral[cascades.part_msg]
        key = cascades.is_key
        pu = cascades.part_user
        self.n_key = np.bincount(pu[key], minlength=U)
        self.n_viral_key = np.bincount(pu[key & viral_slot], minlength=U)
        self.n_participant = np.bincount(pu, minlength=U)
        self.n_viral_participant = np.bincount(pu[viral_slot], minlength=U)
        v, n = cascades.rho_counts
        # p_{m|u} > rho, compared exactly: n_viral_key / n_key > v / n
        self.prima_facie = (self.n_key > 0) & (self.n_viral_key * n > v * self.n_key)
        self._users = cascades.user_ids

    def get(self, user_code: int) -> UserViralStats:
        k = user_code
        return UserViralStats(self._users[k], int(self.n_viral_key[k]), int(self.n_key[k]),
                              int(self.n_viral_participant[k]), int(self.n_participant[k]))

    def weights(self, scheme: str) -> np.ndarray:
        if scheme == "viral_participant":
            return self.n_viral_participant.astype(float)
        if scheme == "viral_key":
            return self.n_viral_key.astype(float)
        if scheme == "uniform":
            return np.ones(len(self.n_key))
        raise ParameterError(f"weight_scheme must be one of {WEIGHT_SCHEMES}, got {scheme!r}")


def prima_facie_users(cascades: CascadeSet) -> set:
    """``(user_id, message_id)`` pairs where the user is a prima facie cause of the message.

    The user must be a key user of the viral message and have a viral rate
    among the cascades it keys that strictly exceeds the prior ``rho``.
    """
    counts = UserCounts(cascades)
    mask = cascades.is_key & cascades.viral[cascades.part_msg]
    mask &= counts.prima_facie[cascades.part_user]
    users, msgs = cascades.user_ids, cascades.message_ids
    return {(users[u], msgs[m]) for u, m in
            zip(cascades.part_user[mask].tolist(), cascades.part_msg[mask].tolist())}


class RelatedIndex:
    """``R(i)``, ``Q(j)`` and the pair counts behind ``p_ij`` / ``p_not_ij``.

    Pairs are stored as parallel arrays ``src`` / ``dst`` (user codes) sorted
    by ``(src, dst)``; the count arrays are aligned with them.
    """

    def __init__(self, cascades, src, dst, n_viral_precede, n_precede, n_viral_alone,
                 n_alone, user_counts):
        self.cascades = cascades
        self.src = src
        self.dst = dst
        self.n_viral_precede = n_viral_precede
        self.n_precede = n_precede
        self.n_viral_alone = n_viral_alone
        self.n_alone = n_alone
        self.user_counts = user_counts
        self._by_dst = np.argsort(dst, kind="stable")
        self._dst_sorted = dst[self._by_dst]

    def __len__(self):
        return len(self.src)

    def _code(self, user):
        try:
            return self.cascades.user_code(user)
        except KeyError:
            return None

    def related_to(self, user) -> tuple:
        """``R(user)`` ordered by user id."""
        k = self._code(user)
        if k is None:
            return ()
        lo, hi = np.searchsorted(self.src, [k, k + 1])
        return tuple(self.cascades.user_ids[c] for c in self.dst[lo:hi].tolist())

    def preceding(self, user) -> tuple:
        """``Q(user)``: every i with ``user`` in ``R(i)``, ordered by user id."""
        k = self._code(user)
        if k is None:
            return ()
        lo, hi = np.searchsorted(self._dst_sorted, [k, k + 1])
        return tuple(self.cascades.user_ids[c] for c in self.src[self._by_dst[lo:hi]].tolist())

    @cached_property
    def related(self) -> dict:
        return self._group(self.src, self.dst)

    @cached_property
    def preceding_sets(self) -> dict:
        return self._group(self._dst_sorted, self.src[self._by_dst])

    def _group(self, keys, vals):
        names = self.cascades.user_ids
        out = {}
        for k, v in zip(keys.tolist(), vals.tolist()):
            out.setdefault(names[k], []).append(names[v])
        return {k: tuple(v) for k, v in out.items()}

    def _pair_pos(self, i, j):
        ci, cj = self._code(i), self._code(j)
        if ci is None or cj is None:
            return None
        lo, hi = np.searchsorted(self.src, [ci, ci + 1])
        p = lo + np.searchsorted(self.dst[lo:hi], cj)
        if p < hi and self.dst[p] == cj:
            return int(p)
        return None

    def pair_stats(self, i, j) -> PairStats:
        p = self._pair_pos(i, j)
        if p is None:
            raise KeyError(f"{j!r} is not in R({i!r})")
        return PairStats(i, j, int(self.n_viral_precede[p]), int(self.n_precede[p]),
                         int(self.n_viral_alone[p]), int(self.n_alone[p]))

    def iter_pair_stats(self):
        names = self.cascades.user_ids
        cols = (self.src, self.dst, self.n_viral_precede, self.n_precede,
                self.n_viral_alone, self.n_alone)
        for s, d, a, b, c, e in zip(*(c.tolist() for c in cols)):
            yield PairStats(names[s], names[d], a, b, c, e)

    def user_stats(self, user) -> UserViralStats:
        return self.user_counts.get(self.cascades.user_code(user))

    def probabilities(self):
        """``(p_ij, p_not_ij)`` arrays aligned with the pair arrays."""
        p_ij = self.n_viral_precede / self.n_precede
        with np.errstate(invalid="ignore", divide="ignore"):
            p_not = np.where(self.n_alone > 0, self.n_viral_alone / np.maximum(self.n_alone, 1), 0.0)
        return p_ij, p_not


def build_related_index(cascades: CascadeSet, prima_facie=True, pair_scope="all",
                        workers=1) -> RelatedIndex:
    """Related-user sets and pair counts for ``cascades``.

    ``pair_scope="key_users"`` restricts the precede counts to cascades where
    both users are key users; the "alone" counts always cover every cascade
    containing ``j``.
    """
    if pair_scope not in PAIR_SCOPES:
        raise ParameterError(f"pair_scope must be one of {PAIR_SCOPES}, got {pair_scope!r}")
    counts = UserCounts(cascades)
    src, dst = _related_pairs(cascades, counts, prima_facie)
    n_pairs = len(src)
    U = max(cascades.n_users, 1)
    pair_keys = src * U + dst

    prec_all = np.zeros(n_pairs, dtype=np.int64)
    vprec_all = np.zeros(n_pairs, dtype=np.int64)
    prec_key = np.zeros(n_pairs, dtype=np.int64)
    vprec_key = np.zeros(n_pairs, dtype=np.int64)
    if n_pairs:
        is_src = np.zeros(U, dtype=bool)
        is_src[src] = True
        is_dst = np.zeros(U, dtype=bool)
        is_dst[dst] = True
        batches = _batches(cascades, is_src, is_dst)
        want_key = pair_scope == "key_users"

        def run(batch):
            return _count_batch(cascades, batch, is_src, is_dst, pair_keys, U, want_key)

        if workers > 1 and len(batches) > 1:
            with ThreadPoolExecutor(max_workers=int(workers)) as ex:
                results = list(ex.map(run, batches))
        else:
            results = map(run, batches)
        for part in results:
            for acc, (idx, cnt) in zip((prec_all, vprec_all, prec_key, vprec_key), part):
                acc[idx] += cnt

    n_part_j = counts.n_participant[dst]
    n_vpart_j = counts.n_viral_participant[dst]
    n_alone = n_part_j - prec_all
    n_viral_alone = n_vpart_j - vprec_all
    if pair_scope == "key_users":
        n_precede, n_viral_precede = prec_key, vprec_key
    else:
        n_precede, n_viral_precede = prec_all, vprec_all
    return RelatedIndex(cascades, src, dst, n_viral_precede, n_precede, n_viral_alone,
                        n_alone, counts)


def _related_pairs(cascades, counts, prima_facie):
    """Sorted unique ``(i, j)`` codes of m-related key users over viral cascades."""
    eligible = cascades.is_key & cascades.viral[cascades.part_msg]
    if prima_facie:
        eligible = eligible & counts.prima_facie[cascades.part_user]
    U = max(cascades.n_users, 1)
    chunks = []
    ptr = cascades.ptr
    for k in np.flatnonzero(cascades.viral).tolist():
        lo, hi = ptr[k], ptr[k + 1]
        pos = lo + np.flatnonzero(eligible[lo:hi])
        if len(pos) < 2:
            continue
        u = cascades.part_user[pos]
        t = cascades.part_time[pos]
        a, b = np.triu_indices(len(pos), 1)
        strict = t[a] < t[b]
        chunks.append(u[a[strict]] * U + u[b[strict]])
    if not chunks:
        empty = np.zeros(0, dtype=np.int64)
        return empty, empty.copy()
    keys = np.unique(np.concatenate(chunks))
    return keys // U, keys % U


def _batches(cascades, is_src, is_dst):
    """Split cascade indices into contiguous ranges of bounded pair volume."""
    pu = cascades.part_user
    n_src = np.add.reduceat(is_src[pu].astype(np.int64), cascades.ptr[:-1]) if len(pu) else None
    n_dst = np.add.reduceat(is_dst[pu].astype(np.int64), cascades.ptr[:-1]) if len(pu) else None
    if n_src is None:
        return []
    volume = n_src * n_dst
    out, start, acc = [], 0, 0
    for k, v in enumerate(volume.tolist()):
        if acc and acc + v > _BATCH_SLOTS:
            out.append((start, k))
            start, acc = k, 0
        acc += v
    out.append((start, len(volume)))
    return out


def _count_batch(cascades, batch, is_src, is_dst, pair_keys, U, want_key):
    ptr = cascades.ptr
    pu, pt, pk = cascades.part_user, cascades.part_time, cascades.is_key
    hits, hit_viral, hit_key = [], [], []
    for k in range(*batch):
        lo, hi = ptr[k], ptr[k + 1]
        u = pu[lo:hi]
        a_pos = np.flatnonzero(is_src[u])
        b_pos = np.flatnonzero(is_dst[u])
        if not len(a_pos) or not len(b_pos):
            continue
        t = pt[lo:hi]
        ia, ib = np.nonzero(t[a_pos][:, None] < t[b_pos][None, :])
        if not len(ia):
            continue
        ua, ub = u[a_pos[ia]], u[b_pos[ib]]
        keys = ua * U + ub
        pos = np.searchsorted(pair_keys, keys)
        pos_c = np.minimum(pos, len(pair_keys) - 1)
        found = pair_keys[pos_c] == keys
        idx = pos_c[found]
        if not len(idx):
            continue
        viral = bool(cascades.viral[k])
        hits.append(idx)
        hit_viral.append(np.full(len(idx), viral))
        if want_key:
            kk = pk[lo:hi]
            hit_key.append((kk[a_pos[ia]] & kk[b_pos[ib]])[found])
    if not hits:
        e = (np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64))
        return e, e, e, e
    idx = np.concatenate(hits)
    vir = np.concatenate(hit_viral)
    out = [np.unique(idx, return_counts=True), np.unique(idx[vir], return_counts=True)]
    if want_key:
        key = np.concatenate(hit_key)
        out.append(np.unique(idx[key], return_counts=True))
        out.append(np.unique(idx[key & vir], return_counts=True))
    else:
        e = (np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64))
        out += [e, e]
    return out


def pair_probabilities(stats: PairStats):
    """``(p_ij, p_not_ij)`` as exact fractions; ``p_not_ij`` is 0 when nothing is counted."""
    if stats.n_precede < 1:
        raise ParameterError(f"pair {stats.pair} has no cascade where i precedes j")
    p_ij = Fraction(stats.n_viral_precede, stats.n_precede)
    p_not = Fraction(stats.n_viral_alone, stats.n_alone) if stats.n_alone else Fraction(0)
    return p_ij, p_not


def relative_likelihood(p_ij, p_not, alpha=DEFAULT_ALPHA) -> float:
    """Signed relative difference between the two conditionals (``S(i, j)``).

    ``alpha`` keeps both ratio branches finite when a denominator is zero.
    """
    if p_ij > p_not:
        return float(p_ij) / (float(p_not) + alpha) - 1.0
    if p_ij == p_not:
        return 0.0
    return 1.0 - float(p_not) / (float(p_ij) + alpha)


def _pair_terms(index, i):
    out = []
    for j in index.related_to(i):
        p_ij, p_not = pair_probabilities(index.pair_stats(i, j))
        out.append((float(p_ij), float(p_not)))
    return out


def eps_km(i, index: RelatedIndex) -> Optional[float]:
    """Mean of ``p_ij - p_not_ij`` over ``R(i)``; ``None`` when ``R(i)`` is empty."""
    terms = _pair_terms(index, i)
    if not terms:
        return None
    return sum(a - b for a, b in terms) / len(terms)


def eps_rel(i, index: RelatedIndex, alpha=DEFAULT_ALPHA) -> Optional[float]:
    if not as_fraction(alpha) > 0:
        raise ParameterError(f"alpha must be > 0, got {alpha}")
    terms = _pair_terms(index, i)
    if not terms:
        return None
    return sum(relative_likelihood(a, b, alpha) for a, b in terms) / len(terms)


def eps_nb(j, index: RelatedIndex, km: Mapping) -> Optional[float]:
    """Mean ``eps_km`` of the users in ``Q(j)``."""
    q = index.preceding(j)
    if not q:
        return None
    return sum(km[i] for i in q) / len(q)


def eps_wnb(j, index: RelatedIndex, km: Mapping, weights: Mapping) -> Optional[float]:
    """Weighted mean ``eps_km`` over ``Q(j)``; ``None`` when all weights there are zero."""
    q = index.preceding(j)
    w = [float(weights[i]) for i in q]
    if any(x < 0 for x in w):
        raise ParameterError("weights must be non-negative")
    total = sum(w)
    if not q or total == 0:
        return None
    return sum(wi * km[i] for wi, i in zip(w, q)) / total


class CausalityScores:
    """Score table: one row per user that is a key user of some viral cascade."""

    COLUMNS = ("user_id", "eps_km", "eps_rel", "eps_nb", "eps_wnb", "n_key", "n_viral_key",
               "weight")

    def __init__(self, users, eps_km, eps_rel, eps_nb, eps_wnb, n_key, n_viral_key, weight,
                 alpha=DEFAULT_ALPHA, index=None):
        self.users = tuple(users)
        self.eps_km = np.asarray(eps_km, dtype=float)
        self.eps_rel = np.asarray(eps_rel, dtype=float)
        self.eps_nb = np.asarray(eps_nb, dtype=float)
        self.eps_wnb = np.asarray(eps_wnb, dtype=float)
        self.n_key = np.asarray(n_key, dtype=np.int64)
        self.n_viral_key = np.asarray(n_viral_key, dtype=np.int64)
        self.weight = np.asarray(weight, dtype=float)
        self.alpha = alpha
        self.index = index
        self._pos = {u: k for k, u in enumerate(self.users)}

    def __len__(self):
        return len(self.users)

    def __contains__(self, user):
        return user in self._pos

    def column(self, metric) -> np.ndarray:
        if metric not in METRICS:
            raise ParameterError(f"unknown metric {metric!r}; expected one of {METRICS}")
        return getattr(self, "eps_" + metric)

    def get(self, user, metric) -> Optional[float]:
        v = self.column(metric)[self._pos[user]]
        return None if math.isnan(v) else float(v)

    def metric(self, metric) -> dict:
        """``{user: value}`` for the users whose ``metric`` is defined."""
        col = self.column(metric)
        return {u: float(v) for u, v in zip(self.users, col.tolist()) if not math.isnan(v)}

    def row(self, user) -> dict:
        k = self._pos[user]
        out = {"user_id": user}
        for m in METRICS:
            v = self.column(m)[k]
            out["eps_" + m] = None if math.isnan(v) else float(v)
        out.update(n_key=int(self.n_key[k]), n_viral_key=int(self.n_viral_key[k]),
                   weight=float(self.weight[k]))
        return out

    def to_csv(self, fh):
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(self.COLUMNS)
        for k, u in enumerate(self.users):
            w.writerow([u] + [_fmt(self.column(m)[k]) for m in METRICS]
                       + [int(self.n_key[k]), int(self.n_viral_key[k]), _fmt(self.weight[k])])

    @classmethod
    def from_csv(cls, fh) -> "CausalityScores":
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != cls.COLUMNS:
            raise SchemaError(f"scores file header must be {','.join(cls.COLUMNS)}")
        cols = {c: [] for c in cls.COLUMNS}
        for row in reader:
            if not row:
                continue
            if len(row) != len(cls.COLUMNS):
                raise SchemaError(f"scores row has {len(row)} fields: {row!r}")
            for c, v in zip(cls.COLUMNS, row):
                cols[c].append(v)
        num = {c: [float(v) if v != "" else math.nan for v in cols[c]]
               for c in ("eps_km", "eps_rel", "eps_nb", "eps_wnb", "weight")}
        return cls(cols["user_id"], num["eps_km"], num["eps_rel"], num["eps_nb"],
                   num["eps_wnb"], [int(v) for v in cols["n_key"]],
                   [int(v) for v in cols["n_viral_key"]], num["weight"])


def _fmt(v) -> str:
    v = float(v)
    return "" if math.isnan(v) else repr(v)


def score_all(cascades: CascadeSet, config: Optional[ScoringConfig] = None) -> CausalityScores:
    """All four metrics for every user that is a key user of at least one viral cascade."""
    config = config or ScoringConfig()
    index = build_related_index(cascades, prima_facie=config.prima_facie,
                                pair_scope=config.pair_scope, workers=int(config.workers))
    counts = index.user_counts
    U = cascades.n_users
    alpha = float(config.alpha)
    src, dst = index.src, index.dst

    p_ij, p_not = index.probabilities()
    deg_src = np.bincount(src, minlength=U)
    deg_dst = np.bincount(dst, minlength=U)
    with np.errstate(invalid="ignore", divide="ignore"):
        km = np.bincount(src, weights=p_ij - p_not, minlength=U) / deg_src
        s = np.where(p_ij > p_not, p_ij / (p_not + alpha) - 1.0,
                     np.where(p_ij == p_not, 0.0, 1.0 - p_not / (p_ij + alpha)))
        rel = np.bincount(src, weights=s, minlength=U) / deg_src
        km_src = km[src]
        nb = np.bincount(dst, weights=km_src, minlength=U) / deg_dst
        w = counts.weights(config.weight_scheme)
        w_src = w[src]
        wsum = np.bincount(dst, weights=w_src, minlength=U)
        wnb = np.bincount(dst, weights=w_src * km_src, minlength=U) / wsum
    km[deg_src == 0] = np.nan
    rel[deg_src == 0] = np.nan
    nb[deg_dst == 0] = np.nan
    wnb[wsum == 0] = np.nan

    rows = np.flatnonzero(counts.n_viral_key > 0)
    return CausalityScores(
        [cascades.user_ids[k] for k in rows.tolist()],
        km[rows], rel[rows], nb[rows], wnb[rows],
        counts.n_key[rows], counts.n_viral_key[rows], w[rows],
        alpha=config.alpha, index=index,
    )
