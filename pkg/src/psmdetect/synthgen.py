"""Seeded synthetic action logs with planted PSM accounts.

Cascade sizes follow a bounded discrete power law. Viral cascades (size at
least ``viral_threshold``) fill each of their first ``ceil(phi * size)``
slots with a PSM account with probability ``early_bias``; every other slot is
drawn from the users not yet in the cascade in proportion to a per-user
activity propensity. Propensities follow a Zipf law over a random ranking of
all users, independent of PSM status (``activity_exponent=0`` gives uniform
fill). With ``early_bias=0`` PSM and normal accounts are exchangeable.

Ground truth maps each user to ``psm``/``normal``; the emitted labels use the
account-status vocabulary (``inactive`` for PSM) with optional symmetric
label noise.
"""
import json
import math
from dataclasses import asdict, dataclass

import numpy as np

from .action_log import ActionLog, as_fraction
from .errors import GenerationError, ParameterError


@dataclass(frozen=True)
class SynthConfig:
    n_users: int = 2000
    psm_fraction: float = 0.1
    n_messages: int = 500
    size_exponent: float = 2.5
    min_size: int = 20
    max_size: int = 500
    viral_threshold: int = 100
    early_bias: float = 0.8
    phi: float = 0.25
    label_noise: float = 0.0
    activity_exponent: float = 1.0
    seed: int = 42

    def __post_init__(self):
        for name in ("n_users", "n_messages", "min_size", "max_size", "viral_threshold", "seed"):
            v = getattr(self, name)
            if isinstance(v, bool) or int(v) != v:
                raise ParameterError(f"{name} must be an integer, got {v!r}")
        if self.n_messages < 1:
            raise ParameterError("n_messages must be >= 1")
        if not 0 < as_fraction(self.psm_fraction) < 1:
            raise ParameterError(f"psm_fraction must lie in (0, 1), got {self.psm_fraction}")
        if self.min_size < 2:
            raise ParameterError(f"min_size must be >= 2, got {self.min_size}")
        if self.max_size < self.min_size:
            raise ParameterError("max_size must be >= min_size")
        if self.max_size > self.n_users:
            raise ParameterError(f"max_size ({self.max_size}) exceeds n_users ({self.n_users})")
        if self.n_psm < 1:
            raise ParameterError("psm_fraction * n_users must be >= 1")
        if not 0 <= as_fraction(self.early_bias) <= 1:
            raise ParameterError(f"early_bias must lie in [0, 1], got {self.early_bias}")
        if not 0 <= as_fraction(self.label_noise) < 1:
            raise ParameterError(f"label_noise must lie in [0, 1), got {self.label_noise}")
        if not 0 < as_fraction(self.phi) < 1:
            raise ParameterError(f"phi must lie in (0, 1), got {self.phi}")
        if self.viral_threshold < 1:
            raise ParameterError("viral_threshold must be >= 1")
        if not math.isfinite(self.size_exponent):
            raise ParameterError("size_exponent must be finite")
        if not (math.isfinite(self.activity_exponent) and self.activity_exponent >= 0):
            raise ParameterError("activity_exponent must be finite and >= 0")

    @property
    def n_psm(self) -> int:
        return int(as_fraction(self.psm_fraction) * self.n_users)

    def early_slots(self, size: int) -> int:
        return math.ceil(as_fraction(self.phi) * size)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class GroundTruth:
    kind: dict    # user_id -> "psm" | "normal"
    labels: dict  # user_id -> "inactive" | "active", after noise

    @property
    def psm(self):
        return frozenset(u for u, k in self.kind.items() if k == "psm")


def size_distribution(config: SynthConfig):
    """Support and probabilities of the bounded power law over cascade sizes."""
    sizes = np.arange(config.min_size, config.max_size + 1)
    w = sizes.astype(float) ** -float(config.size_exponent)
    return sizes, w / w.sum()


def generate(config: SynthConfig):
    """Return ``(ActionLog, GroundTruth)``, fully determined by ``config.seed``."""
    n_psm = config.n_psm
    max_viral = config.max_size if config.max_size >= config.viral_threshold else 0
    if as_fraction(config.early_bias) > 0 and max_viral:
        need = config.early_slots(max_viral)
        if need > n_psm:
            raise GenerationError(
                f"early slots of the largest viral cascade ({need} = ceil(phi * {max_viral})) "
                f"exceed the PSM population ({n_psm}); lower phi or max_size, or raise psm_fraction")

    rng = np.random.default_rng(config.seed)
    width = len(str(config.n_users - 1))
    user_ids = [f"u{k:0{width}d}" for k in range(config.n_users)]
    is_psm = np.zeros(config.n_users, dtype=bool)
    is_psm[rng.choice(config.n_users, size=n_psm, replace=False)] = True
    psm_pool = np.flatnonzero(is_psm)
    activity = np.arange(1, config.n_users + 1, dtype=float) ** -float(config.activity_exponent)
    activity = activity[rng.permutation(config.n_users)]
    cdf = np.cumsum(activity)
    cdf /= cdf[-1]

    support, probs = size_distribution(config)
    sizes = rng.choice(support, size=config.n_messages, p=probs)
    bias = float(config.early_bias)

    mwidth = len(str(config.n_messages - 1))
    users_col, msgs_col, times_col = [], [], []
    for k, size in enumerate(sizes.tolist()):
        viral = size >= config.viral_threshold
        members = _fill_cascade(rng, size, config.early_slots(size) if viral else 0, bias,
                                psm_pool, cdf)
        start = int(rng.integers(0, 10**9))
        gaps = rng.integers(1, 60_000, size=size)
        times = start + np.cumsum(gaps)
        mid = f"m{k:0{mwidth}d}"
        users_col.extend(user_ids[u] for u in members)
        msgs_col.extend([mid] * size)
        times_col.append(times)

    kind = {u: ("psm" if p else "normal") for u, p in zip(user_ids, is_psm.tolist())}
    flips = rng.random(config.n_users) < float(config.label_noise)
    labels = {}
    for u, p, f in zip(user_ids, is_psm.tolist(), flips.tolist()):
        inactive = p != f
        labels[u] = "inactive" if inactive else "active"
    log = ActionLog(users_col, msgs_col, np.concatenate(times_col))
    return log, GroundTruth(kind, labels)


def _fill_cascade(rng, size, early, bias, psm_pool, cdf):
    """Ordered member codes: biased early slots, then activity-weighted fill without repeats."""
    fixed = {}
    taken = set()
    if early and bias > 0:
        planted = int((rng.random(early) < bias).sum())
        slots = rng.permutation(early)[:planted]
        psm = rng.choice(psm_pool, size=planted, replace=False).tolist()
        fixed = dict(zip(slots.tolist(), psm))
        taken.update(psm)
    n_free = size - len(fixed)
    fill = []
    while len(fill) < n_free:
        draws = np.searchsorted(cdf, rng.random(2 * (n_free - len(fill)) + 8), side="right")
        for u in np.minimum(draws, len(cdf) - 1).tolist():
            if u not in taken:
                taken.add(u)
                fill.append(u)
                if len(fill) == n_free:
                    break
    it = iter(fill)
    return [fixed[pos] if pos in fixed else next(it) for pos in range(size)]


def write_manifest(config: SynthConfig, fh, extra=None):
    doc = {"generator": "psmdetect.synthgen", "config": config.to_dict()}
    if extra:
        doc.update(extra)
    json.dump(doc, fh, indent=2, sort_keys=True)
    fh.write("\n")

