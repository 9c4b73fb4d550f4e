import os
import sys
from fractions import Fraction

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))

from psmdetect import ActionLog, extract_cascades, parse_action_log  # noqa: E402

FIXTURES = os.path.join(os.path.dirname(__file__), "fixtures")
EX1_CSV = os.path.join(FIXTURES, "ex1.csv")

# two 8-user cascades, one action per user at ticks 1..8
EX1_ORDER = {"t1": "abcdefgh", "t2": "nmcahvst"}
EX1_R = {
    "a": set("bcdefhv"), "b": set("cdef"), "c": set("adefhv"), "d": set("ef"),
    "e": set("f"), "n": set("mcahv"), "m": set("cahv"), "h": set("v"),
}
EX1_Q = {
    "a": set("cnm"), "b": set("a"), "c": set("abnm"), "d": set("abc"), "e": set("abcd"),
    "f": set("abcde"), "h": set("acnm"), "m": set("n"), "v": set("acnmh"), "n": set(),
}

# cascade hypergraph and scores of the propagation walk-through
EX2_MEMBERS = {"t1": "abg", "t2": "abcdeghi", "t3": "ehi"}
EX2_SCORES = {"g": 0.92, "a": 0.90, "b": 0.82, "d": 0.73, "c": 0.65, "e": 0.65,
              "h": 0.62, "i": 0.62}

PHIS = (Fraction(1, 4), Fraction(1, 3), Fraction(1, 2), Fraction(2, 3), Fraction(3, 4))


def ex1_records():
    return [(u, m, k) for m, us in EX1_ORDER.items() for k, u in enumerate(us, 1)]


@pytest.fixture
def ex1_log():
    return parse_action_log(EX1_CSV)


@pytest.fixture
def ex1_cascades(ex1_log):
    return extract_cascades(ex1_log, 2, Fraction(1, 4))


def ex2_members():
    return {m: list(us) for m, us in EX2_MEMBERS.items()}


def micro_log(rng, max_users=8, max_messages=6, max_actions=5, max_time=9, min_actions=1):
    """Random tiny action log as a list of (user, message, t); ties are common."""
    n_users = int(rng.integers(2, max_users + 1))
    n_msgs = int(rng.integers(1, max_messages + 1))
    users = [f"u{k}" for k in range(n_users)]
    records = []
    for m in range(n_msgs):
        for _ in range(int(rng.integers(min_actions, max_actions + 1))):
            records.append((users[int(rng.integers(n_users))], f"m{m}",
                            int(rng.integers(0, max_time + 1))))
    return records


def micro_params(rng, dense=False):
    """Scoring parameters; ``dense`` favours small phi so related pairs are common."""
    phis = PHIS[:2] if dense else PHIS
    return {
        "viral_threshold": int(rng.integers(2 if dense else 1, 4)),
        "phi": phis[int(rng.integers(len(phis)))],
        "prima_facie": bool(rng.integers(2)),
        "pair_scope": ("all", "key_users")[int(rng.integers(2))],
        "weight_scheme": ("viral_participant", "viral_key", "uniform")[int(rng.integers(3))],
    }


def log_from(records):
    return ActionLog.from_records(records)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
