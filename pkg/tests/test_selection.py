import io
import math

import pytest

from psmdetect import (SEED, CausalityScores, InvariantError, ParameterError, SelectionConfig,
                       calibrated_config, combo_select, prosel, random_baseline,
                       threshold_select)
from psmdetect.selection import (check_prosel, read_selection, score_quantile, write_selection)

from conftest import EX2_SCORES, ex2_members
from equivalence import check_prosel_case, random_prosel_case


def test_threshold_boundary_inclusive():
    scores = {"a": 0.95, "b": 0.70, "c": 0.69}
    assert threshold_select(scores, "km", 0.7) == {"a", "b"}


def test_threshold_all_undefined():
    assert threshold_select({"a": None, "b": math.nan}, "wnb", 0.0) == set()


def test_threshold_errors():
    with pytest.raises(ParameterError):
        threshold_select({}, "bogus", 0.7)
    with pytest.raises(ParameterError):
        threshold_select({}, "km", math.inf)


def _combo_scores():
    users = ["p", "q", "r", "s"]
    return CausalityScores(
        users,
        eps_km=[0.9, 0.9, 0.1, math.nan],
        eps_rel=[8.0, 1.0, 1.0, 9.0],
        eps_nb=[0.8, 0.8, 0.1, 0.9],
        eps_wnb=[0.1, 0.8, 0.1, 0.9],
        n_key=[1] * 4, n_viral_key=[1] * 4, weight=[1.0] * 4)


def test_combo_examples():
    scores = _combo_scores()
    # p meets km, rel, nb; q meets km, nb, wnb; s meets rel, nb, wnb; r none
    assert combo_select(scores, combo_k=3) == {"p", "q", "s"}
    assert combo_select(scores, combo_k=4) == set()
    union = set().union(*(threshold_select(scores, m, t)
                          for m, t in {"km": 0.7, "rel": 7, "nb": 0.7, "wnb": 0.7}.items()))
    assert combo_select(scores, combo_k=1) == union
    with pytest.raises(ParameterError):
        combo_select(scores, combo_k=5)


def test_propagation_trace():
    res = prosel(ex2_members(), EX2_SCORES, SelectionConfig(theta=0.9, lam=0.1, min_score=0.7))
    assert res.selected == {"a", "g", "b", "d"}
    assert res.provenance["a"] == (0, SEED) and res.provenance["g"] == (0, SEED)
    assert res.provenance["b"][0] == 1 and res.provenance["d"] == (2, "t2")
    assert res.iterations == 3
    assert res.layers() == [{"a", "g"}, {"b"}, {"d"}]
    # H of the big cascade: 0.90 after the seeds, 0.82 after b, 0.73 after d
    assert [h for _, h in res.h_trace["t2"]] == [0.90, 0.82, 0.73]


def test_propagation_trace_passes_invariant_check():
    cfg = SelectionConfig(theta=0.9, lam=0.1, min_score=0.7)
    res = prosel(ex2_members(), EX2_SCORES, cfg)
    check_prosel(res, ex2_members(), EX2_SCORES, cfg)
    res.provenance["c"] = (1, "t2")
    with pytest.raises(InvariantError):
        check_prosel(res, ex2_members(), EX2_SCORES, cfg)


def test_no_seed_means_empty():
    res = prosel(ex2_members(), {"a": 0.1}, SelectionConfig())
    assert res.selected == set() and res.iterations == 0


def test_selection_config_validation():
    assert SelectionConfig(metric="rel").theta == 9.0
    assert SelectionConfig(metric="rel").lam == 1.0
    with pytest.raises(ParameterError):
        SelectionConfig(lam=0)
    with pytest.raises(ParameterError):
        SelectionConfig(theta=0.5, min_score=0.7)
    with pytest.raises(ParameterError):
        SelectionConfig(metric="x")


def test_prosel_matches_fixed_point():
    for seed in range(900, 1000):
        bad, _ = check_prosel_case(*random_prosel_case(seed))
        assert bad == [], seed


def test_random_baseline():
    users = {f"u{k}" for k in range(30)}
    assert random_baseline(users, 30, seed=1) == users
    assert random_baseline(users, 0, seed=1) == set()
    assert random_baseline(users, 7, seed=3) == random_baseline(list(users)[::-1], 7, seed=3)
    with pytest.raises(ParameterError):
        random_baseline(users, 31)


def test_calibrated_config_orders_cutoffs():
    scores = {f"u{k}": k / 100 for k in range(100)}
    cfg = calibrated_config(scores, "km", 0.8, 0.98, 0.5)
    assert cfg.min_score == pytest.approx(score_quantile(scores, "km", 0.8))
    assert cfg.theta >= cfg.min_score and cfg.lam == pytest.approx((cfg.theta - cfg.min_score) / 2)
    flat = calibrated_config({"a": 0.5, "b": 0.5}, "km")
    assert flat.lam > 0
    with pytest.raises(ParameterError):
        score_quantile({}, "km", 0.5)


def test_selection_jsonl_roundtrip():
    cfg = SelectionConfig(theta=0.9, lam=0.1, min_score=0.7)
    res = prosel(ex2_members(), EX2_SCORES, cfg)
    buf = io.StringIO()
    write_selection(buf, res.selected, EX2_SCORES, "wnb", res.provenance)
    lines = buf.getvalue().splitlines()
    assert lines[0].startswith('{"user_id": "a", "metric": "wnb", "score": 0.9, "iteration": 0, '
                               '"message_id": null}')
    assert read_selection(io.StringIO(buf.getvalue())) == ["a", "g", "b", "d"]
