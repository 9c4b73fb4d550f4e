import io
import json
from fractions import Fraction

import numpy as np
import pytest

from psmdetect import (ActionLog, MalformedRecordError, ParameterError, extract_cascades,
                       key_user_check, log_summary, parse_action_log, read_cascade_dump,
                       write_action_log, write_cascade_dump)
from psmdetect.action_log import parse_timestamp

import oracle
from conftest import ex1_records, log_from, micro_log


def test_parse_single_csv_line():
    log = parse_action_log(["u1,m1,1000"])
    assert list(log.records) == [("u1", "m1", 1000)]


def test_strict_missing_timestamp():
    with pytest.raises(MalformedRecordError, match="line 1"):
        parse_action_log(["u1,m1"], strict=True)


def test_lenient_skips_and_counts():
    log = parse_action_log(io.StringIO("u1,m1,1\nbroken\nu2,m1,2\n"))
    assert len(log) == 2
    assert log.skipped == 1
    assert "line 2" in log.errors[0]


@pytest.mark.parametrize("bad", ["u1,m1,-5", "u1,m1,1.5", "u1,m1,abc", ",m1,3", "u1,,3"])
def test_bad_fields_are_malformed(bad):
    with pytest.raises(MalformedRecordError):
        parse_action_log([bad], strict=True)


def test_header_and_reordered_columns():
    log = parse_action_log(["timestamp,user_id,message_id", "7,u,m"])
    assert list(log.records) == [("u", "m", 7)]


def test_jsonl_parse():
    lines = ['{"user_id": "a", "message_id": "m", "timestamp": 3}', "", '{"user_id": "b"}']
    log = parse_action_log(lines, format="jsonl")
    assert list(log.records) == [("a", "m", 3)]
    assert log.skipped == 1


def test_rfc3339_timestamps():
    assert parse_timestamp("1970-01-01T00:00:01Z") == 1000
    assert parse_timestamp("1970-01-01T01:00:00.5+01:00") == 500
    with pytest.raises(ValueError):
        parse_timestamp("1970-01-01T00:00:01")  # no offset


def test_unknown_format():
    with pytest.raises(ParameterError):
        parse_action_log([], format="xml")


def test_indexes_consistent(ex1_log):
    for key, index in ((0, ex1_log.user_index), (1, ex1_log.message_index)):
        seen = sorted(p for ps in index.values() for p in ps)
        assert seen == list(range(len(ex1_log)))
        for k, ps in index.items():
            assert all(ex1_log[p][key] == k for p in ps)


def test_write_then_parse_roundtrip(ex1_log):
    for fmt in ("csv", "jsonl"):
        buf = io.StringIO()
        write_action_log(ex1_log, buf, fmt)
        again = parse_action_log(io.StringIO(buf.getvalue()), format=fmt)
        assert list(again.records) == list(ex1_log.records)


def test_first_occurrence_rule():
    cs = extract_cascades(log_from([("a", "m1", 1), ("a", "m1", 5), ("b", "m1", 2)]), 2, 0.5)
    assert cs.cascades["m1"].participants == (("a", 1), ("b", 2))


def test_ex1_key_users(ex1_cascades):
    assert ex1_cascades.cascades["t1"].key_users == set("abcdef")
    assert ex1_cascades.cascades["t2"].key_users == set("nmcahv")
    assert ex1_cascades.rho == 1


def test_ex1_summary(ex1_log, ex1_cascades):
    s = log_summary(ex1_log, ex1_cascades)
    assert (s["actions"], s["cascades"], s["users"]) == (16, 2, 13)


def test_rho_quarter():
    recs = [("a", "m1", 1), ("b", "m1", 2), ("a", "m2", 1), ("a", "m3", 1), ("a", "m4", 1)]
    cs = extract_cascades(log_from(recs), 2, 0.5)
    assert cs.rho == Fraction(1, 4)
    assert cs.rho_counts == (1, 4)


@pytest.mark.parametrize("theta,phi", [(0, 0.5), (2, 0), (2, 1), (2, 1.5), (True, 0.5)])
def test_extract_parameter_errors(ex1_log, theta, phi):
    with pytest.raises(ParameterError):
        extract_cascades(ex1_log, theta, phi)


def test_empty_log_gives_empty_set():
    cs = extract_cascades(ActionLog([], [], np.zeros(0, dtype=np.int64)), 1, 0.5)
    assert cs.n_messages == 0 and cs.rho == 0


def test_key_user_check_examples(ex1_cascades):
    t1 = ex1_cascades.cascades["t1"]
    assert key_user_check(t1, "g", Fraction(1, 4)) is False
    assert key_user_check(t1, "h", Fraction(1, 100)) is False
    assert key_user_check(t1, "a", Fraction(6, 8)) is True
    with pytest.raises(ParameterError):
        key_user_check(t1, "zz", 0.5)


def test_ties_are_not_preceding():
    # three-way tie at t=1: nobody has a strict successor inside the tie
    recs = [("c", "m", 1), ("a", "m", 1), ("b", "m", 1), ("d", "m", 2)]
    c = extract_cascades(log_from(recs), 1, Fraction(1, 4)).cascades["m"]
    assert c.users == ("a", "b", "c", "d")
    assert c.key_users == {"a", "b", "c"}


def test_cascade_dump_roundtrip(ex1_cascades):
    buf = io.StringIO()
    write_cascade_dump(ex1_cascades, buf)
    first = json.loads(buf.getvalue().splitlines()[0])
    assert first["message_id"] == "t1" and first["participants"][0] == ["a", 1]
    again = read_cascade_dump(io.StringIO(buf.getvalue()), 2, Fraction(1, 4))
    assert list(again) == list(ex1_cascades)


def test_prefix_property_brute_force():
    for n in range(1, 51):
        for phi in (Fraction(1, 4), Fraction(1, 3), Fraction(1, 2), Fraction(9, 10)):
            recs = [(f"u{k:02d}", "m", k) for k in range(n)]
            keys = extract_cascades(log_from(recs), 1, phi).cascades["m"].key_users
            k = max((i for i in range(1, n + 1) if n * phi <= n - i), default=0)
            assert keys == {f"u{i:02d}" for i in range(k)}


def test_matches_oracle_on_micro_logs():
    rng = np.random.default_rng(3)
    for _ in range(200):
        recs = micro_log(rng)
        phi = Fraction(int(rng.integers(1, 4)), 4)
        cs = extract_cascades(log_from(recs), 2, phi)
        ref = oracle.cascades(recs)
        assert set(cs.cascades) == set(ref)
        for m, parts in ref.items():
            c = cs.cascades[m]
            assert list(c.participants) == parts
            assert c.key_users == oracle.key_users(parts, phi)


def test_ex1_records_fixture_matches_file(ex1_log):
    assert sorted(ex1_log.records) == sorted(ex1_records())
