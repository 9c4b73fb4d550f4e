"""Action-log ingestion and cascade extraction.

An action log is a bag of ``(user_id, message_id, timestamp)`` tuples. Every
message defines a cascade: the users who acted on it, each kept once at their
earliest action, in canonical order ``(timestamp, user_id)``.

Internally a :class:`CascadeSet` is stored column-wise (CSR layout over
integer user codes) so the same objects serve the worked examples and
million-action logs. :class:`Cascade` objects are materialised on access.
"""
import csv
import io
import json
import os
import re
from collections.abc import Mapping
from dataclasses import dataclass
from datetime import datetime, timedelta, timezone
from fractions import Fraction
from functools import cached_property
from typing import Iterable, NamedTuple, Optional

import numpy as np

from .errors import MalformedRecordError, ParameterError

FIELDS = ("user_id", "message_id", "timestamp")

_EPOCH = datetime(1970, 1, 1, tzinfo=timezone.utc)
_INT_RE = re.compile(r"[+-]?\d+")
_FRAC_RE = re.compile(r"\.(\d+)")


class ActionRecord(NamedTuple):
    user_id: str
    message_id: str
    timestamp: int


def as_fraction(value) -> Fraction:
    """Exact rational for ``value``; floats are read by their decimal repr (0.1 -> 1/10)."""
    if isinstance(value, bool):
        raise ParameterError(f"expected a number, got {value!r}")
    if isinstance(value, Fraction):
        return value
    if isinstance(value, (int, np.integer)):
        return Fraction(int(value))
    if isinstance(value, (float, np.floating)):
        if not np.isfinite(value):
            raise ParameterError(f"expected a finite number, got {value!r}")
        return Fraction(repr(float(value)))
    if isinstance(value, str):
        try:
            return Fraction(value.strip())
        except ValueError:
            raise ParameterError(f"not a rational number: {value!r}") from None
    raise ParameterError(f"expected a number, got {type(value).__name__}")


def check_phi(phi) -> Fraction:
    phi = as_fraction(phi)
    if not 0 < phi < 1:
        raise ParameterError(f"phi must lie in (0, 1), got {phi}")
    return phi


def check_viral_threshold(viral_threshold) -> int:
    if isinstance(viral_threshold, bool) or not isinstance(viral_threshold, (int, np.integer)):
        raise ParameterError(f"viral_threshold must be an integer, got {viral_threshold!r}")
    if viral_threshold < 1:
        raise ParameterError(f"viral_threshold must be >= 1, got {viral_threshold}")
    return int(viral_threshold)


def parse_timestamp(value) -> int:
    """Epoch milliseconds from an integer or an RFC 3339 string."""
    if isinstance(value, bool):
        raise ValueError("boolean timestamp")
    if isinstance(value, (int, np.integer)):
        ts = int(value)
    elif isinstance(value, str):
        s = value.strip()
        if _INT_RE.fullmatch(s):
            ts = int(s)
        else:
            ts = _rfc3339_to_ms(s)
    else:
        raise ValueError(f"timestamp must be an integer or RFC 3339 string, got {value!r}")
    if ts < 0:
        raise ValueError(f"negative timestamp {ts}")
    return ts


def _rfc3339_to_ms(s: str) -> int:
    if "T" not in s and "t" not in s and " " not in s:
        raise ValueError(f"not an integer or RFC 3339 timestamp: {s!r}")
    norm = s.upper().replace("Z", "+00:00")
    # fromisoformat (3.10) only takes 3 or 6 fractional digits
    m = _FRAC_RE.search(norm)
    if m:
        digits = (m.group(1) + "000000")[:6]
        norm = norm[: m.start()] + "." + digits + norm[m.end():]
    try:
        dt = datetime.fromisoformat(norm)
    except ValueError:
        raise ValueError(f"not an integer or RFC 3339 timestamp: {s!r}") from None
    if dt.tzinfo is None:
        raise ValueError(f"RFC 3339 timestamp lacks a UTC offset: {s!r}")
    return (dt - _EPOCH) // timedelta(milliseconds=1)


def make_record(user_id, message_id, timestamp) -> ActionRecord:
    """Validate raw field values and build a record (raises ValueError)."""
    ids = []
    for name, v in (("user_id", user_id), ("message_id", message_id)):
        if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
            v = str(v)
        if not isinstance(v, str):
            raise ValueError(f"{name} must be a string, got {v!r}")
        v = v.strip()
        if not v:
            raise ValueError(f"empty {name}")
        ids.append(v)
    return ActionRecord(ids[0], ids[1], parse_timestamp(timestamp))


class ActionLog:
    """Immutable, column-backed sequence of :class:`ActionRecord`.

    ``skipped`` counts malformed input lines dropped in lenient mode and
    ``errors`` keeps their messages.
    """

    def __init__(self, user_ids, message_ids, timestamps, skipped=0, errors=()):
        user_ids = list(user_ids)
        message_ids = list(message_ids)
        timestamps = np.asarray(timestamps, dtype=np.int64).reshape(-1)
        if not (len(user_ids) == len(message_ids) == len(timestamps)):
            raise ParameterError("user, message and timestamp columns differ in length")
        if len(timestamps) and timestamps.min() < 0:
            raise ParameterError("timestamps must be >= 0")
        if not all(user_ids) or not all(message_ids):
            raise ParameterError("user_id and message_id must be non-empty")
        timestamps.setflags(write=False)
        self._users = user_ids
        self._messages = message_ids
        self._times = timestamps
        self.skipped = int(skipped)
        self.errors = tuple(errors)

    @classmethod
    def from_records(cls, records: Iterable, skipped=0, errors=()) -> "ActionLog":
        recs = [r if isinstance(r, ActionRecord) else make_record(*r) for r in records]
        return cls(
            [r.user_id for r in recs],
            [r.message_id for r in recs],
            np.fromiter((r.timestamp for r in recs), dtype=np.int64, count=len(recs)),
            skipped=skipped,
            errors=errors,
        )

    def __len__(self):
        return len(self._times)

    def __iter__(self):
        return iter(self.records)

    def __getitem__(self, pos):
        return ActionRecord(self._users[pos], self._messages[pos], int(self._times[pos]))

    @property
    def user_ids(self):
        return self._users

    @property
    def message_ids(self):
        return self._messages

    @property
    def timestamps(self) -> np.ndarray:
        return self._times

    @cached_property
    def records(self):
        return tuple(
            ActionRecord(u, m, t)
            for u, m, t in zip(self._users, self._messages, self._times.tolist())
        )

    @cached_property
    def user_index(self):
        return _positions(self._users)

    @cached_property
    def message_index(self):
        return _positions(self._messages)

    def __repr__(self):
        return f"ActionLog({len(self)} records, skipped={self.skipped})"


def _positions(keys):
    index = {}
    for pos, key in enumerate(keys):
        index.setdefault(key, []).append(pos)
    return {k: tuple(v) for k, v in index.items()}


def parse_action_log(stream, format="csv", strict=False) -> ActionLog:
    """Read an action log from a path, text stream, or iterable of lines.

    ``format`` is ``"csv"`` (optional ``user_id,message_id,timestamp`` header)
    or ``"jsonl"``. Malformed lines raise :class:`MalformedRecordError` when
    ``strict``; otherwise they are skipped and counted in ``log.skipped``.
    Blank lines are ignored.
    """
    if format not in ("csv", "jsonl"):
        raise ParameterError(f"unknown format {format!r}; expected csv or jsonl")
    if isinstance(stream, (str, os.PathLike)):
        with open(stream, encoding="utf-8", newline="") as fh:
            return parse_action_log(fh, format=format, strict=strict)
    if isinstance(stream, (bytes, bytearray)):
        stream = io.StringIO(stream.decode("utf-8"))

    users, messages, times = [], [], []
    errors = []
    lines = (ln.decode("utf-8") if isinstance(ln, (bytes, bytearray)) else ln for ln in stream)
    rows = _csv_rows(lines) if format == "csv" else _jsonl_rows(lines)
    for line_no, row in rows:
        try:
            if isinstance(row, Exception):
                raise row
            rec = make_record(*row)
        except ValueError as exc:
            err = MalformedRecordError(str(exc), line_no)
            if strict:
                raise err from None
            errors.append(str(err))
            continue
        users.append(rec.user_id)
        messages.append(rec.message_id)
        times.append(rec.timestamp)
    return ActionLog(users, messages, np.array(times, dtype=np.int64),
                     skipped=len(errors), errors=errors)


def _csv_rows(lines):
    columns = None
    reader = csv.reader(lines)
    for row in reader:
        line_no = reader.line_num
        if not row or all(not f.strip() for f in row):
            continue
        cells = [f.strip() for f in row]
        if columns is None:
            columns = (0, 1, 2)
            if set(cells) == set(FIELDS) and len(cells) == 3:
                columns = tuple(cells.index(f) for f in FIELDS)
                continue
        if len(cells) != 3:
            yield line_no, ValueError(f"expected 3 fields, got {len(cells)}")
            continue
        yield line_no, tuple(cells[c] for c in columns)


def _jsonl_rows(lines):
    for line_no, line in enumerate(lines, 1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            yield line_no, ValueError(f"invalid JSON: {exc.msg}")
            continue
        if not isinstance(obj, dict) or any(f not in obj for f in FIELDS):
            yield line_no, ValueError("object lacks user_id, message_id or timestamp")
            continue
        yield line_no, tuple(obj[f] for f in FIELDS)


def write_action_log(log: ActionLog, fh, format="csv"):
    """Serialise ``log`` in input order (inverse of :func:`parse_action_log`)."""
    if format == "csv":
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(FIELDS)
        w.writerows(zip(log.user_ids, log.message_ids, log.timestamps.tolist()))
    elif format == "jsonl":
        for u, m, t in zip(log.user_ids, log.message_ids, log.timestamps.tolist()):
            fh.write(json.dumps({"user_id": u, "message_id": m, "timestamp": t}) + "\n")
    else:
        raise ParameterError(f"unknown format {format!r}; expected csv or jsonl")


@dataclass(frozen=True)
class Cascade:
    message_id: str
    participants: tuple  # ((user_id, timestamp), ...) in canonical order
    viral: bool
    key_users: frozenset

    @property
    def users(self):
        return tuple(u for u, _ in self.participants)

    def __len__(self):
        return len(self.participants)


class CascadeSet:
    """Deduplicated cascades of an action log plus viral and key-user labels.

    Column layout: participants of cascade ``k`` (messages sorted by id) are
    ``part_user[ptr[k]:ptr[k+1]]`` in canonical order; ``part_user`` holds
    codes into ``user_ids`` (sorted, so code order is lexicographic order).
    """

    def __init__(self, message_ids, user_ids, ptr, part_user, part_time, is_key,
                 viral_threshold, phi):
        self.message_ids = tuple(message_ids)
        self.user_ids = tuple(user_ids)
        self.ptr = _frozen(ptr, np.int64)
        self.part_user = _frozen(part_user, np.int64)
        self.part_time = _frozen(part_time, np.int64)
        self.is_key = _frozen(is_key, bool)
        self.viral_threshold = check_viral_threshold(viral_threshold)
        self.phi = check_phi(phi)
        self.sizes = _frozen(np.diff(self.ptr), np.int64)
        self.viral = _frozen(self.sizes >= self.viral_threshold, bool)
        # cascade index of every participant slot
        self.part_msg = _frozen(np.repeat(np.arange(len(self.message_ids)), self.sizes), np.int64)
        self._msg_pos = {m: k for k, m in enumerate(self.message_ids)}
        self._user_code = {u: k for k, u in enumerate(self.user_ids)}

    @property
    def n_messages(self) -> int:
        return len(self.message_ids)

    @property
    def n_viral(self) -> int:
        return int(self.viral.sum())

    @property
    def n_users(self) -> int:
        return len(self.user_ids)

    @property
    def rho_counts(self):
        """``(viral cascades, cascades)`` as integers."""
        return self.n_viral, self.n_messages

    @property
    def rho(self) -> Fraction:
        """Prior probability of a cascade going viral (0 for an empty set)."""
        v, n = self.rho_counts
        return Fraction(v, n) if n else Fraction(0)

    def has_user(self, user_id) -> bool:
        return user_id in self._user_code

    def user_code(self, user_id) -> int:
        return self._user_code[user_id]

    def message_pos(self, message_id) -> int:
        return self._msg_pos[message_id]

    def cascade_at(self, k: int) -> Cascade:
        lo, hi = self.ptr[k], self.ptr[k + 1]
        users = [self.user_ids[c] for c in self.part_user[lo:hi].tolist()]
        times = self.part_time[lo:hi].tolist()
        keys = frozenset(u for u, key in zip(users, self.is_key[lo:hi].tolist()) if key)
        return Cascade(self.message_ids[k], tuple(zip(users, times)), bool(self.viral[k]), keys)

    @property
    def cascades(self) -> Mapping:
        return _CascadeView(self)

    def __len__(self):
        return self.n_messages

    def __iter__(self):
        return (self.cascade_at(k) for k in range(self.n_messages))

    def summary(self) -> dict:
        return {
            "cascades": self.n_messages,
            "viral_cascades": self.n_viral,
            "users": self.n_users,
            "participations": int(len(self.part_user)),
        }

    def __repr__(self):
        return (f"CascadeSet({self.n_messages} cascades, {self.n_viral} viral, "
                f"{self.n_users} users, theta={self.viral_threshold}, phi={self.phi})")


class _CascadeView(Mapping):
    def __init__(self, cs):
        self._cs = cs

    def __getitem__(self, message_id):
        return self._cs.cascade_at(self._cs.message_pos(message_id))

    def __iter__(self):
        return iter(self._cs.message_ids)

    def __len__(self):
        return self._cs.n_messages


def _frozen(a, dtype):
    a = np.ascontiguousarray(a, dtype=dtype)
    a.setflags(write=False)
    return a


def extract_cascades(log: ActionLog, viral_threshold: int, phi) -> CascadeSet:
    """Build cascades from ``log``: earliest action per user, canonical order.

    A cascade is viral when it has at least ``viral_threshold`` distinct
    participants. A participant is a key user when
    ``size * phi <= #participants with a strictly later timestamp``.
    """
    viral_threshold = check_viral_threshold(viral_threshold)
    phi = check_phi(phi)
    if len(log) == 0:
        return CascadeSet((), (), np.zeros(1), (), (), (), viral_threshold, phi)

    user_vocab, uinv = np.unique(np.asarray(log.user_ids), return_inverse=True)
    msg_vocab, minv = np.unique(np.asarray(log.message_ids), return_inverse=True)
    times = log.timestamps
    order = np.lexsort((uinv, times, minv))
    m_s, t_s, u_s = minv[order], times[order], uinv[order]

    # first (= earliest, canonical) action of each user on each message
    pair = m_s.astype(np.int64) * len(user_vocab) + u_s
    _, first = np.unique(pair, return_index=True)
    keep = np.sort(first)
    m_k, t_k, u_k = m_s[keep], t_s[keep], u_s[keep]

    n_msg = len(msg_vocab)
    sizes = np.bincount(m_k, minlength=n_msg)
    ptr = np.concatenate(([0], np.cumsum(sizes)))
    is_key = _key_flags(m_k, t_k, ptr, sizes, phi)
    return CascadeSet(msg_vocab.tolist(), user_vocab.tolist(), ptr, u_k, t_k, is_key,
                      viral_threshold, phi)


def _key_flags(msg, times, ptr, sizes, phi):
    n = len(msg)
    if n == 0:
        return np.zeros(0, dtype=bool)
    # a tie group is a run of equal (cascade, timestamp); successors start after it
    start = np.ones(n, dtype=bool)
    start[1:] = (msg[1:] != msg[:-1]) | (times[1:] != times[:-1])
    starts = np.flatnonzero(start)
    group_end = np.append(starts[1:], n)[np.cumsum(start) - 1]
    successors = ptr[msg + 1] - group_end
    size = sizes[msg]
    return size * phi.numerator <= successors * phi.denominator


def key_user_check(cascade: Cascade, user, phi) -> bool:
    """Whether ``user`` precedes at least a ``phi`` fraction of ``cascade``."""
    phi = check_phi(phi)
    times = dict(cascade.participants)
    if user not in times:
        raise ParameterError(f"user {user!r} does not participate in {cascade.message_id!r}")
    t = times[user]
    later = sum(1 for _, t2 in cascade.participants if t2 > t)
    return len(cascade.participants) * phi <= later


def write_cascade_dump(cascades: CascadeSet, fh):
    """One JSON object per cascade: message_id, viral, ordered participants."""
    for c in cascades:
        fh.write(json.dumps({
            "message_id": c.message_id,
            "viral": c.viral,
            "participants": [[u, t] for u, t in c.participants],
        }) + "\n")


def read_cascade_dump(stream, viral_threshold: int, phi) -> CascadeSet:
    """Rebuild a :class:`CascadeSet` from a cascade dump."""
    if isinstance(stream, (str, os.PathLike)):
        with open(stream, encoding="utf-8") as fh:
            return read_cascade_dump(fh, viral_threshold, phi)
    recs = []
    for line_no, line in enumerate(stream, 1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
            recs.extend(make_record(u, obj["message_id"], t) for u, t in obj["participants"])
        except (ValueError, KeyError, TypeError) as exc:
            raise MalformedRecordError(f"bad cascade entry: {exc}", line_no) from None
    return extract_cascades(ActionLog.from_records(recs), viral_threshold, phi)


def log_summary(log: ActionLog, cascades: Optional[CascadeSet] = None) -> dict:
    """Dataset statistics: actions, cascades, users (plus viral count and skips)."""
    out = {"actions": len(log)}
    if cascades is not None:
        out.update(cascades=cascades.n_messages, viral_cascades=cascades.n_viral,
                   users=cascades.n_users)
    else:
        out.update(cascades=len(set(log.message_ids)), users=len(set(log.user_ids)))
    out["skipped_lines"] = log.skipped
    return out

