"""Scoring selections against account-status labels.

A selected account counts as a true positive when its label is ``inactive``
(suspended or deleted) and as a false positive when ``active``. Unlabeled
selections are reported on their own and kept out of precision.

Cascade-size statistics run over the multiset of ``(user, cascade)``
participations of the labeled selected users, so a user active in many
cascades contributes one size per cascade.
"""
import csv
import io
import json
import os
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional

import numpy as np

from .action_log import CascadeSet
from .errors import SchemaError

STATUSES = ("active", "inactive")
REPORT_COLUMNS = ("method", "selected", "false_pos", "true_pos", "precision", "avg_cs",
                  "med_cs", "unlabeled")


def read_labels(stream) -> dict:
    """``{user_id: status}`` from a ``user_id,status`` CSV."""
    if isinstance(stream, (str, os.PathLike)):
        with open(stream, encoding="utf-8", newline="") as fh:
            return read_labels(fh)
    reader = csv.reader(stream)
    labels = {}
    for row in reader:
        if not row or all(not c.strip() for c in row):
            continue
        cells = [c.strip() for c in row]
        if reader.line_num == 1 and cells == ["user_id", "status"]:
            continue
        if len(cells) != 2 or cells[1] not in STATUSES or not cells[0]:
            raise SchemaError(f"labels line {reader.line_num}: expected user_id,active|inactive")
        labels[cells[0]] = cells[1]
    return labels


def write_labels(labels: dict, fh):
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["user_id", "status"])
    for u in sorted(labels):
        w.writerow([u, labels[u]])


@dataclass(frozen=True)
class EvaluationReport:
    method: str
    selected: int
    true_pos: int
    false_pos: int
    unlabeled: int
    precision: Optional[Fraction]
    avg_cs: Optional[Fraction]
    med_cs: Optional[int]

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "selected": self.selected,
            "false_pos": self.false_pos,
            "true_pos": self.true_pos,
            "precision": None if self.precision is None else float(self.precision),
            "avg_cs": None if self.avg_cs is None else float(self.avg_cs),
            "med_cs": self.med_cs,
            "unlabeled": self.unlabeled,
        }


def _participation_sizes(users, cascades):
    if isinstance(cascades, CascadeSet):
        codes = [cascades.user_code(u) for u in users if cascades.has_user(u)]
        mask = np.zeros(cascades.n_users, dtype=bool)
        mask[codes] = True
        hit = mask[cascades.part_user]
        return cascades.sizes[cascades.part_msg[hit]].tolist()
    sizes = []
    for members in cascades.values():
        members = set(members)
        sizes.extend([len(members)] * len(members & users))
    return sizes


def evaluate(selected, labels: dict, cascades, method="") -> EvaluationReport:
    """Counts, precision and cascade-size statistics for one selection.

    ``cascades`` is a :class:`CascadeSet` or a mapping ``message_id -> users``.
    Precision is ``None`` when nothing labeled was selected; the median is
    the lower middle element for even counts.
    """
    selected = set(selected)
    tp = sum(1 for u in selected if labels.get(u) == "inactive")
    fp = sum(1 for u in selected if labels.get(u) == "active")
    unlabeled = len(selected) - tp - fp
    labeled = {u for u in selected if u in labels}
    sizes = sorted(_participation_sizes(labeled, cascades))
    return EvaluationReport(
        method=method,
        selected=len(selected),
        true_pos=tp,
        false_pos=fp,
        unlabeled=unlabeled,
        precision=Fraction(tp, tp + fp) if tp + fp else None,
        avg_cs=Fraction(sum(sizes), len(sizes)) if sizes else None,
        med_cs=sizes[(len(sizes) - 1) // 2] if sizes else None,
    )


def compare_methods(method_results: dict, labels: dict, cascades) -> list:
    """One report per method, in the mapping's order."""
    return [evaluate(sel, labels, cascades, method=name) for name, sel in method_results.items()]


def _cell(v, digits=None):
    if v is None:
        return ""
    if isinstance(v, Fraction):
        v = float(v)
    if isinstance(v, float) and digits is not None:
        return f"{v:.{digits}f}"
    return str(v)


def reports_to_csv(reports, fh):
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(REPORT_COLUMNS)
    for r in reports:
        d = r.to_dict()
        w.writerow([_cell(d[c]) for c in REPORT_COLUMNS])


def reports_to_jsonl(reports, fh):
    for r in reports:
        fh.write(json.dumps(r.to_dict()) + "\n")


def render_table(reports) -> str:
    """Aligned text table; undefined precision prints as ``-``."""
    head = ["Method", "Selected", "False Pos", "True Pos", "Precision", "Avg CS", "Med CS",
            "Unlabeled"]
    rows = []
    for r in reports:
        rows.append([
            r.method, str(r.selected), str(r.false_pos), str(r.true_pos),
            _cell(r.precision, 2) or "-", _cell(r.avg_cs, 2) or "-",
            "-" if r.med_cs is None else str(r.med_cs), str(r.unlabeled),
        ])
    widths = [max(len(h), *(len(row[k]) for row in rows)) if rows else len(h)
              for k, h in enumerate(head)]
    out = io.StringIO()

    def fmt(cells):
        return "  ".join(c.ljust(w) if k == 0 else c.rjust(w)
                         for k, (c, w) in enumerate(zip(cells, widths)))

    out.write(fmt(head).rstrip() + "\n")
    out.write("  ".join("-" * w for w in widths) + "\n")
    for row in rows:
        out.write(fmt(row).rstrip() + "\n")
    return out.getvalue()
