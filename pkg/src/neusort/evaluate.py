"""Ground-truth matching and sorting-quality metrics."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

from .model import PROVISIONAL


@dataclass
class UnitStats:
    truth_unit: int
    output_unit: int | None
    n_truth: int
    tp: int
    fn: int
    fp: int

    @property
    def accuracy(self) -> float:
        d = self.tp + self.fn + self.fp
        return self.tp / d if d else 0.0

    @property
    def recall(self) -> float:
        d = self.tp + self.fn
        return self.tp / d if d else 0.0


@dataclass
class MatchResult:
    tp: int
    fp: int
    fn: int
    n_truth: int
    n_outputs: int  # non-provisional outputs
    n_provisional: int
    mapping: dict  # output unit -> truth unit
    units: list = field(default_factory=list)
    unmatched_truth: list = field(default_factory=list)
    unmatched_outputs: list = field(default_factory=list)
    # matched-event counts: overlap[i][j] pairs output_units[i] with truth_units[j]
    output_units: list = field(default_factory=list)
    truth_units: list = field(default_factory=list)
    overlap: list = field(default_factory=list)

    def unit(self, truth_unit: int) -> UnitStats:
        for u in self.units:
            if u.truth_unit == truth_unit:
                return u
        raise KeyError(truth_unit)


@dataclass(frozen=True)
class Scores:
    accuracy: float
    precision: float
    recall: float
    f_score: float


def match_events(a, b, tolerance: int) -> list[tuple[int, int]]:
    """One-to-one matching of two sorted timestamp arrays within ``tolerance``.

    Returns index pairs. The sweep takes the earliest feasible partner, which is
    maximal for equal-width windows on a line.
    """
    pairs = []
    i = j = 0
    while i < len(a) and j < len(b):
        d = int(a[i]) - int(b[j])
        if abs(d) <= tolerance:
            pairs.append((i, j))
            i += 1
            j += 1
        elif d < 0:
            i += 1
        else:
            j += 1
    return pairs


def _is_sorted(x) -> bool:
    return bool(np.all(np.diff(np.asarray(x, dtype=np.int64)) >= 0))


def map_units(overlap: np.ndarray, method: str = "optimal") -> list[tuple[int, int]]:
    """Pick (row, col) pairs maximising total overlap, each row/col used at most once."""
    if overlap.size == 0:
        return []
    if method == "optimal":
        rows, cols = linear_sum_assignment(overlap, maximize=True)
        return [(int(r), int(c)) for r, c in zip(rows, cols) if overlap[r, c] > 0]
    if method == "greedy":
        ov = overlap.astype(float).copy()
        pairs = []
        while ov.size and ov.max() > 0:
            r, c = np.unravel_index(int(np.argmax(ov)), ov.shape)
            pairs.append((int(r), int(c)))
            ov[r, :] = -1
            ov[:, c] = -1
        return pairs
    raise ValueError(f"unknown mapping method {method!r}")


def match(outputs, truth, tolerance_samples: int = 15, method: str = "optimal") -> MatchResult:
    """Match sorted spikes against ground truth.

    PROVISIONAL outputs are left out entirely: they are neither true nor false
    positives.
    """
    out_ts = [o.timestamp_samples for o in outputs]
    tr_ts = [t.timestamp_samples for t in truth]
    if not _is_sorted(out_ts) or not _is_sorted(tr_ts):
        raise ValueError("outputs and truth must be sorted by timestamp")
    assigned = [o for o in outputs if o.unit != PROVISIONAL]
    out_units = sorted({o.unit for o in assigned})
    tr_units = sorted({t.unit for t in truth})
    out_idx = {u: np.array([i for i, o in enumerate(assigned) if o.unit == u]) for u in out_units}
    tr_idx = {u: np.array([i for i, t in enumerate(truth) if t.unit == u]) for u in tr_units}
    a_ts = np.array([o.timestamp_samples for o in assigned], dtype=np.int64)
    t_ts = np.array(tr_ts, dtype=np.int64)

    pair_matches = {}
    overlap = np.zeros((len(out_units), len(tr_units)), dtype=np.int64)
    for r, ou in enumerate(out_units):
        for c, tu in enumerate(tr_units):
            m = match_events(a_ts[out_idx[ou]], t_ts[tr_idx[tu]], tolerance_samples)
            pair_matches[r, c] = m
            overlap[r, c] = len(m)

    mapping = {}
    hit_out, hit_truth = set(), set()
    for r, c in map_units(overlap, method):
        mapping[out_units[r]] = tr_units[c]
        for i, j in pair_matches[r, c]:
            hit_out.add(int(out_idx[out_units[r]][i]))
            hit_truth.add(int(tr_idx[tr_units[c]][j]))

    units = []
    inverse = {v: k for k, v in mapping.items()}
    for tu in tr_units:
        ou = inverse.get(tu)
        n_t = len(tr_idx[tu])
        tp = sum(1 for j in tr_idx[tu] if int(j) in hit_truth)
        n_o = len(out_idx[ou]) if ou is not None else 0
        units.append(UnitStats(tu, ou, n_t, tp, n_t - tp, n_o - tp))

    tp = len(hit_truth)
    return MatchResult(
        tp=tp,
        fp=len(assigned) - tp,
        fn=len(truth) - tp,
        n_truth=len(truth),
        n_outputs=len(assigned),
        n_provisional=len(outputs) - len(assigned),
        mapping=mapping,
        units=units,
        unmatched_truth=[truth[j] for j in range(len(truth)) if j not in hit_truth],
        unmatched_outputs=[assigned[i] for i in range(len(assigned)) if i not in hit_out],
        output_units=out_units,
        truth_units=tr_units,
        overlap=overlap.tolist(),
    )


def scores(m) -> Scores:
    """Accuracy, precision, recall and F-score from tp/fn/fp counts."""
    tp, fn, fp = m.tp, m.fn, m.fp
    if tp + fn + fp == 0:
        raise ValueError("cannot score: tp, fn and fp are all zero")

    def ratio(a, b):
        return a / b if b else 0.0

    return Scores(
        accuracy=ratio(tp, tp + fn + fp),
        precision=ratio(tp, tp + fp),
        recall=ratio(tp, tp + fn),
        f_score=ratio(2 * tp, 2 * tp + fn + fp),
    )


@dataclass
class Counts:
    tp: int
    fn: int
    fp: int


def recovered_units(m: MatchResult, min_accuracy: float = 0.5) -> list[int]:
    """Ground-truth units whose mapped output unit reaches ``min_accuracy``."""
    return [u.truth_unit for u in m.units if u.output_unit is not None and u.accuracy >= min_accuracy]


def detected_units(m: MatchResult, min_count: int = 10) -> list[int]:
    """Ground-truth units that are the dominant source of some output unit.

    Each output unit with at least ``min_count`` matched events is labelled with
    the truth unit contributing most of them; the result is the set of distinct
    labels. A cluster that swallows two neurons therefore counts once, and a
    junk cluster of unmatched detections does not count at all.
    """
    found = set()
    for row in m.overlap:
        if row and max(row) >= min_count:
            found.add(m.truth_units[int(np.argmax(row))])
    return sorted(found)


REPORT_COLUMNS = [
    "n_detected", "n_assigned", "tp", "fn", "fp", "accuracy", "precision", "recall", "f_score",
]


def report(s: Scores, m: MatchResult, fmt: str = "text", label: str | None = None) -> str:
    """Render one results-table row."""
    row = {
        "n_detected": m.n_outputs + m.n_provisional,
        "n_assigned": m.n_outputs,
        "tp": m.tp,
        "fn": m.fn,
        "fp": m.fp,
        **{k: round(v, 6) for k, v in asdict(s).items()},
    }
    if label is not None:
        row = {"label": label, **row}
    if fmt == "json":
        return json.dumps(row)
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=list(row), lineterminator="\n")
        w.writeheader()
        w.writerow(row)
        return buf.getvalue()
    if fmt == "text":
        head = "  ".join(f"{k:>10}" for k in row)
        vals = "  ".join(f"{v:>10.3f}" if isinstance(v, float) else f"{v!s:>10}" for v in row.values())
        return head + "\n" + vals + "\n"
    raise ValueError(f"unknown report format {fmt!r}")
