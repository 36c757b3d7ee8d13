"""CLEAR-MOT evaluation of tracker output against identified ground truth."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

from .errors import DetectionParseError, UndefinedMetricError
from .model import BoundingBox
from .tracking import iou

# frame -> [(id, box), ...]
FrameTable = Mapping[int, Sequence[tuple[int, BoundingBox]]]


@dataclass(frozen=True)
class MotMetrics:
    precision: float
    recall: float
    mota: float
    motp: float           # mean IOU over matches
    mostly_tracked: int
    partially_tracked: int
    mostly_lost: int
    true_positives: int
    false_positives: int
    false_negatives: int
    id_switches: int
    gt_total: int

    def to_dict(self) -> dict:
        return {
            "precision": self.precision,
            "recall": self.recall,
            "mota": self.mota,
            "motp": self.motp,
            "mostly_tracked": self.mostly_tracked,
            "partially_tracked": self.partially_tracked,
            "mostly_lost": self.mostly_lost,
            "true_positives": self.true_positives,
            "false_positives": self.false_positives,
            "false_negatives": self.false_negatives,
            "id_switches": self.id_switches,
            "gt_total": self.gt_total,
        }


def _as_table(seq) -> dict[int, list[tuple[int, BoundingBox]]]:
    if isinstance(seq, Mapping):
        return {int(k): list(v) for k, v in seq.items()}
    return {i: list(v) for i, v in enumerate(seq)}


def evaluate_mot(gt, hyp, iou_match: float = 0.5) -> MotMetrics:
    """Frame-by-frame CLEAR-MOT accounting.

    Matching prefers continuing each ground-truth id's previous assignment
    when it still overlaps at iou_match, then fills remaining pairs greedily
    in descending IOU. An id switch is counted whenever a ground truth's
    assignment changes from its last known hypothesis id. Trajectory coverage
    brackets: mostly tracked >= 80%, mostly lost <= 20%.
    """
    gt_table = _as_table(gt)
    hyp_table = _as_table(hyp)
    gt_total = sum(len(v) for v in gt_table.values())
    if gt_total == 0:
        raise UndefinedMetricError("ground truth is empty; MOTA is undefined")

    frames = sorted(set(gt_table) | set(hyp_table))
    last_match: dict[int, int] = {}
    traj_length: Counter = Counter()
    traj_matched: Counter = Counter()
    tp = fp = fn = idsw = 0
    iou_sum = 0.0

    for f in frames:
        gts = gt_table.get(f, [])
        hyps = hyp_table.get(f, [])
        for gid, _ in gts:
            traj_length[gid] += 1
        hyp_by_id = {hid: box for hid, box in hyps}
        matches: dict[int, tuple[int, float]] = {}
        used_hyp: set[int] = set()

        for gid, gbox in gts:
            hid = last_match.get(gid)
            if hid is None or hid in used_hyp or hid not in hyp_by_id:
                continue
            overlap = iou(gbox, hyp_by_id[hid])
            if overlap >= iou_match:
                matches[gid] = (hid, overlap)
                used_hyp.add(hid)

        candidates = []
        for gi, (gid, gbox) in enumerate(gts):
            if gid in matches:
                continue
            for hid, hbox in hyps:
                if hid in used_hyp:
                    continue
                overlap = iou(gbox, hbox)
                if overlap >= iou_match:
                    candidates.append((-overlap, gi, hid, gid))
        candidates.sort()
        for neg_overlap, _, hid, gid in candidates:
            if gid in matches or hid in used_hyp:
                continue
            matches[gid] = (hid, -neg_overlap)
            used_hyp.add(hid)

        for gid, (hid, overlap) in matches.items():
            if gid in last_match and last_match[gid] != hid:
                idsw += 1
            last_match[gid] = hid
            tp += 1
            iou_sum += overlap
            traj_matched[gid] += 1
        fn += len(gts) - len(matches)
        fp += len(hyps) - len(used_hyp)

    mostly_tracked = partially_tracked = mostly_lost = 0
    for gid, length in traj_length.items():
        coverage = traj_matched[gid] / length
        if coverage >= 0.8:
            mostly_tracked += 1
        elif coverage <= 0.2:
            mostly_lost += 1
        else:
            partially_tracked += 1

    return MotMetrics(
        precision=tp / (tp + fp) if tp + fp else 0.0,
        recall=tp / gt_total,
        mota=1.0 - (fn + fp + idsw) / gt_total,
        motp=iou_sum / tp if tp else 0.0,
        mostly_tracked=mostly_tracked,
        partially_tracked=partially_tracked,
        mostly_lost=mostly_lost,
        true_positives=tp,
        false_positives=fp,
        false_negatives=fn,
        id_switches=idsw,
        gt_total=gt_total,
    )


def read_identified_boxes(path_or_lines: str | Iterable[str]) -> dict[int, list[tuple[int, BoundingBox]]]:
    """Parse a MOT-challenge gt/track CSV (frame,id,left,top,width,height,...).

    Frame numbers are 1-based in the file and 0-based in the returned table.
    """
    if isinstance(path_or_lines, str):
        with open(path_or_lines, "r", encoding="utf-8", newline=None) as fh:
            return read_identified_boxes(fh)
    table: dict[int, list[tuple[int, BoundingBox]]] = {}
    for line_no, line in enumerate(path_or_lines, start=1):
        if not line.strip():
            continue
        fields = line.strip().split(",")
        if len(fields) < 6:
            raise DetectionParseError(
                f"expected at least 6 comma-separated fields, got {len(fields)}", line_no
            )
        try:
            frame = int(float(fields[0]))
            track_id = int(float(fields[1]))
            left, top, width, height = (float(v) for v in fields[2:6])
        except ValueError as exc:
            raise DetectionParseError(f"non-numeric field ({exc})", line_no) from None
        if width <= 0 or height <= 0:
            continue
        table.setdefault(frame - 1, []).append(
            (track_id, BoundingBox(left, top, left + width, top + height))
        )
    return table
