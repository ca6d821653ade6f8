"""COCO-style average precision and error-type profiling.

AP follows the COCO protocol: greedy score-ordered matching per image,
class, and IoU threshold (each ground truth matched at most once),
101-point interpolated precision-recall integration, thresholds
0.50:0.05:0.95, and size buckets at 32^2 and 96^2 pixels with
out-of-bucket ground truth ignored rather than counted against the
detector. Error profiling assigns each false positive exactly one type
(Cls, Loc, Both, Dupe, Bkg) and counts unmatched ground truth as Miss.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np

from .dataset import Annotation
from .errors import DataError, InvariantViolation
from .geometry import Detection, iou

__all__ = [
    "COCO_IOU_THRESHOLDS",
    "COCO_SIZE_BUCKETS",
    "EvalReport",
    "evaluate_ap",
    "match_greedy",
    "recall_by_size",
    "profile_errors",
    "ErrorProfile",
    "compare_runs",
    "format_comparison",
    "write_eval_report",
    "read_eval_report",
]

COCO_IOU_THRESHOLDS: tuple[float, ...] = tuple(np.linspace(0.5, 0.95, 10))
COCO_SIZE_BUCKETS: dict[str, tuple[float, float]] = {
    "small": (0.0, 32.0**2),
    "medium": (32.0**2, 96.0**2),
    "large": (96.0**2, float("inf")),
}
_ALL = (0.0, float("inf"))
_RECALL_POINTS = np.linspace(0.0, 1.0, 101)

ERROR_TYPES = ("Cls", "Loc", "Both", "Dupe", "Bkg", "Miss")


@dataclass(frozen=True)
class EvalReport:
    """AP family plus optional per-class table and error tallies.

    Values are fractions in [0, 1]; ``None`` marks metrics with no ground
    truth to evaluate against (for example no small objects).
    """

    ap: float | None
    ap50: float | None
    ap75: float | None
    ap_small: float | None
    ap_medium: float | None
    ap_large: float | None
    per_class: dict = field(default_factory=dict)
    error_counts: dict | None = None

    def metrics(self) -> dict:
        return {
            "AP": self.ap,
            "AP50": self.ap50,
            "AP75": self.ap75,
            "AP_s": self.ap_small,
            "AP_m": self.ap_medium,
            "AP_l": self.ap_large,
        }


def _dets_by_image_class(
    dets: list[tuple], known_images: set
) -> dict:
    grouped: dict = {}
    for index, (image_id, det) in enumerate(dets):
        if image_id not in known_images:
            raise DataError(f"detection references unknown image id {image_id!r}")
        grouped.setdefault((image_id, det.class_id), []).append((index, det))
    for key in grouped:
        grouped[key].sort(key=lambda pair: (-pair[1].score, pair[0]))
    return grouped


def match_greedy(
    gt_boxes: list, det_list: list[Detection], iou_thresh: float
) -> tuple[list, list]:
    """Score-ordered greedy matching of detections to ground-truth boxes.

    Returns (per-detection matched gt index or None, per-gt matched flag).
    ``det_list`` must already be sorted by descending score.
    """
    gt_taken = [False] * len(gt_boxes)
    det_match: list = []
    for det in det_list:
        best, best_iou = None, iou_thresh
        for g, box in enumerate(gt_boxes):
            if gt_taken[g]:
                continue
            v = iou(det.box, box)
            if v >= best_iou and (best is None or v > best_iou):
                best, best_iou = g, v
        if best is not None:
            gt_taken[best] = True
        det_match.append(best)
    return det_match, gt_taken


def evaluate_ap(
    gts: dict,
    dets: list[tuple],
    size_buckets: dict | None = None,
    iou_thresholds: tuple | None = None,
    class_ids: tuple | None = None,
) -> EvalReport:
    """COCO-style AP over ground truth and scored detections.

    ``gts`` maps image id to its annotations; ``dets`` is a flat list of
    (image_id, Detection). Classes default to every class present in the
    ground truth; classes without ground truth are skipped.
    """
    size_buckets = COCO_SIZE_BUCKETS if size_buckets is None else size_buckets
    thresholds = COCO_IOU_THRESHOLDS if iou_thresholds is None else tuple(iou_thresholds)
    image_ids = sorted(gts, key=str)
    if class_ids is None:
        class_ids = tuple(sorted({a.class_id for anns in gts.values() for a in anns}))
    grouped = _dets_by_image_class(dets, set(image_ids))

    ranges: dict[str, tuple[float, float]] = {"all": _ALL, **size_buckets}
    # ap_table[(class, range_name)] -> list of per-threshold AP or None
    ap_table: dict = {}
    for class_id in class_ids:
        for range_name, area_range in ranges.items():
            ap_table[(class_id, range_name)] = _ap_for_class_range(
                gts, grouped, image_ids, class_id, area_range, thresholds
            )

    def mean_over_classes(range_name: str, thr_index: int | None) -> float | None:
        values = []
        for class_id in class_ids:
            per_thr = ap_table[(class_id, range_name)]
            if per_thr is None:
                continue
            values.append(per_thr[thr_index] if thr_index is not None else float(np.mean(per_thr)))
        if not values:
            return None
        return float(np.mean(values))

    per_class = {
        class_id: (
            float(np.mean(ap_table[(class_id, "all")]))
            if ap_table[(class_id, "all")] is not None
            else None
        )
        for class_id in class_ids
    }
    idx50 = _threshold_index(thresholds, 0.5)
    idx75 = _threshold_index(thresholds, 0.75)
    return EvalReport(
        ap=mean_over_classes("all", None),
        ap50=mean_over_classes("all", idx50) if idx50 is not None else None,
        ap75=mean_over_classes("all", idx75) if idx75 is not None else None,
        ap_small=mean_over_classes("small", None) if "small" in ranges else None,
        ap_medium=mean_over_classes("medium", None) if "medium" in ranges else None,
        ap_large=mean_over_classes("large", None) if "large" in ranges else None,
        per_class=per_class,
    )


def _threshold_index(thresholds: tuple, value: float) -> int | None:
    for i, t in enumerate(thresholds):
        if abs(t - value) < 1e-9:
            return i
    return None


def _ap_for_class_range(
    gts: dict,
    grouped: dict,
    image_ids: list,
    class_id: int,
    area_range: tuple[float, float],
    thresholds: tuple,
) -> list | None:
    lo, hi = area_range
    # Per image: class GTs sorted with counted (non-ignored) ones first.
    per_image: list[tuple] = []
    npig = 0
    for image_id in image_ids:
        anns = [a for a in gts[image_id] if a.class_id == class_id]
        order = sorted(range(len(anns)), key=lambda i: not (lo <= anns[i].box.area <= hi))
        boxes = [anns[i].box for i in order]
        ignored = [not (lo <= anns[i].box.area <= hi) for i in order]
        npig += sum(1 for flag in ignored if not flag)
        per_image.append((image_id, boxes, ignored))
    if npig == 0:
        return None

    aps: list[float] = []
    for t in thresholds:
        scored: list[tuple] = []  # (score, order, is_tp, is_ignored)
        order_counter = 0
        for image_id, boxes, ignored in per_image:
            det_pairs = grouped.get((image_id, class_id), [])
            taken = [False] * len(boxes)
            for _, det in det_pairs:
                best, best_iou = None, t
                for g, box in enumerate(boxes):
                    if taken[g]:
                        continue
                    if best is not None and not ignored[best] and ignored[g]:
                        break  # counted GTs come first; never trade down
                    v = iou(det.box, box)
                    if v < best_iou:
                        continue
                    if best is None or v > best_iou:
                        best, best_iou = g, v
                if best is not None:
                    taken[best] = True
                    scored.append((det.score, order_counter, not ignored[best], ignored[best]))
                else:
                    out_of_range = not (lo <= det.box.area <= hi)
                    scored.append((det.score, order_counter, False, out_of_range))
                order_counter += 1
        scored.sort(key=lambda row: (-row[0], row[1]))
        tps = np.array([row[2] for row in scored if not row[3]], dtype=np.float64)
        if tps.size == 0:
            aps.append(0.0)
            continue
        tp_cum = np.cumsum(tps)
        fp_cum = np.cumsum(1.0 - tps)
        recall = tp_cum / npig
        precision = tp_cum / (tp_cum + fp_cum)
        for i in range(len(precision) - 1, 0, -1):
            precision[i - 1] = max(precision[i - 1], precision[i])
        indices = np.searchsorted(recall, _RECALL_POINTS, side="left")
        q = np.zeros(len(_RECALL_POINTS))
        valid = indices < len(precision)
        q[valid] = precision[indices[valid]]
        aps.append(float(np.mean(q)))
    return aps


def recall_by_size(
    gts: dict,
    dets: list[tuple],
    iou_thresh: float = 0.5,
    size_buckets: dict | None = None,
) -> dict:
    """Fraction of ground truth matched at one IoU threshold, per size bucket.

    Matching is greedy by score within each image and class. Buckets with
    no ground truth report None.
    """
    size_buckets = COCO_SIZE_BUCKETS if size_buckets is None else size_buckets
    image_ids = sorted(gts, key=str)
    grouped = _dets_by_image_class(dets, set(image_ids))
    matched: dict[str, int] = {name: 0 for name in size_buckets}
    totals: dict[str, int] = {name: 0 for name in size_buckets}
    matched["all"], totals["all"] = 0, 0
    for image_id in image_ids:
        by_class: dict[int, list[Annotation]] = {}
        for ann in gts[image_id]:
            by_class.setdefault(ann.class_id, []).append(ann)
        for class_id, anns in by_class.items():
            det_list = [d for _, d in grouped.get((image_id, class_id), [])]
            _, gt_taken = match_greedy([a.box for a in anns], det_list, iou_thresh)
            for ann, taken in zip(anns, gt_taken):
                buckets = ["all"] + [
                    name
                    for name, (lo, hi) in size_buckets.items()
                    if lo <= ann.box.area <= hi
                ]
                for name in buckets:
                    totals[name] += 1
                    if taken:
                        matched[name] += 1
    return {
        name: (matched[name] / totals[name] if totals[name] else None) for name in totals
    }


@dataclass(frozen=True)
class ErrorProfile:
    """False-positive taxonomy plus missed ground truth.

    Cls + Loc + Both + Dupe + Bkg always equals the false-positive count.
    """

    counts: dict
    true_positives: int
    false_positives: int

    def __post_init__(self) -> None:
        fp_sum = sum(self.counts[k] for k in ("Cls", "Loc", "Both", "Dupe", "Bkg"))
        if fp_sum != self.false_positives:
            raise InvariantViolation(
                f"error types sum to {fp_sum}, expected {self.false_positives} false positives"
            )


def profile_errors(
    gts: dict,
    dets: list[tuple],
    fg_iou: float = 0.5,
    bg_iou: float = 0.1,
) -> ErrorProfile:
    """Classify every false positive into exactly one error type.

    An unmatched detection is Cls when it sits on a ground truth of
    another class (IoU >= fg), Dupe when it re-detects an already-matched
    same-class ground truth, Loc when its best same-class overlap falls
    between bg and fg, Both when only an other-class overlap does, and Bkg
    otherwise. Unmatched ground truth counts as Miss.
    """
    if not (fg_iou > bg_iou >= 0.0):
        raise InvariantViolation(f"need fg_iou > bg_iou >= 0, got fg={fg_iou} bg={bg_iou}")
    image_ids = sorted(gts, key=str)
    grouped = _dets_by_image_class(dets, set(image_ids))
    counts = {name: 0 for name in ERROR_TYPES}
    tp = 0
    for image_id in image_ids:
        anns = list(gts[image_id])
        unmatched_dets: list[Detection] = []
        gt_matched_flags = [False] * len(anns)
        class_ids = sorted(
            {a.class_id for a in anns} | {c for (img, c) in grouped if img == image_id}
        )
        for class_id in class_ids:
            indices = [i for i, a in enumerate(anns) if a.class_id == class_id]
            det_list = [d for _, d in grouped.get((image_id, class_id), [])]
            det_match, gt_taken = match_greedy(
                [anns[i].box for i in indices], det_list, fg_iou
            )
            for local_index, taken in enumerate(gt_taken):
                gt_matched_flags[indices[local_index]] = taken
            for det, m in zip(det_list, det_match):
                if m is None:
                    unmatched_dets.append(det)
                else:
                    tp += 1
        for det in unmatched_dets:
            iou_same = max(
                (iou(det.box, a.box) for a in anns if a.class_id == det.class_id),
                default=0.0,
            )
            iou_other = max(
                (iou(det.box, a.box) for a in anns if a.class_id != det.class_id),
                default=0.0,
            )
            if iou_other >= fg_iou:
                counts["Cls"] += 1
            elif iou_same >= fg_iou:
                counts["Dupe"] += 1
            elif iou_same > bg_iou:
                counts["Loc"] += 1
            elif iou_other > bg_iou:
                counts["Both"] += 1
            else:
                counts["Bkg"] += 1
        counts["Miss"] += sum(1 for flag in gt_matched_flags if not flag)
    fp = sum(counts[k] for k in ("Cls", "Loc", "Both", "Dupe", "Bkg"))
    return ErrorProfile(counts=counts, true_positives=tp, false_positives=fp)


# ---------------------------------------------------------------------------
# Run comparison
# ---------------------------------------------------------------------------

_GAP = "--"


def compare_runs(reports: list[tuple]) -> dict:
    """Per-metric values, mean, sample std, and delta against the first run.

    ``reports`` is a list of (name, EvalReport). A metric missing from one
    report produces an explicit gap marker in that cell instead of failing.
    """
    if len(reports) < 2:
        raise DataError("compare_runs needs at least two reports")
    names = [name for name, _ in reports]
    table: dict = {"runs": names, "metrics": {}}
    metric_names = list(reports[0][1].metrics())
    for metric in metric_names:
        values = [rep.metrics().get(metric) for _, rep in reports]
        present = [v for v in values if v is not None]
        baseline = values[0]
        table["metrics"][metric] = {
            "values": values,
            "mean": float(np.mean(present)) if present else None,
            "std": float(np.std(present, ddof=1)) if len(present) >= 2 else None,
            "delta_vs_first": [
                (None if (v is None or baseline is None) else v - baseline) for v in values
            ],
        }
    return table


def format_comparison(table: dict) -> str:
    """Aligned text table, values shown as percentages."""

    def cell(v) -> str:
        return _GAP if v is None else f"{100.0 * v:.2f}"

    names = table["runs"]
    header = ["metric"] + list(names) + ["mean±std"]
    rows = [header]
    for metric, entry in table["metrics"].items():
        mean, std = entry["mean"], entry["std"]
        spread = _GAP if mean is None else (
            f"{100.0 * mean:.2f}±{100.0 * std:.2f}" if std is not None else f"{100.0 * mean:.2f}"
        )
        rows.append([metric] + [cell(v) for v in entry["values"]] + [spread])
    widths = [max(len(r[i]) for r in rows) for i in range(len(header))]
    lines = ["  ".join(v.ljust(w) for v, w in zip(row, widths)).rstrip() for row in rows]
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Report files
# ---------------------------------------------------------------------------


def write_eval_report(
    report: EvalReport, json_path: str | os.PathLike, text_path: str | os.PathLike | None = None
) -> None:
    """Machine-readable JSON plus an aligned human-readable table."""
    payload = {
        "metrics": report.metrics(),
        "per_class": {str(k): v for k, v in sorted(report.per_class.items())},
        "error_counts": report.error_counts,
    }
    with open(json_path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, sort_keys=True, separators=(",", ": "), indent=1)
        fh.write("\n")
    if text_path is None:
        return
    rows = [["metric", "value"]]
    for name, value in report.metrics().items():
        rows.append([name, _GAP if value is None else f"{100.0 * value:.2f}"])
    for class_id, value in sorted(report.per_class.items()):
        rows.append([f"AP[class {class_id}]", _GAP if value is None else f"{100.0 * value:.2f}"])
    if report.error_counts:
        for name in ERROR_TYPES:
            rows.append([f"errors.{name}", str(report.error_counts.get(name, 0))])
    widths = [max(len(r[i]) for r in rows) for i in range(2)]
    with open(text_path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write("  ".join(v.ljust(w) for v, w in zip(row, widths)).rstrip() + "\n")


def read_eval_report(path: str | os.PathLike) -> EvalReport:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            payload = json.load(fh)
    except OSError as exc:
        raise DataError(f"cannot read report {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise DataError(f"report {path} is not valid JSON: {exc}") from exc
    metrics = payload.get("metrics", {})
    return EvalReport(
        ap=metrics.get("AP"),
        ap50=metrics.get("AP50"),
        ap75=metrics.get("AP75"),
        ap_small=metrics.get("AP_s"),
        ap_medium=metrics.get("AP_m"),
        ap_large=metrics.get("AP_l"),
        per_class={int(k): v for k, v in payload.get("per_class", {}).items()},
        error_counts=payload.get("error_counts"),
    )
