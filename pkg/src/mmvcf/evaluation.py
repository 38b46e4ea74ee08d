"""ROC/AUC, IoU, average precision and report files."""

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ._exceptions import TensorIOError, TrainingError


@dataclass(frozen=True)
class ScoredLabel:
    score: float
    label: int

    def __post_init__(self):
        if not math.isfinite(self.score):
            raise ValueError("score must be finite")
        if self.label not in (-1, 1):
            raise ValueError(f"label must be +1 or -1, got {self.label!r}")


def _scores_labels(items, labels=None):
    if labels is None:
        items = list(items)
        scores = np.array([getattr(it, "score", None) if hasattr(it, "score") else it[0]
                           for it in items], dtype=np.float64)
        labels = np.array([getattr(it, "label", None) if hasattr(it, "label") else it[1]
                           for it in items], dtype=np.float64)
    else:
        scores = np.asarray(items, dtype=np.float64).ravel()
        labels = np.asarray(labels, dtype=np.float64).ravel()
    if scores.shape != labels.shape:
        raise ValueError("scores and labels differ in length")
    if not np.all(np.isfinite(scores)):
        raise ValueError("scores must be finite")
    return scores, labels


def roc_curve(items, labels=None):
    """ROC points ``(threshold, fpr, tpr)``, starting at ``(inf, 0, 0)``.

    One point per distinct score: a sample is called positive when its
    score is ``>=`` the threshold, so tied scores move along a diagonal.
    """
    scores, labels = _scores_labels(items, labels)
    pos = labels > 0
    n_pos, n_neg = int(pos.sum()), int((~pos).sum())
    if n_pos == 0 or n_neg == 0:
        raise TrainingError("ROC needs both classes")
    order = np.argsort(-scores, kind="stable")
    s, p = scores[order], pos[order]
    tp = np.cumsum(p)
    fp = np.cumsum(~p)
    last = np.r_[np.flatnonzero(np.diff(s) != 0), len(s) - 1]
    thr = np.r_[np.inf, s[last]]
    fpr = np.r_[0.0, fp[last] / n_neg]
    tpr = np.r_[0.0, tp[last] / n_pos]
    return thr, fpr, tpr


def roc_auc(items, labels=None):
    """Return ``(points, auc)``; ``points`` is a list of ``(threshold, fpr, tpr)``."""
    thr, fpr, tpr = roc_curve(items, labels)
    auc = float(np.sum(np.diff(fpr) * (tpr[1:] + tpr[:-1]) / 2.0))
    return list(zip(thr.tolist(), fpr.tolist(), tpr.tolist())), auc


def iou(a, b):
    """Intersection over union of two ``(x, y, w, h)`` boxes."""
    ax, ay, aw, ah = (float(v) for v in a)
    bx, by, bw, bh = (float(v) for v in b)
    if aw <= 0 or ah <= 0 or bw <= 0 or bh <= 0:
        raise ValueError(f"boxes need positive area, got {a} and {b}")
    iw = min(ax + aw, bx + bw) - max(ax, bx)
    ih = min(ay + ah, by + bh) - max(ay, by)
    inter = max(iw, 0.0) * max(ih, 0.0)
    return inter / (aw * ah + bw * bh - inter)


def _det_fields(d):
    if hasattr(d, "bbox"):
        return tuple(d.bbox), float(d.score)
    return tuple(d[0]), float(d[1])


def match_detections(dets_per_image, gts_per_image, iou_thresh=0.5):
    """Greedy matching in global score order.

    Returns ``(scores, hits, n_gt)`` with detections sorted by descending
    score; ``hits[i]`` tells whether detection ``i`` claimed a ground truth.
    """
    n_gt = sum(len(v) for v in gts_per_image.values())
    flat = []
    for image, dets in dets_per_image.items():
        for d in dets:
            box, score = _det_fields(d)
            flat.append((score, image, box))
    order = sorted(range(len(flat)), key=lambda i: -flat[i][0])
    used = {image: [False] * len(g) for image, g in gts_per_image.items()}
    scores, hits = [], []
    for i in order:
        score, image, box = flat[i]
        best, best_iou = -1, -1.0
        for j, gt in enumerate(gts_per_image.get(image, [])):
            if used[image][j]:
                continue
            o = iou(box, gt)
            if o > best_iou:
                best, best_iou = j, o
        hit = best >= 0 and best_iou >= iou_thresh
        if hit:
            used[image][best] = True
        scores.append(score)
        hits.append(hit)
    return np.array(scores), np.array(hits, dtype=bool), n_gt


def precision_recall(dets_per_image, gts_per_image, iou_thresh=0.5):
    """Return ``(recall, precision, hits_sorted_scores)`` arrays."""
    scores, hits, n_gt = match_detections(dets_per_image, gts_per_image, iou_thresh)
    if n_gt == 0:
        raise ValueError("average precision needs at least one ground-truth box")
    tp = np.cumsum(hits)
    fp = np.cumsum(~hits)
    recall = tp / n_gt
    precision = tp / np.maximum(tp + fp, 1)
    return recall, precision, scores


def average_precision(dets_per_image, gts_per_image, iou_thresh=0.5):
    """Area under the precision envelope, integrated over all recall steps."""
    recall, precision, _ = precision_recall(dets_per_image, gts_per_image, iou_thresh)
    if recall.size == 0:
        return 0.0
    envelope = np.maximum.accumulate(precision[::-1])[::-1]
    steps = np.diff(np.r_[0.0, recall])
    return float(np.sum(steps * envelope))


@dataclass
class MethodMetrics:
    roc: list = field(default_factory=list)
    auc: float = None
    pr: list = field(default_factory=list)
    ap: float = None
    mean_psr: float = None


def _fmt(v):
    return "inf" if v == math.inf else repr(float(v))


def _svg(metrics):
    size, pad = 400, 40
    span = size - 2 * pad
    colors = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"]
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}">',
        f'<rect x="{pad}" y="{pad}" width="{span}" height="{span}" fill="none" stroke="black"/>',
        f'<line x1="{pad}" y1="{pad + span}" x2="{pad + span}" y2="{pad}" stroke="#bbbbbb" stroke-dasharray="4"/>',
        f'<text x="{size / 2}" y="{size - 8}" text-anchor="middle" font-size="12">false positive rate</text>',
        f'<text x="12" y="{size / 2}" transform="rotate(-90 12 {size / 2})" text-anchor="middle" font-size="12">true positive rate</text>',
    ]
    for n, (name, m) in enumerate(sorted(metrics.items())):
        color = colors[n % len(colors)]
        pts = " ".join(f"{pad + fpr * span:.2f},{pad + (1 - tpr) * span:.2f}" for _, fpr, tpr in m.roc)
        parts.append(f'<polyline fill="none" stroke="{color}" stroke-width="2" points="{pts}"/>')
        label = name if m.auc is None else f"{name} (AUC {m.auc:.3f})"
        parts.append(f'<text x="{pad + span - 4}" y="{pad + span - 8 - 16 * n}" text-anchor="end" '
                     f'font-size="12" fill="{color}">{label}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def emit_report(metrics, out_dir):
    """Write ``summary.json`` and, when curves exist, ``roc.csv``/``pr.csv``/``roc.svg``.

    ``metrics`` maps a method name to ``MethodMetrics``. Returns the list of
    files written.
    """
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        written = []
        summary = {"methods": {name: {"auc": m.auc, "ap": m.ap, "mean_psr": m.mean_psr}
                               for name, m in sorted(metrics.items())}}
        (out / "summary.json").write_text(json.dumps(summary, indent=1, sort_keys=True) + "\n")
        written.append(out / "summary.json")
        if any(m.roc for m in metrics.values()):
            with open(out / "roc.csv", "w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow(["method", "threshold", "fpr", "tpr"])
                for name, m in sorted(metrics.items()):
                    for thr, fpr, tpr in m.roc:
                        w.writerow([name, _fmt(thr), _fmt(fpr), _fmt(tpr)])
            (out / "roc.svg").write_text(_svg(metrics))
            written += [out / "roc.csv", out / "roc.svg"]
        if any(m.pr for m in metrics.values()):
            with open(out / "pr.csv", "w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow(["method", "recall", "precision"])
                for name, m in sorted(metrics.items()):
                    for rec, prec in m.pr:
                        w.writerow([name, _fmt(rec), _fmt(prec)])
            written.append(out / "pr.csv")
    except OSError as exc:
        raise TensorIOError(out, exc.strerror or str(exc)) from exc
    return written
