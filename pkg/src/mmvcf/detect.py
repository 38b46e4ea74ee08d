"""Sliding-window detection with a trained filter bank.

Queries are correlated with the filter in the frequency domain after zero
padding, so every entry of a score map is the response of the filter
placed with its top-left tap at that cell.
"""

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage
from sklearn.base import clone

from ._exceptions import (
    ConfigError,
    DegeneratePlaneError,
    DimensionError,
    FormatError,
    TensorIOError,
)
from ._validation import check_scalar, check_stack
from .evaluation import iou
from .spectral import CorrelationPlane, idft2, taps_of, to_real
from .tensorio import MultiChannelImage, TrainingSample


@dataclass
class Detection:
    bbox: tuple
    score: float
    psr: float = float("nan")
    scale: float = 1.0
    peak: tuple = (0, 0)

    def __post_init__(self):
        self.bbox = tuple(float(v) for v in self.bbox)
        if self.bbox[2] <= 0 or self.bbox[3] <= 0:
            raise ValueError(f"detection box needs positive size, got {self.bbox}")
        if not math.isfinite(self.score):
            raise ValueError("detection score must be finite")

    def to_dict(self, frame=None):
        d = {
            "bbox": list(self.bbox),
            "score": self.score,
            "psr": self.psr if math.isfinite(self.psr) else None,
            "scale": self.scale,
            "peak": list(self.peak),
        }
        if frame is not None:
            d["frame"] = frame
        return d

    @classmethod
    def from_dict(cls, d):
        p = d.get("psr")
        return cls(tuple(d["bbox"]), float(d["score"]), float("nan") if p is None else float(p),
                   float(d.get("scale", 1.0)), tuple(d.get("peak", (0, 0))))


@dataclass(frozen=True)
class PyramidConfig:
    scale_step: float = 2.0 ** (1.0 / 8.0)
    min_scale: float = 0.25
    score_threshold: float = 0.0
    nms_iou: float = 0.5
    psr_mask_radius: int = 5

    def validate(self):
        check_scalar(self.scale_step, "scale_step", low=1.0, include_low=False)
        check_scalar(self.min_scale, "min_scale", low=0.0, high=1.0, include_low=False)
        if isinstance(self.score_threshold, bool) or not isinstance(self.score_threshold, (int, float)) \
                or math.isnan(self.score_threshold):
            raise ConfigError("score_threshold", f"must be a real number, got {self.score_threshold!r}")
        check_scalar(self.nms_iou, "nms_iou", low=0.0, high=1.0, include_low=False)
        check_scalar(self.psr_mask_radius, "psr_mask_radius", low=0, integer=True)
        return self


def score_map(query, f):
    """Valid-region linear correlation of ``query`` with the filter, plus bias."""
    q = check_stack(query, "query")
    taps = taps_of(f)
    bias = float(getattr(f, "bias", 0.0))
    k, hq, wq = q.shape
    kf, hf, wf = taps.shape
    if k != kf:
        raise DimensionError(f"query has {k} channels, filter has {kf}")
    if hq < hf or wq < wf:
        raise DimensionError(f"query {hq}x{wq} is smaller than filter {hf}x{wf}")
    shape = (hq + hf - 1, wq + wf - 1)
    qf = np.fft.fft2(q, s=shape)
    ff = np.fft.fft2(taps, s=shape)
    cf = np.sum(qf * np.conj(ff), axis=0)
    plane = to_real(idft2(cf), reference=np.abs(cf).sum() / cf.size)
    return CorrelationPlane(plane[:hq - hf + 1, :wq - wf + 1] + bias)


def psr(plane, mask_radius=5, peak=None):
    """Peak-to-sidelobe ratio ``(peak - mean) / std`` over the sidelobe.

    The sidelobe is every entry outside the ``(2r+1) x (2r+1)`` square
    centred on the peak (clipped at the borders); ``std`` is the population
    standard deviation. ``peak`` defaults to the plane's argmax.
    """
    values = np.asarray(getattr(plane, "values", plane), dtype=np.float64)
    if values.ndim == 1:
        values = values[None, :]
    r = int(mask_radius)
    if peak is None:
        peak = np.unravel_index(np.argmax(values), values.shape)
    pr, pc = (int(v) for v in peak)
    mask = np.ones(values.shape, dtype=bool)
    mask[max(pr - r, 0):pr + r + 1, max(pc - r, 0):pc + r + 1] = False
    side = values[mask]
    if side.size < 2:
        raise DegeneratePlaneError(f"only {side.size} sidelobe entries outside a radius-{r} mask")
    sd = side.std()
    if sd < 1e-12:
        raise DegeneratePlaneError("sidelobe has zero variance")
    return float((values[pr, pc] - side.mean()) / sd)


def local_maxima(values):
    """Cells not exceeded by any 8-neighbour; plateaus keep their row-major-first cell."""
    v = np.asarray(values, dtype=np.float64)
    p = np.pad(v, 1, constant_values=-np.inf)
    h, w = v.shape
    keep = np.ones_like(v, dtype=bool)
    for dr in (-1, 0, 1):
        for dc in (-1, 0, 1):
            if dr == 0 and dc == 0:
                continue
            nb = p[1 + dr:1 + dr + h, 1 + dc:1 + dc + w]
            earlier = dr < 0 or (dr == 0 and dc < 0)
            keep &= (v > nb) if earlier else (v >= nb)
    rows, cols = np.nonzero(keep)
    return list(zip(rows.tolist(), cols.tolist()))


def nms(dets, iou_thresh=0.5):
    """Greedy suppression in descending score order (stable for ties)."""
    order = sorted(range(len(dets)), key=lambda i: -dets[i].score)
    kept = []
    for i in order:
        if all(iou(dets[i].bbox, dets[j].bbox) < iou_thresh for j in kept):
            kept.append(i)
    return [dets[i] for i in kept]


def _detect_level(feat, f, cfg, scale, cell_size, with_psr):
    """Detections and their feature patches on one pyramid level."""
    taps = taps_of(f)
    _, hf, wf = taps.shape
    plane = score_map(feat, f)
    out = []
    for r, c in local_maxima(plane.values):
        s = float(plane.values[r, c])
        if s <= cfg.score_threshold:
            continue
        p = float("nan")
        if with_psr:
            try:
                p = psr(plane, cfg.psr_mask_radius, peak=(r, c))
            except DegeneratePlaneError:
                pass
        box = (c * cell_size / scale, r * cell_size / scale,
               wf * cell_size / scale, hf * cell_size / scale)
        det = Detection(box, s, p, scale, (r, c))
        out.append((det, feat[:, r:r + hf, c:c + wf]))
    return out


def _resize(img, scale):
    if scale == 1.0:
        return img
    return ndimage.zoom(img, scale, order=1)


def _pyramid_candidates(image, f, featurizer, cfg, with_psr=True):
    cfg = cfg.validate()
    taps = taps_of(f)
    kf, hf, wf = taps.shape
    if featurizer is None:
        feat = check_stack(image, "features")
        if feat.shape[0] != kf:
            raise DimensionError(f"features have {feat.shape[0]} channels, filter has {kf}")
        if feat.shape[1] < hf or feat.shape[2] < wf:
            return []
        return _detect_level(feat, f, cfg, 1.0, 1, with_psr)
    img = np.asarray(getattr(image, "data", image), dtype=np.float64)
    if img.ndim == 3 and img.shape[0] == 1:
        img = img[0]
    if img.ndim != 2 or min(img.shape) < 1:
        raise DimensionError(f"expected a non-empty 2-D image, got shape {img.shape}")
    cell = int(getattr(featurizer, "cell_size", 1))
    out = []
    k = 0
    while True:
        scale = cfg.scale_step ** (-k)
        if scale < cfg.min_scale * (1.0 - 1e-12):
            break
        resized = _resize(img, scale)
        if min(resized.shape) < cell:
            break
        feat = check_stack(featurizer(resized), "features")
        if feat.shape[0] != kf:
            raise DimensionError(f"featurizer gives {feat.shape[0]} channels, filter has {kf}")
        if feat.shape[1] < hf or feat.shape[2] < wf:
            break
        out.extend(_detect_level(feat, f, cfg, scale, cell, with_psr))
        k += 1
    return out


def _nms_pairs(pairs, iou_thresh):
    kept = nms([d for d, _ in pairs], iou_thresh)
    ids = {id(d) for d in kept}
    by_id = {id(d): (d, p) for d, p in pairs}
    return [by_id[id(d)] for d in kept if id(d) in ids]


def pyramid_detect(image, f, featurizer=None, cfg=None, with_psr=True):
    """Detect the filter's pattern over a scale pyramid.

    ``image`` is a 2-D grayscale array resized by ``scale_step ** -k`` for
    ``k = 0, 1, ...`` down to ``min_scale``; each level is featurised,
    scored, and its local maxima above ``score_threshold`` become
    detections with boxes in original pixels. With ``featurizer=None`` the
    input is taken to be a ready ``(K, H, W)`` feature map and only scale
    1 is searched. Results are non-maximum suppressed.
    """
    cfg = cfg or PyramidConfig()
    pairs = _pyramid_candidates(image, f, featurizer, cfg, with_psr)
    return [d for d, _ in _nms_pairs(pairs, cfg.nms_iou)]


@dataclass
class MiningResult:
    manifest: object
    model: object
    false_positive_counts: list
    rounds_run: int


def mine_hard_negatives(model, data, frames, featurizer=None, cfg=None, rounds=1, cap=100,
                        q_negative=1.0, n_jobs=1):
    """Add detections on object-free frames as negatives and retrain.

    ``model`` is a fitted estimator (or a FilterBank, from which an
    estimator of the same trainer is configured). Each round runs the
    current model over every frame, appends the highest-scoring
    detections' feature patches (at most ``cap`` in total across rounds)
    as label -1 samples, and refits a clone of the estimator. Stops early
    when a round finds no false positives.
    """
    check_scalar(cap, "cap", low=1, integer=True)
    check_scalar(rounds, "rounds", low=1, integer=True)
    cfg = (cfg or PyramidConfig()).validate()
    if not hasattr(model, "filter_"):
        from .estimators import estimator_for
        fb = model
        est = estimator_for(fb)
        model = _refit(est, data)
    counts = []
    mined = 0
    run = 0
    for _ in range(rounds):
        fb = model.filter_
        run += 1

        def detect_one(frame):
            return _nms_pairs(_pyramid_candidates(frame, fb, featurizer, cfg, with_psr=False),
                              cfg.nms_iou)

        if n_jobs and n_jobs > 1:
            with ThreadPoolExecutor(max_workers=n_jobs) as pool:
                per_frame = list(pool.map(detect_one, frames))
        else:
            per_frame = [detect_one(fr) for fr in frames]
        pairs = [pair for found in per_frame for pair in found]
        counts.append(len(pairs))
        room = cap - mined
        if not pairs or room <= 0:
            break
        order = sorted(range(len(pairs)), key=lambda i: -pairs[i][0].score)[:room]
        new = [TrainingSample(MultiChannelImage(pairs[i][1]), -1, float(q_negative), None)
               for i in order]
        mined += len(new)
        data = data.extended(new)
        model = _refit(clone(model), data)
    return MiningResult(data, model, counts, run)


def _refit(est, data):
    from .estimators import VCF
    if isinstance(est, VCF):
        return est.fit(data.X, data.y, centers=data.centers, targets=data.targets)
    return est.fit(data.X, data.y, targets=data.targets)


def write_detections_jsonl(records, path):
    """Write ``(frame_id, Detection)`` pairs, one JSON object per line."""
    lines = [json.dumps(det.to_dict(frame), sort_keys=True) for frame, det in records]
    try:
        Path(path).write_text("".join(line + "\n" for line in lines))
    except OSError as exc:
        raise TensorIOError(path, exc.strerror or str(exc)) from exc


def read_detections_jsonl(path):
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise TensorIOError(path, exc.strerror or str(exc)) from exc
    out = []
    for n, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        try:
            d = json.loads(line)
            out.append((d.get("frame"), Detection.from_dict(d)))
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise FormatError(path, f"line {n}", str(exc)) from exc
    return out
