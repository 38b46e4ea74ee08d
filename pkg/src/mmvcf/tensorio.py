"""Array types, the ``MCF1`` tensor format, PGM ingestion and synthetic data.

``MCF1`` layout (all little-endian)::

    bytes 0-3    b"MCF1"
    bytes 4-15   uint32 K, H, W
    bytes 16-    K*H*W float32, channel-major, row-major within a channel
"""

import json
import math
import numbers
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from ._exceptions import (
    BadMagicError,
    ConfigError,
    DimensionError,
    FormatError,
    NonFiniteError,
    TensorIOError,
    TruncatedError,
    UnsupportedFormatError,
)
from ._validation import check_scalar

MAGIC = b"MCF1"
_HEADER = struct.Struct("<4sIII")


@dataclass(frozen=True, eq=False)
class MultiChannelImage:
    """A ``K``-channel real feature array of shape ``(K, H, W)``.

    The array is stored as read-only float64. Values written to disk are
    rounded to float32, so only float32-representable tensors round-trip
    bit-exactly.
    """

    data: np.ndarray

    def __post_init__(self):
        arr = np.array(self.data, dtype=np.float64)
        if arr.ndim == 2:
            arr = arr[np.newaxis]
        if arr.ndim != 3 or min(arr.shape) < 1:
            raise DimensionError(f"MultiChannelImage needs shape (K, H, W) with K, H, W >= 1, got {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("MultiChannelImage values must be finite")
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    @property
    def channels(self):
        return self.data.shape[0]

    @property
    def height(self):
        return self.data.shape[1]

    @property
    def width(self):
        return self.data.shape[2]

    @property
    def dims(self):
        return self.data.shape

    def __eq__(self, other):
        if not isinstance(other, MultiChannelImage):
            return NotImplemented
        return self.dims == other.dims and np.array_equal(self.data, other.data)

    def __repr__(self):
        return f"MultiChannelImage(K={self.channels}, H={self.height}, W={self.width})"


@dataclass(frozen=True)
class TrainingSample:
    features: MultiChannelImage
    label: int
    target_response: float = 1.0
    object_center: tuple = None

    def __post_init__(self):
        if self.label not in (-1, 1):
            raise ConfigError("label", f"must be exactly +1 or -1, got {self.label!r}")
        q = self.target_response
        if isinstance(q, bool) or not isinstance(q, numbers.Real) or not (math.isfinite(q) and q > 0):
            raise ConfigError("target_response", f"must be finite and > 0, got {q!r}")
        if self.object_center is not None:
            object.__setattr__(self, "object_center",
                               tuple(int(v) for v in self.object_center))


@dataclass
class DatasetManifest:
    """Ordered training samples sharing one ``(K, H, W)``."""

    samples: list
    dims: tuple
    seed: int = None
    config: dict = field(default_factory=dict)

    def __post_init__(self):
        self.dims = tuple(int(v) for v in self.dims)
        for i, s in enumerate(self.samples):
            if s.features.dims != self.dims:
                raise DimensionError(f"sample {i} has dims {s.features.dims}, manifest declares {self.dims}")

    def __len__(self):
        return len(self.samples)

    @property
    def X(self):
        return np.stack([s.features.data for s in self.samples])

    @property
    def y(self):
        return np.array([s.label for s in self.samples], dtype=np.float64)

    @property
    def targets(self):
        return np.array([s.target_response for s in self.samples], dtype=np.float64)

    @property
    def centers(self):
        return [s.object_center for s in self.samples]

    def extended(self, new_samples):
        return DatasetManifest(list(self.samples) + list(new_samples), self.dims,
                               self.seed, dict(self.config))


def save_tensor(t, path):
    """Write ``t`` (a ``MultiChannelImage`` or ``(K, H, W)`` array) as ``MCF1``."""
    if not isinstance(t, MultiChannelImage):
        t = MultiChannelImage(t)
    data32 = t.data.astype("<f4")
    if not np.all(np.isfinite(data32)):
        raise ValueError(f"{path}: values overflow float32")
    k, h, w = t.dims
    try:
        with open(path, "wb") as fh:
            fh.write(_HEADER.pack(MAGIC, k, h, w))
            fh.write(data32.tobytes(order="C"))
    except OSError as exc:
        raise TensorIOError(path, exc.strerror or str(exc)) from exc


def tensor_to_bytes(t):
    if not isinstance(t, MultiChannelImage):
        t = MultiChannelImage(t)
    k, h, w = t.dims
    return _HEADER.pack(MAGIC, k, h, w) + t.data.astype("<f4").tobytes(order="C")


def tensor_from_bytes(buf, path="<bytes>"):
    if len(buf) < _HEADER.size:
        if len(buf) >= 4 and buf[:4] != MAGIC:
            raise BadMagicError(path, "magic", f"expected {MAGIC!r}, got {bytes(buf[:4])!r}")
        raise TruncatedError(path, "header", f"need {_HEADER.size} bytes, got {len(buf)}")
    magic, k, h, w = _HEADER.unpack_from(buf)
    if magic != MAGIC:
        raise BadMagicError(path, "magic", f"expected {MAGIC!r}, got {magic!r}")
    if min(k, h, w) < 1:
        raise FormatError(path, "dims", f"K, H, W must be >= 1, got ({k}, {h}, {w})")
    n = k * h * w
    payload = len(buf) - _HEADER.size
    if payload < 4 * n:
        raise TruncatedError(path, "payload", f"declares {n} floats, found {payload // 4}")
    if payload > 4 * n:
        raise FormatError(path, "payload", f"{payload - 4 * n} trailing bytes after {n} floats")
    data = np.frombuffer(buf, dtype="<f4", count=n, offset=_HEADER.size).reshape(k, h, w)
    if not np.all(np.isfinite(data)):
        raise NonFiniteError(path, "data", "tensor contains NaN or Inf")
    return MultiChannelImage(data.astype(np.float64))


def load_tensor(path):
    try:
        buf = Path(path).read_bytes()
    except OSError as exc:
        raise TensorIOError(path, exc.strerror or str(exc)) from exc
    return tensor_from_bytes(buf, path)


def _pgm_tokens(buf, path, count):
    """Return ``count`` whitespace-separated header tokens and the offset after them."""
    tokens = []
    pos = 0
    n = len(buf)
    while len(tokens) < count:
        while pos < n and buf[pos:pos + 1].isspace():
            pos += 1
        if pos < n and buf[pos:pos + 1] == b"#":
            while pos < n and buf[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < n and not buf[pos:pos + 1].isspace() and buf[pos:pos + 1] != b"#":
            pos += 1
        if start == pos:
            raise TruncatedError(path, "header", "PGM header ended early")
        tokens.append(buf[start:pos])
    return tokens, pos


def load_image_gray(path):
    """Read a binary (P5) 8-bit PGM as a ``K=1`` tensor scaled to ``[0, 1]``."""
    try:
        buf = Path(path).read_bytes()
    except OSError as exc:
        raise TensorIOError(path, exc.strerror or str(exc)) from exc
    if buf[:2] != b"P5":
        raise UnsupportedFormatError(path, "magic", f"only binary PGM (P5) is supported, got {buf[:2]!r}")
    (magic, w_tok, h_tok, max_tok), pos = _pgm_tokens(buf, path, 4)
    try:
        width, height, maxval = int(w_tok), int(h_tok), int(max_tok)
    except ValueError:
        raise FormatError(path, "header", "non-integer width/height/maxval") from None
    if maxval != 255:
        raise UnsupportedFormatError(path, "maxval", f"only 8-bit maxval 255 is supported, got {maxval}")
    if width < 1 or height < 1:
        raise FormatError(path, "dims", f"image must be non-empty, got {width}x{height}")
    pos += 1  # single whitespace byte before the raster
    raster = buf[pos:]
    if len(raster) < width * height:
        raise TruncatedError(path, "raster", f"expected {width * height} bytes, found {len(raster)}")
    pixels = np.frombuffer(raster, dtype=np.uint8, count=width * height).reshape(height, width)
    return MultiChannelImage(pixels.astype(np.float64)[np.newaxis] / 255.0)


def save_image_gray(img, path):
    """Write a 2-D array (values in ``[0, 1]``) as P5 PGM."""
    img = np.asarray(img.data if isinstance(img, MultiChannelImage) else img, dtype=np.float64)
    if img.ndim == 3:
        img = img[0]
    pixels = np.clip(np.rint(img * 255.0), 0, 255).astype(np.uint8)
    h, w = pixels.shape
    try:
        with open(path, "wb") as fh:
            fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
            fh.write(pixels.tobytes())
    except OSError as exc:
        raise TensorIOError(path, exc.strerror or str(exc)) from exc


@dataclass(frozen=True)
class SynthConfig:
    """Parameters of the planted-template generator.

    ``template_smoothing`` is the width (in cells) of a circular Gaussian
    blur applied to the template before it is normalised to zero mean and
    unit variance; 0 leaves the template white.

    The additive noise is white when ``noise_white_fraction`` is 1. Below
    that, a share ``1 - noise_white_fraction`` of its variance is spatial
    clutter: white noise blurred by a Gaussian of width
    ``noise_smoothing`` cells and rescaled to unit variance.
    """

    k: int = 3
    h: int = 16
    w: int = 16
    n_pos: int = 20
    n_neg: int = 20
    template_seed: int = 0
    noise_sigma: float = 1.0
    shift_range: int = 0
    outlier_fraction: float = 0.0
    seed: int = 0
    template_smoothing: float = 0.0
    noise_smoothing: float = 0.0
    noise_white_fraction: float = 1.0

    def validate(self):
        for name in ("k", "h", "w"):
            check_scalar(getattr(self, name), name, low=1, integer=True)
        check_scalar(self.n_pos, "n_pos", low=1, integer=True)
        check_scalar(self.n_neg, "n_neg", low=0, integer=True)
        check_scalar(self.template_seed, "template_seed", low=0, integer=True)
        check_scalar(self.seed, "seed", low=0, integer=True)
        check_scalar(self.noise_sigma, "noise_sigma", low=0.0)
        check_scalar(self.shift_range, "shift_range", low=0, integer=True)
        check_scalar(self.outlier_fraction, "outlier_fraction", low=0.0, high=1.0, include_high=False)
        check_scalar(self.template_smoothing, "template_smoothing", low=0.0)
        check_scalar(self.noise_smoothing, "noise_smoothing", low=0.0)
        check_scalar(self.noise_white_fraction, "noise_white_fraction", low=0.0, high=1.0)
        return self


def _smooth_circular(x, sigma):
    if sigma <= 0:
        return x
    h, w = x.shape[-2:]
    u = np.fft.fftfreq(h)[:, None]
    v = np.fft.fftfreq(w)[None, :]
    kernel = np.exp(-2.0 * (np.pi * sigma) ** 2 * (u ** 2 + v ** 2))
    return np.real(np.fft.ifft2(np.fft.fft2(x) * kernel))


def make_template(cfg):
    """The unit-variance planted template for ``cfg``."""
    rng = np.random.default_rng(cfg.template_seed)
    t = rng.standard_normal((cfg.k, cfg.h, cfg.w))
    t = _smooth_circular(t, cfg.template_smoothing)
    t = t - t.mean()
    return t / t.std()


def draw_noise(rng, shape, cfg):
    """Unit-variance additive noise with the colour set by ``cfg``."""
    white = rng.standard_normal(shape)
    wf = cfg.noise_white_fraction
    if wf >= 1.0:
        return white
    clutter = _smooth_circular(rng.standard_normal(shape), cfg.noise_smoothing)
    clutter = clutter / clutter.std()
    return math.sqrt(wf) * white + math.sqrt(1.0 - wf) * clutter


def _quantize(x):
    return x.astype(np.float32).astype(np.float64)


def generate_planted_dataset(cfg):
    """Draw a ``DatasetManifest`` of planted-template positives and noise negatives.

    Positives are the template circularly shifted by a random offset in
    ``[-shift_range, shift_range]`` per axis plus noise from :func:`draw_noise`;
    ``floor(outlier_fraction * n_pos)`` of them (chosen first, without
    replacement) have the template replaced by unit-variance noise but keep
    their label and centre. Negatives are noise with the same marginal
    variance as a positive. Values are rounded to float32 so manifests
    round-trip through ``MCF1`` exactly.
    """
    cfg.validate()
    rng = np.random.default_rng(cfg.seed)
    n_out = math.floor(cfg.outlier_fraction * cfg.n_pos)
    outliers = set(rng.choice(cfg.n_pos, size=n_out, replace=False).tolist()) if n_out else set()
    template = make_template(cfg)
    shape = (cfg.k, cfg.h, cfg.w)
    samples = []
    for i in range(cfg.n_pos):
        dr, dc = rng.integers(-cfg.shift_range, cfg.shift_range + 1, size=2)
        if i in outliers:
            body = rng.standard_normal(shape)
        else:
            body = np.roll(template, (int(dr), int(dc)), axis=(1, 2))
        x = body + cfg.noise_sigma * draw_noise(rng, shape, cfg)
        center = (int(dr) % cfg.h, int(dc) % cfg.w)
        samples.append(TrainingSample(MultiChannelImage(_quantize(x)), 1, 1.0, center))
    neg_sigma = math.sqrt(1.0 + cfg.noise_sigma ** 2)
    for _ in range(cfg.n_neg):
        x = neg_sigma * draw_noise(rng, shape, cfg)
        samples.append(TrainingSample(MultiChannelImage(_quantize(x)), -1, 1.0, None))
    config = asdict(cfg)
    config["outlier_indices"] = sorted(outliers)
    return DatasetManifest(samples, shape, cfg.seed, config)


def save_manifest(manifest, out_dir, *, prefix="sample"):
    """Write every sample as ``MCF1`` plus ``manifest.json``; return its path."""
    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise TensorIOError(out_dir, exc.strerror or str(exc)) from exc
    entries = []
    for i, s in enumerate(manifest.samples):
        name = f"{prefix}_{i:04d}.mcf"
        save_tensor(s.features, out_dir / name)
        entries.append({
            "path": name,
            "label": s.label,
            "target": s.target_response,
            "center": list(s.object_center) if s.object_center is not None else None,
        })
    doc = {
        "dims": list(manifest.dims),
        "seed": manifest.seed,
        "config": manifest.config,
        "samples": entries,
    }
    path = out_dir / "manifest.json"
    try:
        path.write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")
    except OSError as exc:
        raise TensorIOError(path, exc.strerror or str(exc)) from exc
    return path


def load_manifest(path):
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except OSError as exc:
        raise TensorIOError(path, exc.strerror or str(exc)) from exc
    except json.JSONDecodeError as exc:
        raise FormatError(path, "json", str(exc)) from exc
    try:
        dims = tuple(doc["dims"])
        entries = doc["samples"]
    except (KeyError, TypeError) as exc:
        raise FormatError(path, "manifest", f"missing field {exc}") from exc
    base = path.parent
    samples = []
    for e in entries:
        t = load_tensor(base / e["path"])
        center = tuple(e["center"]) if e.get("center") is not None else None
        samples.append(TrainingSample(t, int(e["label"]), float(e.get("target", 1.0)), center))
    return DatasetManifest(samples, dims, doc.get("seed"), doc.get("config") or {})
