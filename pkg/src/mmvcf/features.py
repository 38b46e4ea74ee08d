"""Feature extraction: per-cell orientation histograms and raw pixels.

Both extractors are available as plain functions and as scikit-learn
transformers so they can sit in front of the estimators in a ``Pipeline``.
"""

from dataclasses import asdict, dataclass

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from ._exceptions import ConfigError, DimensionError
from ._validation import check_scalar
from .tensorio import MultiChannelImage


@dataclass(frozen=True)
class HogConfig:
    cell_size: int = 3
    n_orientations: int = 5
    signed_gradients: bool = False
    normalize_eps: float = 1e-3

    def validate(self):
        check_scalar(self.cell_size, "cell_size", low=1, integer=True)
        check_scalar(self.n_orientations, "n_orientations", low=2, integer=True)
        check_scalar(self.normalize_eps, "normalize_eps", low=0.0)
        return self


def _as_gray(img):
    arr = np.asarray(img.data if isinstance(img, MultiChannelImage) else img, dtype=np.float64)
    if arr.ndim == 3:
        if arr.shape[0] != 1:
            raise DimensionError(f"expected a single-channel image, got {arr.shape[0]} channels")
        arr = arr[0]
    if arr.ndim != 2:
        raise DimensionError(f"expected a 2-D image, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("image contains NaN or Inf")
    return arr


def image_gradients(img):
    """Centred differences with replicated borders; returns ``(gy, gx)``."""
    p = np.pad(img, 1, mode="edge")
    gx = p[1:-1, 2:] - p[1:-1, :-2]
    gy = p[2:, 1:-1] - p[:-2, 1:-1]
    return gy, gx


def orientation_bins(gy, gx, n_orientations, signed):
    angle = np.arctan2(gy, gx)
    if signed:
        span = 2.0 * np.pi
        angle = np.where(angle < 0, angle + span, angle)
    else:
        span = np.pi
        angle = np.where(angle < 0, angle + span, angle)
    angle = np.where(angle >= span, 0.0, angle)
    bins = np.floor(angle / (span / n_orientations)).astype(np.intp)
    return np.clip(bins, 0, n_orientations - 1)


def hog_extract(img, cfg=None):
    """Per-cell orientation histograms, one output channel per bin.

    Each pixel votes its gradient magnitude into a single orientation bin
    (no interpolation). Trailing rows and columns that do not fill a whole
    cell are dropped before gradients are computed. Each cell histogram ``h``
    is scaled to ``h / sqrt(|h|^2 + eps^2)``.

    Returns a ``MultiChannelImage`` of shape
    ``(n_orientations, H // cell_size, W // cell_size)``.
    """
    cfg = (cfg or HogConfig()).validate()
    img = _as_gray(img)
    c = cfg.cell_size
    hc, wc = img.shape[0] // c, img.shape[1] // c
    if hc < 1 or wc < 1:
        raise DimensionError(f"image {img.shape} is smaller than one {c}x{c} cell")
    img = img[:hc * c, :wc * c]
    gy, gx = image_gradients(img)
    mag = np.hypot(gx, gy)
    bins = orientation_bins(gy, gx, cfg.n_orientations, cfg.signed_gradients)
    rows = np.arange(hc * c) // c
    cols = np.arange(wc * c) // c
    flat = (bins * hc + rows[:, None]) * wc + cols[None, :]
    hist = np.bincount(flat.ravel(), weights=mag.ravel(),
                       minlength=cfg.n_orientations * hc * wc)
    hist = hist.reshape(cfg.n_orientations, hc, wc)
    norm = np.sqrt(np.sum(hist ** 2, axis=0) + cfg.normalize_eps ** 2)
    out = np.divide(hist, norm, out=np.zeros_like(hist), where=norm > 0)
    return MultiChannelImage(out)


def raw_channel(img):
    """The image itself as a ``K=1`` feature map, mean-subtracted."""
    arr = np.asarray(img.data if isinstance(img, MultiChannelImage) else img, dtype=np.float64)
    if arr.ndim == 2:
        arr = arr[np.newaxis]
    return MultiChannelImage(arr - arr.mean())


class _ImageTransformer(TransformerMixin, BaseEstimator):
    """Shared plumbing: accepts one 2-D image or a batch ``(N, H, W)``."""

    def fit(self, X=None, y=None):
        return self

    def __call__(self, img):
        return self._extract(img)

    def transform(self, X):
        arr = np.asarray(X, dtype=np.float64)
        if arr.ndim == 2:
            return self._extract(arr).data
        if arr.ndim == 4 and arr.shape[1] == 1:
            arr = arr[:, 0]
        if arr.ndim != 3:
            raise DimensionError(f"expected (H, W) or (N, H, W) images, got shape {arr.shape}")
        return np.stack([self._extract(a).data for a in arr])


class HOGTransformer(_ImageTransformer):
    """Transformer wrapping :func:`hog_extract`.

    Parameters
    ----------
    cell_size : int, default=3
        Side of a square cell in pixels.
    n_orientations : int, default=5
        Number of orientation bins (output channels).
    signed_gradients : bool, default=False
        Bin over ``[0, 2*pi)`` instead of folding to ``[0, pi)``.
    normalize_eps : float, default=1e-3
        Regulariser of the per-cell L2 normalisation.
    """

    def __init__(self, cell_size=3, n_orientations=5, signed_gradients=False,
                 normalize_eps=1e-3):
        self.cell_size = cell_size
        self.n_orientations = n_orientations
        self.signed_gradients = signed_gradients
        self.normalize_eps = normalize_eps

    def _config(self):
        return HogConfig(self.cell_size, self.n_orientations, bool(self.signed_gradients),
                         self.normalize_eps)

    def _extract(self, img):
        return hog_extract(img, self._config())

    def describe(self):
        return {"kind": "hog", **asdict(self._config())}


class RawPixelTransformer(_ImageTransformer):
    """Transformer wrapping :func:`raw_channel` (one pixel per cell)."""

    cell_size = 1

    def _extract(self, img):
        return raw_channel(img)

    def describe(self):
        return {"kind": "raw"}


def featurizer_from_config(config):
    """Rebuild a featurizer from the dictionary stored in a model header.

    Returns ``None`` for ``{"kind": "none"}`` (queries are already features).
    """
    kind = (config or {}).get("kind", "none")
    if kind == "none":
        return None
    if kind == "raw":
        return RawPixelTransformer()
    if kind == "hog":
        params = {k: config[k] for k in ("cell_size", "n_orientations", "signed_gradients",
                                          "normalize_eps") if k in config}
        return HOGTransformer(**params)
    raise ConfigError("features", f"unknown feature kind {kind!r}")
