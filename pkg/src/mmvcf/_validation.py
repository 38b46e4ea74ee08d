"""Input validation helpers in the spirit of ``sklearn.utils.validation``."""

import numbers

import numpy as np

from ._exceptions import ConfigError, DimensionError, TrainingError


def check_scalar(value, name, *, low=None, high=None, include_low=True,
                 include_high=True, integer=False):
    """Validate a scalar parameter and return it as float (or int).

    Raises ``ConfigError`` naming ``name`` when the value is non-numeric,
    non-finite, or outside the interval.
    """
    kind = numbers.Integral if integer else numbers.Real
    if isinstance(value, bool) or not isinstance(value, kind):
        raise ConfigError(name, f"expected a {'integer' if integer else 'real'} value, got {value!r}")
    if not np.isfinite(value):
        raise ConfigError(name, f"must be finite, got {value!r}")
    if low is not None and (value < low or (value == low and not include_low)):
        op = ">=" if include_low else ">"
        raise ConfigError(name, f"must be {op} {low}, got {value!r}")
    if high is not None and (value > high or (value == high and not include_high)):
        op = "<=" if include_high else "<"
        raise ConfigError(name, f"must be {op} {high}, got {value!r}")
    return int(value) if integer else float(value)


def check_stack(x, name="x", *, ndim=3):
    """Return ``x`` as a finite float64 array with ``ndim`` dimensions.

    ``ndim=3`` means one multi-channel image ``(K, H, W)``; ``ndim=4`` a batch
    ``(N, K, H, W)``. A ``MultiChannelImage`` (anything with ``.data``) is
    unwrapped first, and a batch may be given as a list of images.
    """
    if hasattr(x, "data") and not isinstance(x, np.ndarray):
        x = x.data
    if ndim == 4 and isinstance(x, (list, tuple)):
        x = [xi.data if hasattr(xi, "data") and not isinstance(xi, np.ndarray) else xi
             for xi in x]
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != ndim:
        raise DimensionError(f"{name}: expected {ndim} dimensions, got shape {arr.shape}")
    if arr.size == 0 or min(arr.shape) < 1:
        raise DimensionError(f"{name}: empty array with shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name}: contains NaN or Inf")
    return arr


def check_spectra(xf, name="spectra", *, ndim=3):
    arr = np.asarray(xf)
    if not np.iscomplexobj(arr):
        arr = arr.astype(np.complex128)
    else:
        arr = arr.astype(np.complex128, copy=False)
    if arr.ndim != ndim:
        raise DimensionError(f"{name}: expected {ndim} dimensions, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name}: contains NaN or Inf")
    return arr


def check_labels(y, n_samples=None, *, both_classes=True):
    """Validate a ±1 label vector."""
    y = np.asarray(y, dtype=np.float64).ravel()
    if n_samples is not None and y.shape[0] != n_samples:
        raise DimensionError(f"labels: expected {n_samples} entries, got {y.shape[0]}")
    if not np.all((y == 1.0) | (y == -1.0)):
        raise TrainingError("labels must be exactly +1 or -1")
    if both_classes and (np.all(y > 0) or np.all(y < 0)):
        raise TrainingError("training data must contain both classes")
    return y


def check_targets(q, y, q_positive=1.0, q_negative=1.0):
    """Per-sample target responses; defaults depend on the label."""
    if q is None:
        return np.where(y > 0, float(q_positive), float(q_negative))
    q = np.asarray(q, dtype=np.float64).ravel()
    if q.shape != y.shape:
        raise DimensionError(f"targets: expected {y.shape[0]} entries, got {q.shape[0]}")
    if not np.all(np.isfinite(q)) or np.any(q <= 0):
        raise ConfigError("targets", "target responses must be finite and > 0")
    return q


def check_same_dims(a, b, what="operands"):
    if tuple(a) != tuple(b):
        raise DimensionError(f"{what}: dimension mismatch {tuple(a)} vs {tuple(b)}")
