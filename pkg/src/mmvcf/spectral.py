"""DFT conventions, circular correlation and Parseval inner products.

Forward transforms are unnormalised and the inverse carries ``1/(H*W)``.
A spectrum stack is a complex array of shape ``(K, H, W)``; the correlation
plane of sample ``x`` with filter ``f`` is ``idft2(sum_k x_k^ * conj(f_k^))``,
so ``c[t] = sum_k sum_n x_k[n + t] f_k[n]`` with indices taken modulo the
plane size.
"""

from dataclasses import dataclass

import numpy as np

from ._exceptions import DimensionError, NumericalConsistencyError
from ._validation import check_same_dims, check_spectra, check_stack


def dft2(x):
    """Unnormalised 2-D DFT over the last two axes."""
    x = np.asarray(x)
    if x.ndim < 2 or min(x.shape[-2:]) < 1:
        raise DimensionError(f"dft2 needs at least a 2-D array, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ValueError("dft2: input contains NaN or Inf")
    return np.fft.fft2(x, axes=(-2, -1))


def idft2(X):
    """Inverse of :func:`dft2` (``1/(H*W)`` normalisation); complex output."""
    X = np.asarray(X)
    if not np.all(np.isfinite(X)):
        raise ValueError("idft2: input contains NaN or Inf")
    return np.fft.ifft2(X, axes=(-2, -1))


def to_real(z, *, reference=None, rtol=1e-10):
    """Drop the imaginary part of ``z`` after checking that it is round-off.

    ``reference`` is the magnitude scale the residual is judged against
    (defaults to ``max|z|``).
    """
    z = np.asarray(z)
    if not np.iscomplexobj(z):
        return z.astype(np.float64)
    scale = float(np.max(np.abs(z))) if reference is None else float(reference)
    resid = float(np.max(np.abs(z.imag))) if z.size else 0.0
    if resid > rtol * max(scale, np.finfo(float).tiny):
        raise NumericalConsistencyError(
            f"imaginary residual {resid:.3e} exceeds {rtol:g} x scale {scale:.3e}")
    return np.ascontiguousarray(z.real)


def spectra_of(x):
    """Per-channel spectrum of a ``(K, H, W)`` stack or an ``(N, K, H, W)`` batch."""
    arr = np.asarray(x.data if hasattr(x, "data") and not isinstance(x, np.ndarray) else x,
                     dtype=np.float64)
    return dft2(arr)


def taps_of(f):
    """Spatial taps of a FilterBank-like object or plain array."""
    taps = getattr(f, "taps", f)
    return check_stack(taps, "filter")


@dataclass(frozen=True)
class CorrelationPlane:
    values: np.ndarray

    @property
    def peak_location(self):
        return tuple(int(i) for i in np.unravel_index(np.argmax(self.values), self.values.shape))

    @property
    def peak_value(self):
        return float(np.max(self.values))

    @property
    def shape(self):
        return self.values.shape


def cross_correlate(x, f):
    """Circular multi-channel cross-correlation summed over channels."""
    x = check_stack(x, "x")
    taps = taps_of(f)
    check_same_dims(x.shape, taps.shape, "cross_correlate")
    xf = dft2(x)
    ff = dft2(taps)
    cf = np.sum(xf * np.conj(ff), axis=0)
    plane = to_real(idft2(cf), reference=float(np.abs(cf).sum()) / cf.size)
    return CorrelationPlane(plane)


def freq_inner(xf, ff):
    """Spatial inner product ``<f, x>`` evaluated from two spectrum stacks."""
    xf = check_spectra(xf, "x_hat")
    ff = check_spectra(ff, "f_hat")
    check_same_dims(xf.shape, ff.shape, "freq_inner")
    d = xf.shape[-1] * xf.shape[-2]
    z = np.vdot(ff, xf) / d
    norm_x = np.sqrt(np.vdot(xf, xf).real / d)
    norm_f = np.sqrt(np.vdot(ff, ff).real / d)
    if abs(z.imag) > 1e-9 * max(norm_x * norm_f, np.finfo(float).tiny):
        raise NumericalConsistencyError(
            f"freq_inner: imaginary residual {abs(z.imag):.3e} (inputs are not spectra of real signals)")
    return float(z.real)


def circular_shift(x, shift):
    """Shift the spatial axes of ``x`` by ``shift = (rows, cols)`` with wrap-around."""
    return np.roll(np.asarray(x), tuple(int(s) for s in shift), axis=(-2, -1))
