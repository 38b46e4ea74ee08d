"""Per-frequency block algebra shared by the trainers.

All block matrices are stored frequency-major as complex arrays of shape
``(H, W, K, K)``: one Hermitian ``K x K`` block per DFT bin. This is the
diagonal-block structure of the full ``Kd x Kd`` cross-power matrix after
permuting it from channel-major to frequency-major order, which is what
makes inversion ``O(H W K^3)`` instead of ``O((K d)^3)``.
"""

from dataclasses import dataclass

import numpy as np

from ._exceptions import ConfigError, DimensionError, SingularityError
from ._validation import check_scalar, check_spectra


@dataclass(frozen=True)
class DesiredOutput:
    plane: np.ndarray
    center: tuple
    sigma: float
    peak: float = 1.0


@dataclass(frozen=True)
class CrossPowerMatrix:
    """Averaged per-frequency channel cross-power ``(1/N) sum conj(x_k) x_l``."""

    blocks: np.ndarray
    n_samples: int

    @property
    def dims(self):
        h, w, k, _ = self.blocks.shape
        return (k, h, w)


@dataclass(frozen=True)
class LocalizationMatrix:
    """Per-frequency Hermitian blocks of ``S`` (or of ``S^-1`` / ``S^-1/2``).

    ``kind`` records which of the three the blocks hold.
    """

    blocks: np.ndarray
    gamma: float
    kind: str = "S"

    @property
    def dims(self):
        h, w, k, _ = self.blocks.shape
        return (k, h, w)

    def conj(self):
        """Blocks reflected in frequency: ``B(-u) = conj(B(u))`` for real data."""
        return LocalizationMatrix(np.conj(self.blocks), self.gamma, self.kind)

    @classmethod
    def identity(cls, dims, kind="S"):
        k, h, w = dims
        eye = np.broadcast_to(np.eye(k, dtype=np.complex128), (h, w, k, k)).copy()
        return cls(eye, 1.0, kind)


def gaussian_output(H, W, center, sigma):
    """Unit-peak Gaussian plane centred at ``center`` with circular distance."""
    sigma = check_scalar(sigma, "sigma", low=0.0, include_low=False)
    r0, c0 = (int(v) for v in center)
    if not (0 <= r0 < H and 0 <= c0 < W):
        raise ConfigError("center", f"{center} outside a {H}x{W} plane")
    dr = np.abs(np.arange(H) - r0)
    dr = np.minimum(dr, H - dr)
    dc = np.abs(np.arange(W) - c0)
    dc = np.minimum(dc, W - dc)
    dist2 = dr[:, None] ** 2 + dc[None, :] ** 2
    plane = np.exp(-dist2 / (2.0 * sigma ** 2))
    return DesiredOutput(plane, (r0, c0), sigma)


def accumulate_cross_power(spectra):
    """Average ``conj(x_k) x_l`` over samples for every frequency bin."""
    if isinstance(spectra, (list, tuple)):
        if not spectra:
            raise ValueError("accumulate_cross_power: empty sample list")
        spectra = np.stack([np.asarray(s) for s in spectra])
    spectra = check_spectra(spectra, "spectra", ndim=4)
    if spectra.shape[0] == 0:
        raise ValueError("accumulate_cross_power: empty sample list")
    n = spectra.shape[0]
    blocks = np.einsum("nkhw,nlhw->hwkl", np.conj(spectra), spectra, optimize=True) / n
    return CrossPowerMatrix(blocks, n)


def assemble_S(D, gamma):
    """``(1 - gamma) D + gamma I`` per frequency."""
    gamma = check_scalar(gamma, "gamma", low=0.0, high=1.0)
    k = D.blocks.shape[-1]
    blocks = (1.0 - gamma) * D.blocks + gamma * np.eye(k)
    return LocalizationMatrix(blocks, gamma, "S")


def _check_definite(S):
    blocks = S.blocks
    eig = np.linalg.eigvalsh(blocks)
    trace = np.real(np.trace(blocks, axis1=-2, axis2=-1))
    bad = eig[..., 0] < 1e-14 * np.maximum(trace, np.finfo(float).tiny)
    if np.any(bad):
        h, w = np.unravel_index(np.argmax(bad), bad.shape)
        raise SingularityError((h, w), eig[h, w, 0], trace[h, w])
    return eig


def _hermitize(blocks):
    return 0.5 * (blocks + np.conj(np.swapaxes(blocks, -1, -2)))


def block_inverse(S):
    """Per-frequency inverse via a Cholesky factor, ``S^-1 = L^-H L^-1``."""
    _check_definite(S)
    L = np.linalg.cholesky(S.blocks)
    k = L.shape[-1]
    Linv = np.linalg.solve(L, np.broadcast_to(np.eye(k, dtype=L.dtype), L.shape))
    inv = np.conj(np.swapaxes(Linv, -1, -2)) @ Linv
    return LocalizationMatrix(_hermitize(inv), S.gamma, "inverse")


def block_inv_sqrt(S):
    """Per-frequency Hermitian ``S^-1/2`` from an eigendecomposition."""
    _check_definite(S)
    eig, vec = np.linalg.eigh(S.blocks)
    scaled = vec * (1.0 / np.sqrt(eig))[..., None, :]
    out = scaled @ np.conj(np.swapaxes(vec, -1, -2))
    return LocalizationMatrix(_hermitize(out), S.gamma, "inv_sqrt")


def apply_blocks(B, spectra):
    """Left-multiply every frequency's ``K``-vector of ``spectra`` by its block.

    ``spectra`` may be one stack ``(K, H, W)`` or a batch ``(N, K, H, W)``.
    """
    blocks = B.blocks if hasattr(B, "blocks") else np.asarray(B)
    spectra = np.asarray(spectra)
    k, h, w = spectra.shape[-3:]
    if blocks.shape != (h, w, k, k):
        raise DimensionError(f"blocks {blocks.shape} do not match spectra {spectra.shape}")
    return np.einsum("hwkl,...lhw->...khw", blocks, spectra, optimize=True)


def whiten(spectra, Sinvsqrt):
    """Map spectra into the space where the localisation metric is Euclidean."""
    return apply_blocks(Sinvsqrt, spectra)
