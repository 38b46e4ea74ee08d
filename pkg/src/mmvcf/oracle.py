"""Slow reference implementations used to check the fast paths.

Nothing here uses an FFT or the frequency-major block layout; everything
is either a direct sum over indices or a dense ``Kd x Kd`` matrix. Sizes
are guarded so a mistaken call cannot run for minutes.
"""

import itertools
from dataclasses import dataclass

import numpy as np

from ._exceptions import ConfigError


def naive_dft2(x):
    """Direct double-sum DFT of a 2-D array, ``O(d^2)``."""
    x = np.asarray(x, dtype=np.complex128)
    h, w = x.shape
    m = np.arange(h)
    n = np.arange(w)
    out = np.zeros((h, w), dtype=np.complex128)
    for u in range(h):
        for v in range(w):
            phase = np.exp(-2j * np.pi * (u * m[:, None] / h + v * n[None, :] / w))
            out[u, v] = np.sum(x * phase)
    return out


def naive_idft2(X):
    X = np.asarray(X, dtype=np.complex128)
    h, w = X.shape
    return np.conj(naive_dft2(np.conj(X))) / (h * w)


def naive_cross_correlate(x, f):
    """``c[t] = sum_k sum_n x_k[(n + t) mod size] f_k[n]`` by explicit loops."""
    x = np.asarray(x, dtype=np.float64)
    f = np.asarray(f, dtype=np.float64)
    k, h, w = x.shape
    out = np.zeros((h, w))
    for tr in range(h):
        for tc in range(w):
            acc = 0.0
            for r in range(h):
                for c in range(w):
                    acc += np.dot(x[:, (r + tr) % h, (c + tc) % w], f[:, r, c])
            out[tr, tc] = acc
    return out


def naive_sliding_score(query, taps, bias=0.0):
    """Valid-region sliding dot products of ``taps`` over ``query``."""
    q = np.asarray(query, dtype=np.float64)
    f = np.asarray(taps, dtype=np.float64)
    _, hq, wq = q.shape
    _, hf, wf = f.shape
    out = np.zeros((hq - hf + 1, wq - wf + 1))
    for i in range(out.shape[0]):
        for j in range(out.shape[1]):
            out[i, j] = np.sum(q[:, i:i + hf, j:j + wf] * f) + bias
    return out


def _guard(k, d):
    if k * d > 4096:
        raise ConfigError("size", f"dense oracle limited to K*d <= 4096, got {k * d}")


def dense_cross_power(spectra):
    """Channel-major ``Kd x Kd`` cross-power built from diagonal DFT matrices.

    Block ``(k, l)`` is ``mean_i conj(X_i^k) X_i^l`` with ``X_i^k`` the
    ``d x d`` diagonal matrix of sample ``i``'s channel-``k`` spectrum.
    """
    spectra = np.asarray(spectra, dtype=np.complex128)
    n, k, h, w = spectra.shape
    d = h * w
    _guard(k, d)
    M = np.zeros((k * d, k * d), dtype=np.complex128)
    for i in range(n):
        diags = [np.diag(spectra[i, c].ravel()) for c in range(k)]
        for a in range(k):
            for b in range(k):
                M[a * d:(a + 1) * d, b * d:(b + 1) * d] += np.conj(diags[a]).T @ diags[b]
    return M / n


def dense_to_blocks(M, k, h, w):
    """Read per-frequency ``K x K`` blocks out of a channel-major dense matrix."""
    d = h * w
    idx = np.arange(d)
    out = np.zeros((h, w, k, k), dtype=M.dtype)
    for a in range(k):
        for b in range(k):
            out[:, :, a, b] = M[a * d + idx, b * d + idx].reshape(h, w)
    return out


def blocks_to_dense(blocks):
    h, w, k, _ = blocks.shape
    d = h * w
    _guard(k, d)
    M = np.zeros((k * d, k * d), dtype=np.complex128)
    idx = np.arange(d)
    for a in range(k):
        for b in range(k):
            M[a * d + idx, b * d + idx] = blocks[:, :, a, b].ravel()
    return M


def dense_localization(M, gamma):
    return (1.0 - gamma) * M + gamma * np.eye(M.shape[0])


def dense_inverse(M):
    return np.linalg.inv(M)


@dataclass
class DenseObjective:
    """Localisation objective of a filter on a labelled set, evaluated spatially.

    Without ``C`` this is the ridge MSE
    ``(1/N) sum_i || sum_k x_i^k (x) f^k - g_i ||^2 + lam sum_k ||f^k||^2``
    with ``g_i = q_i * gaussian(center_i)`` for positives and 0 for
    negatives. With ``C`` the hinge terms ``C sum_i max(0, q_i - y_i <f, x_i>)``
    are added.
    """

    X: np.ndarray
    y: np.ndarray
    q: np.ndarray
    centers: list
    lam: float
    sigma: float
    includes_cross_term: bool = True
    C: float = None

    def desired(self):
        from .trainers import desired_planes
        h, w = self.X.shape[-2:]
        return desired_planes(self.y, self.q, self.centers, (h, w), self.sigma)


def _circular_corr_rolls(x, f):
    # same sum as naive_cross_correlate, vectorised over the shift set
    k, h, w = x.shape
    out = np.zeros((h, w))
    for tr in range(h):
        for tc in range(w):
            out[tr, tc] = np.sum(np.roll(x, (-tr, -tc), axis=(1, 2)) * f)
    return out


def objective_eval(f, dense, bias=0.0):
    taps = np.asarray(getattr(f, "taps", f), dtype=np.float64)
    g = dense.desired()
    total = 0.0
    for i, x in enumerate(np.asarray(dense.X, dtype=np.float64)):
        c = _circular_corr_rolls(x, taps)
        resid = c - g[i] if dense.includes_cross_term else c
        total += np.sum(resid ** 2)
    total = total / len(dense.X) + dense.lam * np.sum(taps ** 2)
    if dense.C is not None:
        scores = np.asarray(dense.X).reshape(len(dense.X), -1) @ taps.ravel() + bias
        total += dense.C * np.sum(np.maximum(0.0, dense.q - dense.y * scores))
    return float(total)


def frequency_objective(f, dense):
    """The ridge MSE evaluated in the frequency domain with direct DFT sums."""
    taps = np.asarray(getattr(f, "taps", f), dtype=np.float64)
    X = np.asarray(dense.X, dtype=np.float64)
    n, k, h, w = X.shape
    d = h * w
    g = dense.desired()
    ff = np.stack([naive_dft2(taps[c]) for c in range(k)])
    total = 0.0
    for i in range(n):
        xf = np.stack([naive_dft2(X[i, c]) for c in range(k)])
        cf = np.sum(xf * np.conj(ff), axis=0)
        gf = naive_dft2(g[i])
        total += np.sum(np.abs(cf - gf) ** 2) / d
    return float(total / n + dense.lam * np.sum(np.abs(ff) ** 2) / d)


def mmvcf_primal_objective(taps, bias, X, y, q, gamma, C):
    """``1/2 [(1-gamma) mean_i ||x_i (x) f||^2 + gamma ||f||^2] + C sum_i xi_i``.

    The correlation energy covers the whole circular plane of every
    training sample; slacks are hinge losses at the zero-shift response.
    """
    taps = np.asarray(taps, dtype=np.float64)
    X = np.asarray(X, dtype=np.float64)
    energy = np.mean([np.sum(_circular_corr_rolls(x, taps) ** 2) for x in X])
    reg = 0.5 * ((1.0 - gamma) * energy + gamma * np.sum(taps ** 2))
    scores = X.reshape(len(X), -1) @ taps.ravel() + bias
    return float(reg + C * np.sum(np.maximum(0.0, np.asarray(q) - np.asarray(y) * scores)))


def fd_gradient(objective, f, step=1e-6):
    """Central finite-difference gradient of ``objective`` at array ``f``."""
    if step <= 0:
        raise ConfigError("step", f"must be > 0, got {step}")
    f = np.array(f, dtype=np.float64)
    grad = np.zeros_like(f)
    flat = f.reshape(-1)
    g = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + step
        up = objective(f)
        flat[i] = orig - step
        down = objective(f)
        flat[i] = orig
        g[i] = (up - down) / (2.0 * step)
    return grad


def dual_value(alpha, G, y, q):
    alpha = np.asarray(alpha, dtype=np.float64)
    v = alpha * np.asarray(y, dtype=np.float64)
    return float(np.asarray(q) @ alpha - 0.5 * v @ np.asarray(G) @ v)


def grid_qp(G, labels, q, C, grid_step=1e-3):
    """Exhaustive grid search of the SVM dual for ``N <= 4``.

    The first ``N - 1`` coefficients range over a grid on ``[0, C]``; the
    last is fixed by ``sum y_i a_i = 0`` and the point is kept only when it
    lands in the box. Returns ``(best_objective, best_alpha)``.
    """
    G = np.asarray(G, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    n = len(y)
    if n > 4:
        raise ConfigError("N", f"grid search limited to N <= 4, got {n}")
    if C <= 0:
        return dual_value(np.zeros(n), G, y, q), np.zeros(n)
    grid = np.arange(0.0, C + 0.5 * grid_step, grid_step)
    grid = grid[grid <= C]
    Q = (y[:, None] * y[None, :]) * G
    best, best_alpha = -np.inf, None
    head_dims = n - 2
    for head in itertools.product(grid, repeat=head_dims):
        # vectorise over coefficient n-2, solve for coefficient n-1
        a = np.zeros((len(grid), n))
        a[:, :head_dims] = head
        a[:, head_dims] = grid
        a[:, n - 1] = -y[n - 1] * (a[:, :n - 1] @ y[:n - 1])
        ok = (a[:, n - 1] >= -1e-12) & (a[:, n - 1] <= C + 1e-12)
        if not np.any(ok):
            continue
        a = a[ok]
        a[:, n - 1] = np.clip(a[:, n - 1], 0.0, C)
        vals = a @ q - 0.5 * np.einsum("ij,jk,ik->i", a, Q, a)
        k = int(np.argmax(vals))
        if vals[k] > best:
            best, best_alpha = float(vals[k]), a[k].copy()
    return best, best_alpha
