"""Filter training: ridge-regression VCF, linear SVM and maximum-margin VCF.

Conventions
-----------
A sample's decision value is ``<f, x> + b`` (the zero-shift entry of its
correlation plane plus the bias). With the unnormalised DFT this is
``(1/d) Re sum_u f^(u)^H x^(u) + b`` where ``d = H * W``.

The cross-power blocks ``D[k, l] = mean(conj(x_k) x_l)`` describe the
correlation energy of the *conjugate* filter spectrum under the correlation
convention ``c^ = x^ conj(f^)``. The MMVCF trainers therefore work with the
conjugated blocks so that the penalised energy is that of the planes
produced at detection time (the two coincide for ``K = 1``).
"""

import json
import struct
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from ._exceptions import (
    BadMagicError,
    DegenerateModelError,
    DimensionError,
    FormatError,
    NumericalConsistencyError,
    TensorIOError,
    TruncatedError,
)
from ._validation import (
    check_labels,
    check_scalar,
    check_stack,
    check_targets,
)
from .cfmath import (
    LocalizationMatrix,
    accumulate_cross_power,
    apply_blocks,
    assemble_S,
    block_inv_sqrt,
    block_inverse,
    gaussian_output,
    whiten,
)
from .spectral import CorrelationPlane, cross_correlate, dft2, idft2, to_real
from .tensorio import tensor_from_bytes, tensor_to_bytes

TRAINERS = ("vcf", "svm", "mmvcf-dual", "mmvcf-primal")


@dataclass
class FilterBank:
    """A trained ``K``-channel filter and its bias."""

    taps: np.ndarray
    bias: float = 0.0
    trainer: str = "vcf"
    gamma: float = None
    C: float = None
    lam: float = None
    sigma: float = None
    feature_config: dict = field(default_factory=lambda: {"kind": "none"})
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.taps = check_stack(self.taps, "taps")
        self.bias = float(self.bias)
        if not np.isfinite(self.bias):
            raise ValueError("bias must be finite")
        if self.trainer not in TRAINERS:
            raise ValueError(f"unknown trainer tag {self.trainer!r}")

    @property
    def dims(self):
        return self.taps.shape

    def score(self, X):
        """Decision values ``<f, x> + b`` for one sample or a batch."""
        X = np.asarray(getattr(X, "data", X), dtype=np.float64)
        single = X.ndim == 3
        X = check_stack(X[None] if single else X, "X", ndim=4)
        if X.shape[1:] != self.dims:
            raise DimensionError(f"samples {X.shape[1:]} do not match filter {self.dims}")
        s = X.reshape(len(X), -1) @ self.taps.ravel() + self.bias
        return float(s[0]) if single else s

    def correlate(self, x):
        """Circular correlation plane of ``x`` with the filter, bias added."""
        plane = cross_correlate(x, self)
        return CorrelationPlane(plane.values + self.bias)


@dataclass
class DualSolution:
    alphas: np.ndarray
    bias: float
    support: np.ndarray
    objective: float
    kkt_violation: float
    slacks: np.ndarray
    n_iter: int
    converged: bool
    objective_history: list = field(default_factory=list, repr=False)


@dataclass(frozen=True)
class TrainConfig:
    gamma: float = 0.1
    C: float = 1.0
    sigma: float = 2.0
    smo_tolerance: float = 1e-6
    max_passes: int = None
    q_positive: float = 1.0
    q_negative: float = 1.0

    def validate(self):
        check_scalar(self.gamma, "gamma", low=0.0, high=1.0, include_low=False)
        check_scalar(self.C, "C", low=0.0, include_low=False)
        check_scalar(self.sigma, "sigma", low=0.0, include_low=False)
        check_scalar(self.smo_tolerance, "smo_tolerance", low=0.0, include_low=False)
        if self.max_passes is not None:
            check_scalar(self.max_passes, "max_passes", low=1, integer=True)
        check_scalar(self.q_positive, "q_positive", low=0.0, include_low=False)
        check_scalar(self.q_negative, "q_negative", low=0.0, include_low=False)
        return self


def _dataset_arrays(data):
    """``(X, y, q, centers)`` from a DatasetManifest or an ``(X, y)`` tuple."""
    if hasattr(data, "samples"):
        return data.X, data.y, data.targets, data.centers
    X, y = data[0], data[1]
    q = data[2] if len(data) > 2 else None
    centers = data[3] if len(data) > 3 else None
    return X, y, q, centers


# --------------------------------------------------------------------------
# ridge-regression VCF
# --------------------------------------------------------------------------

def desired_planes(y, q, centers, shape, sigma):
    """Desired correlation outputs: scaled Gaussians for positives, zero otherwise."""
    h, w = shape
    out = np.zeros((len(y), h, w))
    for i, label in enumerate(y):
        if label > 0:
            center = (0, 0) if centers is None or centers[i] is None else centers[i]
            out[i] = q[i] * gaussian_output(h, w, center, sigma).plane
    return out


def solve_vcf(X, y, q, centers, lam, sigma):
    """Closed-form multi-channel ridge regression onto the desired planes.

    Per frequency solves ``(D + lam I) z = p`` with
    ``p = mean(conj(x^) g^)``; the filter spectrum is ``conj(z)``.
    """
    X = check_stack(X, "X", ndim=4)
    lam = check_scalar(lam, "lambda", low=0.0, include_low=False)
    sigma = check_scalar(sigma, "sigma", low=0.0, include_low=False)
    y = check_labels(y, len(X), both_classes=False)
    q = check_targets(q, y)
    n, k, h, w = X.shape
    xf = dft2(X)
    gf = dft2(desired_planes(y, q, centers, (h, w), sigma))
    D = accumulate_cross_power(xf)
    p = np.einsum("nkhw,nhw->hwk", np.conj(xf), gf) / n
    A = D.blocks + lam * np.eye(k)
    z = np.linalg.solve(A, p[..., None])[..., 0]
    f_hat = np.conj(np.transpose(z, (2, 0, 1)))
    return to_real(idft2(f_hat), reference=np.abs(f_hat).sum() / (h * w))


def train_vcf(data, lam, sigma):
    X, y, q, centers = _dataset_arrays(data)
    taps = solve_vcf(X, y, q, centers, lam, sigma)
    return FilterBank(taps, 0.0, "vcf", lam=float(lam), sigma=float(sigma))


# --------------------------------------------------------------------------
# kernel, SMO and filter recovery
# --------------------------------------------------------------------------

def build_kernel_gram(spectra, Sinv, other=None):
    """``G[i, j] = (1/d) Re sum_u x_i^H S^-1 x_j`` (rows from ``other`` if given)."""
    spectra = np.asarray(spectra, dtype=np.complex128)
    rows = spectra if other is None else np.asarray(other, dtype=np.complex128)
    d = spectra.shape[-1] * spectra.shape[-2]
    weighted = apply_blocks(Sinv, spectra)
    G = np.einsum("ikhw,jkhw->ij", np.conj(rows), weighted, optimize=True) / d
    scale = float(np.max(np.abs(G.real))) if G.size else 0.0
    resid = float(np.max(np.abs(G.imag))) if G.size else 0.0
    if resid > 1e-9 * max(scale, np.finfo(float).tiny):
        raise NumericalConsistencyError(f"kernel imaginary residual {resid:.3e} vs scale {scale:.3e}")
    G = np.ascontiguousarray(G.real)
    if other is None:
        G = 0.5 * (G + G.T)
    return G


def _dual_objective(alpha, grad, q):
    # f(a) = 1/2 a'Qa - q'a and grad = Qa - q, so -f(a) = (q'a - a'grad) / 2
    return 0.5 * (q @ alpha - alpha @ grad)


def smo_solve(G, labels, targets=None, C=1.0, tol=1e-6, max_passes=None):
    """Maximise ``q'a - 1/2 a'(yy' * G)a`` s.t. ``0 <= a <= C``, ``y'a = 0``.

    Pairwise coordinate ascent on the maximal-violating pair with analytic
    clipping. ``max_passes`` bounds the number of sweeps, one sweep being
    ``N`` pair updates (default ``10 * N`` sweeps). Non-convergence is
    reported through ``converged`` and ``kkt_violation``.
    """
    G = np.asarray(G, dtype=np.float64)
    n = G.shape[0]
    if G.shape != (n, n):
        raise DimensionError(f"Gram matrix must be square, got {G.shape}")
    y = check_labels(labels, n)
    q = check_targets(targets, y)
    C = check_scalar(C, "C", low=0.0, include_low=False)
    tol = check_scalar(tol, "tol", low=0.0, include_low=False)
    if max_passes is None:
        max_passes = 10 * n
    max_iter = int(max_passes) * n

    alpha = np.zeros(n)
    grad = -q.copy()
    diag = np.diag(G).copy()
    pos = y > 0
    history = [0.0]
    it = 0
    gap = np.inf
    while True:
        # I_up: alpha can move in +y direction; I_low: in -y direction
        up = np.where(pos, alpha < C, alpha > 0)
        low = np.where(pos, alpha > 0, alpha < C)
        score = -y * grad
        i = int(np.argmax(np.where(up, score, -np.inf)))
        j = int(np.argmin(np.where(low, score, np.inf)))
        gap = score[i] - score[j]
        if gap <= tol or it >= max_iter:
            break
        curv = diag[i] + diag[j] - 2.0 * G[i, j]
        if curv <= 1e-12:
            curv = 1e-12
        bound_i = C - alpha[i] if y[i] > 0 else alpha[i]
        bound_j = alpha[j] if y[j] > 0 else C - alpha[j]
        t = gap / curv
        if t >= bound_i or t >= bound_j:
            t = min(bound_i, bound_j)
            hit_i, hit_j = bound_i <= bound_j, bound_j <= bound_i
        else:
            hit_i = hit_j = False
        alpha[i] += y[i] * t
        alpha[j] -= y[j] * t
        # snap coefficients that reached a bound
        if hit_i:
            alpha[i] = C if y[i] > 0 else 0.0
        if hit_j:
            alpha[j] = 0.0 if y[j] > 0 else C
        grad += t * y * (G[:, i] - G[:, j])
        it += 1
        obj = _dual_objective(alpha, grad, q)
        if obj < history[-1] - 1e-9 * max(1.0, abs(obj)):
            raise ArithmeticError(f"SMO objective decreased at iteration {it}")
        history.append(obj)

    free = (alpha > 0) & (alpha < C)
    score = -y * grad
    if np.any(free):
        bias = float(np.mean(score[free]))
    else:
        up = np.where(pos, alpha < C, alpha > 0)
        low = np.where(pos, alpha > 0, alpha < C)
        hi = np.max(score[up]) if np.any(up) else np.min(score[low])
        lo = np.min(score[low]) if np.any(low) else hi
        bias = float(0.5 * (hi + lo))
    decision = G @ (alpha * y) + bias
    slacks = np.maximum(0.0, q - y * decision)
    return DualSolution(
        alphas=alpha,
        bias=bias,
        support=np.flatnonzero(alpha > 0),
        objective=_dual_objective(alpha, grad, q),
        kkt_violation=float(max(gap, 0.0)),
        slacks=slacks,
        n_iter=it,
        converged=bool(gap <= tol),
        objective_history=history,
    )


def recover_filter(alphas, labels, spectra, Sinv, bias=0.0, **meta):
    """Filter ``f^ = S^-1 sum_i a_i y_i x_i^`` back in the spatial domain."""
    alphas = np.asarray(alphas, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.float64)
    if not np.any(alphas != 0):
        raise DegenerateModelError("all dual coefficients are zero")
    spectra = np.asarray(spectra, dtype=np.complex128)
    combo = np.tensordot(alphas * labels, spectra, axes=1)
    f_hat = apply_blocks(Sinv, combo)
    h, w = spectra.shape[-2:]
    taps = to_real(idft2(f_hat), reference=np.abs(f_hat).sum() / (h * w), rtol=1e-9)
    meta.setdefault("trainer", "svm")
    trainer = meta.pop("trainer")
    return FilterBank(taps, bias, trainer, **meta)


def _solution_meta(sol):
    return {
        "n_sv": int(len(sol.support)),
        "kkt": float(sol.kkt_violation),
        "converged": bool(sol.converged),
        "n_iter": int(sol.n_iter),
        "objective": float(sol.objective),
    }


def fit_linear_svm(X, y, q=None, C=1.0, tol=1e-6, max_passes=None):
    """Linear SVM on ``(N, K, H, W)`` samples; returns ``(FilterBank, DualSolution)``."""
    X = check_stack(X, "X", ndim=4)
    y = check_labels(y, len(X))
    q = check_targets(q, y)
    xf = dft2(X)
    eye = LocalizationMatrix.identity(X.shape[1:], kind="inverse")
    G = build_kernel_gram(xf, eye)
    sol = smo_solve(G, y, q, C, tol, max_passes)
    fb = recover_filter(sol.alphas, y, xf, eye, sol.bias, trainer="svm", gamma=1.0, C=float(C),
                        meta=_solution_meta(sol))
    return fb, sol


def train_linear_svm(data, C, tol=1e-6, max_passes=None):
    X, y, q, _ = _dataset_arrays(data)
    return fit_linear_svm(X, y, q, C, tol, max_passes)[0]


def localization_matrix(spectra, gamma):
    """``S = (1 - gamma) D + gamma I`` oriented for the correlation convention."""
    return assemble_S(accumulate_cross_power(spectra), gamma).conj()


def fit_mmvcf(X, y, q=None, gamma=0.1, C=1.0, tol=1e-6, max_passes=None, solver="dual"):
    """Maximum-margin VCF; returns ``(FilterBank, DualSolution)``.

    ``solver="dual"`` runs SMO on the ``S^-1``-weighted kernel and maps the
    coefficients back through ``S^-1``. ``solver="primal"`` whitens every
    sample by ``S^-1/2``, trains a plain linear SVM on the whitened tensors
    and maps its filter back through ``S^-1/2``.
    """
    X = check_stack(X, "X", ndim=4)
    y = check_labels(y, len(X))
    q = check_targets(q, y)
    gamma = check_scalar(gamma, "gamma", low=0.0, high=1.0, include_low=False)
    if solver not in ("dual", "primal"):
        raise ValueError(f"solver must be 'dual' or 'primal', got {solver!r}")
    xf = dft2(X)
    S = localization_matrix(xf, gamma)
    h, w = X.shape[-2:]
    if solver == "dual":
        Sinv = block_inverse(S)
        G = build_kernel_gram(xf, Sinv)
        sol = smo_solve(G, y, q, C, tol, max_passes)
        fb = recover_filter(sol.alphas, y, xf, Sinv, sol.bias, trainer="mmvcf-dual",
                            gamma=gamma, C=float(C), meta=_solution_meta(sol))
        return fb, sol
    R = block_inv_sqrt(S)
    xw_hat = whiten(xf, R)
    Xw = to_real(idft2(xw_hat), reference=np.abs(xw_hat).sum(axis=(-2, -1)).max() / (h * w),
                 rtol=1e-9)
    svm, sol = fit_linear_svm(Xw, y, q, C, tol, max_passes)
    f_hat = apply_blocks(R, dft2(svm.taps))
    taps = to_real(idft2(f_hat), reference=np.abs(f_hat).sum() / (h * w), rtol=1e-9)
    fb = FilterBank(taps, svm.bias, "mmvcf-primal", gamma=gamma, C=float(C),
                    meta=_solution_meta(sol))
    return fb, sol


def train_mmvcf(data, cfg=None, path="dual"):
    cfg = (cfg or TrainConfig()).validate()
    X, y, q, _ = _dataset_arrays(data)
    if q is None:
        yy = np.asarray(y, dtype=np.float64)
        q = np.where(yy > 0, cfg.q_positive, cfg.q_negative)
    fb, _ = fit_mmvcf(X, y, q, cfg.gamma, cfg.C, cfg.smo_tolerance, cfg.max_passes, path)
    fb.sigma = cfg.sigma
    return fb


# --------------------------------------------------------------------------
# model container: b"MCFM", uint32 header length, JSON header, MCF1 taps
# --------------------------------------------------------------------------

MODEL_MAGIC = b"MCFM"
_LEN = struct.Struct("<I")


def model_to_bytes(fb):
    header = {
        "dims": list(fb.dims),
        "trainer": fb.trainer,
        "gamma": fb.gamma,
        "C": fb.C,
        "lambda": fb.lam,
        "sigma": fb.sigma,
        "bias": fb.bias,
        "features": fb.feature_config,
        "meta": fb.meta,
    }
    raw = json.dumps(header, sort_keys=True).encode("utf-8")
    return MODEL_MAGIC + _LEN.pack(len(raw)) + raw + tensor_to_bytes(fb.taps)


def model_from_bytes(buf, path="<bytes>"):
    if buf[:4] != MODEL_MAGIC:
        raise BadMagicError(path, "magic", f"expected {MODEL_MAGIC!r}, got {bytes(buf[:4])!r}")
    if len(buf) < 8:
        raise TruncatedError(path, "header", "model file ends inside the header length")
    (n,) = _LEN.unpack_from(buf, 4)
    if len(buf) < 8 + n:
        raise TruncatedError(path, "header", f"declares {n} header bytes, found {len(buf) - 8}")
    try:
        header = json.loads(buf[8:8 + n].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(path, "header", str(exc)) from exc
    taps = tensor_from_bytes(buf[8 + n:], path)
    if list(taps.dims) != list(header.get("dims", [])):
        raise FormatError(path, "dims", f"header dims {header.get('dims')} vs payload {taps.dims}")
    return FilterBank(
        taps.data, header["bias"], header["trainer"], gamma=header.get("gamma"),
        C=header.get("C"), lam=header.get("lambda"), sigma=header.get("sigma"),
        feature_config=header.get("features") or {"kind": "none"}, meta=header.get("meta") or {},
    )


def save_model(fb, path):
    """Write a model container; taps are stored at float32 precision."""
    try:
        Path(path).write_bytes(model_to_bytes(fb))
    except OSError as exc:
        raise TensorIOError(path, exc.strerror or str(exc)) from exc


def load_model(path):
    try:
        buf = Path(path).read_bytes()
    except OSError as exc:
        raise TensorIOError(path, exc.strerror or str(exc)) from exc
    return model_from_bytes(buf, path)


def quantized(fb):
    """The model exactly as it will be after a save/load round trip."""
    return replace(fb, taps=fb.taps.astype(np.float32).astype(np.float64))
