"""Oracle-backed self checks run by ``mmvcf verify``."""

from dataclasses import dataclass

import numpy as np

from . import oracle
from .cfmath import LocalizationMatrix, accumulate_cross_power, assemble_S, block_inverse
from .spectral import dft2, freq_inner
from .tensorio import SynthConfig, generate_planted_dataset
from .trainers import build_kernel_gram, fit_linear_svm, fit_mmvcf, smo_solve

FAULTS = ("block-inverse",)


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str

    def line(self):
        return f"{'PASS' if self.passed else 'FAIL'} {self.name}: {self.detail}"


def _check_parseval(rng, fault):
    worst = 0.0
    for _ in range(20):
        a = rng.standard_normal((3, 8, 8))
        b = rng.standard_normal((3, 8, 8))
        ref = float(np.sum(a * b))
        err = abs(freq_inner(dft2(a), dft2(b)) - ref) / max(1.0, abs(ref))
        worst = max(worst, err)
    return CheckResult("parseval", worst <= 1e-9, f"max rel err {worst:.2e}")


def _check_block_inverse(rng, fault):
    worst = 0.0
    for k in (2, 3):
        X = rng.standard_normal((k + 2, k, 4, 4))
        S = assemble_S(accumulate_cross_power(dft2(X)), 0.1)
        inv = block_inverse(S)
        blocks = inv.blocks
        if fault == "block-inverse":
            blocks = blocks + 1e-6 * rng.standard_normal(blocks.shape)
        dense = oracle.dense_inverse(oracle.blocks_to_dense(S.blocks))
        ref = oracle.dense_to_blocks(dense, k, 4, 4)
        worst = max(worst, float(np.max(np.abs(blocks - ref))))
    return CheckResult("block-inverse", worst <= 1e-10, f"max abs err {worst:.2e}")


def _check_smo_grid(rng, fault):
    G = np.array([[1.0, -1.0], [-1.0, 1.0]])
    sol = smo_solve(G, [1, -1], [1, 1], C=10.0)
    two_point = float(np.max(np.abs(sol.alphas - 0.5)))
    worst_gap = -np.inf
    for n in (3, 4):
        A = rng.standard_normal((n, 3))
        G = A @ A.T
        y = np.array([1, -1] * (n // 2) + [1] * (n % 2), dtype=float)
        q = np.ones(n)
        sol = smo_solve(G, y, q, C=1.0)
        grid_obj, _ = oracle.grid_qp(G, y, q, 1.0, grid_step=0.02)
        worst_gap = max(worst_gap, grid_obj - sol.objective)
    ok = two_point <= 1e-6 and worst_gap <= 1e-3
    return CheckResult("smo-vs-grid", ok,
                       f"two-point err {two_point:.2e}, grid minus smo {worst_gap:.2e}")


def _dataset(seed):
    m = generate_planted_dataset(SynthConfig(k=3, h=16, w=16, n_pos=20, n_neg=20, seed=seed,
                                             noise_sigma=1.0, shift_range=2))
    return m.X, m.y


def _check_collapse(rng, fault):
    X, y = _dataset(int(rng.integers(1 << 16)))
    svm, _ = fit_linear_svm(X, y, C=1.0, tol=1e-10)
    mm, _ = fit_mmvcf(X, y, gamma=1.0, C=1.0, tol=1e-10)
    probes = rng.standard_normal((50,) + X.shape[1:])
    both = np.concatenate([X, probes])
    err = float(np.max(np.abs(svm.score(both) - mm.score(both))))
    return CheckResult("gamma1-collapse", err <= 1e-8, f"max score diff {err:.2e}")


def _check_dual_primal(rng, fault):
    X, y = _dataset(int(rng.integers(1 << 16)))
    worst = 0.0
    for gamma in (0.01, 0.1):
        d, _ = fit_mmvcf(X, y, gamma=gamma, C=1.0, tol=1e-10, solver="dual")
        p, _ = fit_mmvcf(X, y, gamma=gamma, C=1.0, tol=1e-10, solver="primal")
        rel = float(np.max(np.abs(d.taps - p.taps)) / np.max(np.abs(d.taps)))
        worst = max(worst, rel)
    return CheckResult("dual-primal", worst <= 1e-6, f"max rel tap diff {worst:.2e}")


def _check_gram_psd(rng, fault):
    X, _ = _dataset(int(rng.integers(1 << 16)))
    xf = dft2(X)
    worst = np.inf
    for gamma in (0.01, 0.1, 1.0):
        if gamma == 1.0:
            Sinv = LocalizationMatrix.identity(X.shape[1:], kind="inverse")
        else:
            Sinv = block_inverse(assemble_S(accumulate_cross_power(xf), gamma).conj())
        G = build_kernel_gram(xf, Sinv)
        worst = min(worst, float(np.linalg.eigvalsh(G).min() / np.trace(G)))
    return CheckResult("gram-psd", worst >= -1e-8, f"min eig / trace {worst:.2e}")


QUICK = (_check_parseval, _check_block_inverse, _check_smo_grid)
FULL = QUICK + (_check_gram_psd, _check_collapse, _check_dual_primal)


def run_checks(quick=False, inject_fault=None, seed=0):
    """Run the invariant suite; returns a list of :class:`CheckResult`."""
    if inject_fault is not None and inject_fault not in FAULTS:
        raise ValueError(f"unknown fault {inject_fault!r}")
    results = []
    for n, check in enumerate(QUICK if quick else FULL):
        rng = np.random.default_rng([seed, n])
        try:
            results.append(check(rng, inject_fault))
        except Exception as exc:  # a crash is a failed check, not a crashed report
            name = check.__name__.removeprefix("_check_").replace("_", "-")
            results.append(CheckResult(name, False, f"{type(exc).__name__}: {exc}"))
    return results
