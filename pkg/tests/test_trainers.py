import numpy as np
import pytest

from mmvcf import (
    DegenerateModelError,
    DimensionError,
    FilterBank,
    FormatError,
    LocalizationMatrix,
    SynthConfig,
    TrainConfig,
    TrainingError,
    build_kernel_gram,
    dft2,
    fit_linear_svm,
    fit_mmvcf,
    generate_planted_dataset,
    load_model,
    psr,
    save_model,
    smo_solve,
    train_linear_svm,
    train_mmvcf,
    train_vcf,
)
from mmvcf.oracle import DenseObjective, fd_gradient, frequency_objective, grid_qp
from mmvcf.trainers import (
    block_inverse,
    localization_matrix,
    model_from_bytes,
    model_to_bytes,
    quantized,
    recover_filter,
)


def cosine(a, b):
    a, b = np.ravel(a), np.ravel(b)
    return float(a @ b / np.linalg.norm(a) / np.linalg.norm(b))


class TestVCF:
    def test_large_lambda_limit(self, rng):
        X = rng.standard_normal((1, 1, 8, 8))
        m = (X, np.array([1.0]), np.array([1.0]), [(3, 4)])
        fb = train_vcf(m, lam=1e6, sigma=1.5)
        from mmvcf.trainers import desired_planes
        g = desired_planes([1], [1.0], [(3, 4)], (8, 8), 1.5)[0]
        limit = np.real(np.fft.ifft2(dft2(X[0, 0]) * np.conj(dft2(g)))) / 1e6
        assert cosine(fb.taps[0], limit) >= 0.999

    def test_impulse_interpolates_target(self):
        X = np.zeros((1, 1, 16, 16))
        X[0, 0, 8, 8] = 1.0
        fb = train_vcf((X, np.array([1.0]), np.array([1.0]), [(8, 8)]), lam=1e-6, sigma=0.1)
        target = np.zeros((16, 16))
        target[8, 8] = 1.0
        np.testing.assert_allclose(fb.correlate(X[0]).values, target, atol=1e-3)

    def test_gradient_vanishes(self):
        m = generate_planted_dataset(SynthConfig(k=2, h=8, w=8, n_pos=2, n_neg=1, seed=5))
        fb = train_vcf(m, lam=0.3, sigma=1.5)
        obj = DenseObjective(m.X, m.y, m.targets, m.centers, 0.3, 1.5)
        value = frequency_objective(fb.taps, obj)
        grad = fd_gradient(lambda f: frequency_objective(f, obj), fb.taps)
        assert np.linalg.norm(grad) <= 1e-5 * abs(value)

    def test_lambda_must_be_positive(self, small_set):
        with pytest.raises(ValueError, match="lambda"):
            train_vcf(small_set, lam=0.0, sigma=1.0)

    def test_negatives_only_gives_zero_filter(self, small_set):
        neg = small_set.y < 0
        fb = train_vcf((small_set.X[neg], small_set.y[neg]), lam=1.0, sigma=1.0)
        np.testing.assert_allclose(fb.taps, 0.0, atol=1e-14)


class TestKernel:
    def test_identity_is_linear_kernel(self, small_set):
        X = small_set.X
        G = build_kernel_gram(dft2(X), LocalizationMatrix.identity(X.shape[1:], kind="inverse"))
        flat = X.reshape(len(X), -1)
        np.testing.assert_allclose(G, flat @ flat.T, atol=1e-9)

    def test_symmetric_psd(self, rng):
        X = rng.standard_normal((6, 2, 6, 6))
        xf = dft2(X)
        G = build_kernel_gram(xf, block_inverse(localization_matrix(xf, 0.1)))
        assert np.max(np.abs(G - G.T)) <= 1e-10
        assert np.linalg.eigvalsh(G).min() >= -1e-8 * np.trace(G)


class TestSMO:
    def test_two_point(self):
        G = np.array([[1.0, -1.0], [-1.0, 1.0]])
        sol = smo_solve(G, [1, -1], [1, 1], C=10.0)
        np.testing.assert_allclose(sol.alphas, [0.5, 0.5], atol=1e-6)
        assert sol.bias == pytest.approx(0.0, abs=1e-12)
        assert sol.objective == pytest.approx(0.5, abs=1e-12)
        assert sol.converged

    def test_two_point_grid_agrees(self):
        G = np.array([[1.0, -1.0], [-1.0, 1.0]])
        _, alpha = grid_qp(G, [1, -1], [1, 1], 10.0, grid_step=1e-3)
        np.testing.assert_allclose(alpha, smo_solve(G, [1, -1], [1, 1], C=10.0).alphas, atol=1e-3)

    @pytest.mark.parametrize("seed", range(5))
    def test_feasibility_and_monotone(self, seed):
        r = np.random.default_rng(seed)
        A = r.standard_normal((12, 5))
        y = np.where(r.random(12) < 0.5, 1.0, -1.0)
        y[:2] = [1, -1]
        sol = smo_solve(A @ A.T, y, C=0.7, tol=1e-8)
        assert np.all(sol.alphas >= 0) and np.all(sol.alphas <= 0.7)
        assert abs(sol.alphas @ y) <= 1e-9 * 0.7 * 12
        assert np.all(np.diff(sol.objective_history) >= -1e-12)
        assert sol.kkt_violation <= 1e-8
        assert np.all(sol.slacks >= 0)

    def test_separable_four_points_match_grid(self):
        X = np.array([[2.0, 1.0], [1.5, 2.0], [-1.0, -0.5], [-2.0, -1.5]])
        y = np.array([1.0, 1.0, -1.0, -1.0])
        G = X @ X.T
        sol = smo_solve(G, y, C=1.0, tol=1e-10)
        best, _ = grid_qp(G, y, np.ones(4), 1.0, grid_step=1e-2)
        assert abs(best - sol.objective) <= 1e-3 or best <= sol.objective

    def test_budget_exhaustion_is_reported(self, rng):
        A = rng.standard_normal((30, 10))
        y = np.where(np.arange(30) % 2 == 0, 1.0, -1.0)
        sol = smo_solve(A @ A.T, y, C=100.0, tol=1e-12, max_passes=1)
        assert not sol.converged
        assert sol.kkt_violation > 1e-12
        assert sol.n_iter == 30

    def test_single_class(self):
        with pytest.raises(TrainingError):
            smo_solve(np.eye(2), [1, 1])

    def test_nonsquare_gram(self):
        with pytest.raises(DimensionError):
            smo_solve(np.ones((2, 3)), [1, -1])


class TestRecoverFilter:
    def test_single_support_vector(self, rng):
        X = rng.standard_normal((1, 2, 4, 4))
        eye = LocalizationMatrix.identity((2, 4, 4), kind="inverse")
        fb = recover_filter([1.0], [1.0], dft2(X), eye)
        np.testing.assert_allclose(fb.taps, X[0], atol=1e-10)

    def test_all_zero(self, rng):
        eye = LocalizationMatrix.identity((1, 2, 2), kind="inverse")
        with pytest.raises(DegenerateModelError):
            recover_filter([0.0, 0.0], [1, -1], dft2(rng.standard_normal((2, 1, 2, 2))), eye)

    def test_training_scores_match_gram(self, small_set):
        X, y = small_set.X, small_set.y
        xf = dft2(X)
        Sinv = block_inverse(localization_matrix(xf, 0.1))
        G = build_kernel_gram(xf, Sinv)
        fb, sol = fit_mmvcf(X, y, gamma=0.1)
        np.testing.assert_allclose(fb.score(X), G @ (sol.alphas * y) + sol.bias, atol=1e-8)

    def test_held_out_kernel_extension(self):
        cfg = SynthConfig(k=2, h=8, w=8, n_pos=10, n_neg=10, seed=21)
        train = generate_planted_dataset(cfg)
        test = generate_planted_dataset(SynthConfig(k=2, h=8, w=8, n_pos=5, n_neg=5, seed=22,
                                                    template_seed=cfg.template_seed))
        xf = dft2(train.X)
        Sinv = block_inverse(localization_matrix(xf, 0.1))
        fb, sol = fit_mmvcf(train.X, train.y, gamma=0.1)
        K = build_kernel_gram(xf, Sinv, other=dft2(test.X))
        want = K @ (sol.alphas * train.y) + sol.bias
        np.testing.assert_allclose(fb.score(test.X), want, atol=1e-7)


class TestLinearSVM:
    def test_separable_toy(self):
        X = np.array([[[[1.0, 0.2], [0.0, 0.1]]], [[[0.9, -0.1], [0.2, 0.0]]],
                      [[[-1.0, 0.1], [0.1, 0.0]]], [[[-0.8, 0.0], [-0.2, 0.1]]]])
        y = np.array([1, 1, -1, -1])
        fb = train_linear_svm((X, y), C=10.0)
        assert np.all(np.sign(fb.score(X)) == y)

    def test_two_point_direction(self, rng):
        X = rng.standard_normal((2, 1, 3, 3))
        fb, _ = fit_linear_svm(X, [1, -1], C=100.0)
        assert cosine(fb.taps, X[0] - X[1]) >= 0.999

    def test_equals_gamma_one(self, planted40):
        svm = train_linear_svm(planted40, C=1.0, tol=1e-10)
        mm = train_mmvcf(planted40, TrainConfig(gamma=1.0, smo_tolerance=1e-10))
        rel = np.max(np.abs(svm.taps - mm.taps)) / np.max(np.abs(svm.taps))
        assert rel <= 1e-8


class TestMMVCF:
    def test_dual_primal_agree(self):
        m = generate_planted_dataset(SynthConfig(k=3, h=16, w=16, n_pos=15, n_neg=15, seed=8))
        d, _ = fit_mmvcf(m.X, m.y, gamma=0.1, tol=1e-10, solver="dual")
        p, _ = fit_mmvcf(m.X, m.y, gamma=0.1, tol=1e-10, solver="primal")
        assert np.max(np.abs(d.taps - p.taps)) / np.max(np.abs(d.taps)) <= 1e-6
        sd, sp = d.score(m.X), p.score(m.X)
        assert np.max(np.abs(sd - sp)) <= 1e-6 * np.max(np.abs(sd))

    def test_primal_slacks_match_hinge(self, small_set):
        X, y = small_set.X, small_set.y
        fb, sol = fit_mmvcf(X, y, gamma=0.1, tol=1e-10, solver="primal")
        hinge = np.maximum(0.0, 1.0 - y * fb.score(X))
        np.testing.assert_allclose(sol.slacks, hinge, atol=1e-7)

    def test_small_gamma_sharpens_peak(self):
        cfg = SynthConfig(k=3, h=16, w=16, n_pos=20, n_neg=20, noise_sigma=1.0, seed=3,
                          noise_smoothing=1.0, noise_white_fraction=0.3)
        train = generate_planted_dataset(cfg)
        held = generate_planted_dataset(SynthConfig(k=3, h=16, w=16, n_pos=1, n_neg=0, seed=4,
                                                    noise_sigma=1.0, template_seed=cfg.template_seed,
                                                    noise_smoothing=1.0, noise_white_fraction=0.3))
        sharp = train_mmvcf(train, TrainConfig(gamma=0.01))
        flat = train_mmvcf(train, TrainConfig(gamma=1.0))
        x = held.X[0]
        assert psr(sharp.correlate(x)) > psr(flat.correlate(x))

    def test_solver_name(self, small_set):
        with pytest.raises(ValueError, match="solver"):
            fit_mmvcf(small_set.X, small_set.y, solver="newton")

    @pytest.mark.parametrize("gamma", [0.0, 1.5])
    def test_gamma_range(self, small_set, gamma):
        with pytest.raises(ValueError, match="gamma"):
            fit_mmvcf(small_set.X, small_set.y, gamma=gamma)

    @pytest.mark.parametrize("field,value", [("gamma", 0.0), ("C", -1.0), ("sigma", 0.0),
                                             ("max_passes", 0), ("q_negative", 0.0)])
    def test_config_ranges(self, field, value):
        with pytest.raises(ValueError, match=field):
            TrainConfig(**{field: value}).validate()


class TestModelContainer:
    def test_round_trip(self, tmp_path, small_set):
        fb = train_mmvcf(small_set, TrainConfig(gamma=0.1, C=2.0))
        fb.feature_config = {"kind": "hog", "cell_size": 4}
        save_model(fb, tmp_path / "m.mcfm")
        back = load_model(tmp_path / "m.mcfm")
        q = quantized(fb)
        np.testing.assert_array_equal(back.taps, q.taps)
        assert (back.bias, back.trainer, back.gamma, back.C) == (fb.bias, fb.trainer, fb.gamma, fb.C)
        assert back.feature_config == fb.feature_config
        assert model_to_bytes(back) == model_to_bytes(q)

    def test_bad_magic(self):
        with pytest.raises(FormatError):
            model_from_bytes(b"NOPE" + bytes(8))

    def test_truncated_header(self, small_set):
        buf = model_to_bytes(train_vcf(small_set, 1.0, 1.0))
        with pytest.raises(FormatError):
            model_from_bytes(buf[:12])

    def test_dims_mismatch(self):
        fb = FilterBank(np.zeros((1, 2, 2)))
        buf = bytearray(model_to_bytes(fb))
        buf = bytes(buf).replace(b'"dims": [1, 2, 2]', b'"dims": [1, 2, 3]')
        with pytest.raises(FormatError, match="dims"):
            model_from_bytes(buf)

    def test_filter_bank_rejects_bad_values(self):
        with pytest.raises(ValueError):
            FilterBank(np.full((1, 2, 2), np.nan))
        with pytest.raises(ValueError):
            FilterBank(np.zeros((1, 2, 2)), trainer="lda")

    def test_score_dimension_check(self):
        with pytest.raises(DimensionError):
            FilterBank(np.zeros((1, 2, 2))).score(np.zeros((1, 3, 3)))
