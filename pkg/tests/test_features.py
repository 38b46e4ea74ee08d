import numpy as np
import pytest
from sklearn.base import clone
from sklearn.pipeline import make_pipeline

from mmvcf import DimensionError, HOGTransformer, HogConfig, RawPixelTransformer, hog_extract, raw_channel
from mmvcf.features import featurizer_from_config, image_gradients, orientation_bins


def direct_histograms(img, cell, bins):
    """Cell histograms computed pixel by pixel from the definition."""
    hc, wc = img.shape[0] // cell, img.shape[1] // cell
    img = img[:hc * cell, :wc * cell]
    H, W = img.shape
    out = np.zeros((bins, hc, wc))
    for r in range(H):
        for c in range(W):
            gx = img[r, min(c + 1, W - 1)] - img[r, max(c - 1, 0)]
            gy = img[min(r + 1, H - 1), c] - img[max(r - 1, 0), c]
            ang = np.arctan2(gy, gx) % np.pi
            b = min(int(ang // (np.pi / bins)), bins - 1)
            out[b, r // cell, c // cell] += np.hypot(gx, gy)
    return out


class TestHog:
    def test_constant_image_is_zero(self):
        out = hog_extract(np.full((9, 9), 0.3))
        np.testing.assert_array_equal(out.data, 0.0)

    def test_output_dims(self):
        out = hog_extract(np.random.default_rng(0).random((36, 18)), HogConfig(3, 5))
        assert out.dims == (5, 12, 6)

    def test_vertical_edge_votes_bin_zero(self):
        img = np.zeros((9, 9))
        img[:, 5:] = 1.0
        out = hog_extract(img).data
        assert out[0].sum() > 0
        np.testing.assert_array_equal(out[1:], 0.0)

    def test_matches_pixel_loop(self, rng):
        img = rng.random((10, 13))
        cfg = HogConfig(cell_size=3, n_orientations=6, normalize_eps=1e-3)
        h = direct_histograms(img, 3, 6)
        want = h / np.sqrt(np.sum(h ** 2, axis=0) + 1e-6)
        np.testing.assert_allclose(hog_extract(img, cfg).data, want, atol=1e-12)

    def test_nonnegative_and_bounded(self, rng):
        out = hog_extract(rng.random((30, 30))).data
        assert np.all(out >= 0)
        assert np.all(np.sqrt(np.sum(out ** 2, axis=0)) <= 1 + 1e-9)

    def test_image_smaller_than_cell(self):
        with pytest.raises(DimensionError):
            hog_extract(np.zeros((2, 2)), HogConfig(cell_size=3))

    def test_signed_bins_cover_full_circle(self):
        gy = np.array([[0.0, 0.0]])
        gx = np.array([[1.0, -1.0]])
        assert orientation_bins(gy, gx, 4, signed=True).tolist() == [[0, 2]]
        assert orientation_bins(gy, gx, 4, signed=False).tolist() == [[0, 0]]

    def test_gradients_replicate_borders(self):
        img = np.array([[0.0, 1.0, 3.0]])
        gy, gx = image_gradients(img)
        np.testing.assert_array_equal(gx, [[1.0, 3.0, 2.0]])
        np.testing.assert_array_equal(gy, 0.0)

    @pytest.mark.parametrize("kw", [{"cell_size": 0}, {"n_orientations": 1}, {"normalize_eps": -1.0}])
    def test_config_ranges(self, kw):
        with pytest.raises(ValueError):
            HogConfig(**kw).validate()


class TestRaw:
    def test_constant_image(self):
        np.testing.assert_array_equal(raw_channel(np.full((3, 3), 7.0)).data, 0.0)

    def test_zero_mean_unchanged(self):
        img = np.array([[1.0, -1.0], [2.0, -2.0]])
        np.testing.assert_array_equal(raw_channel(img).data[0], img)

    def test_mean_removed(self):
        img = np.array([[0.0, 1.0], [1.0, 0.0]])
        np.testing.assert_array_equal(raw_channel(img).data[0], img - 0.5)


class TestTransformers:
    def test_batch_transform(self, rng):
        imgs = rng.random((4, 12, 12))
        out = HOGTransformer(cell_size=4, n_orientations=3).fit_transform(imgs)
        assert out.shape == (4, 3, 3, 3)
        np.testing.assert_array_equal(out[2], hog_extract(imgs[2], HogConfig(4, 3)).data)

    def test_clone_and_params(self):
        t = clone(HOGTransformer(cell_size=5))
        assert t.get_params()["cell_size"] == 5

    def test_pipeline(self, rng):
        pipe = make_pipeline(RawPixelTransformer())
        assert pipe.fit_transform(rng.random((2, 4, 4))).shape == (2, 1, 4, 4)

    def test_describe_round_trip(self):
        t = HOGTransformer(cell_size=4, n_orientations=7, signed_gradients=True)
        back = featurizer_from_config(t.describe())
        assert back.get_params() == t.get_params()
        assert featurizer_from_config({"kind": "none"}) is None
        assert isinstance(featurizer_from_config({"kind": "raw"}), RawPixelTransformer)
        with pytest.raises(ValueError):
            featurizer_from_config({"kind": "sift"})
