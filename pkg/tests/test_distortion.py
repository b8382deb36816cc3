import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from camadapt import distortion as dist


def gradient_image(size=32):
    row = np.linspace(0, 255, size).astype(np.uint8)
    return np.dstack([np.tile(row, (size, 1))] * 3)


class TestGaussianKernel:
    def test_normalized(self):
        k = dist.gaussian_kernel(1.0)
        assert abs(k.sum() - 1.0) < 1e-12

    def test_side_length(self):
        assert dist.gaussian_kernel(1.0).shape == (7, 7)
        assert dist.gaussian_kernel(3.0).shape == (19, 19)

    def test_requires_positive_sigma(self):
        with pytest.raises(dist.DistortionError):
            dist.gaussian_kernel(0.0)


class TestBlur:
    def test_zero_sigma_is_identity(self):
        img = gradient_image()
        assert np.array_equal(dist.blur(img, 0.0), img)

    def test_smooths_variance(self):
        rng = np.random.default_rng(0)
        img = rng.integers(0, 256, (32, 32, 3), dtype=np.uint8)
        out = dist.blur(img, 2.0)
        assert out.dtype == np.uint8
        assert np.var(out.astype(float)) < np.var(img.astype(float))

    def test_flat_image_unchanged(self):
        img = np.full((16, 16, 3), 77, dtype=np.uint8)
        assert np.array_equal(dist.blur(img, 1.5), img)


class TestAwgn:
    def test_std_close_to_sigma(self):
        img = np.full((128, 128, 3), 128, dtype=np.uint8)
        out = dist.awgn(img, 10.0, seed=0)
        resid = out.astype(float) - img.astype(float)
        assert abs(resid.std() - 10.0) < 0.5
        assert abs(resid.mean()) < 0.5

    def test_deterministic_per_seed(self):
        img = gradient_image()
        a = dist.awgn(img, 5.0, seed=3)
        b = dist.awgn(img, 5.0, seed=3)
        c = dist.awgn(img, 5.0, seed=4)
        assert np.array_equal(a, b)
        assert not np.array_equal(a, c)


class TestCameraModels:
    def test_table_values(self):
        expect = {"A": (1, 5, 34), "B": (1, 5, 26), "C": (1, 10, 34),
                  "D": (3, 5, 34), "E": (3, 10, 34), "F": (3, 10, 18)}
        for letter, (sb, sn, cl) in expect.items():
            p = dist.CAMERA_MODELS[letter]
            assert (p.sigma_blur, p.sigma_noise, p.compression_level) == (sb, sn, cl)

    def test_param_validation(self):
        with pytest.raises(dist.DistortionError):
            dist.CameraModelParams(-1, 5, 34)
        with pytest.raises(dist.DistortionError):
            dist.CameraModelParams(1, 5, 0)
        with pytest.raises(dist.DistortionError):
            dist.CameraModelParams(1, 5, 101)

    def test_apply_order_is_blur_noise_jpeg(self):
        # blur-then-noise keeps noise unsmoothed: the residual spectrum stays
        # white, unlike noise-then-blur
        img = np.full((64, 64, 3), 128, dtype=np.uint8)
        p = dist.CameraModelParams(3, 10, 100)
        out = dist.apply_camera_model(img, p, seed=0)
        resid = out.astype(float) - 128.0
        assert resid.std() > 7.0  # blurring after noise would shrink this


class TestPsnr:
    def test_identical_is_inf(self):
        img = gradient_image()
        assert dist.psnr(img, img) == np.inf

    def test_known_value(self):
        a = np.zeros((4, 4, 3), dtype=np.uint8)
        b = np.full((4, 4, 3), 5, dtype=np.uint8)
        expect = 10 * np.log10(255.0 ** 2 / 25.0)
        assert abs(dist.psnr(a, b) - expect) < 1e-9

    @given(st.integers(0, 2 ** 32 - 1))
    @settings(max_examples=10, deadline=None)
    def test_symmetric(self, seed):
        rng = np.random.default_rng(seed)
        a = rng.integers(0, 256, (8, 8, 3), dtype=np.uint8)
        b = rng.integers(0, 256, (8, 8, 3), dtype=np.uint8)
        assert dist.psnr(a, b) == dist.psnr(b, a)

    def test_shape_mismatch(self):
        with pytest.raises(dist.DistortionError):
            dist.psnr(np.zeros((4, 4, 3), np.uint8), np.zeros((5, 5, 3), np.uint8))


class TestSyntheticCorpus:
    def test_deterministic(self):
        a = dist.synthetic_corpus(3, size=32, seed=7)
        b = dist.synthetic_corpus(3, size=32, seed=7)
        for x, y in zip(a, b):
            assert np.array_equal(x, y)

    def test_shapes_and_dtype(self):
        for img in dist.synthetic_corpus(2, size=48, seed=0):
            assert img.shape == (48, 48, 3)
            assert img.dtype == np.uint8

    def test_constant_chroma_kind(self):
        # equal luma offsets in all channels leave Cb/Cr constant per image
        for img in dist.synthetic_corpus(3, size=32, seed=1, kind="constant_chroma"):
            f = img.astype(np.float64)
            cb = -0.168735892 * f[..., 0] - 0.331264108 * f[..., 1] + 0.5 * f[..., 2]
            assert cb.max() - cb.min() < 1e-9
