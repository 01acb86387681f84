"""PPM I/O and synthetic degradation generators."""

import numpy as np
import pytest

from mrdiff import data


class TestPpm:
    def test_save_load_roundtrip_bit_exact(self, rng, tmp_path):
        # values on the 8-bit grid survive the quantize/dequantize cycle
        img = np.round(rng.uniform(0, 1, (1, 3, 7, 9)) * 255.0) / 255.0
        path = tmp_path / "img.ppm"
        data.save_image(path, img)
        assert np.array_equal(data.load_image(path), img)

    def test_file_level_roundtrip(self, rng, tmp_path):
        img = data.synthetic_image(8, 8, 3)
        p1 = tmp_path / "a.ppm"
        p2 = tmp_path / "b.ppm"
        data.save_image(p1, img)
        data.save_image(p2, data.load_image(p1))
        assert p1.read_bytes() == p2.read_bytes()

    def test_minimal_header_parse(self, tmp_path):
        path = tmp_path / "tiny.ppm"
        path.write_bytes(b"P6\n2 2\n255\n" + bytes(range(12)))
        img = data.load_image(path)
        assert img.shape == (1, 3, 2, 2)
        assert np.isclose(img[0, 0, 0, 0], 0.0)
        assert np.isclose(img[0, 2, 1, 1], 11.0 / 255.0)

    def test_comments_and_whitespace(self, tmp_path):
        path = tmp_path / "c.ppm"
        path.write_bytes(b"P6\n# a comment\n 2\t2 # trailing\n255\n" + bytes(12))
        assert data.load_image(path).shape == (1, 3, 2, 2)

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "bad.ppm"
        path.write_bytes(b"P5\n2 2\n255\n" + bytes(12))
        with pytest.raises(ValueError):
            data.load_image(path)

    def test_unsupported_maxval(self, tmp_path):
        path = tmp_path / "bad.ppm"
        path.write_bytes(b"P6\n2 2\n65535\n" + bytes(24))
        with pytest.raises(ValueError):
            data.load_image(path)

    def test_truncated_pixels(self, tmp_path):
        path = tmp_path / "short.ppm"
        path.write_bytes(b"P6\n2 2\n255\n" + bytes(5))
        with pytest.raises(ValueError):
            data.load_image(path)

    def test_out_of_range_clamped(self, tmp_path):
        img = np.zeros((1, 3, 2, 2))
        img[0, 0] = 1.7
        img[0, 1] = -0.5
        path = tmp_path / "clip.ppm"
        data.save_image(path, img)
        loaded = data.load_image(path)
        assert np.allclose(loaded[0, 0], 1.0) and np.allclose(loaded[0, 1], 0.0)

    def test_naming_convention(self):
        assert data.pair_filenames("rain", 7) == ("rain_7_deg.ppm", "rain_7_ref.ppm")


class TestSynthetic:
    def test_deterministic_and_in_range(self):
        a = data.synthetic_image(16, 16, 5)
        b = data.synthetic_image(16, 16, 5)
        assert np.array_equal(a, b)
        assert a.min() >= 0.0 and a.max() <= 1.0
        assert not np.array_equal(a, data.synthetic_image(16, 16, 6))


class TestLowlight:
    def test_identity_parameters(self):
        img = data.synthetic_image(8, 8, 0)
        pair = data.degrade_lowlight(img, gain=1.0, gamma=1.0, noise_std=0.0)
        assert np.allclose(pair.degraded, img)

    def test_darkens_mean(self):
        img = data.synthetic_image(12, 12, 1)
        pair = data.degrade_lowlight(img, gain=0.5, gamma=2.0, noise_std=0.0)
        assert pair.degraded.mean() < img.mean()

    def test_seed_reproducibility(self):
        img = data.synthetic_image(8, 8, 2)
        a = data.degrade_lowlight(img, seed=9)
        b = data.degrade_lowlight(img, seed=9)
        assert np.array_equal(a.degraded, b.degraded)
        assert not np.array_equal(a.degraded, data.degrade_lowlight(img, seed=10).degraded)

    def test_reference_untouched(self):
        img = data.synthetic_image(8, 8, 3)
        pair = data.degrade_lowlight(img)
        assert np.array_equal(pair.reference, img)
        assert pair.tag == "lowlight"


class TestHaze:
    def test_full_transmission_identity(self):
        img = data.synthetic_image(8, 8, 4)
        assert np.allclose(data.degrade_haze(img, transmission=1.0).degraded, img)

    def test_zero_transmission_airlight(self):
        img = data.synthetic_image(8, 8, 5)
        pair = data.degrade_haze(img, transmission=0.0, airlight=0.8)
        assert np.allclose(pair.degraded, 0.8)

    def test_invertibility_pre_clamp(self):
        img = data.synthetic_image(8, 8, 6)
        t, a = 0.6, 0.7
        pair = data.degrade_haze(img, transmission=t, airlight=a)
        recovered = (pair.degraded - a * (1 - t)) / t
        assert np.abs(recovered - img).max() < 1e-12


class TestRain:
    def test_zero_streaks_identity(self):
        img = data.synthetic_image(12, 12, 7)
        assert np.array_equal(data.degrade_rain(img, streak_count=0).degraded, img)

    def test_additive_elementwise(self):
        img = data.synthetic_image(16, 16, 8)
        pair = data.degrade_rain(img, streak_count=10, intensity=0.4, seed=3)
        assert (pair.degraded >= pair.reference - 1e-15).all()
        assert (pair.degraded > pair.reference).any()

    def test_seed_reproducibility(self):
        img = data.synthetic_image(16, 16, 9)
        a = data.degrade_rain(img, seed=4).degraded
        assert np.array_equal(a, data.degrade_rain(img, seed=4).degraded)

    def test_outputs_clamped(self):
        img = data.synthetic_image(16, 16, 10)
        pair = data.degrade_rain(img, streak_count=40, intensity=2.0, seed=1)
        assert pair.degraded.max() <= 1.0


class TestGeneratorProperties:
    def test_all_generators_bounded_and_deterministic(self):
        """Property: every generator stays in [0,1], never mutates the
        reference, and reproduces per seed."""
        for trial in range(10):
            img = data.synthetic_image(12, 12, 40 + trial)
            snapshot = img.copy()
            for tag, make in data.DEGRADATIONS.items():
                p1 = make(img, seed=trial)
                p2 = make(img, seed=trial)
                assert np.array_equal(p1.degraded, p2.degraded), tag
                assert p1.degraded.min() >= 0.0 and p1.degraded.max() <= 1.0
                assert np.array_equal(img, snapshot)
