import pytest
import numpy as np
from ml_mri.ctensor import ComplexTensor, fft2
from ml_mri.metrics import mse
from ml_mri.network import dcl
from ml_mri.sampling import SamplingConfig, SamplingMask, make_mask, \
                            line_budget, center_rows, mask_array, \
                            undersample, zero_fill_recon, \
                            simulate_acquisition, save_mask, load_mask
from ml_mri.data_loaders.phantoms import gen_phantom
from ml_mri.utils import ConfigError
from synthetic_data import random_tensor



class TestMakeMask:
    def test_line_count(self):
        mask = make_mask(256, 256, 4, 8, seed=0)
        rows = mask.selected_rows()
        assert len(rows) == 64
        assert mask.sampled_fraction() == 0.25
        assert set(range(124, 132)).issubset(set(rows))
        assert mask.mask.shape == (256, 256)
        # rows are fully sampled along the frequency-encoding axis
        assert set(np.unique(mask.mask.sum(axis=1))) == {0., 256.}


    @pytest.mark.parametrize('height', [16, 32, 64, 128, 256])
    @pytest.mark.parametrize('acceleration', [1.5, 2, 3, 4, 6, 8])
    def test_budget_invariant(self, height, acceleration):
        num_center = min(4, line_budget(height, acceleration))
        mask = make_mask(height, 8, acceleration, num_center, seed=1)
        assert len(mask.selected_rows()) == int(round(height / acceleration))


    def test_no_acceleration(self):
        mask = make_mask(32, 16, 1, 8, seed=0)
        assert (mask.mask == 1.).all()


    @pytest.mark.parametrize('height, acceleration, sigma_frac',
                             [(64, 1, 0.01), (256, 2, 0.005), (128, 1.5, 1e-4)])
    def test_narrow_density(self, height, acceleration, sigma_frac):
        mask = make_mask(height, height, acceleration, 8, sigma_frac, seed=2)
        assert len(mask.selected_rows()) == line_budget(height, acceleration)
        if acceleration == 1:
            assert (mask.mask == 1.).all()


    def test_determinism(self):
        first = make_mask(64, 64, 4, 8, seed=3)
        second = make_mask(64, 64, 4, 8, seed=3)
        other = make_mask(64, 64, 4, 8, seed=4)
        np.testing.assert_array_equal(first.mask, second.mask)
        assert not np.array_equal(first.mask, other.mask)


    def test_center_heavy(self):
        height = 128
        uniform = np.abs(np.arange(height) - height // 2).mean()
        distances = []
        for seed in range(20):
            rows = make_mask(height, 8, 4, 8, seed=seed).selected_rows()
            distances.append(np.abs(rows - height // 2).mean())
        assert np.mean(distances) < uniform


    def test_center_rows(self):
        np.testing.assert_array_equal(center_rows(256, 8), np.arange(124, 132))
        assert line_budget(36, 6) == 6
        # half to even
        assert line_budget(10, 4) == 2


    def test_errors(self):
        with pytest.raises(ValueError):
            make_mask(64, 64, 16, 8)
        with pytest.raises(ConfigError):
            make_mask(64, 64, 0.5, 8)
        with pytest.raises(ConfigError):
            make_mask(64, 64, 4, 8, sigma_frac=0.)


    def test_config(self):
        problems = SamplingConfig(acceleration=0, num_center_lines=-1,
                                  sigma_frac=-1).validate()
        assert len(problems) == 3
        config = SamplingConfig.from_dict({'acceleration': 6})
        assert config.acceleration == 6
        assert config.num_center_lines == 8



class TestUndersample:
    def test_full_and_empty(self):
        y = random_tensor((2, 1, 16, 16), seed=0)
        full = undersample(y, np.ones((16, 16)))
        np.testing.assert_array_equal(full.re, y.re)
        empty = undersample(y, np.zeros((16, 16)))
        assert (empty.re == 0).all() and (empty.im == 0).all()


    def test_entrywise(self):
        y = random_tensor((16, 16), seed=1)
        mask = make_mask(16, 16, 4, 2, seed=1)
        y_u = undersample(y, mask)
        omega = mask.mask.astype(bool)
        np.testing.assert_array_equal(y_u.re[omega], y.re[omega])
        np.testing.assert_array_equal(y_u.im[omega], y.im[omega])
        assert (y_u.re[~omega] == 0).all()


    def test_mask_list(self):
        masks = [make_mask(16, 16, 4, 2, seed=k) for k in range(3)]
        y = random_tensor((3, 1, 16, 16), seed=2)
        y_u = undersample(y, masks)
        for k in range(3):
            expected = undersample(y[k, 0], masks[k])
            np.testing.assert_array_equal(y_u.re[k, 0], expected.re)


    def test_errors(self):
        with pytest.raises(ValueError):
            undersample(random_tensor((16, 16)), np.ones((8, 16)))
        with pytest.raises(ValueError):
            mask_array(np.full((16, 16), 0.5), (16, 16))
        with pytest.raises(ValueError):
            SamplingMask(np.ones((2, 2, 2)))



class TestZeroFill:
    def test_full_mask(self):
        x_f = gen_phantom(32, 32, 0)
        x_u, _ = simulate_acquisition(x_f, np.ones((32, 32)))
        np.testing.assert_allclose(x_u.to_complex(), x_f.to_complex(),
                                   atol=1e-10)


    def test_information_loss(self):
        x_f = gen_phantom(32, 32, 1)
        x_u, _ = simulate_acquisition(x_f, make_mask(32, 32, 4, 4, seed=1))
        assert mse(np.abs(x_u.to_complex()), np.abs(x_f.to_complex())) > 0


    def test_aliasing(self):
        # every second phase-encoding row sampled
        height, width = 16, 8
        x = random_tensor((height, width), seed=3)
        mask = np.zeros((height, width))
        mask[::2] = 1.
        x_u = zero_fill_recon(fft2(x), mask)
        # replica shifted by half the field of view
        expected = 0.5 * (x.to_complex() + np.roll(x.to_complex(), height // 2,
                                                   axis=0))
        np.testing.assert_allclose(x_u.to_complex(), expected, atol=1e-12)


    def test_consistency_fixed_point(self):
        x_f = ComplexTensor.concat([gen_phantom(32, 32, k).reshape(1, 1, 32, 32)
                                    for k in range(2)],
                                   axis=0)
        masks = [make_mask(32, 32, 4, 4, seed=k) for k in range(2)]
        x_u, y_u = simulate_acquisition(x_f, masks)
        np.testing.assert_allclose(dcl(x_u, y_u, masks).to_complex(),
                                   x_u.to_complex(), atol=1e-10)
        np.testing.assert_allclose(undersample(fft2(x_f), masks).to_complex(),
                                   undersample(fft2(x_u), masks).to_complex(),
                                   atol=1e-10)



class TestMaskFiles:
    @pytest.mark.parametrize('suffix', ['.ctns', '.png'])
    def test_roundtrip(self, tmpdir, suffix):
        mask = make_mask(32, 16, 4, 4, seed=2)
        path = str(tmpdir.join('mask' + suffix))
        save_mask(path, mask)
        loaded = load_mask(path)
        np.testing.assert_array_equal(loaded.mask, mask.mask)
        assert loaded.acceleration == pytest.approx(32 / 8)
