import pytest
import os
import numpy as np
import pandas as pd
from ml_mri.ctensor import ComplexTensor
from ml_mri.metrics import EdgeMap, EvalReport, mse, edge_map, pratts_fom, \
                           edge_difference_map, save_edge_difference_map, \
                           error_map, save_error_map, normalized_magnitudes, \
                           evaluate_pair, evaluate, GREEN, RED, BLUE, \
                           METRIC_COLUMNS
from ml_mri.data_loaders.phantoms import gen_phantom
from synthetic_data import random_tensor


def step_image(size=16, column=8):
    p = np.zeros((size, size))
    p[:, column:] = 1.
    return p


def phantom(seed, size=32):
    return gen_phantom(size, size, seed).reshape(1, 1, size, size)



class TestMse:
    def test_values(self):
        p = np.random.default_rng(0).normal(size=(8, 8))
        assert mse(p, p) == 0.
        assert mse(np.zeros((4, 4)), np.full((4, 4), 0.3)) == \
               pytest.approx(0.09, abs=1e-15)


    def test_loop_oracle(self):
        rng = np.random.default_rng(1)
        p, q = rng.normal(size=(5, 7)), rng.normal(size=(5, 7))
        total = 0.
        for i in range(5):
            for j in range(7):
                total += (p[i, j] - q[i, j]) ** 2
        assert mse(p, q) == pytest.approx(total / 35, rel=1e-14)

        with pytest.raises(ValueError):
            mse(p, q[:, :6])



class TestEdgeMap:
    def test_constant(self):
        edges = edge_map(np.full((16, 16), 0.7))
        assert isinstance(edges, EdgeMap)
        assert edges.is_empty()
        assert edges.shape == (16, 16)


    def test_step(self):
        edges = edge_map(step_image())
        columns = np.where(edges.edges.any(axis=0))[0]
        assert len(columns) <= 2
        assert set(columns).issubset({7, 8})
        assert edges.edges[:, 8].all()
        assert edges.operator == 'sobel'
        assert edges.threshold == 0.25


    def test_affine_invariance(self):
        rng = np.random.default_rng(2)
        p = rng.integers(0, 16, size=(24, 24)) / 16.
        base = edge_map(p).edges
        np.testing.assert_array_equal(edge_map(2. * p + 0.25).edges, base)
        np.testing.assert_array_equal(edge_map(0.5 * p).edges, base)


    def test_non_finite(self):
        p = np.ones((8, 8))
        p[2, 3] = np.nan
        with pytest.raises(ValueError):
            edge_map(p)



class TestPrattsFom:
    def test_identical(self):
        edges = edge_map(np.abs(gen_phantom(32, 32, 0).to_complex()))
        assert pratts_fom(edges, edges) == 1.


    def test_single_pixel(self):
        ref = np.zeros((9, 9), dtype=bool)
        det = np.zeros((9, 9), dtype=bool)
        ref[4, 1] = True
        det[4, 4] = True
        assert pratts_fom(det, ref) == pytest.approx(0.5, abs=1e-15)


    def test_displaced_pixel(self):
        ref = step_image(32, 8).astype(bool) & ~step_image(32, 9).astype(bool)
        scores = []
        for column in range(8, 32):
            det = ref.copy()
            det[16, 8] = False
            det[16, column] = True
            scores.append(pratts_fom(det, ref))
        assert scores[0] == 1.
        assert all(np.diff(scores) <= 0)
        assert scores[-1] < scores[1]


    def test_spurious_pixels(self):
        ref = step_image(32, 8).astype(bool) & ~step_image(32, 9).astype(bool)
        det = ref.copy()
        scores = [pratts_fom(det, ref)]
        for k in range(1, 6):
            det[2 * k, 28] = True
            scores.append(pratts_fom(det, ref))
        assert scores[0] == 1.
        assert all(np.diff(scores) < 0)


    def test_edge_cases(self):
        ref = np.zeros((8, 8), dtype=bool)
        ref[3, 3] = True
        assert pratts_fom(np.zeros((8, 8), dtype=bool), ref) == 0.
        with pytest.raises(ValueError):
            pratts_fom(ref, np.zeros((8, 8), dtype=bool))
        with pytest.raises(ValueError):
            pratts_fom(ref, np.ones((8, 9), dtype=bool))



class TestEdgeDifferenceMap:
    def test_colours(self):
        gt = np.zeros((4, 4), dtype=bool)
        recon = np.zeros((4, 4), dtype=bool)
        gt[0, :2] = True
        recon[0, 0] = True
        recon[3, 3] = True
        rgb = edge_difference_map(recon, gt)
        assert rgb.dtype == np.uint8
        assert tuple(rgb[0, 0]) == GREEN
        assert tuple(rgb[0, 1]) == RED
        assert tuple(rgb[3, 3]) == BLUE
        assert tuple(rgb[2, 2]) == (0, 0, 0)


    def test_identical_and_empty(self):
        gt = edge_map(step_image())
        rgb = edge_difference_map(gt, gt)
        assert not (rgb == RED).all(axis=-1).any()
        assert not (rgb == BLUE).all(axis=-1).any()

        rgb = edge_difference_map(np.zeros(gt.shape, dtype=bool), gt)
        assert (rgb == RED).all(axis=-1).sum() == gt.count()


    def test_files(self, tmpdir):
        gt = edge_map(step_image())
        path = str(tmpdir.join('edges', 'a.png'))
        save_edge_difference_map(path, gt, gt)
        assert os.path.exists(path)

        error = error_map(phantom(1), phantom(2))
        assert error.shape == (32, 32)
        path = str(tmpdir.join('errors', 'a.png'))
        save_error_map(path, error)
        assert os.path.exists(path)



class TestEvaluation:
    def test_perfect_reconstruction(self):
        x = phantom(3)
        result = evaluate_pair(x, x)
        assert result['mse'] == 0.
        assert result['ssim'] == pytest.approx(1., abs=1e-12)
        assert result['pratts_fom'] == 1.


    def test_normalization(self):
        x_f = phantom(4)
        x_r = ComplexTensor(x_f.re * 3., x_f.im * 3.)
        p, q = normalized_magnitudes(x_r, x_f)
        assert q.max() == pytest.approx(1.)
        assert p.max() == pytest.approx(3.)
        with pytest.raises(ValueError):
            normalized_magnitudes(x_r, ComplexTensor.zeros(x_f.shape))


    def test_degraded_reconstruction(self):
        x_f = phantom(5)
        noise = random_tensor(x_f.shape, seed=5, scale=0.05)
        result = evaluate_pair(x_f + noise, x_f)
        assert result['mse'] > 0.
        assert result['ssim'] < 1.
        assert 0. <= result['pratts_fom'] <= 1.


    @pytest.mark.parametrize('n_jobs', [1, 2])
    def test_report(self, tmpdir, n_jobs):
        gts = [phantom(k) for k in range(3)]
        recons = [x + random_tensor(x.shape, seed=k, scale=0.02)
                  for k, x in enumerate(gts)]
        report = evaluate(recons, gts, ['a', 'b', 'c'], {'acceleration': 4},
                          n_jobs=n_jobs)
        assert list(report.images['name']) == ['a', 'b', 'c']
        aggregate = report.aggregate()
        for col in METRIC_COLUMNS:
            assert aggregate[col] == pytest.approx(report.images[col].mean())

        json_path = str(tmpdir.join('report.json'))
        csv_path = str(tmpdir.join('report.csv'))
        report.to_json(json_path)
        report.to_csv(csv_path)
        loaded = EvalReport.from_json(json_path)
        assert loaded.config == {'acceleration': 4}
        pd.testing.assert_frame_equal(loaded.images, report.images)
        df = pd.read_csv(csv_path)
        for col in METRIC_COLUMNS:
            assert df[col].mean() == pytest.approx(aggregate[col])


    def test_batch_input(self):
        gts = ComplexTensor.concat([phantom(k) for k in range(2)], axis=0)
        report = evaluate(gts, gts)
        assert list(report.images['name']) == ['0', '1']
        assert report.aggregate()['ssim'] == pytest.approx(1.)

        with pytest.raises(ValueError):
            evaluate(gts, gts[:1])
