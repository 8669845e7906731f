import pytest
import os
import numpy as np
import pandas as pd
from ml_mri.cli import run, build_parser, COMMANDS, EXIT_OK, EXIT_USAGE, \
                       EXIT_VALIDATION
from ml_mri.ctensor import fft2
from ml_mri.data_loaders.tensor_file import load_tensor, save_tensor
from ml_mri.data_loaders.phantoms import gen_phantom
from ml_mri.metrics import EvalReport
from ml_mri.manifest import load_manifest
from ml_mri.network import load_checkpoint
from ml_mri.sampling import load_mask


SIZE = 32
TINY = ['--growth', '2', '--features', '2', '--batch_size', '2',
        '--center_lines', '4', '--lr', '1e-3']


@pytest.fixture(scope='module')
def phantoms(tmpdir_factory):
    out = str(tmpdir_factory.mktemp('phantoms'))
    assert run(['gen-phantoms', '--count', '3', '--size', str(SIZE),
                '--out', out]) == EXIT_OK
    return out


@pytest.fixture(scope='module')
def trained(tmpdir_factory, phantoms):
    out = str(tmpdir_factory.mktemp('train'))
    assert run(['train', '--data', phantoms, '--out', out,
                '--epochs', '1'] + TINY) == EXIT_OK
    return out



class TestParser:
    def test_commands(self):
        parser = build_parser()
        for name in list(COMMANDS) + ['replay']:
            assert name in parser.format_help()


    @pytest.mark.parametrize('argv', [[], ['bogus'], ['make-mask'],
                                      ['train', '--epochs', 'many']])
    def test_usage_errors(self, argv):
        assert run(argv) == EXIT_USAGE



class TestGenPhantoms:
    def test_outputs(self, phantoms):
        names = sorted(x for x in os.listdir(phantoms) if x.endswith('.ctns'))
        assert names == ['phantom_00000.ctns', 'phantom_00001.ctns',
                         'phantom_00002.ctns']
        x = load_tensor(os.path.join(phantoms, names[0]))
        assert x.shape == (SIZE, SIZE)
        manifest = load_manifest(phantoms)
        assert manifest['command'] == 'gen-phantoms'
        assert manifest['config']['count'] == 3
        assert len(manifest['outputs']) == 3


    def test_zero_count(self, tmpdir):
        out = str(tmpdir)
        assert run(['gen-phantoms', '--count', '0', '--out', out]) == EXIT_OK
        assert os.listdir(out) == ['manifest.json']


    def test_invalid(self, tmpdir):
        assert run(['gen-phantoms', '--count', '1', '--size', '24',
                    '--out', str(tmpdir)]) == EXIT_VALIDATION
        assert run(['gen-phantoms', '--count', '-1',
                    '--out', str(tmpdir)]) == EXIT_VALIDATION


    def test_replay(self, tmpdir):
        out = str(tmpdir.join('a'))
        assert run(['gen-phantoms', '--count', '1', '--size', '16',
                    '--seed', '4', '--out', out]) == EXIT_OK
        path = os.path.join(out, 'phantom_00000.ctns')
        with open(path, 'rb') as f:
            before = f.read()
        os.remove(path)
        assert run(['replay', out]) == EXIT_OK
        with open(path, 'rb') as f:
            assert f.read() == before



class TestMakeMask:
    def test_outputs(self, tmpdir):
        out = str(tmpdir)
        assert run(['make-mask', '--size', '64', '--accel', '4',
                    '--center_lines', '8', '--out', out]) == EXIT_OK
        mask = load_mask(os.path.join(out, 'mask.ctns'))
        assert len(mask.selected_rows()) == 16
        assert os.path.exists(os.path.join(out, 'mask.png'))
        assert load_manifest(out)['seeds'] == {'seed': 0}


    def test_no_acceleration(self, tmpdir):
        out = str(tmpdir)
        assert run(['make-mask', '--size', '16', '--accel', '1',
                    '--out', out]) == EXIT_OK
        assert (load_mask(os.path.join(out, 'mask.ctns')).mask == 1.).all()


    @pytest.mark.parametrize('format, files', [('ctns', ['mask.ctns']),
                                               ('png', ['mask.png'])])
    def test_format(self, tmpdir, format, files):
        out = str(tmpdir)
        assert run(['make-mask', '--size', '16', '--accel', '2',
                    '--center_lines', '4', '--format', format,
                    '--out', out]) == EXIT_OK
        assert sorted(os.listdir(out)) == sorted(files + ['manifest.json'])
        assert load_manifest(out)['config']['format'] == format
        assert run(['make-mask', '--size', '16', '--format', 'jpg',
                    '--out', out]) == EXIT_USAGE


    @pytest.mark.parametrize('accel', ['0.5', '64'])
    def test_invalid(self, tmpdir, accel):
        assert run(['make-mask', '--size', '32', '--accel', accel,
                    '--out', str(tmpdir)]) == EXIT_VALIDATION



class TestTrain:
    def test_outputs(self, trained):
        assert os.path.exists(os.path.join(trained, 'last.ckpt'))
        loss_log = pd.read_csv(os.path.join(trained, 'loss_log.csv'))
        assert list(loss_log['epoch']) == [0]
        manifest = load_manifest(trained)
        assert manifest['config']['growth'] == 2
        assert manifest['config']['epochs'] == 1
        assert set(manifest['seeds']) == {'seed', 'mask_seed',
                                          'augment_seed', 'init_seed'}


    def test_flags(self, tmpdir, phantoms):
        out = str(tmpdir)
        assert run(['train', '--data', phantoms, '--out', out,
                    '--epochs', '1', '--lambda', '0', '--no_dcl'] +
                   TINY) == EXIT_OK
        net, extra, _ = load_checkpoint(os.path.join(out, 'last.ckpt'))
        assert net.config.dcl is False
        assert extra['train_config']['lam'] == 0.


    def test_resume(self, tmpdir, phantoms, trained):
        out = str(tmpdir)
        assert run(['train', '--data', phantoms, '--out', out,
                    '--epochs', '2', '--resume',
                    os.path.join(trained, 'last.ckpt')] + TINY) == EXIT_OK
        loss_log = pd.read_csv(os.path.join(out, 'loss_log.csv'))
        assert list(loss_log['epoch']) == [0, 1]
        _, extra, _ = load_checkpoint(os.path.join(out, 'last.ckpt'))
        assert extra['epoch'] == 2


    def test_resume_settings(self, tmpdir, phantoms, trained):
        checkpoint = os.path.join(trained, 'last.ckpt')
        kept = str(tmpdir.join('kept'))
        assert run(['train', '--data', phantoms, '--out', kept,
                    '--epochs', '2', '--resume', checkpoint]) == EXIT_OK
        _, extra, _ = load_checkpoint(os.path.join(kept, 'last.ckpt'))
        assert extra['train_config']['lr'] == 1e-3
        assert extra['train_config']['batch_size'] == 2
        assert extra['optimizer']['lr'] == 1e-3

        changed = str(tmpdir.join('changed'))
        assert run(['train', '--data', phantoms, '--out', changed,
                    '--epochs', '2', '--resume', checkpoint] + TINY +
                   ['--lr', '5e-4']) == EXIT_OK
        _, extra, _ = load_checkpoint(os.path.join(changed, 'last.ckpt'))
        assert extra['train_config']['lr'] == 5e-4
        assert extra['optimizer']['lr'] == 5e-4


    def test_replay_without_config_file(self, tmpdir, phantoms):
        config = tmpdir.join('config.json')
        config.write('{"epochs": 1, "growth": 2, "features": 2, '
                     '"batch_size": 2, "num_center_lines": 4, "lr": 0.001}')
        out = str(tmpdir.join('out'))
        assert run(['train', '--data', phantoms, '--out', out,
                    '--config', str(config)]) == EXIT_OK
        path = os.path.join(out, 'last.ckpt')
        with open(path, 'rb') as f:
            before = f.read()
        os.remove(str(config))
        os.remove(path)

        assert run(['replay', out]) == EXIT_OK
        with open(path, 'rb') as f:
            assert f.read() == before
        assert load_manifest(out)['arguments']['config']['growth'] == 2


    def test_replay_errors(self, tmpdir):
        tmpdir.join('manifest.json').write('{"command": "train"}')
        assert run(['replay', str(tmpdir)]) == EXIT_VALIDATION
        assert run(['replay', str(tmpdir.join('missing'))]) == EXIT_VALIDATION


    def test_invalid_config(self, tmpdir, phantoms):
        config = tmpdir.join('config.json')
        config.write('{"growth": 0, "lam": -1, "colour": "red"}')
        assert run(['train', '--data', phantoms, '--out', str(tmpdir),
                    '--config', str(config)]) == EXIT_VALIDATION
        empty = str(tmpdir.mkdir('empty'))
        assert run(['train', '--data', empty, '--out', str(tmpdir)] +
                   TINY) == EXIT_VALIDATION



class TestReconstructEvaluate:
    def test_full_mask(self, tmpdir, trained):
        mask_dir = str(tmpdir.join('mask'))
        assert run(['make-mask', '--size', str(SIZE), '--accel', '1',
                    '--out', mask_dir]) == EXIT_OK
        x = gen_phantom(SIZE, SIZE, 11)
        image = str(tmpdir.join('images', 'img.ctns'))
        save_tensor(image, x)

        out = str(tmpdir.join('recon'))
        assert run(['reconstruct', '--checkpoint',
                    os.path.join(trained, 'last.ckpt'),
                    '--mask', os.path.join(mask_dir, 'mask.ctns'),
                    '--image', image, '--out', out]) == EXIT_OK
        for folder in ['zero_filled', 'intermediate', 'recon']:
            assert os.path.exists(os.path.join(out, folder, 'img.ctns'))
            assert os.path.exists(os.path.join(out, folder, 'img.png'))
        x_r = load_tensor(os.path.join(out, 'recon', 'img.ctns'))
        np.testing.assert_allclose(x_r.to_complex(), x.to_complex(),
                                   atol=1e-10)


    def test_kspace_input(self, tmpdir, trained):
        mask_dir = str(tmpdir.join('mask'))
        assert run(['make-mask', '--size', str(SIZE), '--accel', '4',
                    '--center_lines', '4', '--out', mask_dir]) == EXIT_OK
        kspace = str(tmpdir.join('kspace', 'k.ctns'))
        save_tensor(kspace, fft2(gen_phantom(SIZE, SIZE, 12)))
        out = str(tmpdir.join('recon'))
        assert run(['reconstruct', '--checkpoint',
                    os.path.join(trained, 'last.ckpt'),
                    '--mask', os.path.join(mask_dir, 'mask.png'),
                    '--kspace', kspace, '--out', out]) == EXIT_OK
        x_r = load_tensor(os.path.join(out, 'recon', 'k.ctns'))
        assert x_r.shape == (SIZE, SIZE)
        assert x_r.is_finite()


    def test_evaluate(self, tmpdir, phantoms):
        out = str(tmpdir)
        assert run(['evaluate', '--recon', phantoms, '--gt', phantoms,
                    '--out', out]) == EXIT_OK
        report = pd.read_csv(os.path.join(out, 'report.csv'))
        assert list(report['name']) == ['phantom_00000', 'phantom_00001',
                                        'phantom_00002']
        np.testing.assert_allclose(report['mse'], 0., atol=1e-15)
        np.testing.assert_allclose(report['ssim'], 1., atol=1e-12)
        np.testing.assert_allclose(report['pratts_fom'], 1.)
        for folder in ['error_maps', 'edge_maps']:
            assert os.path.exists(os.path.join(out, folder,
                                               'phantom_00000.png'))
        assert os.path.exists(os.path.join(out, 'report.json'))
        config = EvalReport.from_json(os.path.join(out, 'report.json')).config
        for key in ['mask_seed', 'acceleration', 'lam', 'sigma_frac']:
            assert key in config


    def test_missing_ground_truth(self, tmpdir, phantoms):
        gt = str(tmpdir.mkdir('gt'))
        save_tensor(os.path.join(gt, 'phantom_00000.ctns'),
                    gen_phantom(SIZE, SIZE, 0))
        assert run(['evaluate', '--recon', phantoms, '--gt', gt,
                    '--out', str(tmpdir.join('out'))]) == EXIT_VALIDATION


    def test_report_config(self, tmpdir, trained):
        mask_dir = str(tmpdir.join('mask'))
        assert run(['make-mask', '--size', str(SIZE), '--accel', '4',
                    '--center_lines', '4', '--sigma_frac', '0.2',
                    '--seed', '3', '--out', mask_dir]) == EXIT_OK
        images = str(tmpdir.join('images'))
        save_tensor(os.path.join(images, 'img.ctns'),
                    gen_phantom(SIZE, SIZE, 13))
        out = str(tmpdir.join('recon'))
        assert run(['reconstruct', '--checkpoint',
                    os.path.join(trained, 'last.ckpt'),
                    '--mask', os.path.join(mask_dir, 'mask.ctns'),
                    '--image', images, '--out', out]) == EXIT_OK
        _, extra, _ = load_checkpoint(os.path.join(trained, 'last.ckpt'))

        report_dir = str(tmpdir.join('eval'))
        assert run(['evaluate', '--recon', os.path.join(out, 'recon'),
                    '--gt', images, '--out', report_dir]) == EXIT_OK
        config = EvalReport.from_json(
                        os.path.join(report_dir, 'report.json')).config
        assert config['mask_seed'] == 3
        assert config['acceleration'] == 4.
        assert config['sigma_frac'] == 0.2
        assert config['lam'] == extra['train_config']['lam']

        assert run(['evaluate', '--recon', os.path.join(out, 'recon'),
                    '--gt', images, '--out', report_dir, '--lambda', '0',
                    '--mask_seed', '9']) == EXIT_OK
        config = EvalReport.from_json(
                        os.path.join(report_dir, 'report.json')).config
        assert config['mask_seed'] == 9
        assert config['lam'] == 0.
        assert config['sigma_frac'] == 0.2
