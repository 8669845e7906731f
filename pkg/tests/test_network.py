import pytest
import json
import struct
import numpy as np
from ml_mri.ctensor import ComplexTensor, fft2, ifft2
from ml_mri.losses import LossConfig, composite_loss
from ml_mri.network import NetworkConfig, CdfNet, CheckpointError, dcl, \
                           dcl_backward, consistency_error, forward, \
                           save_checkpoint, load_checkpoint, \
                           CHECKPOINT_MAGIC, CHECKPOINT_VERSION
from ml_mri.sampling import make_mask, simulate_acquisition
from ml_mri.data_loaders.phantoms import gen_phantom
from ml_mri.utils import ConfigError
from synthetic_data import random_tensor, inner, param_fd, input_fd, \
                           random_indices


def tiny_config(**kwargs):
    params = {'growth': 2, 'features': 2}
    params.update(kwargs)
    return NetworkConfig(**params)


def acquisition(size=16, batch=2, acceleration=4., num_center=2, seed=0):
    x_f = ComplexTensor.concat([gen_phantom(size, size, seed + k).reshape(
                                    1, 1, size, size) for k in range(batch)],
                               axis=0)
    masks = [make_mask(size, size, acceleration, num_center, seed=seed + k)
             for k in range(batch)]
    x_u, y_u = simulate_acquisition(x_f, masks)
    return x_f, x_u, y_u, masks



class TestNetworkConfig:
    def test_parameter_count(self):
        net = CdfNet(NetworkConfig())
        assert net.num_parameters() == 129618


    def test_full_scale(self):
        config = NetworkConfig.full_scale()
        assert config.growth == 32
        assert config.stage_features() == [32] * 4
        assert NetworkConfig.full_scale(dcl=False).dcl is False


    def test_validation(self):
        config = NetworkConfig(growth=0, kernel_size=4, features=[8, 8],
                               init='lecun')
        problems = config.validate()
        assert len(problems) == 4
        with pytest.raises(ConfigError) as e:
            CdfNet(config)
        assert len(e.value.problems) == 4


    def test_dict(self):
        config = NetworkConfig(growth=4, features=[2, 4, 6, 8], dcl=False)
        restored = NetworkConfig.from_dict(config.to_dict())
        assert restored.to_dict() == config.to_dict()
        assert restored.stage_features() == [2, 4, 6, 8]



class TestDataConsistency:
    def test_full_mask(self):
        x_tilde = random_tensor((1, 1, 16, 16), seed=1)
        y_u = fft2(random_tensor((1, 1, 16, 16), seed=2))
        x_r = dcl(x_tilde, y_u, np.ones((16, 16)))
        assert np.abs(fft2(x_r).to_complex() - y_u.to_complex()).max() <= 1e-10
        np.testing.assert_allclose(x_r.to_complex(), ifft2(y_u).to_complex(),
                                   atol=1e-10)


    def test_empty_mask(self):
        x_tilde = random_tensor((1, 1, 16, 16), seed=1)
        y_u = ComplexTensor.zeros((1, 1, 16, 16))
        x_r = dcl(x_tilde, y_u, np.zeros((16, 16)))
        np.testing.assert_allclose(x_r.to_complex(), x_tilde.to_complex(),
                                   atol=1e-10)


    def test_random_mask(self):
        mask = make_mask(32, 16, 3., 4, seed=3)
        x_tilde = random_tensor((2, 1, 32, 16), seed=4)
        y_u = fft2(random_tensor((2, 1, 32, 16), seed=5))
        x_r = dcl(x_tilde, y_u, mask)
        k_r = fft2(x_r).to_complex()
        k_tilde = fft2(x_tilde).to_complex()
        omega = np.broadcast_to(mask.mask.astype(bool), k_r.shape)
        assert np.abs(k_r[omega] - y_u.to_complex()[omega]).max() <= 1e-10
        assert np.abs(k_r[~omega] - k_tilde[~omega]).max() <= 1e-10
        assert consistency_error(x_r, y_u, mask) <= 1e-10


    def test_zero_filled_fixed_point(self):
        _, x_u, y_u, masks = acquisition(size=32)
        np.testing.assert_allclose(dcl(x_u, y_u, masks).to_complex(),
                                   x_u.to_complex(), atol=1e-10)


    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            dcl(random_tensor((1, 1, 16, 16)), random_tensor((1, 1, 16, 8)),
                np.ones((16, 16)))
        with pytest.raises(ValueError):
            dcl(random_tensor((1, 1, 16, 16)), random_tensor((1, 1, 16, 16)),
                np.ones((8, 16)))


    def test_backward(self):
        g = random_tensor((1, 1, 16, 16), seed=6)
        np.testing.assert_allclose(dcl_backward(g, np.zeros((16, 16))).re,
                                   g.re, atol=1e-10)

        mask = make_mask(16, 16, 2., 2, seed=7)
        y_u = fft2(random_tensor((1, 1, 16, 16), seed=8))
        x_tilde = random_tensor((1, 1, 16, 16), seed=9)
        grad = dcl_backward(g, mask)
        for part in ['re', 'im']:
            analytic = grad.re if part == 're' else grad.im
            for idx in random_indices(x_tilde.shape, 10, seed=10):
                num = input_fd(lambda z: inner(g, dcl(z, y_u, mask)),
                               x_tilde, part, idx)
                assert abs(analytic[idx] - num) <= 1e-6


    @pytest.mark.parametrize('trial', range(20))
    def test_network_output_consistency(self, trial):
        rng = np.random.default_rng(trial)
        net = CdfNet(tiny_config(seed=trial))
        acceleration = float(rng.uniform(1.5, 4.))
        _, x_u, y_u, masks = acquisition(size=16, acceleration=acceleration,
                                         seed=100 * trial)
        x_u = x_u + random_tensor(x_u.shape, seed=trial, scale=0.1)
        x_r, x_tilde = net.forward(x_u, masks, y_u,
                                   training=bool(trial % 2))
        k_r = fft2(x_r).to_complex()
        k_tilde = fft2(x_tilde).to_complex()
        omega = np.stack([m.mask for m in masks])[:, None].astype(bool)
        omega = np.broadcast_to(omega, k_r.shape)
        assert np.abs(k_r[omega] - y_u.to_complex()[omega]).max() <= 1e-10
        assert np.abs(k_r[~omega] - k_tilde[~omega]).max() <= 1e-10



class TestCdfNet:
    def test_shapes(self):
        net = CdfNet(tiny_config())
        _, x_u, y_u, masks = acquisition(size=32)
        x_r, x_tilde = forward(x_u, net, masks, y_u)
        assert x_r.shape == x_u.shape
        assert x_tilde.shape == x_u.shape

        net = CdfNet(tiny_config(dcl=False))
        x_r, x_tilde = net.forward(x_u)
        assert x_r is x_tilde


    def test_input_errors(self):
        net = CdfNet(tiny_config())
        with pytest.raises(ValueError):
            net.forward(random_tensor((1, 1, 24, 32)))
        with pytest.raises(ValueError):
            net.forward(random_tensor((1, 2, 32, 32)))
        with pytest.raises(ValueError):
            net.forward(random_tensor((1, 1, 32, 32)))


    def test_deterministic_init(self):
        first = CdfNet(tiny_config(seed=3)).parameters()
        second = CdfNet(tiny_config(seed=3)).parameters()
        other = CdfNet(tiny_config(seed=4)).parameters()
        name = 'enc1.block.unit0.conv.weight_re'
        assert list(first) == list(second)
        for key in first:
            np.testing.assert_array_equal(first[key], second[key])
        assert not np.array_equal(first[name], other[name])


    def test_set_parameters(self):
        net = CdfNet(tiny_config())
        name = 'recon.bias_re'
        net.set_parameters({name: np.array([0.5])})
        assert net.parameters()[name][0] == 0.5
        with pytest.raises(KeyError):
            net.set_parameters({'recon.gain': np.zeros(1)})
        with pytest.raises(ValueError):
            net.set_parameters({name: np.zeros(2)})


    @pytest.mark.parametrize('dcl_enabled', [True, False])
    def test_gradients(self, dcl_enabled):
        net = CdfNet(tiny_config(dcl=dcl_enabled, seed=5))
        x_f, x_u, y_u, masks = acquisition(size=32, seed=5)
        loss_config = LossConfig(lam=2.)

        def loss():
            x_r, _ = net.forward(x_u, masks, y_u, training=True)
            return composite_loss(x_r, x_f, loss_config)[0]

        x_r, _ = net.forward(x_u, masks, y_u, training=True)
        _, grad, _ = composite_loss(x_r, x_f, loss_config)
        net.backward(grad)
        grads = {k: v.copy() for k, v in net.gradients().items()}
        params = net.parameters()

        rng = np.random.default_rng(5)
        names = list(params)
        for name in rng.choice(names, size=12, replace=False):
            for idx in random_indices(params[name].shape, 2, seed=6):
                num = param_fd(loss, params[name], idx)
                np.testing.assert_allclose(grads[name][idx], num,
                                           rtol=1e-4, atol=1e-7)


    def test_input_gradient(self):
        net = CdfNet(tiny_config(dcl=False, seed=7))
        x_u = random_tensor((2, 1, 16, 16), seed=7)
        out, _ = net.forward(x_u, training=True)
        g = random_tensor(out.shape, seed=8)
        grad_in = net.backward(g)
        for idx in random_indices(x_u.shape, 6, seed=9):
            num = input_fd(lambda z: inner(g, net.forward(z, training=True)[0]),
                           x_u, 're', idx)
            np.testing.assert_allclose(grad_in.re[idx], num, rtol=1e-4,
                                       atol=1e-7)



class TestCheckpoint:
    def test_roundtrip(self, tmpdir):
        net = CdfNet(tiny_config(seed=2))
        _, x_u, y_u, masks = acquisition(size=16)
        net.forward(x_u, masks, y_u, training=True)
        optimizer = {k: np.full(v.shape, 0.25)
                     for k, v in net.parameters().items()}
        path = str(tmpdir.join('net.ckpt'))
        save_checkpoint(path, net, {'epoch': 3}, optimizer)

        loaded, extra, loaded_optimizer = load_checkpoint(path)
        assert extra == {'epoch': 3}
        assert loaded.config.to_dict() == net.config.to_dict()
        for group in ['parameters', 'buffers']:
            before = getattr(net, group)()
            after = getattr(loaded, group)()
            assert list(before) == list(after)
            for key in before:
                np.testing.assert_array_equal(before[key], after[key])
        assert set(loaded_optimizer) == set(optimizer)

        out, _ = net.forward(x_u, masks, y_u, training=False)
        loaded_out, _ = loaded.forward(x_u, masks, y_u, training=False)
        np.testing.assert_array_equal(out.re, loaded_out.re)


    def test_bitwise_determinism(self, tmpdir):
        paths = [str(tmpdir.join('a.ckpt')), str(tmpdir.join('b.ckpt'))]
        for path in paths:
            save_checkpoint(path, CdfNet(tiny_config(seed=1)), {'epoch': 0})
        with open(paths[0], 'rb') as a, open(paths[1], 'rb') as b:
            assert a.read() == b.read()


    def test_errors(self, tmpdir):
        path = str(tmpdir.join('net.ckpt'))
        save_checkpoint(path, CdfNet(tiny_config()))
        with open(path, 'rb') as f:
            data = f.read()

        cases = {'magic': b'NOTACKPT' + data[8:],
                 'truncated': data[:12],
                 'payload': data[:-8],
                 'version': data[:8] + b'\x07\x00\x00\x00' + data[12:]}
        for name, content in cases.items():
            bad = str(tmpdir.join('{}.ckpt'.format(name)))
            with open(bad, 'wb') as f:
                f.write(content)
            with pytest.raises(CheckpointError):
                load_checkpoint(bad)


    @pytest.mark.parametrize('header', [{'tensors': []}, {'config': {}}, [],
                                        {'config': {},
                                         'tensors': [{'name': 'param/w'}]}])
    def test_incomplete_header(self, tmpdir, header):
        content = json.dumps(header).encode('utf-8')
        path = str(tmpdir.join('net.ckpt'))
        with open(path, 'wb') as f:
            f.write(CHECKPOINT_MAGIC +
                    struct.pack('<IQ', CHECKPOINT_VERSION, len(content)) +
                    content)
        with pytest.raises(CheckpointError):
            load_checkpoint(path)
