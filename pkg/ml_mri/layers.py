'''
Differentiable complex-valued layers.

Every layer keeps learnable arrays in ``params``, the matching
gradients in ``grads`` (filled by ``backward``) and non-learnable
state in ``buffers``. Gradients are taken with respect to the real
parametrization: the real and imaginary planes of a
:class:`~ml_mri.ctensor.ComplexTensor` gradient hold ``dL/d re`` and
``dL/d im``.
'''

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from typing import Dict, List, Tuple
from .ctensor import ComplexTensor
from .utils import int_hash_of_str


class Layer:
    '''
    Base class for layers with ``forward(x, training)`` and
    ``backward(grad)`` interfaces.
    '''
    def __init__(self):
        self.params: Dict[str, np.ndarray] = {}
        self.grads: Dict[str, np.ndarray] = {}
        self.buffers: Dict[str, np.ndarray] = {}

    def named_leaves(self, prefix: str=''):
        yield prefix, self

    def forward(self, x: ComplexTensor, training: bool=True) -> ComplexTensor:
        raise NotImplementedError

    def backward(self, grad: ComplexTensor) -> ComplexTensor:
        raise NotImplementedError


def _pad(x: np.ndarray, padding: int) -> np.ndarray:
    if padding == 0:
        return x
    return np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))


def _windows(x: np.ndarray, k: int, stride: int, padding: int) -> np.ndarray:
    # [B, C, Ho, Wo, k, k]
    win = sliding_window_view(_pad(x, padding), (k, k), axis=(2, 3))
    return win[:, :, ::stride, ::stride]


def correlate(x: np.ndarray, w: np.ndarray,
              stride: int=1, padding: int=0) -> np.ndarray:
    '''
    Real multi-channel cross-correlation

    Parameters
    ----------
    x:
        input of shape ``[B, C, H, W]``
    w:
        kernel of shape ``[O, C, k, k]``
    '''
    win = _windows(x, w.shape[-1], stride, padding)
    out = np.tensordot(win, w, axes=([1, 4, 5], [1, 2, 3]))
    return out.transpose(0, 3, 1, 2)


def correlate_weight_grad(x: np.ndarray, grad: np.ndarray, k: int,
                          stride: int=1, padding: int=0) -> np.ndarray:
    win = _windows(x, k, stride, padding)
    return np.tensordot(grad, win, axes=([0, 2, 3], [0, 2, 3]))


def correlate_input_grad(grad: np.ndarray, w: np.ndarray,
                         input_shape: Tuple[int, ...],
                         stride: int=1, padding: int=0) -> np.ndarray:
    batch, channels, height, width = input_shape
    k = w.shape[-1]
    out_h, out_w = grad.shape[2:]
    result = np.zeros((batch, channels,
                       height + 2 * padding, width + 2 * padding))
    for i in range(k):
        for j in range(k):
            tap = np.tensordot(grad, w[:, :, i, j], axes=([1], [0]))
            result[:, :, i:i + stride * (out_h - 1) + 1:stride,
                         j:j + stride * (out_w - 1) + 1:stride] += \
                                                    tap.transpose(0, 3, 1, 2)

    return result[:, :, padding:padding + height, padding:padding + width]


def complex_conv2d(h: ComplexTensor,
                   weight_re: np.ndarray,
                   weight_im: np.ndarray,
                   bias_re: np.ndarray,
                   bias_im: np.ndarray,
                   stride: int=1,
                   padding: int=0) -> ComplexTensor:
    '''
    Complex convolution ``W *c h = (a*W_R - b*W_I) + i(a*W_I + b*W_R)``
    for ``h = a + ib``, realized as four real cross-correlations.

    Parameters
    ----------
    h:
        input of shape ``[B, C, H, W]``
    weight_re, weight_im:
        kernel planes of shape ``[O, C, k, k]``, ``k`` odd
    bias_re, bias_im:
        per-output-channel bias planes of shape ``[O]``
    '''
    if weight_re.shape != weight_im.shape:
        raise ValueError('real and imaginary kernels differ in shape')
    if weight_re.shape[-1] % 2 == 0:
        raise ValueError('kernel size must be odd, '
                         'got {}'.format(weight_re.shape[-1]))
    if h.ndim != 4 or h.shape[1] != weight_re.shape[1]:
        raise ValueError('expected input with {} channels, got shape '
                         '{}'.format(weight_re.shape[1], h.shape))

    a, b = h.re, h.im
    out_re = correlate(a, weight_re, stride, padding) - \
             correlate(b, weight_im, stride, padding)
    out_im = correlate(a, weight_im, stride, padding) + \
             correlate(b, weight_re, stride, padding)
    out_re += bias_re[None, :, None, None]
    out_im += bias_im[None, :, None, None]

    return ComplexTensor(out_re, out_im)


def complex_conv2d_backward(h: ComplexTensor,
                            grad_out: ComplexTensor,
                            weight_re: np.ndarray,
                            weight_im: np.ndarray,
                            stride: int=1,
                            padding: int=0):
    '''
    Exact gradients of :func:`complex_conv2d`

    Returns
    -------
    ``(grad_in, grad_weight_re, grad_weight_im, grad_bias)``
        ``grad_bias`` is a ``(grad_bias_re, grad_bias_im)`` pair
    '''
    k = weight_re.shape[-1]
    out_shape = (h.shape[0], weight_re.shape[0],
                 (h.shape[2] + 2 * padding - k) // stride + 1,
                 (h.shape[3] + 2 * padding - k) // stride + 1)
    if grad_out.shape != out_shape:
        raise ValueError('gradient shape {} does not match output '
                         'shape {}'.format(grad_out.shape, out_shape))

    a, b = h.re, h.im
    g_re, g_im = grad_out.re, grad_out.im

    grad_a = correlate_input_grad(g_re, weight_re, a.shape, stride, padding) + \
             correlate_input_grad(g_im, weight_im, a.shape, stride, padding)
    grad_b = correlate_input_grad(g_im, weight_re, b.shape, stride, padding) - \
             correlate_input_grad(g_re, weight_im, b.shape, stride, padding)
    grad_w_re = correlate_weight_grad(a, g_re, k, stride, padding) + \
                correlate_weight_grad(b, g_im, k, stride, padding)
    grad_w_im = correlate_weight_grad(a, g_im, k, stride, padding) - \
                correlate_weight_grad(b, g_re, k, stride, padding)
    grad_bias = (g_re.sum(axis=(0, 2, 3)), g_im.sum(axis=(0, 2, 3)))

    return ComplexTensor(grad_a, grad_b), grad_w_re, grad_w_im, grad_bias


def complex_init(out_channels: int, in_channels: int, kernel_size: int,
                 criterion: str='he', seed: int=0):
    '''
    Rayleigh-distributed modulus with uniform phase.
    ``criterion='he'`` uses ``sigma = 1/sqrt(fan_in)``,
    ``criterion='glorot'`` uses ``sigma = 1/sqrt(fan_in + fan_out)``.
    '''
    fan_in = in_channels * kernel_size ** 2
    fan_out = out_channels * kernel_size ** 2
    if criterion == 'he':
        sigma = 1. / np.sqrt(fan_in)
    elif criterion == 'glorot':
        sigma = 1. / np.sqrt(fan_in + fan_out)
    else:
        raise ValueError('unknown init criterion {}'.format(criterion))

    rng = np.random.default_rng(seed)
    shape = (out_channels, in_channels, kernel_size, kernel_size)
    modulus = rng.rayleigh(scale=sigma, size=shape)
    phase = rng.uniform(-np.pi, np.pi, size=shape)

    return modulus * np.cos(phase), modulus * np.sin(phase)


class ComplexConv2d(Layer):
    '''
    Complex 2-D convolution with weights ``W = W_R + i W_I``
    '''
    def __init__(self,
                 in_channels: int,
                 out_channels: int,
                 kernel_size: int=3,
                 stride: int=1,
                 padding: int=None,
                 init: str='he',
                 seed: int=0):
        '''
        Parameters
        ----------
        in_channels:
            number of input complex channels
        out_channels:
            number of output complex channels
        kernel_size:
            odd spatial kernel extent
        stride:
            spatial stride
        padding:
            zero padding on every side
            OR ``None`` ("same" padding ``(kernel_size - 1) // 2``)
        init:
            weight initialization criterion, ``'he'`` or ``'glorot'``
        seed:
            seed of the initialization
        '''
        super().__init__()
        if kernel_size % 2 == 0:
            raise ValueError('kernel size must be odd, got {}'.format(
                                                                kernel_size))
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.kernel_size = kernel_size
        self.stride = stride
        self.padding = (kernel_size - 1) // 2 if padding is None else padding
        weight_re, weight_im = complex_init(out_channels, in_channels,
                                            kernel_size, init, seed)
        self.params['weight_re'] = weight_re
        self.params['weight_im'] = weight_im
        self.params['bias_re'] = np.zeros(out_channels)
        self.params['bias_im'] = np.zeros(out_channels)
        self._input = None

    def forward(self, x: ComplexTensor, training: bool=True) -> ComplexTensor:
        self._input = x
        return complex_conv2d(x,
                              self.params['weight_re'],
                              self.params['weight_im'],
                              self.params['bias_re'],
                              self.params['bias_im'],
                              self.stride, self.padding)

    def backward(self, grad: ComplexTensor) -> ComplexTensor:
        grad_in, grad_w_re, grad_w_im, grad_bias = complex_conv2d_backward(
                                        self._input, grad,
                                        self.params['weight_re'],
                                        self.params['weight_im'],
                                        self.stride, self.padding)
        self.grads['weight_re'] = grad_w_re
        self.grads['weight_im'] = grad_w_im
        self.grads['bias_re'], self.grads['bias_im'] = grad_bias
        return grad_in


def _to_channel_pairs(x: ComplexTensor) -> np.ndarray:
    # [B, C, H, W] -> [C, B*H*W, 2]
    stacked = np.stack([x.re, x.im], axis=-1)
    channels = x.shape[1]
    return stacked.transpose(1, 0, 2, 3, 4).reshape(channels, -1, 2)


def _from_channel_pairs(u: np.ndarray, shape) -> ComplexTensor:
    batch, channels, height, width = shape
    u = u.reshape(channels, batch, height, width, 2).transpose(1, 0, 2, 3, 4)
    return ComplexTensor(u[..., 0], u[..., 1])


def _inverse_sqrt_whitening(cov: np.ndarray):
    '''
    ``(1/sqrt(2)) * cov^(-1/2)`` for a batch of symmetric
    positive-definite ``2x2`` matrices, with its eigen-decomposition
    '''
    lam, q = np.linalg.eigh(cov)
    f = lam ** -0.5 / np.sqrt(2.)
    whiten = np.einsum('cik,ck,cjk->cij', q, f, q)
    return whiten, lam, q, f


def complex_batch_norm(h: ComplexTensor,
                       layer: 'ComplexBatchNorm',
                       mode: str='train') -> ComplexTensor:
    '''
    Complex batch normalization. In ``'train'`` mode the per-channel
    ``(re, im)`` pairs are centered and whitened by the inverse square root
    of their ``eps``-regularized ``2x2`` covariance so both components get
    variance 1/2 and no cross-covariance, then ``gamma @ (re, im) + beta``
    is applied and running statistics are updated.
    ``'eval'`` mode uses running statistics.
    '''
    if mode not in ('train', 'eval'):
        raise ValueError('unknown mode {}'.format(mode))
    return layer.forward(h, training=mode == 'train')


class ComplexBatchNorm(Layer):
    '''
    Complex batch normalization with full ``2x2`` whitening
    and learnable ``2x2`` scaling ``gamma`` and complex shift ``beta``
    '''
    def __init__(self, channels: int, momentum: float=0.9, eps: float=1e-6):
        '''
        Parameters
        ----------
        channels:
            number of complex channels
        momentum:
            running statistics keep ``momentum`` of their old value
        eps:
            covariance regularization
        '''
        super().__init__()
        assert 0 < momentum < 1
        assert eps > 0
        self.channels = channels
        self.momentum = momentum
        self.eps = eps
        self.params['gamma'] = np.tile(np.eye(2) / np.sqrt(2.), (channels, 1, 1))
        self.params['beta'] = np.zeros((channels, 2))
        self.buffers['running_mean'] = np.zeros((channels, 2))
        self.buffers['running_cov'] = np.tile(np.eye(2) / 2., (channels, 1, 1))
        self._cache = None

    def forward(self, x: ComplexTensor, training: bool=True) -> ComplexTensor:
        if x.ndim != 4 or x.shape[1] != self.channels:
            raise ValueError('expected input with {} channels, got shape '
                             '{}'.format(self.channels, x.shape))
        u = _to_channel_pairs(x)
        count = u.shape[1]
        if count == 0:
            raise ValueError('batch normalization of an empty batch')

        if training:
            mean = u.mean(axis=1)
            centered = u - mean[:, None, :]
            cov = np.einsum('cni,cnj->cij', centered, centered) / count
            if not (np.isfinite(mean).all() and np.isfinite(cov).all()):
                raise FloatingPointError('non-finite batch statistics')
            whiten, lam, q, f = _inverse_sqrt_whitening(
                                                cov + self.eps * np.eye(2))
            m = self.momentum
            self.buffers['running_mean'] = m * self.buffers['running_mean'] + \
                                           (1 - m) * mean
            self.buffers['running_cov'] = m * self.buffers['running_cov'] + \
                                          (1 - m) * cov
        else:
            centered = u - self.buffers['running_mean'][:, None, :]
            whiten, lam, q, f = _inverse_sqrt_whitening(
                        self.buffers['running_cov'] + self.eps * np.eye(2))

        z = np.einsum('cij,cnj->cni', whiten, centered)
        y = np.einsum('cij,cnj->cni', self.params['gamma'], z) + \
            self.params['beta'][:, None, :]
        self._cache = (training, x.shape, centered, whiten, lam, q, f, z)

        return _from_channel_pairs(y, x.shape)

    def backward(self, grad: ComplexTensor) -> ComplexTensor:
        training, shape, centered, whiten, lam, q, f, z = self._cache
        g = _to_channel_pairs(grad)
        count = g.shape[1]
        gamma = self.params['gamma']
        self.grads['gamma'] = np.einsum('cni,cnj->cij', g, z)
        self.grads['beta'] = g.sum(axis=1)
        grad_z = np.einsum('cji,cnj->cni', gamma, g)
        grad_c = np.einsum('cij,cnj->cni', whiten, grad_z)
        if not training:
            return _from_channel_pairs(grad_c, shape)

        grad_w = np.einsum('cni,cnj->cij', grad_z, centered)
        grad_w = (grad_w + grad_w.transpose(0, 2, 1)) / 2.
        # Daleckii-Krein divided differences of f(lam) = lam^(-1/2) / sqrt(2)
        f_prime = -0.5 * lam ** -1.5 / np.sqrt(2.)
        diff = lam[:, :, None] - lam[:, None, :]
        close = np.abs(diff) <= 1e-12 * np.abs(lam).max(axis=1)[:, None, None]
        mid = (lam[:, :, None] + lam[:, None, :]) / 2.
        with np.errstate(divide='ignore', invalid='ignore'):
            kernel = np.where(close,
                              -0.5 * mid ** -1.5 / np.sqrt(2.),
                              (f[:, :, None] - f[:, None, :]) / diff)
        kernel[:, 0, 0] = f_prime[:, 0]
        kernel[:, 1, 1] = f_prime[:, 1]
        rotated = np.einsum('cki,ckl,clj->cij', q, grad_w, q)
        grad_cov = np.einsum('cik,ckl,cjl->cij', q, rotated * kernel, q)

        grad_c = grad_c + 2. / count * np.einsum('cij,cnj->cni',
                                                 grad_cov, centered)
        grad_u = grad_c - grad_c.mean(axis=1, keepdims=True)

        return _from_channel_pairs(grad_u, shape)


def crelu(h: ComplexTensor) -> ComplexTensor:
    '''
    ReLU applied to the real and imaginary parts separately
    '''
    return ComplexTensor(np.maximum(h.re, 0), np.maximum(h.im, 0))


class CReLU(Layer):
    def forward(self, x: ComplexTensor, training: bool=True) -> ComplexTensor:
        self._masks = (x.re > 0, x.im > 0)
        return crelu(x)

    def backward(self, grad: ComplexTensor) -> ComplexTensor:
        mask_re, mask_im = self._masks
        return ComplexTensor(grad.re * mask_re, grad.im * mask_im)


def _pool_blocks(x: np.ndarray) -> np.ndarray:
    batch, channels, height, width = x.shape
    blocks = x.reshape(batch, channels, height // 2, 2, width // 2, 2)
    return blocks.transpose(0, 1, 2, 4, 3, 5).reshape(
                                batch, channels, height // 2, width // 2, 4)


def _unpool_blocks(blocks: np.ndarray) -> np.ndarray:
    batch, channels, half_h, half_w, _ = blocks.shape
    x = blocks.reshape(batch, channels, half_h, half_w, 2, 2)
    return x.transpose(0, 1, 2, 4, 3, 5).reshape(
                                    batch, channels, half_h * 2, half_w * 2)


def _check_poolable(h: ComplexTensor):
    if h.ndim != 4 or h.shape[2] % 2 or h.shape[3] % 2:
        raise ValueError('2x2 pooling needs even spatial extents, '
                         'got shape {}'.format(h.shape))


def cmaxpool2(h: ComplexTensor) -> ComplexTensor:
    '''
    ``2x2`` max-pooling with stride 2 applied to the real and
    imaginary parts independently
    '''
    _check_poolable(h)
    return ComplexTensor(_pool_blocks(h.re).max(axis=-1),
                         _pool_blocks(h.im).max(axis=-1))


class CMaxPool2(Layer):
    def forward(self, x: ComplexTensor, training: bool=True) -> ComplexTensor:
        _check_poolable(x)
        self._argmax = (_pool_blocks(x.re).argmax(axis=-1),
                        _pool_blocks(x.im).argmax(axis=-1))
        return cmaxpool2(x)

    def backward(self, grad: ComplexTensor) -> ComplexTensor:
        parts = []
        for g, idx in zip([grad.re, grad.im], self._argmax):
            blocks = np.zeros(g.shape + (4,))
            np.put_along_axis(blocks, idx[..., None], g[..., None], axis=-1)
            parts.append(_unpool_blocks(blocks))
        return ComplexTensor(*parts)


def upsample2(h: ComplexTensor) -> ComplexTensor:
    '''
    Nearest-neighbour ``2x`` spatial upsampling of both parts
    '''
    def up(x):
        return x.repeat(2, axis=-2).repeat(2, axis=-1)
    return ComplexTensor(up(h.re), up(h.im))


class Upsample2(Layer):
    def forward(self, x: ComplexTensor, training: bool=True) -> ComplexTensor:
        return upsample2(x)

    def backward(self, grad: ComplexTensor) -> ComplexTensor:
        def down(g):
            return _pool_blocks(g).sum(axis=-1)
        return ComplexTensor(down(grad.re), down(grad.im))


def split_channels(x: ComplexTensor, sizes: List[int]) -> List[ComplexTensor]:
    bounds = np.cumsum([0] + list(sizes))
    return [x[:, bounds[k]:bounds[k + 1]] for k in range(len(sizes))]


class DenseBlock(Layer):
    '''
    Densely connected complex block: each conv -> BN -> CReLU unit
    consumes the channel concatenation of the block input and the
    outputs of all previous units. The block returns the concatenation
    of its input and every unit output.
    '''
    def __init__(self,
                 in_channels: int,
                 growth: int,
                 kernel_size: int=3,
                 num_layers: int=3,
                 bn_momentum: float=0.9,
                 bn_eps: float=1e-6,
                 init: str='he',
                 seed: int=0):
        '''
        Parameters
        ----------
        in_channels:
            complex channels of the block input
        growth:
            output channels of every unit
        kernel_size:
            odd kernel size of unit convolutions
        num_layers:
            number of conv -> BN -> CReLU units
        bn_momentum, bn_eps:
            :class:`ComplexBatchNorm` parameters
        init:
            weight initialization criterion
        seed:
            base seed, every unit derives its own
        '''
        super().__init__()
        self.in_channels = in_channels
        self.growth = growth
        self.out_channels = in_channels + num_layers * growth
        self.units = []
        for j in range(num_layers):
            unit_in = in_channels + j * growth
            conv = ComplexConv2d(unit_in, growth, kernel_size, init=init,
                                 seed=int_hash_of_str('{}_unit{}'.format(seed, j)))
            bn = ComplexBatchNorm(growth, bn_momentum, bn_eps)
            self.units.append((conv, bn, CReLU()))

    def named_leaves(self, prefix: str=''):
        for j, (conv, bn, _) in enumerate(self.units):
            yield '{}unit{}.conv'.format(prefix, j), conv
            yield '{}unit{}.bn'.format(prefix, j), bn

    def forward(self, x: ComplexTensor, training: bool=True) -> ComplexTensor:
        if x.ndim != 4 or x.shape[1] != self.in_channels:
            raise ValueError('expected input with {} channels, got shape '
                             '{}'.format(self.in_channels, x.shape))
        feats = [x]
        for conv, bn, relu in self.units:
            h = ComplexTensor.concat(feats, axis=1)
            h = relu.forward(bn.forward(conv.forward(h, training), training))
            feats.append(h)

        return ComplexTensor.concat(feats, axis=1)

    def backward(self, grad: ComplexTensor) -> ComplexTensor:
        sizes = [self.in_channels] + [self.growth] * len(self.units)
        pieces = split_channels(grad, sizes)
        for j in reversed(range(len(self.units))):
            conv, bn, relu = self.units[j]
            g = conv.backward(bn.backward(relu.backward(pieces[j + 1])))
            for k, part in enumerate(split_channels(g, sizes[:j + 1])):
                pieces[k] = pieces[k] + part

        return pieces[0]


def dense_block_forward(h: ComplexTensor, block: DenseBlock,
                        training: bool=True) -> ComplexTensor:
    return block.forward(h, training)
