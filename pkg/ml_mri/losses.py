'''
Training losses with analytic gradients.

Gradients are returned as :class:`~ml_mri.ctensor.ComplexTensor` holding
``dL/d re`` and ``dL/d im`` of the reconstruction. Both loss terms are
averaged over the batch axis.
'''

import numpy as np
from scipy import ndimage
from typing import Dict, List, Optional, Tuple
from .ctensor import ComplexTensor, magnitude
from .utils import ConfigError


MAGNITUDE_EPS = 1e-12
K1 = 0.01
K2 = 0.03


class LossConfig:
    '''
    Composite loss ``L2 + lam * SSIM_loss``
    '''
    def __init__(self,
                 lam: float=2.,
                 ssim_window: int=11,
                 ssim_sigma: float=1.5):
        '''
        Parameters
        ----------
        lam:
            non-negative weight of the SSIM term
        ssim_window:
            odd side of the Gaussian SSIM window
        ssim_sigma:
            standard deviation of the Gaussian SSIM window
        '''
        self.lam = lam
        self.ssim_window = ssim_window
        self.ssim_sigma = ssim_sigma

    def validate(self) -> List[str]:
        problems = []
        if not self.lam >= 0:
            problems.append('lam must be non-negative, got {}'.format(self.lam))
        if not (isinstance(self.ssim_window, (int, np.integer))
                and self.ssim_window >= 3 and self.ssim_window % 2 == 1):
            problems.append('ssim_window must be an odd integer >= 3, '
                            'got {}'.format(self.ssim_window))
        if not self.ssim_sigma > 0:
            problems.append('ssim_sigma must be positive, '
                            'got {}'.format(self.ssim_sigma))
        return problems

    def check(self):
        problems = self.validate()
        if problems:
            raise ConfigError(problems)

    def to_dict(self) -> Dict:
        return {'lam': self.lam,
                'ssim_window': self.ssim_window,
                'ssim_sigma': self.ssim_sigma}

    @classmethod
    def from_dict(cls, data: Dict) -> 'LossConfig':
        return cls(**{key: data[key] for key in cls().to_dict() if key in data})


def _batch_size(x: ComplexTensor) -> int:
    return x.shape[0] if x.ndim == 4 else 1


def _check_pair(x_r: ComplexTensor, x_f: ComplexTensor):
    if x_r.shape != x_f.shape:
        raise ValueError('reconstruction shape {} does not match target '
                         'shape {}'.format(x_r.shape, x_f.shape))


def l2_loss(x_r: ComplexTensor,
            x_f: ComplexTensor) -> Tuple[float, ComplexTensor]:
    '''
    Squared complex difference ``sum |x_f - x_r|^2`` per image,
    averaged over the batch

    Returns
    -------
    ``(loss, grad)``
    '''
    _check_pair(x_r, x_f)
    batch = _batch_size(x_r)
    diff = x_r - x_f
    loss = diff.energy() / batch
    grad = ComplexTensor(2. * diff.re / batch, 2. * diff.im / batch)

    return loss, grad


def gaussian_window(size: int=11, sigma: float=1.5) -> np.ndarray:
    '''
    Normalized 1-D Gaussian, the 2-D window is its outer product
    '''
    x = np.arange(size) - size // 2
    g = np.exp(-x ** 2 / (2. * sigma ** 2))
    return g / g.sum()


def _filter_axis(x: np.ndarray, g: np.ndarray, axis: int) -> np.ndarray:
    # valid part only, correlate1d centres the window at len(g) // 2
    k = len(g)
    n = x.shape[axis] - k + 1
    full = ndimage.correlate1d(x, g, axis=axis, mode='constant')
    return np.take(full, np.arange(k // 2, k // 2 + n), axis=axis)


def _filter_axis_adjoint(grad: np.ndarray, g: np.ndarray,
                         axis: int) -> np.ndarray:
    pad = [(0, 0)] * grad.ndim
    pad[axis] = (len(g) - 1, len(g) - 1)
    return _filter_axis(np.pad(grad, pad), g[::-1], axis)


def _filter(x: np.ndarray, g: np.ndarray) -> np.ndarray:
    return _filter_axis(_filter_axis(x, g, -2), g, -1)


def _filter_adjoint(grad: np.ndarray, g: np.ndarray) -> np.ndarray:
    return _filter_axis_adjoint(_filter_axis_adjoint(grad, g, -1), g, -2)


def _data_range(p: np.ndarray, q: np.ndarray,
                data_range=None) -> np.ndarray:
    if data_range is None:
        data_range = np.maximum(p.max(axis=(-2, -1)), q.max(axis=(-2, -1)))
    data_range = np.asarray(data_range, dtype=np.float64)
    # all-zero images
    data_range = np.where(data_range > 0, data_range, 1.)
    return data_range[..., None, None]


def _ssim_terms(p: np.ndarray,
                q: np.ndarray,
                data_range,
                window: int,
                sigma: float,
                with_grad: bool):
    if p.shape != q.shape:
        raise ValueError('image shapes differ: {} vs {}'.format(p.shape,
                                                                q.shape))
    if p.ndim < 2 or min(p.shape[-2:]) < window:
        raise ValueError('image of shape {} is smaller than the {}x{} '
                         'window'.format(p.shape, window, window))
    g = gaussian_window(window, sigma)
    L = _data_range(p, q, data_range)
    c1 = (K1 * L) ** 2
    c2 = (K2 * L) ** 2

    mu_p = _filter(p, g)
    mu_q = _filter(q, g)
    e_pp = _filter(p * p, g)
    e_qq = _filter(q * q, g)
    e_pq = _filter(p * q, g)
    var_p = e_pp - mu_p * mu_p
    var_q = e_qq - mu_q * mu_q
    cov = e_pq - mu_p * mu_q

    a1 = 2. * mu_p * mu_q + c1
    a2 = 2. * cov + c2
    b1 = mu_p * mu_p + mu_q * mu_q + c1
    b2 = var_p + var_q + c2
    s_map = (a1 * a2) / (b1 * b2)
    value = s_map.mean(axis=(-2, -1))
    if not with_grad:
        return value, None

    count = s_map.shape[-2] * s_map.shape[-1]
    d_mu = (2. * mu_q * (a2 - a1) / (b1 * b2) -
            s_map * (2. * mu_p / b1 - 2. * mu_p / b2)) / count
    d_epp = -s_map / b2 / count
    d_epq = 2. * a1 / (b1 * b2) / count
    grad = _filter_adjoint(d_mu, g) + \
           2. * p * _filter_adjoint(d_epp, g) + \
           q * _filter_adjoint(d_epq, g)

    return value, grad


def ssim(p: np.ndarray,
         q: np.ndarray,
         config: Optional[LossConfig]=None,
         data_range: float=None):
    '''
    Structural similarity of real images: mean over valid Gaussian
    windows of the luminance, contrast and structure product with
    ``C1 = (0.01 L)^2`` and ``C2 = (0.03 L)^2``

    Parameters
    ----------
    p, q:
        images of shape ``[..., H, W]``
    config:
        window parameters
        OR ``None`` (defaults of :class:`LossConfig`)
    data_range:
        dynamic range ``L``
        OR ``None`` (max over both images)

    Returns
    -------
    ``float``
        for 2-D inputs, ``np.ndarray`` of per-image values otherwise
    '''
    config = config or LossConfig()
    value, _ = _ssim_terms(np.asarray(p, dtype=np.float64),
                           np.asarray(q, dtype=np.float64), data_range,
                           config.ssim_window, config.ssim_sigma, False)
    return float(value) if np.ndim(value) == 0 else value


def ssim_grad(p: np.ndarray,
              q: np.ndarray,
              config: Optional[LossConfig]=None,
              data_range: float=None):
    '''
    :func:`ssim` and its gradient with respect to ``p``.
    With ``data_range=None`` the range is held fixed while
    differentiating.

    Returns
    -------
    ``(value, grad)``
    '''
    config = config or LossConfig()
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if data_range is None:
        data_range = _data_range(p, q)[..., 0, 0]
    value, grad = _ssim_terms(p, q, data_range, config.ssim_window,
                              config.ssim_sigma, True)
    if np.ndim(value) == 0:
        value = float(value)
    return value, grad


def magnitude_backward(x: ComplexTensor, grad: np.ndarray) -> ComplexTensor:
    '''
    Chain ``dL/d|x|`` to ``(dL/d re, dL/d im)``, zero where ``|x|``
    vanishes
    '''
    mod = magnitude(x)
    safe = np.where(mod < MAGNITUDE_EPS, 1., mod)
    scale = np.where(mod < MAGNITUDE_EPS, 0., grad / safe)
    return ComplexTensor(scale * x.re, scale * x.im)


def ssim_loss(x_r: ComplexTensor,
              x_f: ComplexTensor,
              config: Optional[LossConfig]=None) -> Tuple[float, ComplexTensor]:
    '''
    ``1 - SSIM(|x_r|, |x_f|)`` averaged over the batch, with
    ``L = max |x_f|`` per image

    Returns
    -------
    ``(loss, grad)``
    '''
    _check_pair(x_r, x_f)
    p = magnitude(x_r)
    q = magnitude(x_f)
    data_range = q.max(axis=(-2, -1))
    value, grad_p = ssim_grad(p, q, config, data_range)
    batch = _batch_size(x_r)
    loss = float(np.sum(1. - np.asarray(value))) / batch
    grad = magnitude_backward(x_r, -grad_p / batch)

    return loss, grad


def composite_loss(x_r: ComplexTensor,
                   x_f: ComplexTensor,
                   config: Optional[LossConfig]=None):
    '''
    ``L2 + lam * SSIM_loss``

    Returns
    -------
    ``(loss, grad, components)``
        ``components`` holds the unweighted ``'l2'`` and ``'ssim_loss'``
    '''
    config = config or LossConfig()
    config.check()
    l2, l2_grad = l2_loss(x_r, x_f)
    s, s_grad = ssim_loss(x_r, x_f, config)
    total = l2 + config.lam * s
    grad = ComplexTensor(l2_grad.re + config.lam * s_grad.re,
                         l2_grad.im + config.lam * s_grad.im)

    return total, grad, {'l2': l2, 'ssim_loss': s}
