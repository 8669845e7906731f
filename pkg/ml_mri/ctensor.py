'''
Complex tensors stored as separate real and imaginary planes
and the centered orthonormal 2-D Fourier transform used as the
k-space encoding operator.
'''

import numpy as np
from typing import List, Sequence, Tuple, Union
from .utils import is_power_of_two


Scalar = Union[int, float, complex]


class ComplexTensor:
    '''
    N-dimensional array of complex samples. Images, k-space data,
    feature maps and gradients all use this type.
    Layout is row-major, usually ``[batch, channels, height, width]``.
    Values are read-only after construction.
    '''
    __slots__ = ('re', 'im')

    def __init__(self, re, im=None):
        '''
        Parameters
        ----------
        re:
            real part, array-like
        im:
            imaginary part with the same shape as ``re``
            OR ``None`` (zeros)
        '''
        re = np.array(re, dtype=np.float64)
        if im is None:
            im = np.zeros_like(re)
        else:
            im = np.array(im, dtype=np.float64)
        if re.shape != im.shape:
            raise ValueError('real part shape {} differs from imaginary '
                             'part shape {}'.format(re.shape, im.shape))
        re.setflags(write=False)
        im.setflags(write=False)
        self.re = re
        self.im = im

    @classmethod
    def from_complex(cls, arr) -> 'ComplexTensor':
        arr = np.asarray(arr, dtype=np.complex128)
        return cls(arr.real, arr.imag)

    @classmethod
    def zeros(cls, shape: Sequence[int]) -> 'ComplexTensor':
        return cls(np.zeros(tuple(shape)))

    @staticmethod
    def concat(tensors: List['ComplexTensor'], axis: int=1) -> 'ComplexTensor':
        return ComplexTensor(np.concatenate([t.re for t in tensors], axis=axis),
                             np.concatenate([t.im for t in tensors], axis=axis))

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.re.shape

    @property
    def ndim(self) -> int:
        return self.re.ndim

    @property
    def size(self) -> int:
        return self.re.size

    def to_complex(self) -> np.ndarray:
        return self.re + 1j * self.im

    def conj(self) -> 'ComplexTensor':
        return ComplexTensor(self.re, -self.im)

    def magnitude(self) -> np.ndarray:
        return magnitude(self)

    def energy(self) -> float:
        return float(np.sum(self.re ** 2) + np.sum(self.im ** 2))

    def reshape(self, *shape) -> 'ComplexTensor':
        return ComplexTensor(self.re.reshape(*shape), self.im.reshape(*shape))

    def is_finite(self) -> bool:
        return bool(np.isfinite(self.re).all() and np.isfinite(self.im).all())

    def __getitem__(self, item) -> 'ComplexTensor':
        return ComplexTensor(self.re[item], self.im[item])

    def __len__(self):
        return len(self.re)

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(self, other) * -1

    def __mul__(self, other):
        if isinstance(other, ComplexTensor):
            return elementwise_mul(self, other)
        return mul_scalar(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return ComplexTensor(-self.re, -self.im)

    def __repr__(self):
        return 'ComplexTensor(shape={})'.format(self.shape)


def _check_same_shape(a: ComplexTensor, b: ComplexTensor):
    if a.shape != b.shape:
        raise ValueError('shape mismatch: {} vs {}'.format(a.shape, b.shape))


def _scalar_parts(value: Scalar) -> Tuple[float, float]:
    value = complex(value)
    return value.real, value.imag


def add(a: ComplexTensor, b: Union[ComplexTensor, Scalar]) -> ComplexTensor:
    if isinstance(b, ComplexTensor):
        _check_same_shape(a, b)
        return ComplexTensor(a.re + b.re, a.im + b.im)
    br, bi = _scalar_parts(b)
    return ComplexTensor(a.re + br, a.im + bi)


def sub(a: ComplexTensor, b: Union[ComplexTensor, Scalar]) -> ComplexTensor:
    if isinstance(b, ComplexTensor):
        _check_same_shape(a, b)
        return ComplexTensor(a.re - b.re, a.im - b.im)
    br, bi = _scalar_parts(b)
    return ComplexTensor(a.re - br, a.im - bi)


def mul_scalar(a: ComplexTensor, s: Scalar) -> ComplexTensor:
    sr, si = _scalar_parts(s)
    return ComplexTensor(a.re * sr - a.im * si, a.re * si + a.im * sr)


def elementwise_mul(a: ComplexTensor, b: ComplexTensor) -> ComplexTensor:
    _check_same_shape(a, b)
    return ComplexTensor(a.re * b.re - a.im * b.im,
                         a.re * b.im + a.im * b.re)


def magnitude(x: ComplexTensor) -> np.ndarray:
    '''
    Elementwise modulus ``sqrt(re^2 + im^2)``
    '''
    return np.hypot(x.re, x.im)


def _bit_reverse_indices(n: int) -> np.ndarray:
    bits = n.bit_length() - 1
    idxs = np.arange(n)
    result = np.zeros(n, dtype=np.int64)
    for _ in range(bits):
        result = (result << 1) | (idxs & 1)
        idxs = idxs >> 1
    return result


class FftPlan:
    '''
    Precomputed iterative radix-2 transform for ``height x width`` planes.
    Orthonormal scaling (``1/sqrt(H*W)`` in both directions) and
    centered layout: the DC bin sits at ``(H/2, W/2)``.
    '''
    def __init__(self, height: int, width: int, direction: str='forward'):
        '''
        Parameters
        ----------
        height:
            number of rows, power of two
        width:
            number of columns, power of two
        direction:
            one of ``'forward'``, ``'inverse'``
        '''
        for name, n in [('height', height), ('width', width)]:
            if not is_power_of_two(n):
                raise ValueError('{} must be a power of two, '
                                 'got {}'.format(name, n))
        if direction not in ('forward', 'inverse'):
            raise ValueError('unknown direction {}'.format(direction))

        self.height = height
        self.width = width
        self.direction = direction
        self.normalization = 'ortho'
        self.centered = True
        sign = 1.0 if direction == 'inverse' else -1.0
        self._stages = {n: self._make_stages(n, sign)
                        for n in set([height, width])}

    @staticmethod
    def _make_stages(n: int, sign: float):
        stages = []
        size = 2
        while size <= n:
            half = size // 2
            twiddle = np.exp(sign * 2j * np.pi * np.arange(half) / size)
            stages.append((size, half, twiddle))
            size *= 2
        return _bit_reverse_indices(n), stages

    def _transform_last_axis(self, x: np.ndarray) -> np.ndarray:
        n = x.shape[-1]
        perm, stages = self._stages[n]
        x = x[..., perm]
        lead = x.shape[:-1]
        for size, half, twiddle in stages:
            x = x.reshape(lead + (n // size, size))
            even = x[..., :half]
            odd = x[..., half:] * twiddle
            x = np.concatenate([even + odd, even - odd], axis=-1)
            x = x.reshape(lead + (n,))
        return x

    def execute(self, x: ComplexTensor) -> ComplexTensor:
        if x.ndim < 2 or x.shape[-2:] != (self.height, self.width):
            raise ValueError('plan is {}x{}, got tensor of shape {}'.format(
                              self.height, self.width, x.shape))
        data = np.fft.ifftshift(x.to_complex(), axes=(-2, -1))
        data = self._transform_last_axis(data)
        data = self._transform_last_axis(np.swapaxes(data, -1, -2))
        data = np.swapaxes(data, -1, -2)
        data = np.fft.fftshift(data, axes=(-2, -1))
        data = data / np.sqrt(self.height * self.width)

        return ComplexTensor.from_complex(data)


_plans = {}


def _get_plan(x: ComplexTensor, plan, direction: str) -> FftPlan:
    if plan is not None:
        if plan.direction != direction:
            raise ValueError('expected a {} plan, got {}'.format(
                              direction, plan.direction))
        return plan
    if x.ndim < 2:
        raise ValueError('2-D transform needs at least 2 axes, '
                         'got shape {}'.format(x.shape))
    key = (x.shape[-2], x.shape[-1], direction)
    if key not in _plans:
        _plans[key] = FftPlan(key[0], key[1], direction)
    return _plans[key]


def fft2(x: ComplexTensor, plan: FftPlan=None) -> ComplexTensor:
    '''
    Centered orthonormal 2-D DFT over the last two axes

    Parameters
    ----------
    x:
        tensor of shape ``[..., H, W]``
    plan:
        forward :class:`FftPlan`
        OR ``None`` (cached plan for the tensor extents)
    '''
    return _get_plan(x, plan, 'forward').execute(x)


def ifft2(y: ComplexTensor, plan: FftPlan=None) -> ComplexTensor:
    '''
    Inverse of :func:`fft2` under the same centering and normalization

    Parameters
    ----------
    y:
        k-space tensor of shape ``[..., H, W]``
    plan:
        inverse :class:`FftPlan`
        OR ``None`` (cached plan for the tensor extents)
    '''
    return _get_plan(y, plan, 'inverse').execute(y)
