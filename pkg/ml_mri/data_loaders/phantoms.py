'''
Synthetic complex phantoms standing in for acquired anatomy.

Magnitude is a piecewise-smooth arrangement of overlapping ellipses
with distinct intensities inside a body ellipse, edges smoothed by a
small Gaussian. Phase is a slowly varying quadratic field, so complex
layers never see real-valued data.
'''

import numpy as np
from multiprocessing import Pool, cpu_count
from scipy import ndimage
from tqdm import tqdm
from typing import List
from ..ctensor import ComplexTensor
from ..utils import int_hash_of_str


EDGE_SIGMA = 1.0
BODY_MAX_AXIS = 0.8


class Phantom:
    '''
    Complex phantom ``magnitude * exp(i * phase)``
    '''
    def __init__(self, magnitude: np.ndarray, phase: np.ndarray, seed: int):
        self.magnitude = magnitude
        self.phase = phase
        self.seed = seed

    @property
    def shape(self):
        return self.magnitude.shape

    def to_tensor(self) -> ComplexTensor:
        return ComplexTensor(self.magnitude * np.cos(self.phase),
                             self.magnitude * np.sin(self.phase))


def _grid(height: int, width: int):
    y = (np.arange(height) - height / 2 + 0.5) / (height / 2)
    x = (np.arange(width) - width / 2 + 0.5) / (width / 2)
    return np.meshgrid(y, x, indexing='ij')


def _ellipse(yy, xx, center, axes, angle) -> np.ndarray:
    cos, sin = np.cos(angle), np.sin(angle)
    dy, dx = yy - center[0], xx - center[1]
    u = (dx * cos + dy * sin) / axes[1]
    v = (-dx * sin + dy * cos) / axes[0]
    return u ** 2 + v ** 2 <= 1.


def phase_amplitude(height: int, width: int) -> float:
    # keeps the per-pixel phase step below pi / 9
    n = min(height, width)
    return min(np.pi, np.pi * (n - 1) / 36.)


def make_phantom(height: int, width: int, seed: int,
                 num_ellipses: int=None) -> Phantom:
    '''
    Generate a phantom

    Parameters
    ----------
    height:
        number of rows, multiple of 16
    width:
        number of columns, multiple of 16
    seed:
        random seed, equal seeds give equal phantoms
    num_ellipses:
        number of inner structures
        OR ``None`` (drawn from ``[4, 8]``)
    '''
    for name, n in [('height', height), ('width', width)]:
        if n <= 0 or n % 16:
            raise ValueError('{} must be a positive multiple of 16, '
                             'got {}'.format(name, n))
    rng = np.random.default_rng(seed)
    yy, xx = _grid(height, width)
    image = np.zeros((height, width))

    body_center = rng.uniform(-0.05, 0.05, size=2)
    body_axes = rng.uniform(0.6, BODY_MAX_AXIS, size=2)
    body = _ellipse(yy, xx, body_center, body_axes, rng.uniform(0, np.pi))
    image[body] = rng.uniform(0.5, 0.8)

    if num_ellipses is None:
        num_ellipses = int(rng.integers(4, 9))
    for _ in range(num_ellipses):
        center = body_center + rng.uniform(-0.5, 0.5, size=2) * body_axes
        axes = rng.uniform(0.05, 0.3, size=2)
        inside = _ellipse(yy, xx, center, axes, rng.uniform(0, np.pi))
        image[inside & body] = rng.uniform(0.1, 1.0)

    magnitude = ndimage.gaussian_filter(image, sigma=EDGE_SIGMA)
    magnitude = magnitude / magnitude.max()

    coefs = rng.uniform(-1, 1, size=6)
    poly = coefs[0] + coefs[1] * xx + coefs[2] * yy + \
           coefs[3] * xx ** 2 + coefs[4] * xx * yy + coefs[5] * yy ** 2
    phase = phase_amplitude(height, width) * poly / np.abs(coefs).sum()

    return Phantom(magnitude, phase, seed)


def gen_phantom(height: int, width: int, seed: int) -> ComplexTensor:
    '''
    Complex phantom of shape ``[height, width]`` with ``max |x| == 1``
    '''
    return make_phantom(height, width, seed).to_tensor()


def phantom_seed(base_seed: int, number: int) -> int:
    return int_hash_of_str('phantom_{}_{}'.format(base_seed, number))


class PhantomData:
    '''
    Loader generating phantoms on request
    '''
    def __init__(self,
                 size: int=64,
                 n_jobs: int=cpu_count(),
                 verbose: bool=False):
        '''
        Parameters
        ----------
        size:
            height and width of generated phantoms
        n_jobs:
            number of processes used for generation
        verbose:
            show progress or not
        '''
        self.size = size
        self.n_jobs = n_jobs
        self.verbose = verbose

    def _single_phantom(self, seed: int) -> ComplexTensor:
        return gen_phantom(self.size, self.size, seed)

    def load(self, index: List[int]) -> ComplexTensor:
        '''
        Parameters
        ----------
        index:
            phantom seeds, i.e. ``[0, 1, 2]``

        Returns
        -------
        ``ComplexTensor``
            phantoms stacked as ``[len(index), 1, size, size]``
            OR ``None`` for empty index
        '''
        if len(index) == 0:
            return

        if self.n_jobs == 1:
            result = [self._single_phantom(seed) for seed in
                      tqdm(index, disable=not self.verbose)]
        else:
            with Pool(self.n_jobs) as p:
                result = []
                for phantom in tqdm(p.imap(self._single_phantom, index),
                                    total=len(index),
                                    disable=not self.verbose):
                    result.append(phantom)

        result = [x.reshape(1, 1, self.size, self.size) for x in result]

        return ComplexTensor.concat(result, axis=0)
