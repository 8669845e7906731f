'''
Cartesian undersampling masks and retrospective undersampling.

Phase encoding runs along rows (axis ``H``); every selected row is
fully sampled along the frequency-encoding axis ``W``. The DC row of
the centered k-space layout is ``H // 2``.
'''

import numpy as np
from typing import Dict, List, Sequence, Union
from .ctensor import ComplexTensor, fft2, ifft2
from .utils import ConfigError
from .data_loaders.tensor_file import save_tensor, load_tensor, \
                                      save_magnitude_png, load_png


class SamplingConfig:
    '''
    Parameters of the Cartesian line sampling scheme
    '''
    def __init__(self,
                 acceleration: float=4,
                 num_center_lines: int=8,
                 sigma_frac: float=0.15):
        '''
        Parameters
        ----------
        acceleration:
            target acceleration factor ``R``, ``round(H / R)``
            rows are selected
        num_center_lines:
            number of always-acquired low-frequency rows around DC
        sigma_frac:
            width of the Gaussian line-selection density
            as a fraction of ``H``
        '''
        self.acceleration = acceleration
        self.num_center_lines = num_center_lines
        self.sigma_frac = sigma_frac

    def validate(self) -> List[str]:
        problems = []
        if not self.acceleration >= 1:
            problems.append('acceleration must be >= 1, '
                            'got {}'.format(self.acceleration))
        if not (isinstance(self.num_center_lines, (int, np.integer))
                and self.num_center_lines >= 0):
            problems.append('num_center_lines must be a non-negative '
                            'integer, got {}'.format(self.num_center_lines))
        if not self.sigma_frac > 0:
            problems.append('sigma_frac must be positive, '
                            'got {}'.format(self.sigma_frac))
        return problems

    def check(self):
        problems = self.validate()
        if problems:
            raise ConfigError(problems)

    def to_dict(self) -> Dict:
        return {'acceleration': self.acceleration,
                'num_center_lines': self.num_center_lines,
                'sigma_frac': self.sigma_frac}

    @classmethod
    def from_dict(cls, data: Dict) -> 'SamplingConfig':
        return cls(**{key: data[key] for key in cls().to_dict() if key in data})


class SamplingMask:
    '''
    Binary Cartesian k-space mask with acquisition metadata
    '''
    def __init__(self,
                 mask: np.ndarray,
                 acceleration: float=1,
                 num_center_lines: int=0,
                 sigma_frac: float=None,
                 seed: int=None):
        mask = np.asarray(mask, dtype=np.float64)
        if mask.ndim != 2:
            raise ValueError('mask must be 2-D, got shape {}'.format(mask.shape))
        if not np.isin(mask, [0., 1.]).all():
            raise ValueError('mask must be binary')
        mask.setflags(write=False)
        self.mask = mask
        self.acceleration = acceleration
        self.num_center_lines = num_center_lines
        self.sigma_frac = sigma_frac
        self.seed = seed

    @property
    def shape(self):
        return self.mask.shape

    def selected_rows(self) -> np.ndarray:
        return np.where(self.mask.max(axis=1) > 0)[0]

    def sampled_fraction(self) -> float:
        return float(self.mask.mean())

    def to_dict(self) -> Dict:
        return {'shape': list(self.mask.shape),
                'acceleration': self.acceleration,
                'num_center_lines': self.num_center_lines,
                'sigma_frac': self.sigma_frac,
                'seed': self.seed}


def line_budget(height: int, acceleration: float) -> int:
    # round() is round-half-to-even
    return int(round(height / acceleration))


def center_rows(height: int, num_center: int) -> np.ndarray:
    start = height // 2 - num_center // 2
    return np.arange(start, start + num_center)


def make_mask(height: int,
              width: int,
              acceleration: float=4,
              num_center: int=8,
              sigma_frac: float=0.15,
              seed: int=0) -> SamplingMask:
    '''
    Cartesian line mask: the ``num_center`` rows around DC plus
    rows drawn without replacement with probability proportional to a
    zero-mean Gaussian density of the row distance from DC
    (``sigma = sigma_frac * height``)

    Parameters
    ----------
    height:
        number of phase-encoding rows
    width:
        number of frequency-encoding columns
    acceleration:
        target acceleration ``R``; ``round(height / R)`` rows are selected
    num_center:
        number of central rows that are always selected
    sigma_frac:
        Gaussian width as a fraction of ``height``
    seed:
        random seed, equal seeds give equal masks
    '''
    problems = SamplingConfig(acceleration, num_center, sigma_frac).validate()
    if problems:
        raise ConfigError(problems)
    budget = line_budget(height, acceleration)
    if budget < num_center or num_center > height:
        raise ValueError('infeasible line budget: round({}/{}) = {} rows but '
                         '{} center lines requested'.format(
                          height, acceleration, budget, num_center))

    selected = np.zeros(height, dtype=bool)
    selected[center_rows(height, num_center)] = True
    remaining = np.where(~selected)[0]
    n_draw = budget - num_center
    if n_draw == len(remaining):
        selected[remaining] = True
    elif n_draw > 0:
        sigma = sigma_frac * height
        z = ((remaining - height // 2) / sigma) ** 2
        # every weight stays positive so the draw never runs out of rows
        pdf = np.maximum(np.exp(-0.5 * (z - z.min())), np.finfo(float).tiny)
        pdf = pdf / pdf.sum()
        rng = np.random.default_rng(seed)
        drawn = rng.choice(remaining, size=n_draw, replace=False, p=pdf)
        selected[drawn] = True

    mask = np.repeat(selected[:, None], width, axis=1).astype(np.float64)

    return SamplingMask(mask, acceleration=acceleration,
                        num_center_lines=num_center,
                        sigma_frac=sigma_frac, seed=seed)


def mask_array(mask, shape: Sequence[int]) -> np.ndarray:
    '''
    Boolean mask broadcastable against a tensor of ``shape``
    (``[..., H, W]``).

    Parameters
    ----------
    mask:
        :class:`SamplingMask`, ``List[SamplingMask]`` (one per batch item)
        OR array of shape ``[H, W]`` / ``[B, H, W]`` / ``shape``
    '''
    if isinstance(mask, SamplingMask):
        arr = mask.mask
    elif isinstance(mask, (list, tuple)):
        arr = np.stack([m.mask if isinstance(m, SamplingMask) else
                        np.asarray(m) for m in mask])
    else:
        arr = np.asarray(mask)
    if not np.isin(arr, [0, 1]).all():
        raise ValueError('mask must be binary')
    arr = arr.astype(bool)
    if arr.shape[-2:] != tuple(shape[-2:]):
        raise ValueError('mask shape {} does not match data shape '
                         '{}'.format(arr.shape, tuple(shape)))
    if arr.ndim == 3 and len(shape) == 4:
        arr = arr[:, None]
    try:
        np.broadcast_shapes(arr.shape, tuple(shape))
    except ValueError:
        raise ValueError('mask shape {} does not broadcast to '
                         '{}'.format(arr.shape, tuple(shape)))
    return arr


def undersample(y_f: ComplexTensor, mask) -> ComplexTensor:
    '''
    Zero-filled undersampled k-space ``y_u = y_f * mask``
    '''
    m = mask_array(mask, y_f.shape)
    return ComplexTensor(np.where(m, y_f.re, 0.), np.where(m, y_f.im, 0.))


def zero_fill_recon(y_u: ComplexTensor, mask=None) -> ComplexTensor:
    '''
    Zero-filled reconstruction ``x_u = ifft2(y_u)``
    '''
    if mask is not None:
        y_u = undersample(y_u, mask)
    return ifft2(y_u)


def simulate_acquisition(x_f: ComplexTensor, mask):
    '''
    Retrospective undersampling of a fully sampled image

    Returns
    -------
    ``(x_u, y_u)``
        zero-filled image and undersampled k-space
    '''
    y_u = undersample(fft2(x_f), mask)
    return zero_fill_recon(y_u), y_u


def save_mask(path: str, mask: SamplingMask):
    '''
    Save mask as PNG (``.png`` suffix) or as TensorFile (any other suffix)
    '''
    if path.endswith('.png'):
        save_magnitude_png(path, ComplexTensor(mask.mask), vmax=1.)
    else:
        save_tensor(path, ComplexTensor(mask.mask))


def load_mask(path: str) -> SamplingMask:
    '''
    Load mask written by :func:`save_mask`
    '''
    if path.endswith('.png'):
        arr = (load_png(path) > 0.5).astype(np.float64)
    else:
        arr = load_tensor(path).re
    arr = np.squeeze(arr)
    mask = SamplingMask(arr)
    rows = len(mask.selected_rows())
    mask.acceleration = arr.shape[0] / rows if rows else float('inf')
    return mask
