'''
Rigid image-level augmentation of complex images
'''

import numpy as np
from scipy import ndimage
from typing import Sequence
from ..ctensor import ComplexTensor


def _affine(plane: np.ndarray, matrix: np.ndarray, offset: np.ndarray):
    return ndimage.affine_transform(plane, matrix, offset=offset, order=1,
                                    mode='constant', cval=0.)


def rigid_transform(x: ComplexTensor,
                    angle: float,
                    shift: Sequence[float]=(0., 0.)) -> ComplexTensor:
    '''
    Rotate by ``angle`` degrees around the image center and translate by
    ``shift = (dy, dx)`` pixels. Bilinear interpolation is applied to the
    real and imaginary parts separately, samples outside the field of
    view are zero.

    Parameters
    ----------
    x:
        tensor of shape ``[..., H, W]``
    '''
    if x.ndim < 2:
        raise ValueError('expected at least 2 axes, got shape {}'.format(x.shape))
    theta = np.deg2rad(angle)
    cos, sin = np.cos(theta), np.sin(theta)
    # maps output coordinates to input coordinates
    inverse = np.array([[cos, sin], [-sin, cos]])
    center = (np.array(x.shape[-2:]) - 1) / 2.
    offset = center - inverse.dot(center + np.asarray(shift, dtype=np.float64))

    re = np.empty(x.shape)
    im = np.empty(x.shape)
    for idx in np.ndindex(*x.shape[:-2]):
        re[idx] = _affine(x.re[idx], inverse, offset)
        im[idx] = _affine(x.im[idx], inverse, offset)

    return ComplexTensor(re, im)


def rigid_augment(x: ComplexTensor,
                  seed: int,
                  max_rotation: float=10.,
                  max_shift: float=4.) -> ComplexTensor:
    '''
    Random rigid transform with rotation uniform in
    ``[-max_rotation, max_rotation]`` degrees and per-axis translation
    uniform in ``[-max_shift, max_shift]`` pixels

    Parameters
    ----------
    x:
        tensor of shape ``[..., H, W]``, every image gets the same transform
    seed:
        random seed, equal seeds give equal transforms
    '''
    rng = np.random.default_rng(seed)
    angle = rng.uniform(-max_rotation, max_rotation)
    shift = rng.uniform(-max_shift, max_shift, size=2)

    return rigid_transform(x, angle, shift)
