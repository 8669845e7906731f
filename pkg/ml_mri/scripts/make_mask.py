'''
Generate a Cartesian undersampling mask
'''

import argparse
import os
from typing import List, Optional
from ml_mri.manifest import RunManifest, resolved_arguments
from ml_mri.sampling import SamplingMask, make_mask, save_mask
from ml_mri.utils import load_config


MASK_NAME = 'mask'
FORMATS = {'ctns': ['.ctns'], 'png': ['.png'], 'both': ['.ctns', '.png']}


def add_arguments(parser: argparse.ArgumentParser):
    arg = parser.add_argument
    arg('--size', type=int, default=load_config()['default_size'],
        help='height and width of k-space')
    arg('--accel', type=float, default=4., help='acceleration factor')
    arg('--center_lines', '--center-lines', type=int, default=8,
        dest='center_lines', help='always sampled central rows')
    arg('--sigma_frac', '--sigma-frac', type=float, default=0.15,
        dest='sigma_frac', help='Gaussian width as a fraction of size')
    arg('--seed', type=int, default=0)
    arg('--format', type=str, default='both', choices=sorted(FORMATS),
        help='mask file format, TensorFile, PNG or both')
    arg('--out', type=str, required=True, help='output folder')
    arg('--verbose', action='store_true')


def main(out: str,
         size: int=load_config()['default_size'],
         accel: float=4.,
         center_lines: int=8,
         sigma_frac: float=0.15,
         seed: int=0,
         format: str='both',
         verbose: bool=False,
         argv: Optional[List[str]]=None) -> SamplingMask:
    '''
    Write the mask as ``mask.ctns`` and/or ``mask.png`` plus a manifest
    into ``out``

    Parameters
    ----------
    out:
        output folder
    size:
        height and width of k-space
    accel:
        acceleration factor
    center_lines:
        number of always sampled central rows
    sigma_frac:
        Gaussian width of the row density as a fraction of ``size``
    seed:
        random seed
    format:
        ``'ctns'``, ``'png'`` OR ``'both'``
    verbose:
        show summary or not
    argv:
        command line echoed into the manifest
    '''
    arguments = resolved_arguments({'out': out, 'size': size, 'accel': accel,
                                    'center_lines': center_lines,
                                    'sigma_frac': sigma_frac, 'seed': seed,
                                    'format': format, 'verbose': verbose},
                                   ['out'])
    manifest = RunManifest('make-mask', argv, arguments,
                           config={'size': size, 'accel': accel,
                                   'center_lines': center_lines,
                                   'sigma_frac': sigma_frac,
                                   'format': format},
                           seeds={'seed': seed})
    mask = make_mask(size, size, accel, center_lines, sigma_frac, seed)
    os.makedirs(out, exist_ok=True)
    paths = [os.path.join(out, MASK_NAME + suffix)
             for suffix in FORMATS[format]]
    for path in paths:
        save_mask(path, mask)

    manifest.outputs = paths
    manifest.write(out)
    if verbose:
        print('{} of {} rows selected'.format(len(mask.selected_rows()), size))

    return mask


if __name__ == '__main__':
    parser = argparse.ArgumentParser()
    add_arguments(parser)
    args = vars(parser.parse_args())
    main(**args)
