'''
Generate synthetic complex phantoms as TensorFiles
'''

import argparse
import os
from typing import List, Optional
from ml_mri.data_loaders.phantoms import PhantomData, phantom_seed
from ml_mri.data_loaders.tensor_file import save_tensor, SUFFIX
from ml_mri.manifest import RunManifest, resolved_arguments
from ml_mri.utils import load_config


def add_arguments(parser: argparse.ArgumentParser):
    arg = parser.add_argument
    arg('--count', type=int, default=10, help='number of phantoms')
    arg('--size', type=int, default=load_config()['default_size'],
        help='height and width, multiple of 16')
    arg('--seed', type=int, default=0, help='base seed')
    arg('--out', type=str, default=load_config()['phantoms_data_path'],
        help='output folder')
    arg('--n_jobs', type=int, default=1, help='number of processes')
    arg('--verbose', action='store_true')


def main(out: str=load_config()['phantoms_data_path'],
         count: int=10,
         size: int=load_config()['default_size'],
         seed: int=0,
         n_jobs: int=1,
         verbose: bool=False,
         argv: Optional[List[str]]=None) -> List[str]:
    '''
    Write ``count`` phantoms ``phantom_00000.ctns, ...`` of shape
    ``[size, size]`` and a manifest into ``out``.

    Parameters
    ----------
    out:
        output folder
    count:
        number of phantoms
    size:
        height and width, multiple of 16
    seed:
        base seed, phantom ``k`` uses a seed derived from ``(seed, k)``
    n_jobs:
        number of processes
    verbose:
        show progress or not
    argv:
        command line echoed into the manifest

    Returns
    -------
    ``List[str]``
        written TensorFile paths
    '''
    if count < 0:
        raise ValueError('count must be non-negative, got {}'.format(count))
    os.makedirs(out, exist_ok=True)
    arguments = resolved_arguments({'out': out, 'count': count, 'size': size,
                                    'seed': seed, 'n_jobs': n_jobs,
                                    'verbose': verbose}, ['out'])
    manifest = RunManifest('gen-phantoms', argv, arguments,
                           config={'count': count, 'size': size},
                           seeds={'seed': seed})
    seeds = [phantom_seed(seed, k) for k in range(count)]
    phantoms = PhantomData(size, n_jobs=n_jobs, verbose=verbose).load(seeds)

    paths = []
    for k in range(count):
        path = os.path.join(out, 'phantom_{:05d}{}'.format(k, SUFFIX))
        save_tensor(path, phantoms[k, 0])
        paths.append(path)

    manifest.outputs = paths
    manifest.write(out)
    if verbose:
        print('{} phantoms written to {}'.format(count, out))

    return paths


if __name__ == '__main__':
    parser = argparse.ArgumentParser()
    add_arguments(parser)
    args = vars(parser.parse_args())
    main(**args)
