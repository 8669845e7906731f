'''
Desk-scale experimental protocol on synthetic phantoms: the proposed
model and its ablations trained at 4x and 6x acceleration, each
evaluated at 4x and 6x against the zero-filled input.
'''

import argparse
import os
import pandas as pd
from multiprocessing import cpu_count
from typing import Dict, List, Optional
from ml_mri.data_loaders.phantoms import PhantomData, phantom_seed
from ml_mri.network import NetworkConfig
from ml_mri.optim import TrainConfig
from ml_mri.pipelines import ReconstructionPipeline
from ml_mri.utils import load_config


OUT_NAME = 'desk_protocol'
ACCELERATIONS = [4, 6]
VARIANTS = {
    'proposed': {'dcl': True, 'lam': 2.},
    'no_dcl': {'dcl': False, 'lam': 2.},
    'no_ssim': {'dcl': True, 'lam': 0.},
}
# desk-scale learning rate, the full-scale protocol uses 5e-5
DESK_LR = 1e-3


def split_index(train_count: int, test_count: int, seed: int=0):
    '''
    Phantom seeds of disjoint training and test sets
    '''
    seeds = [phantom_seed(seed, k) for k in range(train_count + test_count)]
    return seeds[:train_count], seeds[train_count:]


def desk_pipeline(variant: str,
                  acceleration: float,
                  size: int=64,
                  growth: int=8,
                  features: int=16,
                  epochs: int=30,
                  batch_size: int=5,
                  lr: float=DESK_LR,
                  seed: int=0,
                  n_jobs: int=cpu_count()) -> ReconstructionPipeline:
    '''
    Untrained pipeline of one protocol cell. Every cell shares
    initialization, shuffling and mask seeds.
    '''
    params = VARIANTS[variant]
    network_config = NetworkConfig(growth=growth, features=features,
                                   dcl=params['dcl'], seed=seed)
    train_config = TrainConfig(epochs=epochs, batch_size=batch_size,
                               lam=params['lam'], acceleration=acceleration,
                               seed=seed, mask_seed=seed, lr=lr)
    data = PhantomData(size=size, n_jobs=n_jobs)

    return ReconstructionPipeline(data, network_config, train_config)


def _row(model: str, train_accel, test_accel, aggregate: Dict) -> Dict:
    row = {'model': model, 'train_accel': train_accel,
           'test_accel': test_accel}
    row.update(aggregate)
    return row


def run_protocol(variants: Optional[List[str]]=None,
                 accelerations: List[float]=ACCELERATIONS,
                 size: int=64,
                 train_count: int=40,
                 test_count: int=10,
                 epochs: int=30,
                 growth: int=8,
                 features: int=16,
                 batch_size: int=5,
                 lr: float=DESK_LR,
                 seed: int=0,
                 n_jobs: int=cpu_count(),
                 verbose: bool=False) -> pd.DataFrame:
    '''
    Train every variant at every acceleration and evaluate each model at
    every acceleration on held-out phantoms

    Returns
    -------
    ``pd.DataFrame``
        mean ``ssim``, ``mse`` and ``pratts_fom`` per
        ``(model, train_accel, test_accel)``; zero-filled inputs are
        listed as model ``zero_filled``
    '''
    variants = list(VARIANTS) if variants is None else variants
    train_index, test_index = split_index(train_count, test_count, seed)
    rows = []
    zero_filled = {}
    for variant in variants:
        for train_accel in accelerations:
            if verbose:
                print('training {} at {}x'.format(variant, train_accel))
            pipeline = desk_pipeline(variant, train_accel, size, growth,
                                     features, epochs, batch_size, lr, seed,
                                     n_jobs)
            pipeline.fit(train_index, verbose=verbose)
            for test_accel in accelerations:
                recon, baseline = pipeline.evaluate(test_index, test_accel,
                                                    mask_seed=seed)
                rows.append(_row(variant, train_accel, test_accel,
                                 recon.aggregate()))
                zero_filled[test_accel] = baseline.aggregate()

    for test_accel in accelerations:
        if test_accel in zero_filled:
            rows.append(_row('zero_filled', None, test_accel,
                             zero_filled[test_accel]))

    return pd.DataFrame(rows)


def main(out_path: Optional[str]=None, verbose: bool=True, **kwargs):
    '''
    Run the protocol and save the result table as
    ``desk_protocol.csv``. Result directory path can be changed in
    `~/.ml_mri/config.json` ``out_path``
    '''
    if out_path is None:
        out_path = load_config()['out_path']
    result = run_protocol(verbose=verbose, **kwargs)
    print(result)
    os.makedirs(out_path, exist_ok=True)
    result.to_csv(os.path.join(out_path, '{}.csv'.format(OUT_NAME)),
                  index=False)

    return result


if __name__ == '__main__':
    parser = argparse.ArgumentParser()
    arg = parser.add_argument
    arg('--out_path', type=str)
    arg('--epochs', type=int)
    arg('--train_count', type=int)
    arg('--test_count', type=int)
    arg('--seed', type=int)
    args = vars(parser.parse_args())
    args = {key: args[key] for key in args if args[key] is not None}
    main(**args)
