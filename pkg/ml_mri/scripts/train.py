'''
Train the reconstruction network on a folder of TensorFile images
'''

import argparse
import os
import pandas as pd
from typing import Dict, List, Optional, Tuple, Union
from ml_mri.data_loaders.tensor_file import TensorFileData
from ml_mri.manifest import RunManifest, resolved_arguments
from ml_mri.network import NetworkConfig, load_checkpoint
from ml_mri.optim import TrainConfig, LOG_COLUMNS, last_checkpoint_path, \
                         loss_log_path
from ml_mri.pipelines import ReconstructionPipeline
from ml_mri.utils import ConfigError, load_config, load_json


# flat config keys of NetworkConfig, ``init_seed`` is its ``seed``
NETWORK_KEYS = {'growth': 'growth',
                'features': 'features',
                'kernel_size': 'kernel_size',
                'dcl': 'dcl',
                'init_seed': 'seed',
                'bn_momentum': 'bn_momentum',
                'bn_eps': 'bn_eps',
                'init': 'init',
                'num_layers': 'num_layers'}

# command line flag -> flat config key
FLAG_KEYS = {'epochs': 'epochs',
             'batch_size': 'batch_size',
             'lam': 'lam',
             'accel': 'acceleration',
             'center_lines': 'num_center_lines',
             'sigma_frac': 'sigma_frac',
             'seed': 'seed',
             'mask_seed': 'mask_seed',
             'augment_seed': 'augment_seed',
             'checkpoint_every': 'checkpoint_every',
             'lr': 'lr',
             'growth': 'growth',
             'features': 'features',
             'init_seed': 'init_seed'}


def split_config(flat: Dict) -> Tuple[NetworkConfig, TrainConfig]:
    '''
    Build network and training configs from a flat key-value document.
    All problems are reported together.

    Raises
    ------
    ConfigError
        unknown keys or invalid values
    '''
    train_keys = set(TrainConfig().to_dict())
    unknown = sorted(key for key in flat
                     if key not in NETWORK_KEYS and key not in train_keys)
    problems = ['unknown config key {}'.format(key) for key in unknown]

    network = NetworkConfig(**{NETWORK_KEYS[key]: value
                               for key, value in flat.items()
                               if key in NETWORK_KEYS})
    train = TrainConfig.from_dict(flat)
    problems.extend(network.validate())
    problems.extend(train.validate())
    if problems:
        raise ConfigError(problems)

    return network, train


def effective_config(network: NetworkConfig, train: TrainConfig) -> Dict:
    result = train.to_dict()
    for key, attr in NETWORK_KEYS.items():
        result[key] = network.to_dict()[attr]
    return result


def add_arguments(parser: argparse.ArgumentParser):
    arg = parser.add_argument
    arg('--config', type=str, help='flat JSON config file')
    arg('--data', type=str, default=load_config()['phantoms_data_path'],
        help='folder with training TensorFiles')
    arg('--out', type=str, required=True, help='output folder')
    arg('--resume', type=str, help='checkpoint to continue from')
    arg('--epochs', type=int)
    arg('--batch_size', '--batch-size', type=int, dest='batch_size')
    arg('--lambda', '--lam', type=float, dest='lam',
        help='weight of the SSIM loss, 0 disables it')
    arg('--no_dcl', '--no-dcl', action='store_true', dest='no_dcl',
        help='train without the data-consistency layer')
    arg('--accel', type=float, help='training acceleration factor')
    arg('--center_lines', '--center-lines', type=int, dest='center_lines')
    arg('--sigma_frac', '--sigma-frac', type=float, dest='sigma_frac')
    arg('--seed', type=int, help='shuffling seed')
    arg('--mask_seed', '--mask-seed', type=int, dest='mask_seed')
    arg('--augment', action='store_true')
    arg('--augment_seed', '--augment-seed', type=int, dest='augment_seed')
    arg('--checkpoint_every', '--checkpoint-every', type=int,
        dest='checkpoint_every')
    arg('--lr', type=float)
    arg('--growth', type=int)
    arg('--features', type=int)
    arg('--init_seed', '--init-seed', type=int, dest='init_seed')
    arg('--verbose', action='store_true')


def main(out: str,
         data: str=load_config()['phantoms_data_path'],
         config: Optional[Union[str, Dict]]=None,
         resume: Optional[str]=None,
         no_dcl: bool=False,
         augment: bool=False,
         verbose: bool=False,
         argv: Optional[List[str]]=None,
         **overrides) -> pd.DataFrame:
    '''
    Train on every TensorFile of ``data``. Writes periodic checkpoints,
    ``last.ckpt``, ``loss_log.csv`` and a manifest into ``out``.

    Parameters
    ----------
    out:
        output folder
    data:
        folder with training TensorFiles
    config:
        path to a flat JSON config OR the flat config itself
        OR ``None`` (defaults)
    resume:
        checkpoint to continue from, epoch numbering continues and
        network settings come from the checkpoint. Its training config
        is the base that ``config`` and ``overrides`` update.
        OR ``None``
    no_dcl:
        disable the data-consistency layer
    augment:
        random rigid augmentation of training images
    verbose:
        print per-epoch losses or not
    argv:
        command line echoed into the manifest
    overrides:
        command line values, keys of ``FLAG_KEYS``; ``None`` values are
        ignored

    Returns
    -------
    ``pd.DataFrame``
        loss log
    '''
    flat = {}
    if resume is not None:
        flat.update(load_checkpoint(resume)[1].get('train_config', {}))
    if isinstance(config, dict):
        flat.update(config)
    elif config is not None:
        flat.update(load_json(config))
    for flag, value in overrides.items():
        if flag not in FLAG_KEYS:
            raise TypeError('unexpected argument {}'.format(flag))
        if value is not None:
            flat[FLAG_KEYS[flag]] = value
    if no_dcl:
        flat['dcl'] = False
    if augment:
        flat['augment'] = True
    network_config, train_config = split_config(flat)

    loader = TensorFileData(data)
    index = loader.existing_index()
    if len(index) == 0:
        raise ValueError('no training TensorFiles in {}'.format(data))

    pipeline = ReconstructionPipeline(loader, network_config, train_config)
    if resume is not None:
        pipeline.load_core(resume)
        network_config = pipeline.net.config
        log_path = loss_log_path(out)
        if len(pipeline.core['loss_log']) == 0 and os.path.exists(log_path):
            log = pd.read_csv(log_path)
            pipeline.core['loss_log'] = log[log['epoch'] <
                                            pipeline.core['epoch']][LOG_COLUMNS]

    effective = effective_config(network_config, train_config)
    arguments = resolved_arguments({'out': out, 'data': data,
                                    'config': effective, 'resume': resume,
                                    'verbose': verbose},
                                   ['out', 'data', 'resume'])
    manifest = RunManifest('train', argv, arguments, config=effective,
                           seeds={'seed': train_config.seed,
                                  'mask_seed': train_config.mask_seed,
                                  'augment_seed': train_config.augment_seed,
                                  'init_seed': network_config.seed},
                           inputs=[data] + ([resume] if resume else []))

    os.makedirs(out, exist_ok=True)
    if verbose:
        print('training on {} images, {} parameters'.format(
                len(index), pipeline.net.num_parameters()))
    loss_log = pipeline.fit(index, out_path=out, verbose=verbose)
    pipeline.export_core(last_checkpoint_path(out))

    manifest.outputs = sorted(os.path.join(out, x) for x in os.listdir(out)
                              if x.endswith('.ckpt') or x.endswith('.csv'))
    manifest.write(out)

    return loss_log


if __name__ == '__main__':
    parser = argparse.ArgumentParser()
    add_arguments(parser)
    args = vars(parser.parse_args())
    main(**args)
