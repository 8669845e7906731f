'''
RMSProp and the training loop
'''

import os
import shutil
import sys
import numpy as np
import pandas as pd
from collections import OrderedDict
from typing import Dict, List, Optional, Tuple
from .ctensor import ComplexTensor
from .data_loaders.augment import rigid_augment
from .losses import LossConfig, composite_loss
from .network import CdfNet, consistency_error, save_checkpoint
from .sampling import SamplingConfig, make_mask, simulate_acquisition
from .utils import ConfigError, check_create_folder, int_hash_of_str, \
                   seeded_rng


LOG_COLUMNS = ['epoch', 'l2', 'ssim_loss', 'composite']
CONSISTENCY_TOL = 1e-8
TREND_WINDOW = 5
TREND_TOLERANCE = 1


class RmsPropState:
    '''
    RMSProp hyper-parameters and per-parameter accumulators ``v``
    '''
    def __init__(self,
                 lr: float=5e-5,
                 decay: float=0.9,
                 eps: float=1e-8,
                 clip_norm: Optional[float]=None,
                 accumulators: Optional[Dict[str, np.ndarray]]=None,
                 step: int=0):
        '''
        Parameters
        ----------
        lr:
            learning rate
        decay:
            accumulator coefficient ``rho``
        eps:
            denominator stabilizer
        clip_norm:
            max global gradient norm
            OR ``None`` (no clipping)
        accumulators:
            running mean squares keyed by parameter name
        step:
            number of updates done
        '''
        self.lr = lr
        self.decay = decay
        self.eps = eps
        self.clip_norm = clip_norm
        self.accumulators = OrderedDict(accumulators or {})
        self.step = step

    def to_dict(self) -> Dict:
        return {'lr': self.lr,
                'decay': self.decay,
                'eps': self.eps,
                'clip_norm': self.clip_norm,
                'step': self.step}

    @classmethod
    def from_dict(cls, data: Dict,
                  accumulators: Optional[Dict[str, np.ndarray]]=None):
        params = {key: data[key] for key in cls().to_dict() if key in data}
        return cls(accumulators=accumulators, **params)


def rmsprop_step(params: Dict[str, np.ndarray],
                 grads: Dict[str, np.ndarray],
                 state: RmsPropState) -> Tuple[Dict[str, np.ndarray],
                                               RmsPropState]:
    '''
    One RMSProp update

    ``v <- rho * v + (1 - rho) * g^2``,
    ``theta <- theta - lr * g / (sqrt(v) + eps)``

    Inputs are not modified.

    Returns
    -------
    ``(params, state)``
        updated parameters and optimizer state

    Raises
    ------
    FloatingPointError
        a gradient holds NaN or infinity
    '''
    for name, value in params.items():
        if name not in grads:
            raise ValueError('missing gradient for {}'.format(name))
        if np.shape(grads[name]) != np.shape(value):
            raise ValueError('gradient of {} has shape {}, expected '
                             '{}'.format(name, np.shape(grads[name]),
                                         np.shape(value)))
        if not np.isfinite(grads[name]).all():
            raise FloatingPointError('non-finite gradient in '
                                     '{}'.format(name))

    scale = 1.
    if state.clip_norm is not None:
        norm = np.sqrt(sum(np.sum(grads[name] ** 2) for name in params))
        if norm > state.clip_norm:
            scale = state.clip_norm / norm

    rho = state.decay
    new_params = OrderedDict()
    accumulators = OrderedDict()
    for name, value in params.items():
        g = grads[name] * scale
        v = state.accumulators.get(name, np.zeros_like(value))
        v = rho * v + (1 - rho) * g ** 2
        new_params[name] = value - state.lr * g / (np.sqrt(v) + state.eps)
        accumulators[name] = v

    new_state = RmsPropState(state.lr, state.decay, state.eps,
                             state.clip_norm, accumulators, state.step + 1)

    return new_params, new_state


class TrainConfig:
    '''
    Training protocol: optimizer, loss weight, on-the-fly sampling and
    the seeds that make a run reproducible
    '''
    def __init__(self,
                 epochs: int=50,
                 batch_size: int=5,
                 lam: float=2.,
                 acceleration: float=4.,
                 num_center_lines: int=8,
                 sigma_frac: float=0.15,
                 seed: int=0,
                 mask_seed: int=0,
                 augment: bool=False,
                 augment_seed: int=0,
                 checkpoint_every: int=10,
                 lr: float=5e-5,
                 decay: float=0.9,
                 eps: float=1e-8,
                 clip_norm: Optional[float]=None):
        '''
        Parameters
        ----------
        epochs:
            total number of passes over the training set
        batch_size:
            number of images per update
        lam:
            weight of the SSIM loss term
        acceleration, num_center_lines, sigma_frac:
            sampling scheme of the on-the-fly masks
        seed:
            shuffling seed
        mask_seed:
            base seed of on-the-fly masks
        augment:
            apply random rigid transforms to training images
        augment_seed:
            base seed of the augmentation
        checkpoint_every:
            checkpoint period in epochs
        lr, decay, eps, clip_norm:
            :class:`RmsPropState` parameters
        '''
        self.epochs = epochs
        self.batch_size = batch_size
        self.lam = lam
        self.acceleration = acceleration
        self.num_center_lines = num_center_lines
        self.sigma_frac = sigma_frac
        self.seed = seed
        self.mask_seed = mask_seed
        self.augment = augment
        self.augment_seed = augment_seed
        self.checkpoint_every = checkpoint_every
        self.lr = lr
        self.decay = decay
        self.eps = eps
        self.clip_norm = clip_norm

    def sampling_config(self) -> SamplingConfig:
        return SamplingConfig(self.acceleration, self.num_center_lines,
                              self.sigma_frac)

    def loss_config(self) -> LossConfig:
        return LossConfig(lam=self.lam)

    def optimizer_state(self) -> RmsPropState:
        return RmsPropState(self.lr, self.decay, self.eps, self.clip_norm)

    def validate(self) -> List[str]:
        problems = []

        def is_int(value):
            return isinstance(value, (int, np.integer)) and \
                   not isinstance(value, bool)

        if not (is_int(self.epochs) and self.epochs >= 0):
            problems.append('epochs must be a non-negative integer, '
                            'got {}'.format(self.epochs))
        if not (is_int(self.batch_size) and self.batch_size > 0):
            problems.append('batch_size must be a positive integer, '
                            'got {}'.format(self.batch_size))
        if not (is_int(self.checkpoint_every) and self.checkpoint_every > 0):
            problems.append('checkpoint_every must be a positive integer, '
                            'got {}'.format(self.checkpoint_every))
        for name in ['seed', 'mask_seed', 'augment_seed']:
            if not is_int(getattr(self, name)):
                problems.append('{} must be an integer, got {}'.format(
                                                name, getattr(self, name)))
        if not isinstance(self.augment, bool):
            problems.append('augment must be a boolean, '
                            'got {}'.format(self.augment))
        problems.extend(self.sampling_config().validate())
        problems.extend(self.loss_config().validate())
        if not self.lr > 0:
            problems.append('lr must be positive, got {}'.format(self.lr))
        if not 0 < self.decay < 1:
            problems.append('decay must be in (0, 1), '
                            'got {}'.format(self.decay))
        if not self.eps > 0:
            problems.append('eps must be positive, got {}'.format(self.eps))
        if self.clip_norm is not None and not self.clip_norm > 0:
            problems.append('clip_norm must be positive, '
                            'got {}'.format(self.clip_norm))
        return problems

    def check(self):
        problems = self.validate()
        if problems:
            raise ConfigError(problems)

    def to_dict(self) -> Dict:
        return {'epochs': self.epochs,
                'batch_size': self.batch_size,
                'lam': self.lam,
                'acceleration': self.acceleration,
                'num_center_lines': self.num_center_lines,
                'sigma_frac': self.sigma_frac,
                'seed': self.seed,
                'mask_seed': self.mask_seed,
                'augment': self.augment,
                'augment_seed': self.augment_seed,
                'checkpoint_every': self.checkpoint_every,
                'lr': self.lr,
                'decay': self.decay,
                'eps': self.eps,
                'clip_norm': self.clip_norm}

    @classmethod
    def from_dict(cls, data: Dict) -> 'TrainConfig':
        return cls(**{key: data[key] for key in cls().to_dict() if key in data})


def sample_mask_seed(mask_seed: int, epoch: int, index: int) -> int:
    return int_hash_of_str('mask_{}_{}_{}'.format(mask_seed, epoch, index))


def sample_augment_seed(augment_seed: int, epoch: int, index: int) -> int:
    return int_hash_of_str('augment_{}_{}_{}'.format(augment_seed, epoch,
                                                     index))


def epoch_masks(config: TrainConfig, epoch: int, indices: np.ndarray,
                height: int, width: int):
    '''
    Fresh masks of one epoch, one per training sample
    '''
    return [make_mask(height, width, config.acceleration,
                      config.num_center_lines, config.sigma_frac,
                      seed=sample_mask_seed(config.mask_seed, epoch, int(i)))
            for i in indices]


def checkpoint_path(out_path: str, epoch: int) -> str:
    return os.path.join(out_path, 'checkpoint_epoch{:04d}.ckpt'.format(epoch))


def last_checkpoint_path(out_path: str) -> str:
    return os.path.join(out_path, 'last.ckpt')


def loss_log_path(out_path: str) -> str:
    return os.path.join(out_path, 'loss_log.csv')


def empty_loss_log() -> pd.DataFrame:
    return pd.DataFrame(columns=LOG_COLUMNS)


def _log_frame(rows: List[Dict]) -> pd.DataFrame:
    if len(rows) == 0:
        return empty_loss_log()
    loss_log = pd.DataFrame(rows, columns=LOG_COLUMNS)
    loss_log['epoch'] = loss_log['epoch'].astype(int)
    return loss_log


def loss_trend_violations(loss_log: pd.DataFrame,
                          window: int=TREND_WINDOW) -> int:
    '''
    Number of epochs at which the ``window``-epoch moving average of the
    composite loss goes up
    '''
    smooth = loss_log['composite'].astype(float).rolling(window).mean()
    return int((smooth.dropna().diff() > 0).sum())


def train(net: CdfNet,
          data: ComplexTensor,
          config: Optional[TrainConfig]=None,
          out_path: Optional[str]=None,
          state: Optional[RmsPropState]=None,
          start_epoch: int=0,
          loss_log: Optional[pd.DataFrame]=None,
          verbose: bool=False) -> Tuple[RmsPropState, pd.DataFrame]:
    '''
    Train ``net`` in place on fully sampled images. Every epoch draws a
    fresh mask per sample, simulates the acquisition, and updates the
    network with RMSProp on the composite loss.

    Parameters
    ----------
    net:
        network to train
    data:
        fully sampled images ``[N, 1, H, W]``
    config:
        training protocol
        OR ``None`` (defaults of :class:`TrainConfig`)
    out_path:
        folder for checkpoints and ``loss_log.csv``
        OR ``None`` (nothing is written)
    state:
        optimizer state to continue from
        OR ``None`` (fresh accumulators)
    start_epoch:
        number of epochs already done, training runs epochs
        ``start_epoch .. config.epochs - 1``
    loss_log:
        log of the epochs already done
    verbose:
        print per-epoch losses or not

    Returns
    -------
    ``(state, loss_log)``
        final optimizer state and the per-epoch mean losses with columns
        ``epoch``, ``l2``, ``ssim_loss``, ``composite``

    Raises
    ------
    FloatingPointError
        the loss or a gradient becomes non-finite. Checkpoints written
        before stay untouched.
    '''
    config = config or TrainConfig()
    config.check()
    if data.ndim != 4 or data.shape[1] != 1:
        raise ValueError('expected training images of shape [N, 1, H, W], '
                         'got {}'.format(data.shape))
    if data.shape[0] == 0:
        raise ValueError('training set is empty')
    if state is None:
        state = config.optimizer_state()
    loss_config = config.loss_config()
    height, width = data.shape[2:]
    rows = [] if loss_log is None else loss_log.to_dict(orient='records')

    for epoch in range(start_epoch, config.epochs):
        order = seeded_rng('shuffle', config.seed, epoch).permutation(
                                                                data.shape[0])
        sums = {'l2': 0., 'ssim_loss': 0., 'composite': 0.}
        for start in range(0, len(order), config.batch_size):
            indices = order[start:start + config.batch_size]
            x_f = data[indices]
            if config.augment:
                x_f = ComplexTensor.concat([
                        rigid_augment(x_f[k:k + 1], sample_augment_seed(
                                      config.augment_seed, epoch, int(i)))
                        for k, i in enumerate(indices)], axis=0)
            masks = epoch_masks(config, epoch, indices, height, width)
            x_u, y_u = simulate_acquisition(x_f, masks)

            x_r, _ = net.forward(x_u, masks, y_u, training=True)
            if start == 0 and net.config.dcl:
                err = consistency_error(x_r, y_u, masks)
                if err > CONSISTENCY_TOL:
                    raise FloatingPointError('data consistency violated at '
                                             'epoch {}: {}'.format(epoch, err))

            total, grad, components = composite_loss(x_r, x_f, loss_config)
            if not np.isfinite(total):
                raise FloatingPointError('non-finite loss at epoch {}: '
                                         '{}'.format(epoch, total))
            net.backward(grad)
            params, state = rmsprop_step(net.parameters(), net.gradients(),
                                         state)
            net.set_parameters(params)

            sums['l2'] += components['l2'] * len(indices)
            sums['ssim_loss'] += components['ssim_loss'] * len(indices)
            sums['composite'] += total * len(indices)

        row = {'epoch': epoch}
        row.update({key: value / len(order) for key, value in sums.items()})
        rows.append(row)
        if verbose:
            print('epoch {}: l2 {:.6g}, ssim_loss {:.6g}, '
                  'composite {:.6g}'.format(epoch, row['l2'],
                                            row['ssim_loss'],
                                            row['composite']))

        done = epoch + 1
        if out_path is not None and (done % config.checkpoint_every == 0
                                     or done == config.epochs):
            extra = {'train_config': config.to_dict(),
                     'optimizer': state.to_dict(),
                     'epoch': done,
                     'loss_trend_violations':
                         loss_trend_violations(_log_frame(rows))}
            path = checkpoint_path(out_path, done)
            save_checkpoint(path, net, extra, state.accumulators)
            shutil.copyfile(path, last_checkpoint_path(out_path))
            _log_frame(rows).to_csv(loss_log_path(out_path), index=False)

    loss_log = _log_frame(rows)
    violations = loss_trend_violations(loss_log)
    if violations > TREND_TOLERANCE:
        print('warning: {}-epoch moving average of the training loss rose '
              '{} times'.format(TREND_WINDOW, violations), file=sys.stderr)
    if out_path is not None:
        log_path = loss_log_path(out_path)
        check_create_folder(log_path)
        loss_log.to_csv(log_path, index=False)

    return state, loss_log
