import os
import time
import pandas as pd
from typing import Dict, List, Optional, Tuple
from .ctensor import ComplexTensor
from .metrics import EvalReport, evaluate
from .network import CdfNet, NetworkConfig, load_checkpoint, save_checkpoint
from .optim import RmsPropState, TrainConfig, LOG_COLUMNS, train, \
                   empty_loss_log, loss_trend_violations
from .sampling import SamplingMask, make_mask, simulate_acquisition
from .utils import int_hash_of_str, load_config


def eval_mask_seed(mask_seed: int, name) -> int:
    return int_hash_of_str('eval_mask_{}_{}'.format(mask_seed, name))


class ReconstructionPipeline:
    '''
    Class incapsulate network training on fully sampled images during
    fit-phase and retrospective undersampling, reconstruction and
    evaluation during execute-phase.
    '''
    def __init__(self,
                 data,
                 network_config: Optional[NetworkConfig]=None,
                 train_config: Optional[TrainConfig]=None):
        '''
        Parameters
        ----------
        data:
            loader implementing ``load(index) -> ComplexTensor``
            returning fully sampled images ``[N, 1, H, W]``,
            i.e. :class:`~ml_mri.data_loaders.phantoms.PhantomData`
        network_config:
            network hyper-parameters
            OR ``None`` (defaults of :class:`~ml_mri.network.NetworkConfig`)
        train_config:
            training protocol
            OR ``None`` (defaults of :class:`~ml_mri.optim.TrainConfig`)
        '''
        self.data = data
        self.train_config = train_config or TrainConfig()
        self.core = {'net': CdfNet(network_config),
                     'state': None,
                     'epoch': 0,
                     'loss_log': empty_loss_log()}

    @property
    def net(self) -> CdfNet:
        return self.core['net']

    def _load(self, index) -> ComplexTensor:
        x_f = self.data.load(index)
        if x_f is None:
            raise ValueError('no data found for the index')
        return x_f

    def fit(self, index: List, out_path: Optional[str]=None,
            verbose: bool=False) -> pd.DataFrame:
        '''
        Train the network up to ``train_config.epochs``, continuing from
        the state of a loaded core

        Parameters
        ----------
        index:
            identifiers of training images for the data loader
        out_path:
            folder for checkpoints and loss log
            OR ``None`` (nothing is written)
        verbose:
            print per-epoch losses or not

        Returns
        -------
        ``pd.DataFrame``
            loss log of all epochs done so far
        '''
        x_f = self._load(index)
        state, loss_log = train(self.net, x_f, self.train_config,
                                out_path=out_path,
                                state=self.core['state'],
                                start_epoch=self.core['epoch'],
                                loss_log=self.core['loss_log'],
                                verbose=verbose)
        self.core['state'] = state
        self.core['epoch'] = max(self.core['epoch'], self.train_config.epochs)
        self.core['loss_log'] = loss_log

        return loss_log

    def masks(self, index: List, acceleration: Optional[float]=None,
              mask_seed: int=0, shape=None) -> List[SamplingMask]:
        '''
        Evaluation masks, one per index value
        '''
        cfg = self.train_config
        acceleration = cfg.acceleration if acceleration is None \
                       else acceleration
        return [make_mask(shape[0], shape[1], acceleration,
                          cfg.num_center_lines, cfg.sigma_frac,
                          seed=eval_mask_seed(mask_seed, name))
                for name in index]

    def reconstruct(self, x_u: ComplexTensor, masks: List[SamplingMask],
                    y_u: ComplexTensor) -> Tuple[ComplexTensor, ComplexTensor]:
        '''
        Eval-mode reconstruction in batches of ``train_config.batch_size``

        Returns
        -------
        ``(x_r, x_tilde)``
        '''
        step = self.train_config.batch_size
        x_r, x_tilde = [], []
        for start in range(0, x_u.shape[0], step):
            stop = start + step
            out, mid = self.net.forward(x_u[start:stop], masks[start:stop],
                                        y_u[start:stop], training=False)
            x_r.append(out)
            x_tilde.append(mid)

        return ComplexTensor.concat(x_r, axis=0), \
               ComplexTensor.concat(x_tilde, axis=0)

    def execute(self, index: List, acceleration: Optional[float]=None,
                mask_seed: int=0) -> Dict:
        '''
        Undersample images of ``index`` and reconstruct them

        Parameters
        ----------
        index:
            identifiers of images for the data loader
        acceleration:
            test acceleration
            OR ``None`` (training acceleration)
        mask_seed:
            base seed of evaluation masks

        Returns
        -------
        ``Dict``
            ``x_f``, ``x_u``, ``x_tilde``, ``x_r`` batches and ``masks``
        '''
        x_f = self._load(index)
        masks = self.masks(index, acceleration, mask_seed, x_f.shape[2:])
        x_u, y_u = simulate_acquisition(x_f, masks)
        x_r, x_tilde = self.reconstruct(x_u, masks, y_u)

        return {'x_f': x_f, 'x_u': x_u, 'x_tilde': x_tilde, 'x_r': x_r,
                'masks': masks}

    def evaluate(self, index: List, acceleration: Optional[float]=None,
                 mask_seed: int=0,
                 n_jobs: int=1) -> Tuple[EvalReport, EvalReport]:
        '''
        Metrics of reconstructions and of zero-filled inputs

        Returns
        -------
        ``(recon_report, zero_filled_report)``
        '''
        result = self.execute(index, acceleration, mask_seed)
        acceleration = self.train_config.acceleration if acceleration is None \
                       else acceleration
        config = {'mask_seed': mask_seed,
                  'acceleration': acceleration,
                  'train_acceleration': self.train_config.acceleration,
                  'lam': self.train_config.lam,
                  'sigma_frac': self.train_config.sigma_frac,
                  'dcl': self.net.config.dcl}
        names = [str(x) for x in index]
        recon = evaluate(result['x_r'], result['x_f'], names,
                         dict(config, input='x_r'), n_jobs=n_jobs)
        zero_filled = evaluate(result['x_u'], result['x_f'], names,
                               dict(config, input='x_u'), n_jobs=n_jobs)

        return recon, zero_filled

    def export_core(self, path: Optional[str]=None):
        '''
        Save network, optimizer state and loss log as a checkpoint

        Parameters
        ----------
        path:
            str with path to store pipeline core
            OR ``None`` (path will be generated automatically)
        '''
        if path is None:
            now = time.strftime("%d.%m.%y_%H:%M", time.localtime(time.time()))
            path = os.path.join(load_config()['models_path'],
                                'pipeline_{}.ckpt'.format(now))
        state = self.core['state'] or self.train_config.optimizer_state()
        extra = {'train_config': self.train_config.to_dict(),
                 'optimizer': state.to_dict(),
                 'epoch': self.core['epoch'],
                 'loss_log': self.core['loss_log'].to_dict(orient='records'),
                 'loss_trend_violations':
                     loss_trend_violations(self.core['loss_log'])}
        save_checkpoint(path, self.net, extra, state.accumulators)

    def load_core(self, path: str):
        '''
        Load pipeline core written by :meth:`export_core` or by training
        checkpoints. RMSProp accumulators and step count come from the
        checkpoint, learning rate, decay, eps and clipping from
        ``train_config``.

        Parameters
        ----------
        path:
            str with path to load pipeline core from
        '''
        net, extra, accumulators = load_checkpoint(path)
        cfg = self.train_config
        state = RmsPropState(cfg.lr, cfg.decay, cfg.eps, cfg.clip_norm,
                             accumulators=accumulators,
                             step=extra.get('optimizer', {}).get('step', 0))
        loss_log = pd.DataFrame(extra['loss_log'], columns=LOG_COLUMNS) \
                   if 'loss_log' in extra \
                   else empty_loss_log()
        self.core = {'net': net,
                     'state': state,
                     'epoch': extra.get('epoch', 0),
                     'loss_log': loss_log}
