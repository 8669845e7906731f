'''
Complex dense fully convolutional reconstruction network with a
data-consistency head, and the checkpoint container for it.

Wiring (``s = 1..4``, ``F_s`` the stage width)::

    x_u -> enc1 -> pool -> enc2 -> pool -> enc3 -> pool -> enc4 -> pool
        -> bottleneck
        -> up -> [., enc4] -> dec1 -> up -> [., enc3] -> dec2
        -> up -> [., enc2] -> dec3 -> up -> [., enc1] -> dec4
        -> recon -> x~_r -> dcl -> x_r

Every stage is a dense block followed by a ``1x1`` transition convolution
mapping the block output to ``F_s`` channels. Skips concatenate the
encoder transition output in front of the decoder block input.
'''

import json
import struct
import numpy as np
from collections import OrderedDict
from typing import Dict, List, Optional, Tuple, Union
from .ctensor import ComplexTensor, fft2, ifft2
from .layers import ComplexConv2d, DenseBlock, CMaxPool2, Upsample2, \
                    split_channels
from .sampling import mask_array
from .utils import ConfigError, int_hash_of_str, check_create_folder


NUM_STAGES = 4


class NetworkConfig:
    '''
    Hyper-parameters of :class:`CdfNet`
    '''
    def __init__(self,
                 growth: int=8,
                 features: Union[int, List[int]]=16,
                 kernel_size: int=3,
                 dcl: bool=True,
                 seed: int=0,
                 bn_momentum: float=0.9,
                 bn_eps: float=1e-6,
                 init: str='he',
                 num_layers: int=3):
        '''
        Parameters
        ----------
        growth:
            output channels of every dense unit
        features:
            channel width after each stage transition,
            one value for all stages OR four per-stage values
        kernel_size:
            odd kernel size of dense unit convolutions
        dcl:
            apply data-consistency layer after the reconstruction layer
        seed:
            base seed of weight initialization
        bn_momentum, bn_eps:
            complex batch normalization parameters
        init:
            weight initialization criterion, ``'he'`` or ``'glorot'``
        num_layers:
            conv -> BN -> CReLU units per dense block
        '''
        self.growth = growth
        self.features = features
        self.kernel_size = kernel_size
        self.dcl = dcl
        self.seed = seed
        self.bn_momentum = bn_momentum
        self.bn_eps = bn_eps
        self.init = init
        self.num_layers = num_layers

    @classmethod
    def full_scale(cls, **kwargs) -> 'NetworkConfig':
        params = {'growth': 32, 'features': 32}
        params.update(kwargs)
        return cls(**params)

    def stage_features(self) -> List[int]:
        if isinstance(self.features, (list, tuple)):
            return [int(x) for x in self.features]
        return [int(self.features)] * NUM_STAGES

    def validate(self) -> List[str]:
        problems = []

        def positive_int(name, value):
            if not (isinstance(value, (int, np.integer))
                    and not isinstance(value, bool) and value > 0):
                problems.append('{} must be a positive integer, '
                                'got {}'.format(name, value))

        positive_int('growth', self.growth)
        positive_int('num_layers', self.num_layers)
        if isinstance(self.features, (list, tuple)):
            if len(self.features) != NUM_STAGES:
                problems.append('features must hold {} values, got '
                                '{}'.format(NUM_STAGES, len(self.features)))
            for value in self.features:
                positive_int('features', value)
        else:
            positive_int('features', self.features)
        positive_int('kernel_size', self.kernel_size)
        if isinstance(self.kernel_size, (int, np.integer)) and \
                self.kernel_size % 2 == 0:
            problems.append('kernel_size must be odd, '
                            'got {}'.format(self.kernel_size))
        if not isinstance(self.dcl, bool):
            problems.append('dcl must be a boolean, got {}'.format(self.dcl))
        if not isinstance(self.seed, (int, np.integer)):
            problems.append('seed must be an integer, got {}'.format(self.seed))
        if not 0 < self.bn_momentum < 1:
            problems.append('bn_momentum must be in (0, 1), '
                            'got {}'.format(self.bn_momentum))
        if not self.bn_eps > 0:
            problems.append('bn_eps must be positive, '
                            'got {}'.format(self.bn_eps))
        if self.init not in ('he', 'glorot'):
            problems.append("init must be 'he' or 'glorot', "
                            "got {}".format(self.init))
        return problems

    def check(self):
        problems = self.validate()
        if problems:
            raise ConfigError(problems)

    def to_dict(self) -> Dict:
        features = self.features
        if isinstance(features, tuple):
            features = list(features)
        return {'growth': self.growth,
                'features': features,
                'kernel_size': self.kernel_size,
                'dcl': self.dcl,
                'seed': self.seed,
                'bn_momentum': self.bn_momentum,
                'bn_eps': self.bn_eps,
                'init': self.init,
                'num_layers': self.num_layers}

    @classmethod
    def from_dict(cls, data: Dict) -> 'NetworkConfig':
        return cls(**{key: data[key] for key in cls().to_dict() if key in data})


def dcl(x_tilde: ComplexTensor, y_u: ComplexTensor, mask) -> ComplexTensor:
    '''
    Data-consistency layer: replace the k-space of ``x_tilde`` by the
    acquired samples ``y_u`` on the sampled set and transform back.
    Has no learnable parameters.

    Parameters
    ----------
    x_tilde:
        intermediate reconstruction ``[..., H, W]``
    y_u:
        undersampled k-space with the shape of ``x_tilde``
    mask:
        :class:`~ml_mri.sampling.SamplingMask` or binary array
    '''
    if y_u.shape != x_tilde.shape:
        raise ValueError('k-space shape {} does not match image shape '
                         '{}'.format(y_u.shape, x_tilde.shape))
    m = mask_array(mask, x_tilde.shape)
    y_tilde = fft2(x_tilde)
    y_r = ComplexTensor(np.where(m, y_u.re, y_tilde.re),
                        np.where(m, y_u.im, y_tilde.im))
    return ifft2(y_r)


def dcl_backward(grad_x_r: ComplexTensor, mask) -> ComplexTensor:
    '''
    Gradient of :func:`dcl` with respect to ``x_tilde``.
    Sampled bins come from data, so they pass no gradient.
    '''
    m = mask_array(mask, grad_x_r.shape)
    g = fft2(grad_x_r)
    g = ComplexTensor(np.where(m, 0., g.re), np.where(m, 0., g.im))
    return ifft2(g)


def consistency_error(x_r: ComplexTensor, y_u: ComplexTensor, mask) -> float:
    '''
    Max deviation of ``fft2(x_r)`` from the acquired samples on the
    sampled set
    '''
    m = mask_array(mask, x_r.shape)
    diff = fft2(x_r) - y_u
    return float(np.max(np.where(m, np.hypot(diff.re, diff.im), 0.)))


class _Stage:
    def __init__(self, name: str, in_channels: int, out_channels: int,
                 config: NetworkConfig):
        self.name = name
        seed = int_hash_of_str('{}_{}'.format(config.seed, name))
        self.block = DenseBlock(in_channels, config.growth,
                                kernel_size=config.kernel_size,
                                num_layers=config.num_layers,
                                bn_momentum=config.bn_momentum,
                                bn_eps=config.bn_eps,
                                init=config.init,
                                seed=seed)
        self.transition = ComplexConv2d(
                self.block.out_channels, out_channels, kernel_size=1,
                init=config.init,
                seed=int_hash_of_str('{}_{}.transition'.format(config.seed,
                                                              name)))

    def named_leaves(self):
        yield from self.block.named_leaves('{}.block.'.format(self.name))
        yield '{}.transition'.format(self.name), self.transition

    def forward(self, x: ComplexTensor, training: bool) -> ComplexTensor:
        return self.transition.forward(self.block.forward(x, training),
                                       training)

    def backward(self, grad: ComplexTensor) -> ComplexTensor:
        return self.block.backward(self.transition.backward(grad))


class CdfNet:
    '''
    Complex dense fully convolutional network ``f`` mapping a
    zero-filled image ``[B, 1, H, W]`` to a reconstruction of the same
    shape. ``H`` and ``W`` must be divisible by 16.
    '''
    def __init__(self, config: Optional[NetworkConfig]=None):
        '''
        Parameters
        ----------
        config:
            network hyper-parameters
            OR ``None`` (defaults of :class:`NetworkConfig`)
        '''
        if config is None:
            config = NetworkConfig()
        config.check()
        self.config = config
        features = config.stage_features()

        self.encoders = []
        self.pools = []
        in_channels = 1
        for s in range(NUM_STAGES):
            self.encoders.append(_Stage('enc{}'.format(s + 1), in_channels,
                                        features[s], config))
            self.pools.append(CMaxPool2())
            in_channels = features[s]

        self.bottleneck = _Stage('bottleneck', in_channels, in_channels,
                                 config)

        self.decoders = []
        self.upsamples = []
        for j in range(NUM_STAGES):
            s = NUM_STAGES - 1 - j
            self.decoders.append(_Stage('dec{}'.format(j + 1),
                                        in_channels + features[s],
                                        features[s], config))
            self.upsamples.append(Upsample2())
            in_channels = features[s]

        self.recon = ComplexConv2d(in_channels, 1, kernel_size=1,
                                   init=config.init,
                                   seed=int_hash_of_str('{}_recon'.format(
                                                               config.seed)))
        self._mask = None
        self._skip_channels = None

    def named_leaves(self):
        for stage in self.encoders:
            yield from stage.named_leaves()
        yield from self.bottleneck.named_leaves()
        for stage in self.decoders:
            yield from stage.named_leaves()
        yield 'recon', self.recon

    def _collect(self, attr: str) -> Dict[str, np.ndarray]:
        result = OrderedDict()
        for name, leaf in self.named_leaves():
            for key, value in getattr(leaf, attr).items():
                result['{}.{}'.format(name, key)] = value
        return result

    def parameters(self) -> Dict[str, np.ndarray]:
        return self._collect('params')

    def gradients(self) -> Dict[str, np.ndarray]:
        return self._collect('grads')

    def buffers(self) -> Dict[str, np.ndarray]:
        return self._collect('buffers')

    def _assign(self, attr: str, values: Dict[str, np.ndarray]):
        leaves = dict(self.named_leaves())
        for full_name, value in values.items():
            name, key = full_name.rsplit('.', 1)
            if name not in leaves or key not in getattr(leaves[name], attr):
                raise KeyError('unknown tensor {}'.format(full_name))
            target = getattr(leaves[name], attr)
            if np.shape(value) != target[key].shape:
                raise ValueError('{} has shape {}, expected {}'.format(
                        full_name, np.shape(value), target[key].shape))
            target[key] = np.array(value, dtype=np.float64)

    def set_parameters(self, params: Dict[str, np.ndarray]):
        self._assign('params', params)

    def set_buffers(self, buffers: Dict[str, np.ndarray]):
        self._assign('buffers', buffers)

    def num_parameters(self) -> int:
        return int(sum(x.size for x in self.parameters().values()))

    def _check_input(self, x: ComplexTensor):
        if x.ndim != 4 or x.shape[1] != 1:
            raise ValueError('expected input of shape [B, 1, H, W], '
                             'got {}'.format(x.shape))
        height, width = x.shape[2:]
        if height % 16 or width % 16:
            raise ValueError('spatial extents must be divisible by 16, '
                             'got {}x{}'.format(height, width))

    def forward(self,
                x_u: ComplexTensor,
                mask=None,
                y_u: Optional[ComplexTensor]=None,
                training: bool=True) -> Tuple[ComplexTensor, ComplexTensor]:
        '''
        Parameters
        ----------
        x_u:
            zero-filled image ``[B, 1, H, W]``
        mask:
            sampling mask, required when the data-consistency layer
            is enabled
        y_u:
            undersampled k-space, required when the data-consistency layer
            is enabled
        training:
            use batch statistics and update running statistics of
            batch normalization

        Returns
        -------
        ``(x_r, x_tilde)``
            final and intermediate reconstructions
        '''
        self._check_input(x_u)
        if self.config.dcl and (mask is None or y_u is None):
            raise ValueError('mask and undersampled k-space are required '
                             'when the data-consistency layer is enabled')

        h = x_u
        skips = []
        for stage, pool in zip(self.encoders, self.pools):
            h = stage.forward(h, training)
            skips.append(h)
            h = pool.forward(h, training)

        h = self.bottleneck.forward(h, training)

        self._skip_channels = []
        for stage, up, skip in zip(self.decoders, self.upsamples,
                                   reversed(skips)):
            h = up.forward(h, training)
            self._skip_channels.append((h.shape[1], skip.shape[1]))
            h = stage.forward(ComplexTensor.concat([h, skip], axis=1),
                              training)

        x_tilde = self.recon.forward(h, training)
        if not self.config.dcl:
            self._mask = None
            return x_tilde, x_tilde

        self._mask = mask
        return dcl(x_tilde, y_u, mask), x_tilde

    def backward(self, grad_x_r: ComplexTensor) -> ComplexTensor:
        '''
        Backpropagate ``dL/dx_r`` through the last :meth:`forward` call.
        Fills ``grads`` of every layer.

        Returns
        -------
        ``ComplexTensor``
            gradient with respect to the network input
        '''
        g = grad_x_r
        if self.config.dcl:
            g = dcl_backward(g, self._mask)
        g = self.recon.backward(g)

        skip_grads = []
        for j in reversed(range(NUM_STAGES)):
            g = self.decoders[j].backward(g)
            g, skip_grad = split_channels(g, self._skip_channels[j])
            skip_grads.append(skip_grad)
            g = self.upsamples[j].backward(g)

        g = self.bottleneck.backward(g)

        # skip_grads now runs from enc1 to enc4
        for s in reversed(range(NUM_STAGES)):
            g = self.pools[s].backward(g) + skip_grads[s]
            g = self.encoders[s].backward(g)

        return g


def forward(x_u: ComplexTensor,
            net: CdfNet,
            mask=None,
            y_u: Optional[ComplexTensor]=None,
            training: bool=False) -> Tuple[ComplexTensor, ComplexTensor]:
    '''
    Reconstruct ``x_u``, returns ``(x_r, x_tilde)``
    '''
    return net.forward(x_u, mask, y_u, training=training)


CHECKPOINT_MAGIC = b'MLMRICKP'
CHECKPOINT_VERSION = 1
_PREFIXES = ('param', 'buffer', 'optimizer')


class CheckpointError(ValueError):
    '''
    Raised for malformed or incompatible checkpoint files
    '''


def save_checkpoint(path: str,
                    net: CdfNet,
                    extra: Optional[Dict]=None,
                    optimizer_state: Optional[Dict[str, np.ndarray]]=None):
    '''
    Write network parameters, batch normalization statistics and
    optional optimizer accumulators.

    File layout::

        | magic        8 bytes  ``MLMRICKP``
        | version      uint32 (little-endian)
        | header_len   uint64 (little-endian)
        | header       UTF-8 JSON {config, extra, tensors}
        | payload      little-endian float64 tensors

    ``tensors`` lists ``{name, shape, offset, nbytes}`` with offsets
    relative to the payload start. Names are ``param/<layer>.<key>``,
    ``buffer/<layer>.<key>`` and ``optimizer/<layer>.<key>``.

    Parameters
    ----------
    extra:
        JSON-compatible metadata, i.e. training config and epoch
    optimizer_state:
        per-parameter arrays keyed like :meth:`CdfNet.parameters`
    '''
    groups = [('param', net.parameters()), ('buffer', net.buffers()),
              ('optimizer', optimizer_state or {})]
    tensors = []
    chunks = []
    offset = 0
    for prefix, values in groups:
        for name, value in values.items():
            data = np.ascontiguousarray(value, dtype='<f8').tobytes()
            tensors.append({'name': '{}/{}'.format(prefix, name),
                            'shape': list(np.shape(value)),
                            'offset': offset,
                            'nbytes': len(data)})
            chunks.append(data)
            offset += len(data)

    header = json.dumps({'config': net.config.to_dict(),
                         'extra': extra or {},
                         'tensors': tensors}, sort_keys=True).encode('utf-8')
    check_create_folder(path)
    with open(path, 'wb') as f:
        f.write(CHECKPOINT_MAGIC)
        f.write(struct.pack('<IQ', CHECKPOINT_VERSION, len(header)))
        f.write(header)
        for chunk in chunks:
            f.write(chunk)


def load_checkpoint(path: str) -> Tuple[CdfNet, Dict, Dict[str, np.ndarray]]:
    '''
    Read a checkpoint written by :func:`save_checkpoint`

    Returns
    -------
    ``(net, extra, optimizer_state)``
    '''
    with open(path, 'rb') as f:
        data = f.read()

    if data[:len(CHECKPOINT_MAGIC)] != CHECKPOINT_MAGIC:
        raise CheckpointError('{}: bad magic, not a checkpoint'.format(path))
    start = len(CHECKPOINT_MAGIC)
    fixed = struct.calcsize('<IQ')
    if len(data) < start + fixed:
        raise CheckpointError('{}: truncated header'.format(path))
    version, header_len = struct.unpack_from('<IQ', data, start)
    if version != CHECKPOINT_VERSION:
        raise CheckpointError('{}: version {} is not supported (expected '
                              '{})'.format(path, version, CHECKPOINT_VERSION))
    start += fixed
    if len(data) < start + header_len:
        raise CheckpointError('{}: truncated header'.format(path))
    try:
        header = json.loads(data[start:start + header_len].decode('utf-8'))
    except ValueError as e:
        raise CheckpointError('{}: unreadable header: {}'.format(path, e))
    payload = data[start + header_len:]
    if not isinstance(header, dict):
        raise CheckpointError('{}: header is not an object'.format(path))
    missing = [key for key in ('config', 'tensors') if key not in header]
    if missing:
        raise CheckpointError('{}: header lacks {}'.format(path, missing))
    fields = ('name', 'shape', 'offset', 'nbytes')
    if not all(isinstance(t, dict) and all(k in t for k in fields)
               for t in header['tensors']):
        raise CheckpointError('{}: tensor entries need {}'.format(path,
                                                                   fields))

    expected = sum(t['nbytes'] for t in header['tensors'])
    if len(payload) != expected:
        raise CheckpointError('{}: payload length mismatch, header needs {} '
                              'bytes, found {}'.format(path, expected,
                                                       len(payload)))

    net = CdfNet(NetworkConfig.from_dict(header['config']))
    groups = {prefix: OrderedDict() for prefix in _PREFIXES}
    for t in header['tensors']:
        prefix, name = t['name'].split('/', 1)
        if prefix not in groups:
            raise CheckpointError('{}: unknown tensor group {}'.format(
                                                                path, prefix))
        count = int(np.prod(t['shape'], dtype=np.int64))
        if t['nbytes'] != 8 * count or \
                t['offset'] + t['nbytes'] > len(payload):
            raise CheckpointError('{}: tensor {} does not fit its '
                                  'shape'.format(path, t['name']))
        value = np.frombuffer(payload, dtype='<f8', count=count,
                              offset=t['offset'])
        groups[prefix][name] = value.reshape(t['shape']).astype(np.float64)

    missing = set(net.parameters()) - set(groups['param'])
    if missing:
        raise CheckpointError('{}: missing parameters {}'.format(
                                                path, sorted(missing)))
    try:
        net.set_parameters(groups['param'])
        net.set_buffers(groups['buffer'])
    except (KeyError, ValueError) as e:
        raise CheckpointError('{}: incompatible tensors: {}'.format(path, e))

    return net, header.get('extra', {}), dict(groups['optimizer'])
