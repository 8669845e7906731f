'''
TensorFile container for complex tensors and a loader over a folder
of such files.

File layout (all integers little-endian):

    | magic       8 bytes   ``MLMRITNS``
    | version     uint32    currently 1
    | dtype tag   8 bytes   ``cplxf64`` padded with a zero byte
    | ndim        uint32
    | shape       ndim x uint64
    | payload     interleaved (re, im) float64 pairs, row-major,
    |             ``16 * product(shape)`` bytes

Expected dataset structure:
        | phantoms
        | ├── phantom_00000.ctns
        | ├── phantom_00001.ctns
        | └── ...
'''

import os
import struct
import numpy as np
from matplotlib import image as mpimg
from typing import List, Optional, Tuple
from ..ctensor import ComplexTensor, magnitude
from ..utils import check_create_folder, load_config


MAGIC = b'MLMRITNS'
VERSION = 1
DTYPE_TAG = b'cplxf64\x00'
SUFFIX = '.ctns'


class TensorFileError(ValueError):
    '''
    Raised for malformed or corrupted tensor files
    '''


def save_tensor(path: str, x: ComplexTensor):
    '''
    Write ``x`` as TensorFile. Loading gives back a bitwise equal tensor.
    '''
    header = MAGIC + struct.pack('<I', VERSION) + DTYPE_TAG + \
             struct.pack('<I', x.ndim) + \
             struct.pack('<{}Q'.format(x.ndim), *x.shape)
    payload = np.empty(x.shape + (2,), dtype='<f8')
    payload[..., 0] = x.re
    payload[..., 1] = x.im
    check_create_folder(path)
    with open(path, 'wb') as f:
        f.write(header)
        f.write(payload.tobytes())


def _unpack(fmt: str, data: bytes, offset: int, what: str):
    size = struct.calcsize(fmt)
    if len(data) < offset + size:
        raise TensorFileError('truncated header: missing {}'.format(what))
    return struct.unpack_from(fmt, data, offset), offset + size


def load_tensor(path: str) -> ComplexTensor:
    '''
    Read a TensorFile written by :func:`save_tensor`

    Raises
    ------
    TensorFileError
        bad magic, unsupported version or dtype, truncated header,
        payload length not matching the header shape
    '''
    with open(path, 'rb') as f:
        data = f.read()

    if data[:len(MAGIC)] != MAGIC:
        raise TensorFileError('{}: bad magic, not a tensor file'.format(path))
    offset = len(MAGIC)
    (version,), offset = _unpack('<I', data, offset, 'version')
    if version != VERSION:
        raise TensorFileError('{}: version {} is not supported (expected '
                              '{})'.format(path, version, VERSION))
    (tag,), offset = _unpack('8s', data, offset, 'dtype tag')
    if tag != DTYPE_TAG:
        raise TensorFileError('{}: unsupported dtype tag {!r}'.format(path, tag))
    (ndim,), offset = _unpack('<I', data, offset, 'ndim')
    shape, offset = _unpack('<{}Q'.format(ndim), data, offset, 'shape')

    expected = 16 * int(np.prod(shape, dtype=np.int64))
    found = len(data) - offset
    if found != expected:
        raise TensorFileError('{}: payload length mismatch, header shape {} '
                              'needs {} bytes, found {}'.format(
                               path, list(shape), expected, found))

    payload = np.frombuffer(data, dtype='<f8', offset=offset)
    payload = payload.reshape(tuple(shape) + (2,))

    return ComplexTensor(payload[..., 0], payload[..., 1])


def save_magnitude_png(path: str, x: ComplexTensor, vmax: float=None):
    '''
    Grayscale PNG of ``|x|`` for inspection

    Parameters
    ----------
    x:
        tensor whose squeezed shape is ``[H, W]``
    vmax:
        intensity mapped to white
        OR ``None`` (max of ``|x|``)
    '''
    image = np.squeeze(magnitude(x))
    if image.ndim != 2:
        raise ValueError('expected a single image, got shape {}'.format(x.shape))
    check_create_folder(path)
    mpimg.imsave(path, image, cmap='gray', vmin=0.,
                 vmax=image.max() if vmax is None else vmax)


def load_png(path: str) -> np.ndarray:
    image = mpimg.imread(path)
    if image.ndim == 3:
        image = image[..., 0]
    return image.astype(np.float64)


class TensorFileData:
    '''
    Loader for a folder of TensorFiles holding single ``[H, W]`` images
    '''
    def __init__(self, data_path: Optional[str]=None):
        '''
        Parameters
        ----------
        data_path:
            path to the folder with ``*.ctns`` files.
            If None, than will be used ``phantoms_data_path``
            from `~/.ml_mri/config.json`
        '''
        if data_path is None:
            data_path = load_config()['phantoms_data_path']
        self.data_path = data_path

    def load(self, index: List[str]) -> ComplexTensor:
        '''
        Parameters
        ----------
        index:
            file names without suffix, i.e. ``['phantom_00000']``

        Returns
        -------
        ``ComplexTensor``
            images stacked as ``[len(index), 1, H, W]``
            OR ``None`` if no file was found
        '''
        result = []
        for name in index:
            path = os.path.join(self.data_path, '{}{}'.format(name, SUFFIX))
            if not os.path.exists(path):
                continue
            x = load_tensor(path)
            result.append(x.reshape(1, 1, *x.shape[-2:]))

        if len(result) == 0:
            return

        return ComplexTensor.concat(result, axis=0)

    def existing_index(self) -> List[str]:
        '''
        Returns
        -------
        ``List``
            existing index values that can be pushed to `load`
        '''
        index = [x[:-len(SUFFIX)] for x in os.listdir(self.data_path)
                 if x.endswith(SUFFIX)]
        return sorted(index)


def list_tensor_files(path: str) -> List[Tuple[str, str]]:
    '''
    ``(name, path)`` pairs of a single TensorFile or of every TensorFile
    in a folder, sorted by name

    Raises
    ------
    FileNotFoundError
        ``path`` does not exist
    '''
    if not os.path.exists(path):
        raise FileNotFoundError('no such file or folder: {}'.format(path))
    if os.path.isfile(path):
        name = os.path.basename(path)
        if name.endswith(SUFFIX):
            name = name[:-len(SUFFIX)]
        return [(name, path)]
    names = sorted(x[:-len(SUFFIX)] for x in os.listdir(path)
                   if x.endswith(SUFFIX))
    return [(name, os.path.join(path, name + SUFFIX)) for name in names]
