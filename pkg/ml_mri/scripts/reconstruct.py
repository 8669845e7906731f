'''
Reconstruct undersampled acquisitions with a trained network
'''

import argparse
import os
from tqdm import tqdm
from typing import Dict, List, Optional
from ml_mri.ctensor import ComplexTensor, fft2, ifft2
from ml_mri.data_loaders.tensor_file import load_tensor, save_tensor, \
                                           save_magnitude_png, \
                                           list_tensor_files, SUFFIX
from ml_mri.manifest import RunManifest, resolved_arguments, find_manifest
from ml_mri.network import forward, load_checkpoint
from ml_mri.sampling import load_mask, undersample
from ml_mri.utils import tqdm_colour


OUTPUT_FOLDERS = {'x_u': 'zero_filled', 'x_tilde': 'intermediate',
                  'x_r': 'recon'}


def add_arguments(parser: argparse.ArgumentParser):
    arg = parser.add_argument
    arg('--checkpoint', type=str, required=True)
    source = parser.add_mutually_exclusive_group(required=True)
    source.add_argument('--kspace', type=str,
                        help='k-space TensorFile or folder of them')
    source.add_argument('--image', type=str,
                        help='fully sampled image TensorFile or folder of '
                             'them, undersampled retrospectively')
    arg('--mask', type=str, required=True, help='mask TensorFile or PNG')
    arg('--out', type=str, required=True, help='output folder')
    arg('--verbose', action='store_true')


def reconstruct_one(net, y: ComplexTensor, mask) -> Dict[str, ComplexTensor]:
    '''
    Undersample k-space ``y`` of shape ``[H, W]`` with ``mask`` and
    reconstruct it

    Returns
    -------
    ``Dict``
        ``x_u``, ``x_tilde`` and ``x_r`` of shape ``[H, W]``
    '''
    if y.ndim != 2:
        raise ValueError('expected a single [H, W] tensor, got shape '
                         '{}'.format(y.shape))
    if y.shape != mask.shape:
        raise ValueError('mask shape {} does not match data shape '
                         '{}'.format(mask.shape, y.shape))
    height, width = y.shape
    y_u = undersample(y, mask).reshape(1, 1, height, width)
    x_u = ifft2(y_u)
    x_r, x_tilde = forward(x_u, net, mask, y_u, training=False)

    return {'x_u': x_u[0, 0], 'x_tilde': x_tilde[0, 0], 'x_r': x_r[0, 0]}


def main(checkpoint: str,
         mask: str,
         out: str,
         kspace: Optional[str]=None,
         image: Optional[str]=None,
         verbose: bool=False,
         argv: Optional[List[str]]=None) -> Dict[str, Dict]:
    '''
    Write zero-filled, intermediate and final reconstructions as
    TensorFiles and magnitude PNGs into ``out/zero_filled``,
    ``out/intermediate`` and ``out/recon``, and a manifest into ``out``

    Parameters
    ----------
    checkpoint:
        trained network
    mask:
        sampling mask TensorFile or PNG
    out:
        output folder
    kspace:
        k-space TensorFile or folder of them
    image:
        image TensorFile or folder of them, used instead of ``kspace``
    verbose:
        show progress or not
    argv:
        command line echoed into the manifest

    Returns
    -------
    ``Dict``
        reconstructions by input name
    '''
    if (kspace is None) == (image is None):
        raise ValueError('exactly one of kspace and image is required')
    source = kspace if kspace is not None else image
    files = list_tensor_files(source)
    net, extra, _ = load_checkpoint(checkpoint)
    sampling = load_mask(mask)
    mask_run = find_manifest(mask) or {}
    if mask_run.get('command') != 'make-mask':
        mask_run = {}
    config = {'network': net.config.to_dict(),
              'input': 'kspace' if kspace else 'image',
              'acceleration': sampling.acceleration,
              'mask_seed': mask_run.get('seeds', {}).get('seed'),
              'sigma_frac': mask_run.get('config', {}).get('sigma_frac'),
              'lam': extra.get('train_config', {}).get('lam')}
    arguments = resolved_arguments({'checkpoint': checkpoint, 'mask': mask,
                                    'out': out, 'kspace': kspace,
                                    'image': image, 'verbose': verbose},
                                   ['checkpoint', 'mask', 'out', 'kspace',
                                    'image'])
    manifest = RunManifest('reconstruct', argv, arguments, config=config,
                           seeds={'init_seed': net.config.seed},
                           inputs=[checkpoint, mask, source])

    result = {}
    for name, path in tqdm(files, disable=not verbose, colour=tqdm_colour()):
        x = load_tensor(path)
        y = x if kspace is not None else fft2(x)
        result[name] = reconstruct_one(net, y, sampling)
        for key, folder in OUTPUT_FOLDERS.items():
            base = os.path.join(out, folder, name)
            save_tensor(base + SUFFIX, result[name][key])
            save_magnitude_png(base + '.png', result[name][key])
            manifest.outputs.append(base + SUFFIX)

    os.makedirs(out, exist_ok=True)
    manifest.write(out)

    return result


if __name__ == '__main__':
    parser = argparse.ArgumentParser()
    add_arguments(parser)
    args = vars(parser.parse_args())
    main(**args)
