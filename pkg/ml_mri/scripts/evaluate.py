'''
Evaluate reconstructions against ground truth images
'''

import argparse
import os
from typing import Dict, List, Optional
from ml_mri.data_loaders.tensor_file import load_tensor, list_tensor_files
from ml_mri.manifest import RunManifest, resolved_arguments, find_manifest
from ml_mri.metrics import EvalReport, evaluate, edge_map, \
                           normalized_magnitudes, save_error_map, \
                           save_edge_difference_map, DEFAULT_ALPHA, \
                           DEFAULT_THRESHOLD


def add_arguments(parser: argparse.ArgumentParser):
    arg = parser.add_argument
    arg('--recon', type=str, required=True,
        help='reconstruction TensorFile or folder of them')
    arg('--gt', type=str, required=True,
        help='ground truth TensorFile or folder with files of the same names')
    arg('--out', type=str, required=True, help='output folder')
    arg('--threshold', type=float, default=DEFAULT_THRESHOLD,
        help='relative Sobel threshold of edge maps')
    arg('--alpha', type=float, default=DEFAULT_ALPHA,
        help="distance penalty of Pratt's figure of merit")
    arg('--mask_seed', '--mask-seed', type=int, dest='mask_seed',
        help='mask seed echoed into the report, read from the '
             'reconstruction manifest by default')
    arg('--accel', type=float,
        help='acceleration echoed into the report, read from the '
             'reconstruction manifest by default')
    arg('--lambda', '--lam', type=float, dest='lam',
        help='SSIM loss weight echoed into the report, read from the '
             'reconstruction manifest by default')
    arg('--sigma_frac', '--sigma-frac', type=float, dest='sigma_frac',
        help='mask density width echoed into the report, read from the '
             'reconstruction manifest by default')
    arg('--n_jobs', type=int, default=1)
    arg('--verbose', action='store_true')


def provenance(recon: str, given: Dict) -> Dict:
    '''
    Settings of the run behind ``recon``: values of ``given`` that are
    ``None`` come from the manifest next to ``recon``
    '''
    run_config = (find_manifest(recon) or {}).get('config', {})
    return {key: run_config.get(key) if value is None else value
            for key, value in given.items()}


def main(recon: str,
         gt: str,
         out: str,
         threshold: float=DEFAULT_THRESHOLD,
         alpha: float=DEFAULT_ALPHA,
         mask_seed: Optional[int]=None,
         accel: Optional[float]=None,
         lam: Optional[float]=None,
         sigma_frac: Optional[float]=None,
         n_jobs: int=1,
         verbose: bool=False,
         argv: Optional[List[str]]=None) -> EvalReport:
    '''
    Write ``report.json``, ``report.csv``, per-image error maps
    (``error_maps/<name>.png``), edge-difference maps
    (``edge_maps/<name>.png``) and a manifest into ``out``

    Parameters
    ----------
    recon:
        reconstruction TensorFile or folder of them
    gt:
        ground truth TensorFile, or folder holding a file named like
        every reconstruction
    out:
        output folder
    threshold:
        relative Sobel threshold of edge maps
    alpha:
        distance penalty of Pratt's figure of merit
    mask_seed, accel, lam, sigma_frac:
        acquisition and training settings echoed into the report
        OR ``None`` (taken from the manifest of the run that wrote
        ``recon``, ``None`` if it has none)
    n_jobs:
        number of processes
    verbose:
        show progress or not
    argv:
        command line echoed into the manifest
    '''
    recon_files = list_tensor_files(recon)
    if os.path.isdir(gt):
        gt_files = dict(list_tensor_files(gt))
        missing = [name for name, _ in recon_files if name not in gt_files]
        if missing:
            raise FileNotFoundError('no ground truth in {} for {}'.format(
                                                              gt, missing))
        gt_paths = [gt_files[name] for name, _ in recon_files]
    else:
        if len(recon_files) != 1:
            raise ValueError('a single ground truth file given for {} '
                             'reconstructions'.format(len(recon_files)))
        gt_paths = [list_tensor_files(gt)[0][1]]

    names = [name for name, _ in recon_files]
    recons = [load_tensor(path) for _, path in recon_files]
    gts = [load_tensor(path) for path in gt_paths]
    config = {'threshold': threshold, 'alpha': alpha,
              'normalization': 'max_gt_magnitude'}
    config.update(provenance(recon, {'mask_seed': mask_seed,
                                     'acceleration': accel,
                                     'lam': lam,
                                     'sigma_frac': sigma_frac}))
    arguments = resolved_arguments({'recon': recon, 'gt': gt, 'out': out,
                                    'threshold': threshold, 'alpha': alpha,
                                    'mask_seed': mask_seed, 'accel': accel,
                                    'lam': lam, 'sigma_frac': sigma_frac,
                                    'n_jobs': n_jobs, 'verbose': verbose},
                                   ['recon', 'gt', 'out'])
    manifest = RunManifest('evaluate', argv, arguments, config=config,
                           inputs=[recon, gt])

    report = evaluate(recons, gts, names, config, threshold=threshold,
                      alpha=alpha, n_jobs=n_jobs, verbose=verbose)
    outputs = [os.path.join(out, 'report.json'),
               os.path.join(out, 'report.csv')]
    report.to_json(outputs[0])
    report.to_csv(outputs[1])

    for name, x_r, x_f in zip(names, recons, gts):
        p, q = normalized_magnitudes(x_r, x_f)
        error_path = os.path.join(out, 'error_maps', name + '.png')
        edge_path = os.path.join(out, 'edge_maps', name + '.png')
        save_error_map(error_path, q - p)
        save_edge_difference_map(edge_path, edge_map(p, threshold),
                                 edge_map(q, threshold))
        outputs.extend([error_path, edge_path])

    manifest.outputs = outputs
    manifest.write(out)
    if verbose:
        print(report.aggregate())

    return report


if __name__ == '__main__':
    parser = argparse.ArgumentParser()
    add_arguments(parser)
    args = vars(parser.parse_args())
    main(**args)
