'''
Reconstruction quality metrics and evaluation reports
'''

import numpy as np
import pandas as pd
from multiprocessing import Pool
from matplotlib import image as mpimg
from scipy import ndimage
from tqdm import tqdm
from typing import Dict, List, Optional, Sequence, Union
from .ctensor import ComplexTensor, magnitude
from .losses import LossConfig, ssim
from .utils import check_create_folder, save_json, load_json


DEFAULT_THRESHOLD = 0.25
DEFAULT_ALPHA = 1. / 9
METRIC_COLUMNS = ['mse', 'ssim', 'pratts_fom']

GREEN = (0, 255, 0)
RED = (255, 0, 0)
BLUE = (0, 0, 255)


def mse(p: np.ndarray, q: np.ndarray) -> float:
    '''
    Mean of squared differences of two real images
    '''
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.shape != q.shape:
        raise ValueError('image shapes differ: {} vs {}'.format(p.shape,
                                                                q.shape))
    return float(np.mean((p - q) ** 2))


class EdgeMap:
    '''
    Binary edge indicator with the detector parameters that produced it
    '''
    def __init__(self, edges: np.ndarray, operator: str='sobel',
                 threshold: float=DEFAULT_THRESHOLD):
        self.edges = np.asarray(edges, dtype=bool)
        self.operator = operator
        self.threshold = threshold

    @property
    def shape(self):
        return self.edges.shape

    def count(self) -> int:
        return int(self.edges.sum())

    def is_empty(self) -> bool:
        return not self.edges.any()


def _edges(e: Union[EdgeMap, np.ndarray]) -> np.ndarray:
    return e.edges if isinstance(e, EdgeMap) else np.asarray(e, dtype=bool)


def edge_map(p: np.ndarray, threshold: float=DEFAULT_THRESHOLD) -> EdgeMap:
    '''
    Sobel gradient magnitude thresholded at ``threshold`` times its
    maximum. A constant image has no edges.
    '''
    p = np.asarray(p, dtype=np.float64)
    if not np.isfinite(p).all():
        raise ValueError('edge detection of a non-finite image')
    gy = ndimage.sobel(p, axis=0, mode='nearest')
    gx = ndimage.sobel(p, axis=1, mode='nearest')
    grad = np.hypot(gx, gy)
    peak = grad.max()
    if peak == 0:
        return EdgeMap(np.zeros(p.shape, dtype=bool), threshold=threshold)

    return EdgeMap(grad >= threshold * peak, threshold=threshold)


def pratts_fom(detected: Union[EdgeMap, np.ndarray],
               reference: Union[EdgeMap, np.ndarray],
               alpha: float=DEFAULT_ALPHA) -> float:
    '''
    Pratt's figure of merit

    ``FOM = 1 / max(N_ref, N_det) * sum_i 1 / (1 + alpha * d_i^2)``
    over detected pixels ``i``, where ``d_i`` is the exact Euclidean
    distance to the nearest reference edge pixel.
    An empty detected map scores 0.

    Parameters
    ----------
    detected:
        edges of the image under test
    reference:
        non-empty edges of the ground truth
    alpha:
        distance penalty
    '''
    det = _edges(detected)
    ref = _edges(reference)
    if det.shape != ref.shape:
        raise ValueError('edge map shapes differ: {} vs {}'.format(det.shape,
                                                                   ref.shape))
    if not ref.any():
        raise ValueError('reference edge map is empty')
    n_det = int(det.sum())
    if n_det == 0:
        return 0.

    dist = ndimage.distance_transform_edt(~ref)
    score = np.sum(1. / (1. + alpha * dist[det] ** 2))

    return float(score / max(int(ref.sum()), n_det))


def edge_difference_map(recon: Union[EdgeMap, np.ndarray],
                        gt: Union[EdgeMap, np.ndarray]) -> np.ndarray:
    '''
    Tri-colour overlay of two edge maps: green for matched ground-truth
    edges, red for missing ones and blue for hallucinated ones

    Returns
    -------
    ``np.ndarray``
        ``uint8`` RGB image ``[H, W, 3]``
    '''
    det = _edges(recon)
    ref = _edges(gt)
    if det.shape != ref.shape:
        raise ValueError('edge map shapes differ: {} vs {}'.format(det.shape,
                                                                   ref.shape))
    rgb = np.zeros(ref.shape + (3,), dtype=np.uint8)
    rgb[ref & det] = GREEN
    rgb[ref & ~det] = RED
    rgb[~ref & det] = BLUE

    return rgb


def save_edge_difference_map(path: str, recon, gt):
    check_create_folder(path)
    mpimg.imsave(path, edge_difference_map(recon, gt))


def error_map(x_r: ComplexTensor, x_f: ComplexTensor) -> np.ndarray:
    '''
    Signed magnitude error ``|x_f| - |x_r|``
    '''
    if x_r.shape != x_f.shape:
        raise ValueError('reconstruction shape {} does not match target '
                         'shape {}'.format(x_r.shape, x_f.shape))
    return np.squeeze(magnitude(x_f) - magnitude(x_r))


def save_error_map(path: str, error: np.ndarray, vmax: float=None):
    '''
    Heat image of a signed error, symmetric colour range around zero
    '''
    if vmax is None:
        vmax = float(np.abs(error).max()) or 1.
    check_create_folder(path)
    mpimg.imsave(path, error, cmap='bwr', vmin=-vmax, vmax=vmax)


def normalized_magnitudes(x_r: ComplexTensor, x_f: ComplexTensor):
    '''
    ``|x_r|`` and ``|x_f|`` divided by ``max |x_f|``
    '''
    q = np.squeeze(magnitude(x_f))
    p = np.squeeze(magnitude(x_r))
    if p.shape != q.shape or q.ndim != 2:
        raise ValueError('expected a pair of single images, got shapes {} '
                         'and {}'.format(x_r.shape, x_f.shape))
    peak = q.max()
    if peak == 0:
        raise ValueError('ground truth image is all zero')
    return p / peak, q / peak


def evaluate_pair(x_r: ComplexTensor,
                  x_f: ComplexTensor,
                  config: Optional[LossConfig]=None,
                  threshold: float=DEFAULT_THRESHOLD,
                  alpha: float=DEFAULT_ALPHA) -> Dict[str, float]:
    '''
    Metrics of one reconstruction against its ground truth on magnitude
    images normalized by ``max |x_f|``

    Returns
    -------
    ``Dict``
        ``mse``, ``ssim`` and ``pratts_fom``
    '''
    p, q = normalized_magnitudes(x_r, x_f)
    reference = edge_map(q, threshold)

    return {'mse': mse(p, q),
            'ssim': ssim(p, q, config, data_range=1.),
            'pratts_fom': pratts_fom(edge_map(p, threshold), reference, alpha)}


class EvalReport:
    '''
    Per-image metrics with the configuration they were produced under
    '''
    def __init__(self, images: pd.DataFrame, config: Optional[Dict]=None):
        '''
        Parameters
        ----------
        images:
            one row per image with columns ``name``, ``mse``, ``ssim``,
            ``pratts_fom``
        config:
            JSON-compatible echo of the producing configuration
        '''
        self.images = images
        self.config = config or {}

    def aggregate(self) -> Dict[str, float]:
        return {col: float(self.images[col].mean()) for col in METRIC_COLUMNS}

    def to_dict(self) -> Dict:
        return {'config': self.config,
                'images': self.images.to_dict(orient='records'),
                'aggregate': self.aggregate()}

    def to_json(self, path: str):
        save_json(path, self.to_dict())

    def to_csv(self, path: str):
        check_create_folder(path)
        self.images.to_csv(path, index=False)

    @classmethod
    def from_json(cls, path: str) -> 'EvalReport':
        data = load_json(path)
        images = pd.DataFrame(data['images'], columns=['name'] + METRIC_COLUMNS)
        return cls(images, data['config'])


def _evaluate_item(params):
    name, x_r, x_f, config, threshold, alpha = params
    row = {'name': name}
    row.update(evaluate_pair(x_r, x_f, config, threshold, alpha))
    return row


def evaluate(recons: Sequence[ComplexTensor],
             gts: Sequence[ComplexTensor],
             names: Optional[List[str]]=None,
             config: Optional[Dict]=None,
             loss_config: Optional[LossConfig]=None,
             threshold: float=DEFAULT_THRESHOLD,
             alpha: float=DEFAULT_ALPHA,
             n_jobs: int=1,
             verbose: bool=False) -> EvalReport:
    '''
    Evaluate reconstructions against ground truths

    Parameters
    ----------
    recons:
        reconstructions, a list of images or a batch ``[N, 1, H, W]``
    gts:
        ground truths matching ``recons``
    names:
        image names
        OR ``None`` (``'0'``, ``'1'``, ...)
    config:
        configuration echo stored in the report
    n_jobs:
        number of processes
    verbose:
        show progress or not
    '''
    if len(recons) != len(gts):
        raise ValueError('{} reconstructions for {} ground truths'.format(
                                                    len(recons), len(gts)))
    if names is None:
        names = [str(k) for k in range(len(recons))]
    params = [(names[k], recons[k], gts[k], loss_config, threshold, alpha)
              for k in range(len(recons))]

    if n_jobs == 1:
        rows = [_evaluate_item(x) for x in tqdm(params, disable=not verbose)]
    else:
        with Pool(n_jobs) as p:
            rows = []
            for row in tqdm(p.imap(_evaluate_item, params), total=len(params),
                            disable=not verbose):
                rows.append(row)

    images = pd.DataFrame(rows, columns=['name'] + METRIC_COLUMNS)

    return EvalReport(images, config)
