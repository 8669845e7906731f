import os
import json

__version__ = '0.1.0'

_base_dir = os.path.expanduser('~')
_ml_mri_dir = os.path.join(_base_dir, '.ml_mri')
_config_path = os.path.join(_ml_mri_dir, 'config.json')

if not os.path.exists(_ml_mri_dir):
    try:
        os.makedirs(_ml_mri_dir)
    except OSError:
        pass

if not os.path.exists(_config_path):
    _config = {
        "phantoms_data_path": os.getenv("ML_MRI_DATA_PATH") or
                              os.path.join(_ml_mri_dir, 'data', 'phantoms'),
        "models_path": os.getenv("ML_MRI_MODELS_PATH") or
                       os.path.join(_ml_mri_dir, 'models'),
        "out_path": os.path.join(_ml_mri_dir, 'data', 'out'),
        "default_size": 64,
        "default_growth": 8,
        "default_features": 16,
    }

    try:
        with open(_config_path, 'w') as f:
            f.write(json.dumps(_config, indent=4))
    except IOError:
        pass
