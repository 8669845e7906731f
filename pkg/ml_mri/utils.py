import json
import os
import hashlib
import numpy as np


class ConfigError(ValueError):
    '''
    Raised when a configuration fails validation.
    Holds the full list of problems in ``problems``.
    '''
    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__('invalid configuration: {}'.format(
                                                '; '.join(self.problems)))


def check_create_folder(file_path):
    folder_path = os.path.dirname(file_path)
    if folder_path and not os.path.exists(folder_path):
        os.makedirs(folder_path)


def save_json(file_path, data):
    check_create_folder(file_path)
    with open(file_path, "w") as write_file:
        json.dump(data, write_file, ensure_ascii=False, indent=2)


def load_json(path):
    with open(path, "r") as read_file:
        in_data = json.load(read_file)

    return in_data


def int_hash_of_str(text: str):
    return int(hashlib.md5(text.encode('utf-8')).hexdigest()[:8], 16)


def seeded_rng(*keys) -> np.random.Generator:
    '''
    Independent random stream identified by ``keys``,
    e.g. ``seeded_rng('mask', seed, epoch, idx)``
    '''
    text = '_'.join(str(k) for k in keys)
    return np.random.default_rng(int_hash_of_str(text))


def is_power_of_two(n: int) -> bool:
    return n > 0 and (n & (n - 1)) == 0


def load_config():
    _base_dir = os.path.expanduser('~')
    _ml_mri_dir = os.path.join(_base_dir, '.ml_mri')
    _config_path = os.path.join(_ml_mri_dir, 'config.json')
    config = load_json(_config_path)
    return config


def colour_enabled() -> bool:
    return not os.getenv('NO_COLOR')


def tqdm_colour():
    return 'green' if colour_enabled() else None
