'''
Run manifests written next to every command output
'''

import os
import sys
import time
from typing import Dict, List, Optional, Sequence
from .utils import save_json, load_json


MANIFEST_NAME = 'manifest.json'


class RunManifest:
    '''
    Record of one command run: the command line, effective configuration,
    seeds, input and output paths, tool version and wall-clock time.
    Holds everything needed to replay the run.
    '''
    def __init__(self,
                 command: str,
                 argv: Optional[List[str]]=None,
                 arguments: Optional[Dict]=None,
                 config: Optional[Dict]=None,
                 seeds: Optional[Dict]=None,
                 inputs: Optional[List[str]]=None,
                 outputs: Optional[List[str]]=None):
        '''
        Parameters
        ----------
        command:
            sub-command name, i.e. ``'train'``
        argv:
            ``ml-mri`` arguments reproducing the run
            OR ``None`` (``command`` followed by arguments of the
            current process)
        arguments:
            fully resolved keyword arguments of the command ``main``,
            see :func:`resolved_arguments`
        config:
            effective configuration
        seeds:
            every seed used by the run
        inputs:
            input paths
        outputs:
            output paths
        '''
        from . import __version__
        self.command = command
        self.argv = [command] + sys.argv[1:] if argv is None else list(argv)
        self.arguments = arguments or {}
        self.config = config or {}
        self.seeds = seeds or {}
        self.inputs = list(inputs or [])
        self.outputs = list(outputs or [])
        self.version = __version__
        self._start = time.time()
        self.started_at = time.strftime('%Y-%m-%dT%H:%M:%S',
                                        time.localtime(self._start))

    def to_dict(self) -> Dict:
        return {'command': self.command,
                'argv': self.argv,
                'arguments': self.arguments,
                'config': self.config,
                'seeds': self.seeds,
                'inputs': self.inputs,
                'outputs': self.outputs,
                'version': self.version,
                'started_at': self.started_at,
                'wall_clock_seconds': round(time.time() - self._start, 3)}

    def write(self, out_dir: str) -> str:
        '''
        Write ``manifest.json`` into ``out_dir``, replacing an older one
        '''
        path = os.path.join(out_dir, MANIFEST_NAME)
        save_json(path, self.to_dict())
        return path


def resolved_arguments(arguments: Dict, paths: Sequence[str]=()) -> Dict:
    '''
    Copy of command keyword ``arguments`` with the ``paths`` entries made
    absolute. Replay calls the command with exactly these values, so
    they must not depend on config files or the working directory.
    '''
    result = dict(arguments)
    for key in paths:
        if result.get(key) is not None:
            result[key] = os.path.abspath(result[key])
    return result


def load_manifest(path: str) -> Dict:
    if os.path.isdir(path):
        path = os.path.join(path, MANIFEST_NAME)
    return load_json(path)


def find_manifest(path: str) -> Optional[Dict]:
    '''
    Manifest of the run that wrote ``path``: looked up in the folder of
    ``path`` and in its parent

    Returns
    -------
    ``Dict``
        loaded manifest
        OR ``None`` (no manifest found)
    '''
    folder = os.path.abspath(path if os.path.isdir(path)
                             else os.path.dirname(path) or '.')
    for candidate in [folder, os.path.dirname(folder)]:
        manifest_path = os.path.join(candidate, MANIFEST_NAME)
        if os.path.exists(manifest_path):
            return load_json(manifest_path)
    return None
