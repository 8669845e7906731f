'''
``ml-mri`` command line entry point.

Sub-commands map to :mod:`ml_mri.scripts` modules. Exit codes:
0 success, 1 usage error, 2 validation error, 3 numeric failure.
'''

import argparse
import sys
from typing import List, Optional
from .manifest import load_manifest
from .scripts import gen_phantoms, make_mask, train, reconstruct, evaluate
from .utils import ConfigError, colour_enabled


EXIT_OK = 0
EXIT_USAGE = 1
EXIT_VALIDATION = 2
EXIT_NUMERIC = 3

COMMANDS = {'gen-phantoms': gen_phantoms,
            'make-mask': make_mask,
            'train': train,
            'reconstruct': reconstruct,
            'evaluate': evaluate}


class UsageError(Exception):
    pass


class _ArgumentParser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError('{}: error: {}'.format(self.prog, message))


def build_parser() -> argparse.ArgumentParser:
    parser = _ArgumentParser(prog='ml-mri',
                             description='complex-valued MRI reconstruction')
    subparsers = parser.add_subparsers(dest='command', metavar='command')
    subparsers.required = True
    for name, module in COMMANDS.items():
        sub = subparsers.add_parser(name, help=module.__doc__.strip())
        module.add_arguments(sub)
    replay = subparsers.add_parser('replay',
                                   help='rerun the run recorded in a manifest')
    replay.add_argument('manifest', type=str,
                        help='manifest.json or the folder holding it')
    return parser


def _report(message: str):
    if colour_enabled() and sys.stderr.isatty():
        message = '\033[31m{}\033[0m'.format(message)
    print(message, file=sys.stderr)


def dispatch(argv: List[str]):
    args = vars(build_parser().parse_args(argv))
    command = args.pop('command')
    if command == 'replay':
        manifest = load_manifest(args['manifest'])
        if manifest.get('command') not in COMMANDS or \
                'arguments' not in manifest:
            raise ValueError('{} holds no replayable run'.format(
                                                        args['manifest']))
        return COMMANDS[manifest['command']].main(argv=manifest['argv'],
                                                  **manifest['arguments'])
    return COMMANDS[command].main(argv=list(argv), **args)


def run(argv: Optional[List[str]]=None) -> int:
    '''
    Run a command and return its exit code

    Parameters
    ----------
    argv:
        arguments without the program name
        OR ``None`` (``sys.argv[1:]``)
    '''
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        dispatch(argv)
    except UsageError as e:
        _report(str(e))
        return EXIT_USAGE
    except FloatingPointError as e:
        _report('numeric failure: {}'.format(e))
        return EXIT_NUMERIC
    except ConfigError as e:
        _report('invalid configuration:')
        for problem in e.problems:
            _report('  {}'.format(problem))
        return EXIT_VALIDATION
    except (ValueError, OSError) as e:
        _report('error: {}'.format(e))
        return EXIT_VALIDATION

    return EXIT_OK


def main():
    sys.exit(run())


if __name__ == '__main__':
    main()
