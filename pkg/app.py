"""shiftclass command-line entry point."""

import argparse
import logging
import sys

import config
from utils.errors import ShiftClassError
from utils.responses import print_document

logger = logging.getLogger(__name__)


def create_common_options():
    common_options = argparse.ArgumentParser(add_help=False)
    common_options.add_argument('--config', dest='config_path', help='key=value config file')
    common_options.add_argument(
        '--set', dest='overrides', action='append', default=[], metavar='KEY=VALUE',
        help='override one config value (repeatable)'
    )
    common_options.add_argument('--seed', type=int, help='master seed')
    common_options.add_argument('--output', help='output directory')
    common_options.add_argument('--jobs', type=int, help=f'parallel jobs (default SHIFTCLASS_JOBS={config.JOBS})')
    common_options.add_argument('--verbose', action='store_true', help='debug logging')
    return common_options


def create_app():
    app = argparse.ArgumentParser(
        prog='shiftclass',
        description='Transform/soft-threshold classifiers with power-of-two weights and shift-add inference.'
    )
    subparsers = app.add_subparsers(dest='command', required=True, metavar='command')
    common_options = create_common_options()

    from commands.compress import register_compress_command
    from commands.evaluate import register_eval_command
    from commands.report import register_report_command
    from commands.select_model import register_select_command
    from commands.sweep import register_sweep_command
    from commands.train import register_train_command

    register_train_command(subparsers, common_options)
    register_compress_command(subparsers, common_options)
    register_select_command(subparsers, common_options)
    register_eval_command(subparsers, common_options)
    register_sweep_command(subparsers, common_options)
    register_report_command(subparsers, common_options)

    return app


def configure_logging(verbose=False):
    logging.basicConfig(
        level=logging.DEBUG if verbose else getattr(logging, config.LOG_LEVEL, logging.INFO),
        format='%(asctime)s %(levelname)s %(name)s: %(message)s',
        stream=sys.stderr,
        force=True
    )


def collect_flag_items(args):
    flag_items = {
        'seed': args.seed,
        'output': args.output,
        'jobs': args.jobs
    }
    for argument_name, config_key in args.flag_keys.items():
        flag_items[config_key] = getattr(args, argument_name)

    return flag_items


def run_cli(argv=None):
    from commands.run_config import build_run_config

    args = create_app().parse_args(argv)
    configure_logging(args.verbose)

    try:
        run = build_run_config(args.command, args.config_path, args.overrides, collect_flag_items(args))
        document = args.handler(run)
    except ShiftClassError as error:
        logger.error('%s failed (%s): %s', args.command, error.code, error)
        print_document(error.to_document())
        return error.exit_status

    print_document(document)
    return 0


# ============================================
# CLI 실행
# ============================================

if __name__ == '__main__':
    sys.exit(run_cli())
