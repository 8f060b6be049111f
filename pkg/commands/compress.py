import logging

from services.bit_analysis import bit_report, save_bit_report
from services.compression import QuantizationSpec, compress_model
from services.datasets import DEFAULT_PIXEL_MAX
from services.model import load_model, save_model, validate_model
from utils.errors import ConfigError
from utils.responses import success_document
from utils.result_files import save_manifest

logger = logging.getLogger(__name__)


def register_compress_command(subparsers, common_options):
    compress_parser = subparsers.add_parser(
        'compress', parents=[common_options], help='powerize, hard-threshold and set input quantization'
    )
    compress_parser.add_argument('--model', dest='model_path', help='real-valued model file')
    compress_parser.add_argument('--z-threshold', dest='z_threshold', type=float)
    compress_parser.add_argument('--quanta', type=int)
    compress_parser.set_defaults(handler=run_compress_command, flag_keys={
        'model_path': 'compress.model',
        'z_threshold': 'compress.z_threshold',
        'quanta': 'compress.quanta'
    })


def run_compress_command(run):
    model_path = run.value('compress.model')
    if not model_path:
        raise ConfigError('compress 명령에는 모델 파일이 필요합니다 (--model 또는 compress.model)')

    quanta = run.value('compress.quanta', None, int)
    spec = None
    if quanta is not None:
        spec = QuantizationSpec(quanta, run.value('compress.pixel_max', DEFAULT_PIXEL_MAX, int))

    compressed = compress_model(load_model(model_path), run.value('compress.z_threshold', None, float), spec)
    compressed_path = save_model(run.output_dir / 'model.json', compressed)
    report = bit_report(compressed)
    save_bit_report(run.output_dir, report)
    save_manifest(run.output_dir, run.command, run.config_items, run.seeds(), source_model=str(model_path))

    return success_document(
        run.command,
        model=compressed_path,
        validation=validate_model(compressed),
        nonzero_entries=compressed.dictionary.nonzero_count,
        bits=report.to_document()
    )
