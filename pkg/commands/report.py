import logging

from commands.data_tasks import load_task
from services.bit_analysis import bit_report
from services.datasets import dataset_digest
from services.experiments import TABLE_HEADER, table_report, table_row
from services.model import load_model
from services.shift_inference import evaluate_float, evaluate_shift, shift_input_max
from utils.errors import ConfigError
from utils.responses import success_document
from utils.result_files import save_csv_result, save_json_result, save_manifest

logger = logging.getLogger(__name__)


def register_report_command(subparsers, common_options):
    report_parser = subparsers.add_parser(
        'report', parents=[common_options], help='error and bit-width table of a float baseline against a compressed model'
    )
    report_parser.add_argument('--baseline', dest='baseline_path', help='real-valued model file')
    report_parser.add_argument('--proposed', dest='proposed_path', help='powerized model file')
    report_parser.set_defaults(handler=run_report_command, flag_keys={
        'baseline_path': 'report.baseline',
        'proposed_path': 'report.proposed'
    })


def run_report_command(run):
    baseline_path = run.value('report.baseline')
    proposed_path = run.value('report.proposed')
    if not baseline_path or not proposed_path:
        raise ConfigError('report 명령에는 --baseline 과 --proposed 모델 파일이 모두 필요합니다')

    baseline = load_model(baseline_path)
    proposed = load_model(proposed_path)
    _, test_samples = load_task(run)(run.derived_seed('data'))

    baseline_accuracy = evaluate_float(baseline, test_samples, run.value('data.zero_mean', False, bool))['accuracy']
    proposed_accuracy = evaluate_shift(proposed, test_samples)['accuracy']
    bits = bit_report(proposed, shift_input_max(proposed, test_samples), test_samples)
    report = table_report(baseline_accuracy, proposed_accuracy, bits.static_compute_bits)

    save_json_result(run.output_dir / 'report.json', {**report, 'bits': bits.to_document()})
    save_csv_result(run.output_dir / 'report.csv', TABLE_HEADER, [table_row(report)])
    save_manifest(
        run.output_dir, run.command, run.config_items, run.seeds('data', 'textures', 'test-patches'),
        datasets={'test': dataset_digest(test_samples)}
    )
    return success_document(run.command, **report)
