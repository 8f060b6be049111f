import logging

from commands.data_tasks import load_task
from services.bit_analysis import bit_report
from services.datasets import dataset_digest
from services.model import load_model
from services.shift_inference import evaluate_float, evaluate_shift, shift_float_agreement, shift_input_max
from services.training import confusion_matrix
from utils.errors import ConfigError
from utils.responses import success_document
from utils.result_files import save_csv_result, save_json_result, save_manifest

logger = logging.getLogger(__name__)

EVAL_MODES = ('float', 'shift')
EVAL_SPLITS = ('test', 'train')


def register_eval_command(subparsers, common_options):
    eval_parser = subparsers.add_parser(
        'eval', parents=[common_options], help='classify a dataset split with the float or shift-add path'
    )
    eval_parser.add_argument('--model', dest='model_path', help='model file')
    eval_parser.add_argument('--mode', choices=EVAL_MODES)
    eval_parser.add_argument('--split', choices=EVAL_SPLITS)
    eval_parser.set_defaults(handler=run_eval_command, flag_keys={
        'model_path': 'eval.model',
        'mode': 'eval.mode',
        'split': 'eval.split'
    })


def sample_rows(result):
    return [
        (source_id, *scores, predicted, label)
        for source_id, scores, predicted, label in zip(
            result['source_ids'], result['scores'].tolist(), result['predicted'].tolist(), result['labels'].tolist()
        )
    ]


def sample_header(result):
    score_count = result['scores'].shape[1]
    return ('sample_id', *[f'score_{index}' for index in range(score_count)], 'predicted', 'true')


def run_eval_command(run):
    model_path = run.value('eval.model')
    if not model_path:
        raise ConfigError('eval 명령에는 모델 파일이 필요합니다 (--model 또는 eval.model)')
    mode = run.value('eval.mode', 'shift')
    split_name = run.value('eval.split', 'test')
    if mode not in EVAL_MODES or split_name not in EVAL_SPLITS:
        raise ConfigError(f'unknown eval mode/split: {mode!r}/{split_name!r}')

    model = load_model(model_path)
    train_samples, test_samples = load_task(run)(run.derived_seed('data'))
    samples = test_samples if split_name == 'test' else train_samples

    if mode == 'shift':
        result = evaluate_shift(model, samples, run.value('eval.fraction_bits', None, int))
        metrics = {
            'bits': bit_report(model, shift_input_max(model, samples), samples).to_document(),
            'accumulator_bits': result['accumulator_bits'],
            'agreement': shift_float_agreement(model, samples, result),
            'fraction_bits': result['fraction_bits'],
            'score_scale': result['score_scale'],
            'feature_sparsity': result['feature_sparsity']
        }
    else:
        result = evaluate_float(model, samples, run.value('data.zero_mean', False, bool))
        metrics = {}

    metrics.update({
        'mode': mode,
        'split': split_name,
        'samples': len(samples),
        'accuracy': result['accuracy'],
        'class_labels': list(model.class_labels),
        'confusion_matrix': confusion_matrix(result['predicted'], result['labels'], model.class_labels)
    })
    save_json_result(run.output_dir / 'metrics.json', metrics)
    save_csv_result(run.output_dir / 'samples.csv', sample_header(result), sample_rows(result))
    save_manifest(
        run.output_dir, run.command, run.config_items, run.seeds('data', 'textures', 'test-patches'),
        datasets={split_name: dataset_digest(samples)}
    )

    logger.info('%s accuracy on %d %s samples: %.4f', mode, len(samples), split_name, result['accuracy'])
    return success_document(run.command, **metrics)
