import logging

from commands.data_tasks import load_task
from commands.run_config import train_config
from services.datasets import dataset_digest, normalize_rows, stack_labels, stack_pixels
from services.model import save_model, validate_model
from services.shift_inference import evaluate_float
from services.training import save_trace, train_model
from utils.responses import success_document
from utils.result_files import save_manifest

logger = logging.getLogger(__name__)

TRAIN_SEED_ROLES = ('data', 'train', 'textures', 'test-patches')


def register_train_command(subparsers, common_options):
    train_parser = subparsers.add_parser(
        'train', parents=[common_options], help='train a real-valued model on the configured dataset'
    )
    train_parser.set_defaults(handler=run_train_command, flag_keys={})


def run_train_command(run):
    run.require_seed()
    zero_mean = run.value('data.zero_mean', False, bool)
    train_samples, test_samples = load_task(run)(run.derived_seed('data'))

    X = normalize_rows(stack_pixels(train_samples), zero_mean=zero_mean)
    model, trace = train_model(X, stack_labels(train_samples), train_config(run))
    model_path = save_model(run.output_dir / 'model.json', model)
    save_trace(run.output_dir / 'trace.csv', trace)

    test_accuracy = evaluate_float(model, test_samples, zero_mean)['accuracy'] if test_samples else None
    save_manifest(
        run.output_dir, run.command, run.config_items, run.seeds(*TRAIN_SEED_ROLES),
        datasets={'train': dataset_digest(train_samples), 'test': dataset_digest(test_samples)}
    )

    return success_document(
        run.command,
        model=model_path,
        validation=validate_model(model),
        train_accuracy=trace.train_accuracy[-1] if trace.train_accuracy else None,
        test_accuracy=test_accuracy
    )
