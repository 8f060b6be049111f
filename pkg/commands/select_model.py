import logging

from commands.data_tasks import load_task
from commands.run_config import grid_spec, train_config
from services.bit_analysis import bit_report
from services.datasets import dataset_digest, split_80_20
from services.model import save_model
from services.selection import run_selection, save_selection
from services.shift_inference import evaluate_shift
from utils.responses import success_document
from utils.result_files import save_manifest

logger = logging.getLogger(__name__)

SELECT_SEED_ROLES = ('data', 'split', 'train', 'textures', 'test-patches')


def register_select_command(subparsers, common_options):
    select_parser = subparsers.add_parser(
        'select', parents=[common_options], help='grid over (kappa, z_threshold, quanta) and pick one compressed model'
    )
    select_parser.set_defaults(handler=run_select_command, flag_keys={})


def run_select_command(run):
    run.require_seed()
    train_samples, test_samples = load_task(run)(run.derived_seed('data'))
    split = split_80_20(train_samples, run.derived_seed('split'), test_samples)

    selection = run_selection(split, grid_spec(run), train_config(run), run.jobs)
    save_selection(run.output_dir, selection)
    model_path = save_model(run.output_dir / 'model.json', selection.chosen.model)

    test_accuracy = evaluate_shift(selection.chosen.model, split.test)['accuracy'] if split.test else None
    save_manifest(
        run.output_dir, run.command, run.config_items, run.seeds(*SELECT_SEED_ROLES),
        datasets={
            'train': dataset_digest(split.train),
            'holdout': dataset_digest(split.holdout),
            'test': dataset_digest(split.test)
        }
    )

    return success_document(
        run.command,
        model=model_path,
        selection=selection.to_document(),
        test_accuracy=test_accuracy,
        bits=bit_report(selection.chosen.model).to_document()
    )
