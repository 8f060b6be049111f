import logging

from commands.data_tasks import load_task
from commands.run_config import grid_spec, train_config
from services.datasets import dataset_digest
from services.experiments import (
    DEFAULT_REPEATS,
    PERTURBATION_LEVELS,
    QUANTIZATION_LEVELS,
    THRESHOLD_MAX,
    THRESHOLD_POINTS,
    dict_size_sweep,
    perturbation_sweep,
    quantization_sweep,
    save_sweep,
    threshold_grid,
    threshold_sweep,
    train_model_pairs,
)
from utils.responses import success_document
from utils.result_files import save_manifest

logger = logging.getLogger(__name__)

SWEEP_KINDS = ('perturb', 'threshold', 'quantize', 'dictsize')
DEFAULT_ATOM_COUNTS = (10, 20, 30, 40, 50)


def register_sweep_command(subparsers, common_options):
    sweep_parser = subparsers.add_parser(
        'sweep', parents=[common_options], help='repeated-training accuracy/bits sweeps'
    )
    sweep_parser.add_argument('kind', choices=SWEEP_KINDS)
    sweep_parser.set_defaults(handler=run_sweep_command, flag_keys={'kind': 'sweep.kind'})


def run_pair_sweep(run, kind, task, cfg):
    pairs = train_model_pairs(task, cfg, run.value('sweep.repeats', DEFAULT_REPEATS, int), run.seed, run.jobs)

    if kind == 'perturb':
        result = perturbation_sweep(pairs, tuple(run.values('sweep.levels', PERTURBATION_LEVELS, float)), run.seed)
    elif kind == 'threshold':
        thresholds = run.values('sweep.thresholds', None, float) or threshold_grid(
            run.value('sweep.threshold_points', THRESHOLD_POINTS, int),
            run.value('sweep.threshold_max', THRESHOLD_MAX, float)
        )
        result = threshold_sweep(pairs, thresholds)
    else:
        pixel_max = max(sample.pixel_max for sample in pairs[0].test)
        result = quantization_sweep(pairs, tuple(run.values('sweep.quanta', QUANTIZATION_LEVELS, int)), pixel_max)

    save_sweep(run.output_dir / f'{kind}.csv', result)
    datasets = {
        'train': [pair.train_digest for pair in pairs],
        'test': dataset_digest(pairs[0].test)
    }
    return {kind: result}, [pair.seed for pair in pairs], datasets


def run_dict_size_sweep(run, task, cfg):
    repeats = run.value('sweep.repeats', 1, int)
    original, proposed = dict_size_sweep(
        run.values('sweep.atom_counts', DEFAULT_ATOM_COUNTS, int), task, cfg, grid_spec(run),
        repeats, run.seed, run.jobs
    )
    save_sweep(run.output_dir / 'dictsize-original.csv', original)
    save_sweep(run.output_dir / 'dictsize-proposed.csv', proposed)
    return {'dictsize-original': original, 'dictsize-proposed': proposed}, [], {}


def run_sweep_command(run):
    run.require_seed()
    kind = run.value('sweep.kind')
    task = load_task(run)
    cfg = train_config(run)

    if kind == 'dictsize':
        results, repeat_seeds, datasets = run_dict_size_sweep(run, task, cfg)
    else:
        results, repeat_seeds, datasets = run_pair_sweep(run, kind, task, cfg)

    save_manifest(
        run.output_dir, run.command, run.config_items,
        {**run.seeds('textures', 'test-patches'), 'repeats': repeat_seeds},
        datasets=datasets,
        extras={name: result.extras for name, result in results.items()}
    )
    return success_document(
        run.command,
        kind=kind,
        rows={name: len(result.x) for name, result in results.items()},
        extras={name: result.extras for name, result in results.items()}
    )
