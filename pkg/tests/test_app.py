import json
import struct

import pytest

from app import run_cli
from services.model import load_model, validate_model
from utils.errors import EXIT_DATA_FORMAT, EXIT_MODEL_MODE, EXIT_SELECTION, EXIT_USAGE
from utils.result_files import read_csv_result, read_json_result

SMALL_TEXTURE_TASK = [
    '--set', 'data.image_size=64',
    '--set', 'data.patch_size=6',
    '--set', 'data.patch_count=40',
]
SMALL_TRAINING = [
    '--set', 'train.atoms=6',
    '--set', 'train.epochs=8',
    '--set', 'train.batch_size=16',
]


def run_command(capsys, *arguments):
    status = run_cli(list(arguments))
    document = json.loads(capsys.readouterr().out)
    return status, document


@pytest.fixture
def trained_model(tmp_path, capsys):
    output_dir = tmp_path / 'train'
    status, _ = run_command(capsys, 'train', '--seed', '11', '--output', str(output_dir), *SMALL_TEXTURE_TASK, *SMALL_TRAINING)
    assert status == 0
    return output_dir / 'model.json'


def test_train_writes_model_trace_and_manifest(tmp_path, capsys):
    output_dir = tmp_path / 'train'

    status, document = run_command(
        capsys, 'train', '--seed', '11', '--output', str(output_dir), *SMALL_TEXTURE_TASK, *SMALL_TRAINING
    )

    assert status == 0
    assert document['success'] and document['validation']['ok']
    assert validate_model(load_model(output_dir / 'model.json'))['ok']
    assert len(read_csv_result(output_dir / 'trace.csv')) == 8
    manifest = read_json_result(output_dir / 'manifest.json')
    assert manifest['seeds']['master'] == 11
    assert len(manifest['config_hash']) == 64


def test_same_seed_gives_byte_identical_models(tmp_path, capsys):
    for name in ('first', 'second'):
        status, _ = run_command(
            capsys, 'train', '--seed', '5', '--output', str(tmp_path / name), *SMALL_TEXTURE_TASK, *SMALL_TRAINING
        )
        assert status == 0

    assert (tmp_path / 'first' / 'model.json').read_bytes() == (tmp_path / 'second' / 'model.json').read_bytes()


def test_config_file_values_yield_to_flags(tmp_path, capsys):
    config_path = tmp_path / 'run.conf'
    config_path.write_text(
        '# small texture run\nseed = 3\ndata.image_size = 64\ndata.patch_size = 6\ndata.patch_count = 40\n'
        'train.atoms = 6\ntrain.epochs = 4\n',
        encoding='utf-8'
    )

    status, _ = run_command(
        capsys, 'train', '--config', str(config_path), '--seed', '4', '--output', str(tmp_path / 'out')
    )

    assert status == 0
    assert read_json_result(tmp_path / 'out' / 'manifest.json')['seeds']['master'] == 4


def test_train_requires_a_seed(tmp_path, capsys):
    status, document = run_command(capsys, 'train', '--output', str(tmp_path), *SMALL_TEXTURE_TASK)

    assert status == EXIT_USAGE
    assert document == {'success': False, 'error': 'invalid-config', 'message': document['message']}


def test_missing_dataset_is_a_usage_error(tmp_path, capsys):
    status, document = run_command(
        capsys, 'train', '--seed', '1', '--output', str(tmp_path),
        '--set', 'data.type=texture',
        '--set', f'data.textures={tmp_path / "bark.pgm"},{tmp_path / "woodgrain.pgm"}'
    )

    assert status == EXIT_USAGE
    assert document['error'] == 'dataset-not-found'


def test_missing_mnist_files_are_a_usage_error(tmp_path, capsys):
    status, document = run_command(
        capsys, 'train', '--seed', '1', '--output', str(tmp_path / 'out'),
        '--set', 'data.type=mnist', '--set', f'data.dir={tmp_path}'
    )

    assert status == EXIT_USAGE
    assert document['error'] == 'dataset-not-found'


def write_truncated_mnist(mnist_dir):
    # headers promise 10 images of 28x28 but carry a single one
    images = struct.pack('>IIII', 2051, 10, 28, 28) + bytes(28 * 28)
    labels = struct.pack('>II', 2049, 10) + bytes(10)
    for prefix in ('train', 't10k'):
        (mnist_dir / f'{prefix}-images-idx3-ubyte').write_bytes(images)
        (mnist_dir / f'{prefix}-labels-idx1-ubyte').write_bytes(labels)


def test_truncated_idx_is_a_data_format_error(tmp_path, capsys):
    write_truncated_mnist(tmp_path)

    status, document = run_command(
        capsys, 'train', '--seed', '1', '--output', str(tmp_path / 'out'),
        '--set', 'data.type=mnist', '--set', f'data.dir={tmp_path}'
    )

    assert status == EXIT_DATA_FORMAT
    assert document['success'] is False
    assert document['error'] == 'data-length'


def test_unknown_config_section_is_rejected(tmp_path, capsys):
    status, document = run_command(capsys, 'train', '--seed', '1', '--output', str(tmp_path), '--set', 'trian.atoms=4')

    assert status == EXIT_USAGE
    assert document['error'] == 'invalid-config'


def test_unknown_sweep_kind_is_a_usage_error(capsys):
    with pytest.raises(SystemExit) as usage:
        run_cli(['sweep', 'wavelet', '--seed', '1'])

    assert usage.value.code == 2


def test_compress_then_evaluate_with_shifts(tmp_path, capsys, trained_model):
    compressed_dir = tmp_path / 'compressed'
    eval_dir = tmp_path / 'eval'

    status, compressed = run_command(
        capsys, 'compress', '--model', str(trained_model), '--quanta', '31', '--output', str(compressed_dir)
    )
    assert status == 0
    assert compressed['validation']['ok']
    assert compressed['bits']['input_max'] == 31
    assert load_model(compressed_dir / 'model.json').metadata.quanta == 31

    status, metrics = run_command(
        capsys, 'eval', '--model', str(compressed_dir / 'model.json'), '--mode', 'shift',
        '--seed', '11', '--output', str(eval_dir), *SMALL_TEXTURE_TASK
    )
    assert status == 0
    assert metrics['agreement']['agreement_rate_outside_slack'] == 1.0
    assert sum(map(sum, metrics['confusion_matrix'])) == metrics['samples'] == 80
    assert metrics['bits']['empirical_compute_bits'] <= metrics['bits']['static_compute_bits']
    rows = read_csv_result(eval_dir / 'samples.csv')
    assert len(rows) == 80
    assert set(rows[0]) == {'sample_id', 'score_0', 'predicted', 'true'}


def test_shift_mode_needs_a_powerized_model(tmp_path, capsys, trained_model):
    status, document = run_command(
        capsys, 'eval', '--model', str(trained_model), '--mode', 'shift',
        '--seed', '11', '--output', str(tmp_path / 'eval'), *SMALL_TEXTURE_TASK
    )

    assert status == EXIT_MODEL_MODE
    assert document['error'] == 'model-not-powerized'


def test_float_mode_on_the_trained_model(tmp_path, capsys, trained_model):
    status, metrics = run_command(
        capsys, 'eval', '--model', str(trained_model), '--mode', 'float', '--split', 'train',
        '--seed', '11', '--output', str(tmp_path / 'eval'), *SMALL_TEXTURE_TASK
    )

    assert status == 0
    assert metrics['split'] == 'train' and metrics['samples'] == 80


def test_report_compares_baseline_and_proposed(tmp_path, capsys, trained_model):
    status, _ = run_command(capsys, 'compress', '--model', str(trained_model), '--output', str(tmp_path / 'compressed'))
    assert status == 0

    status, report = run_command(
        capsys, 'report', '--baseline', str(trained_model), '--proposed', str(tmp_path / 'compressed' / 'model.json'),
        '--seed', '11', '--output', str(tmp_path / 'report'), *SMALL_TEXTURE_TASK
    )

    assert status == 0
    assert report['bits_original'] == 64
    assert report['bit_reduction'] == pytest.approx(1 - report['bits_proposed'] / 64)
    assert len(read_csv_result(tmp_path / 'report' / 'report.csv')) == 1


@pytest.mark.slow
def test_select_reruns_to_the_same_choice(tmp_path, capsys):
    grid = ['--set', 'grid.kappas=0.004,0.01', '--set', 'grid.quanta=3,31', '--set', 'grid.threshold_limit=2']
    documents = []

    for name in ('first', 'second'):
        status, document = run_command(
            capsys, 'select', '--seed', '9', '--output', str(tmp_path / name), *SMALL_TEXTURE_TASK, *SMALL_TRAINING, *grid
        )
        assert status == 0
        documents.append(document)

    audit = documents[0]['selection']['audit']
    assert audit['candidates'] >= audit['viable'] >= audit['gamma'] >= audit['bits'] >= audit['chosen'] == 1
    assert documents[0]['selection']['chosen'] == documents[1]['selection']['chosen']
    assert (tmp_path / 'first' / 'grid.csv').read_bytes() == (tmp_path / 'second' / 'grid.csv').read_bytes()


def test_select_with_failing_candidates_exits_with_selection_status(tmp_path, capsys):
    status, document = run_command(
        capsys, 'select', '--seed', '9', '--output', str(tmp_path), *SMALL_TEXTURE_TASK, *SMALL_TRAINING,
        '--set', 'grid.kappas=0.004', '--set', 'grid.quanta=3', '--set', 'train.alpha=0.5'
    )

    assert status == EXIT_SELECTION
    assert document['error'] == 'no-viable-candidate'


@pytest.mark.slow
@pytest.mark.parametrize('kind,rows', (('perturb', 50), ('threshold', 14)))
def test_sweep_writes_one_row_per_grid_point(tmp_path, capsys, kind, rows):
    status, document = run_command(
        capsys, 'sweep', kind, '--seed', '2', '--output', str(tmp_path), *SMALL_TEXTURE_TASK, *SMALL_TRAINING,
        '--set', 'sweep.repeats=2'
    )

    assert status == 0
    assert document['rows'] == {kind: rows}
    assert len(read_csv_result(tmp_path / f'{kind}.csv')) == rows
    assert len(read_json_result(tmp_path / 'manifest.json')['seeds']['repeats']) == 2
