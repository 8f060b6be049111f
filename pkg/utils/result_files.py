import csv
import hashlib
import io
import json
import logging
import os
import tempfile
from contextlib import contextmanager
from pathlib import Path

from utils.responses import dumps_document

logger = logging.getLogger(__name__)


@contextmanager
def atomic_result_file(result_path, mode='w'):
    result_path = Path(result_path)
    result_path.parent.mkdir(parents=True, exist_ok=True)
    file_descriptor, temporary_path = tempfile.mkstemp(prefix=f'.{result_path.name}.', dir=result_path.parent)

    try:
        with os.fdopen(file_descriptor, mode, encoding='utf-8', newline='') as result_file:
            yield result_file
        os.replace(temporary_path, result_path)
    except BaseException:
        Path(temporary_path).unlink(missing_ok=True)
        raise

    logger.info('wrote %s', result_path)


def save_json_result(result_path, document):
    with atomic_result_file(result_path) as result_file:
        result_file.write(dumps_document(document))
    return str(result_path)


def read_json_result(result_path):
    result_text = Path(result_path).read_text(encoding='utf-8')
    if not result_text:
        return {}

    return json.loads(result_text)


def save_csv_result(result_path, header, rows):
    with atomic_result_file(result_path) as result_file:
        writer = csv.writer(result_file, lineterminator='\n')
        writer.writerow(header)
        for row in rows:
            writer.writerow([format_csv_value(value) for value in row])
    return str(result_path)


def read_csv_result(result_path):
    with open(result_path, encoding='utf-8', newline='') as result_file:
        return list(csv.DictReader(result_file))


def format_csv_value(value):
    if value is None:
        return ''
    if hasattr(value, 'item'):
        value = value.item()
    if isinstance(value, float):
        return repr(value)
    return value


def hash_config_text(config_items):
    config_text = io.StringIO()
    for config_key in sorted(config_items):
        config_text.write(f'{config_key}={config_items[config_key]}\n')
    return hashlib.sha256(config_text.getvalue().encode('utf-8')).hexdigest()


def save_manifest(output_dir, command, config_items, seeds, **extra):
    manifest = {
        'command': command,
        'config': dict(sorted(config_items.items())),
        'config_hash': hash_config_text(config_items),
        'seeds': seeds,
        **extra
    }
    return save_json_result(Path(output_dir) / 'manifest.json', manifest)
