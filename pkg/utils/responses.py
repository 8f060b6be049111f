import json
import math
import sys


def convert_to_json_safe(response_content):
    if isinstance(response_content, dict):
        return {
            str(convert_to_json_safe(response_key)): convert_to_json_safe(response_value)
            for response_key, response_value in response_content.items()
        }
    if isinstance(response_content, (list, tuple)):
        return [convert_to_json_safe(response_item) for response_item in response_content]
    if hasattr(response_content, 'tolist') and hasattr(response_content, 'shape') and response_content.shape:
        return convert_to_json_safe(response_content.tolist())
    if hasattr(response_content, 'item'):
        return convert_to_json_safe(response_content.item())
    if isinstance(response_content, float) and not math.isfinite(response_content):
        return None
    return response_content


def dumps_document(document):
    return json.dumps(convert_to_json_safe(document), ensure_ascii=False, indent=2, sort_keys=True) + '\n'


def print_document(document, stream=None):
    stream = stream or sys.stdout
    stream.write(dumps_document(document))
    stream.flush()


def success_document(command, **payload):
    return {
        'success': True,
        'command': command,
        **payload
    }
