"""
JSON / CSV writers shared by the fit, simulate and evaluate commands.
"""
import hashlib
import json
import os
from typing import Any, Dict

import numpy as np
import pandas as pd

CSV_FLOAT_FORMAT = '%.17g'


def convert_to_json_serializable(item):
    """
    Recursively converts an item (dict, list, np.ndarray, DataFrame)
    into a JSON-serializable format (lists and basic types).
    """
    if isinstance(item, pd.DataFrame):
        return [convert_to_json_serializable(row) for row in item.to_dict(orient='records')]
    if isinstance(item, np.ndarray):
        return convert_to_json_serializable(item.tolist())
    if isinstance(item, dict):
        return {str(key): convert_to_json_serializable(value) for key, value in item.items()}
    if isinstance(item, (list, tuple)):
        return [convert_to_json_serializable(x) for x in item]
    # handle NumPy scalar types, e.g., np.float64, np.int64
    if isinstance(item, (np.generic,)):
        item = item.item()
    # NaN / inf are not valid JSON
    if isinstance(item, float) and not np.isfinite(item):
        return None
    return item


def write_json(data: Dict[str, Any], file_path: str) -> None:
    with open(file_path, 'w', encoding='utf-8', newline='\n') as f:
        json.dump(convert_to_json_serializable(data), f, indent=4)


def read_json(file_path: str) -> Dict[str, Any]:
    with open(file_path, 'r', encoding='utf-8') as f:
        return json.load(f)


def write_csv(df: pd.DataFrame, file_path: str) -> None:
    """UTF-8, '\\n' line endings, header always present, 17 significant digits."""
    df.to_csv(file_path, index=False, float_format=CSV_FLOAT_FORMAT, lineterminator='\n',
              encoding='utf-8')


def file_digest(file_path: str) -> str:
    h = hashlib.sha256()
    with open(file_path, 'rb') as f:
        for block in iter(lambda: f.read(1 << 16), b''):
            h.update(block)
    return h.hexdigest()


def ensure_dir(path: str) -> str:
    if not os.path.exists(path):
        os.makedirs(path, exist_ok=True)
    return path
