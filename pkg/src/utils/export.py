"""Result files: unit-labelled CSV tables and JSON metadata"""

import json
import logging
import os

import numpy as np

logger = logging.getLogger(__name__)

FORMATS = ('csv', 'json')


def _json_default(value):
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, np.generic):
        return value.item()
    raise TypeError(f"cannot serialise {type(value).__name__}")


def save_frame(df, out_dir, stem, fmt='csv'):
    """
    Write a DataFrame as CSV or JSON records

    Args:
        df: DataFrame whose headers carry units, e.g. 't [s]'
        out_dir: output directory, created when missing
        stem: file name without extension
        fmt: 'csv' or 'json'

    Returns:
        path of the written file
    """
    if fmt not in FORMATS:
        raise ValueError(f"unknown format {fmt!r}")
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, f"{stem}.{fmt}")
    if fmt == 'csv':
        df.to_csv(path, index=False)
    else:
        df.to_json(path, orient='records', indent=2)
    logger.info("Saved %d rows to %s", len(df), path)
    return path


def save_json(payload, out_dir, stem):
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, f"{stem}.json")
    with open(path, 'w', encoding='utf-8') as f:
        json.dump(payload, f, indent=2, default=_json_default)
    logger.info("Saved %s", path)
    return path


def save_text(text, out_dir, name):
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, name)
    with open(path, 'w', encoding='utf-8') as f:
        f.write(text)
    logger.info("Saved %s", path)
    return path
