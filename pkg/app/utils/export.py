"""
CSV and JSON writers for posteriors, marginal matrices and summaries.
"""

import json
from pathlib import Path
from typing import Union

import numpy as np
import pandas as pd

from app.utils.settings import CSV_FLOAT_FORMAT

PathLike = Union[str, Path]


def write_posterior_csv(post, path: PathLike) -> None:
    """
    Write the full posterior table, one row per hypothesis.

    Args:
        post: Posterior to export
        path: Destination CSV file
    """
    table = post.frame()
    if post.log_likelihood is not None:
        table["log_likelihood"] = post.log_likelihood
    table.to_csv(path, float_format=CSV_FLOAT_FORMAT)


def read_posterior_csv(path: PathLike) -> pd.DataFrame:
    return pd.read_csv(path, index_col="hypothesis")


def posterior_weights(table: pd.DataFrame) -> np.ndarray:
    """Renormalized weights of a posterior table read back from disk."""
    weights = table.sort_index()["weight"].to_numpy(dtype=float)
    return weights / weights.sum()


def write_matrix_csv(matrix: pd.DataFrame, path: PathLike) -> None:
    """Write a marginal matrix; the header names both dimensions as ``rows\\columns``."""
    labelled = matrix.copy()
    labelled.index.name = f"{matrix.index.name}\\{matrix.columns.name}"
    labelled.columns.name = None
    labelled.to_csv(path, float_format=CSV_FLOAT_FORMAT)


def to_json(document) -> str:
    return json.dumps(document, indent=2, sort_keys=True, default=_json_default) + "\n"


def write_json(document, path: PathLike) -> None:
    Path(path).write_text(to_json(document), encoding="utf-8")


def _json_default(value):
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    raise TypeError(f"cannot serialize {type(value).__name__}")
