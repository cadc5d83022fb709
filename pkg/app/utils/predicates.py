"""
Predicate expressions over hypothesis fields.

An expression is a pandas-evaluable comparison over the columns of the
hypothesis table, for example ``U_Veg > U_Donut and type == 'Naive'``.
Two sugars are accepted: ``U(X)`` / ``p(X open)`` style field names and
``prefers(X, Y)``, which stands for ``U_X > U_Y``.
"""

import re
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np
import pandas as pd

from app.utils.errors import PredicateError

_UTILITY = re.compile(r"\bU\(\s*([A-Za-z][A-Za-z0-9]*)\s*\)")
_BELIEF = re.compile(r"\bp\(\s*([A-Za-z][A-Za-z0-9]*)(?:\s*(?:=\s*)?open)?\s*\)")
_PREFERS = re.compile(r"\bprefers\(\s*([A-Za-z][A-Za-z0-9]*)\s*,\s*([A-Za-z][A-Za-z0-9]*)\s*\)")
_STRING = re.compile(r"'[^']*'|\"[^\"]*\"")
_IDENTIFIER = re.compile(r"\b[A-Za-z_][A-Za-z0-9_]*\b")

KEYWORDS = {"and", "or", "not", "True", "False"}


def normalize_field(name: str) -> str:
    """Map ``U(X)`` to ``U_X`` and ``p(X)`` / ``p(X open)`` / ``p(X = open)`` to ``p_X``."""
    name = name.strip()
    name = _UTILITY.sub(r"U_\1", name)
    return _BELIEF.sub(r"p_\1", name)


def rewrite(expr: str) -> str:
    expr = _PREFERS.sub(r"(U_\1 > U_\2)", expr)
    return normalize_field(expr)


def referenced_fields(expr: str) -> set:
    bare = _STRING.sub(" ", expr)
    return set(_IDENTIFIER.findall(bare)) - KEYWORDS


@dataclass(frozen=True)
class PropertyPredicate:
    """
    A named predicate over hypotheses.

    Args:
        name: Label used in reports
        expr: Expression in the predicate language
    """

    name: str
    expr: str
    compiled: str = field(init=False, repr=False)

    def __post_init__(self):
        if not self.expr or not self.expr.strip():
            raise PredicateError(f"property {self.name!r} has an empty expression")
        object.__setattr__(self, "compiled", rewrite(self.expr))

    def check_fields(self, columns: Iterable[str]) -> None:
        unknown = referenced_fields(self.compiled) - set(columns)
        if unknown:
            raise PredicateError(f"property {self.name!r} references unknown field(s): {', '.join(sorted(unknown))}")

    def mask(self, frame: pd.DataFrame) -> np.ndarray:
        """Boolean mask of the rows of a hypothesis table satisfying the predicate."""
        self.check_fields(frame.columns)
        try:
            result = frame.eval(self.compiled, engine="python")
        except Exception as e:
            raise PredicateError(f"cannot evaluate {self.expr!r}: {e}") from e
        if np.ndim(result) == 0:
            return np.full(len(frame), bool(result))
        values = np.asarray(result)
        if values.dtype != bool:
            raise PredicateError(f"{self.expr!r} does not evaluate to true/false")
        return values

    def test(self, params, grid) -> bool:
        """Evaluate the predicate on a single hypothesis."""
        row = pd.DataFrame([grid.describe(params)])
        return bool(self.mask(row)[0])
