"""Recovery metrics: how well encoder rows align with dictionary columns."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import DictionaryMatrix
from .errors import DegenerateInputError, DimensionError, ParameterError

_ZERO_ROW_TOL = 1e-30


@dataclass(frozen=True)
class MaxCosineStats:
    """Per-dictionary-column best |cosine| against encoder rows, summarized.

    ``per_column[j]`` is max_i |<W_i/||W_i||, M_j>|. ``median`` is the lower
    median (index (d-1)//2 of the ascending sort), so min <= median <= max
    always holds and every value sits in [0, 1].
    """

    per_column: np.ndarray
    min: float
    median: float
    max: float


def _unit_rows(W) -> np.ndarray:
    W = np.atleast_2d(np.asarray(W, dtype=np.float64))
    norms = np.sqrt((W * W).sum(axis=1))
    dead = np.where(norms <= _ZERO_ROW_TOL)[0]
    if dead.size:
        raise DegenerateInputError(
            f"encoder row {int(dead[0])} has zero norm; cosines are undefined")
    return W / norms[:, None]


def max_cosine_stats(W, M) -> MaxCosineStats:
    """Best absolute cosine per dictionary column, with min/median/max.

    Invariant under row permutations, row sign flips, and positive row
    scalings of W (everything is normalized and taken in absolute value).
    """
    if not isinstance(M, DictionaryMatrix):
        M = DictionaryMatrix(np.asarray(M, dtype=np.float64))
    Wn = _unit_rows(W)
    if Wn.shape[1] != M.p:
        raise DimensionError(
            f"encoder width {Wn.shape[1]} does not match dictionary rows {M.p}")
    cos = np.abs(Wn @ M.entries)          # (m, d); columns of M are unit norm
    per_column = cos.max(axis=0)
    srt = np.sort(per_column)
    return MaxCosineStats(per_column=per_column,
                          min=float(srt[0]),
                          median=float(srt[(srt.size - 1) // 2]),
                          max=float(srt[-1]))


def support_separation(W, M, support_sets=None) -> np.ndarray:
    """Per-neuron margin between in-support and out-of-support alignment.

    For neuron i with support N_i: (min_{j in N_i} <w_i, M_j>) -
    (max_{j not in N_i} |<w_i, M_j>|), rows of W normalized first. A positive
    margin means the neuron points at its own bases and away from the rest.
    ``support_sets`` defaults to the argmax assignment (each neuron's single
    best column by |cosine|); a full-support neuron has out-of-support part 0.
    """
    if not isinstance(M, DictionaryMatrix):
        M = DictionaryMatrix(np.asarray(M, dtype=np.float64))
    Wn = _unit_rows(W)
    if Wn.shape[1] != M.p:
        raise DimensionError(
            f"encoder width {Wn.shape[1]} does not match dictionary rows {M.p}")
    inner = Wn @ M.entries                # (m, d), signed
    m, d = inner.shape
    if support_sets is None:
        support_sets = [[int(j)] for j in np.argmax(np.abs(inner), axis=1)]
    if len(support_sets) != m:
        raise DimensionError(
            f"{len(support_sets)} support sets for {m} neurons")
    margins = np.empty(m)
    for i, support in enumerate(support_sets):
        idx = np.asarray(sorted(set(int(j) for j in support)), dtype=int)
        if idx.size == 0:
            raise ParameterError(f"neuron {i} has an empty support set")
        if idx[0] < 0 or idx[-1] >= d:
            raise ParameterError(
                f"neuron {i} support {idx.tolist()} outside [0, {d})")
        mask = np.zeros(d, dtype=bool)
        mask[idx] = True
        inside = float(inner[i, mask].min())
        outside = float(np.abs(inner[i, ~mask]).max()) if (~mask).any() else 0.0
        margins[i] = inside - outside
    return margins
