"""Dominance, Pareto-front extraction and exact hypervolume.

Everything here works in the internal maximize convention; callers with
mixed objective directions convert once at the boundary via
:func:`to_internal`. Hypervolume uses a sorted sweep for two objectives and
recursive exclusion (WFG style) for three or more.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatchError, EmptyArchiveError

MAXIMIZE = "maximize"
MINIMIZE = "minimize"


class RefPointWarning(UserWarning):
    """Emitted when every archive point fails to dominate the reference point."""


def to_internal(values, directions) -> np.ndarray:
    """Flip minimized objectives so that larger is better everywhere."""
    arr = np.asarray(values, dtype=float)
    signs = np.array([1.0 if d == MAXIMIZE else -1.0 for d in directions])
    return arr * signs


def from_internal(values, directions) -> np.ndarray:
    return to_internal(values, directions)  # sign flip is an involution


def dominates(a, b, directions=None) -> bool:
    """True iff ``a`` is at least as good as ``b`` everywhere and strictly
    better somewhere."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise DimensionMismatchError(
            f"objective vectors differ in shape: {a.shape} vs {b.shape}"
        )
    if directions is not None:
        if len(directions) != a.shape[-1]:
            raise DimensionMismatchError(
                f"{len(directions)} directions for {a.shape[-1]} objectives"
            )
        a = to_internal(a, directions)
        b = to_internal(b, directions)
    return bool(np.all(a >= b) and np.any(a > b))


@dataclass(frozen=True)
class ParetoFront:
    """Nondominated members of an archive, in archive order."""

    indices: tuple[int, ...]
    values: np.ndarray  # (k, m), internal maximize convention

    def __len__(self) -> int:
        return len(self.indices)


def pareto_front(archive, directions=None) -> ParetoFront:
    """Extract the nondominated subset.

    Exact duplicate vectors keep their first archive occurrence only. The
    scan works on a lexicographically descending order so each candidate need
    only be checked against already-kept members.
    """
    Y = np.asarray(archive, dtype=float)
    if Y.ndim == 1:
        Y = Y[:, None]
    if Y.shape[0] == 0:
        raise EmptyArchiveError("archive is empty")
    if directions is not None:
        Y = to_internal(Y, directions)

    n, m = Y.shape
    # primary key col 0 descending, ties broken by later columns descending;
    # lexsort is stable so exact ties stay in archive order
    order = np.lexsort(tuple(-Y[:, m - 1 - j] for j in range(m)))
    if m == 2:
        # running-maximum sweep; strict > drops duplicates and col-0 ties
        y1 = Y[order, 1]
        keep = np.empty(n, dtype=bool)
        keep[0] = True
        if n > 1:
            keep[1:] = y1[1:] > np.maximum.accumulate(y1)[:-1]
        chosen = np.sort(order[keep])
        return ParetoFront(tuple(int(i) for i in chosen), Y[chosen])
    kept_idx: list[int] = []
    kept_vals: list[np.ndarray] = []
    seen: set[tuple] = set()
    for i in order:
        y = Y[i]
        key = tuple(y)
        if key in seen:
            continue
        seen.add(key)
        dominated = False
        for f in kept_vals:
            if np.all(f >= y) and np.any(f > y):
                dominated = True
                break
        if not dominated:
            kept_idx.append(int(i))
            kept_vals.append(y)
    kept = sorted(range(len(kept_idx)), key=lambda j: kept_idx[j])
    indices = tuple(kept_idx[j] for j in kept)
    return ParetoFront(indices, np.array([kept_vals[j] for j in kept]))


def default_reference_point(archive, directions=None) -> np.ndarray:
    """Componentwise worst minus 10% of the observed range (maximize
    convention); zero-range components fall back to max(0.1*|worst|, 1e-6)."""
    Y = np.asarray(archive, dtype=float)
    if Y.ndim == 1:
        Y = Y[:, None]
    if Y.shape[0] == 0:
        raise EmptyArchiveError("archive is empty")
    if not np.all(np.isfinite(Y)):
        raise ValueError("archive contains non-finite values")
    if directions is not None:
        Y = to_internal(Y, directions)
    worst = Y.min(axis=0)
    span = Y.max(axis=0) - worst
    offset = 0.1 * span
    degenerate = span == 0
    offset[degenerate] = np.maximum(0.1 * np.abs(worst[degenerate]), 1e-6)
    return worst - offset


def _clip_to_ref(Y: np.ndarray, r: np.ndarray) -> np.ndarray:
    keep = np.all(Y > r, axis=1)
    return Y[keep]


def _hv_2d(Y: np.ndarray, r: np.ndarray) -> float:
    order = np.argsort(-Y[:, 0])
    Y = Y[order]
    hv = 0.0
    prev_y1 = r[1]
    for y0, y1 in Y:
        if y1 > prev_y1:
            hv += (y0 - r[0]) * (y1 - prev_y1)
            prev_y1 = y1
    return hv


def _inclusive(p: np.ndarray, r: np.ndarray) -> float:
    return float(np.prod(p - r))


def _hv_recursive(Y: np.ndarray, r: np.ndarray) -> float:
    n, m = Y.shape
    if n == 0:
        return 0.0
    if n == 1:
        return _inclusive(Y[0], r)
    if m == 2:
        return _hv_2d(Y, r)
    # sort by first objective descending: shrinks the limited sets quickly
    order = np.argsort(-Y[:, 0])
    Y = Y[order]
    total = 0.0
    for i in range(n):
        p = Y[i]
        rest = Y[i + 1:]
        if rest.shape[0] == 0:
            total += _inclusive(p, r)
            continue
        limited = np.minimum(rest, p)
        limited = _nondominated_rows(limited)
        total += _inclusive(p, r) - _hv_recursive(limited, r)
    return total


def _nondominated_rows(Y: np.ndarray) -> np.ndarray:
    front = pareto_front(Y)
    return front.values


def hypervolume(front, r, directions=None) -> float:
    """Lebesgue measure of the region dominated by ``front`` above ``r``.

    Accepts a ParetoFront or a raw archive (dominated members contribute
    nothing). Points that fail to dominate ``r`` strictly are clipped out; if
    all are clipped the result is 0.0 under a RefPointWarning.
    """
    if isinstance(front, ParetoFront):
        Y = front.values
    else:
        Y = np.asarray(front, dtype=float)
        if Y.ndim == 1:
            Y = Y[:, None]
        if directions is not None:
            Y = to_internal(Y, directions)
        Y = pareto_front(Y).values if Y.shape[0] else Y
    r = np.asarray(r, dtype=float)
    if directions is not None and not isinstance(front, ParetoFront):
        r = to_internal(r, directions)
    if Y.shape[0] and Y.shape[1] != r.shape[0]:
        raise DimensionMismatchError(
            f"front has {Y.shape[1]} objectives but reference point has {r.shape[0]}"
        )
    Y = _clip_to_ref(Y, r) if Y.shape[0] else Y
    if Y.shape[0] == 0:
        warnings.warn("no archive point strictly dominates the reference point",
                      RefPointWarning, stacklevel=2)
        return 0.0
    if Y.shape[1] == 1:
        return float(Y[:, 0].max() - r[0])
    if Y.shape[1] == 2:
        return _hv_2d(Y, r)
    return _hv_recursive(Y, r)
