"""Exact nearest-neighbour descriptor matching with Lowe's ratio test."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Match:
    """Query descriptor index paired with its best train descriptor."""

    query: int
    train: int
    distance: float
    second_distance: float


def match_knn(query: np.ndarray, train: np.ndarray, chunk: int = 512) -> list:
    """Two nearest train neighbours for every query descriptor.

    Distances are exact Euclidean, computed in chunks to bound memory.
    Ties are broken toward the lower train index so results never depend
    on partition order.
    """
    query = np.asarray(query, dtype=float)
    train = np.asarray(train, dtype=float)
    if query.ndim != 2 or train.ndim != 2 or query.shape[1] != train.shape[1]:
        raise ValueError(
            f"descriptor arrays must be 2D with equal width, got {query.shape} and {train.shape}"
        )
    if len(query) == 0 or len(train) == 0:
        return []
    t_sq = (train * train).sum(axis=1)
    matches = []
    for start in range(0, len(query), chunk):
        q = query[start : start + chunk]
        d2 = (q * q).sum(axis=1)[:, None] + t_sq[None, :] - 2.0 * (q @ train.T)
        np.maximum(d2, 0.0, out=d2)
        if train.shape[0] == 1:
            for qi in range(len(q)):
                matches.append(Match(start + qi, 0, float(np.sqrt(d2[qi, 0])), float("inf")))
            continue
        order = np.argsort(d2, axis=1, kind="stable")[:, :2]
        rows = np.arange(len(q))
        d1 = np.sqrt(d2[rows, order[:, 0]])
        d2nd = np.sqrt(d2[rows, order[:, 1]])
        for qi in range(len(q)):
            matches.append(
                Match(start + qi, int(order[qi, 0]), float(d1[qi]), float(d2nd[qi]))
            )
    return matches


def ratio_filter(matches: list, ratio: float = 0.95) -> list:
    """Keep matches whose best distance beats ratio times the second best."""
    return [m for m in matches if m.distance < ratio * m.second_distance]


def match_descriptors(query: np.ndarray, train: np.ndarray, ratio: float = 0.95) -> list:
    """match_knn followed by the ratio test."""
    return ratio_filter(match_knn(query, train), ratio)
