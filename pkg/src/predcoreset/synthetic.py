"""Synthetic sensor streams for validation runs."""

from __future__ import annotations

import numpy as np

from .harness import StreamDataset

__all__ = ["random_walk_stream", "regime_stream"]


def random_walk_stream(length: int, d: int = 2, step: float = 0.3, box: float = 5.0, seed: int = 0,
                       fit_length: int = 0) -> StreamDataset:
    """Gaussian random walk reflected into ``[0, box]^d``."""
    rng = np.random.default_rng(seed)
    X = np.empty((length, d))
    x = rng.uniform(0, box, size=d)
    for t in range(length):
        x = x + rng.normal(0.0, step, size=d)
        x = np.abs(x)
        x = box - np.abs(box - x)
        X[t] = x
    return StreamDataset(np.arange(length), X, None, fit_length)


def regime_stream(length: int, d: int = 2, class_mix=(0.75, 0.22, 0.02, 0.01), segment: int = 60,
                  separation: float = 3.0, jitter: float = 0.15, persistence: float = 0.95, seed: int = 0,
                  fit_length: int = 0) -> StreamDataset:
    """Slowly varying regimes, one feature cluster per class.

    Epoch counts per class follow ``class_mix`` exactly (up to rounding); the
    counts are cut into segments of roughly ``segment`` epochs whose order is
    shuffled. Within a segment the features follow an AR(1) wander of
    stationary std ``jitter`` around the class centre. Labels are 1..C.
    """
    rng = np.random.default_rng(seed)
    C = len(class_mix)
    counts = np.floor(np.asarray(class_mix) * length).astype(int)
    counts[0] += length - counts.sum()
    angles = 2 * np.pi * np.arange(C) / C
    centres = np.zeros((C, d))
    centres[:, 0] = separation * np.cos(angles)
    if d > 1:
        centres[:, 1] = separation * np.sin(angles)
    segs: list[tuple[int, int]] = []
    for c, total in enumerate(counts):
        k = max(1, int(round(total / segment))) if total else 0
        for part in np.array_split(np.arange(total), k) if k else []:
            if len(part):
                segs.append((c, len(part)))
    rng.shuffle(segs)
    X = np.empty((length, d))
    y = np.empty(length, dtype=int)
    innov = jitter * np.sqrt(1 - persistence ** 2)
    t = 0
    for c, m in segs:
        z = rng.normal(0.0, jitter, size=d)
        for _ in range(m):
            z = persistence * z + rng.normal(0.0, innov, size=d)
            X[t] = centres[c] + z
            y[t] = c + 1
            t += 1
    return StreamDataset(np.arange(length), X, y, fit_length)
