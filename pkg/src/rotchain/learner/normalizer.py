from __future__ import annotations

import numpy as np


class Normalizer:
    """Running per-coordinate mean/std with clipped standardisation."""

    def __init__(self, size: int, eps: float = 1e-2, clip_range: float = 5.0):
        self.size = size
        self.eps = eps
        self.clip_range = clip_range
        self.total = np.zeros(size)
        self.total_sq = np.zeros(size)
        self.count = 0
        self.mean = np.zeros(size)
        self.std = np.ones(size)

    def update(self, values: np.ndarray) -> None:
        values = np.asarray(values, dtype=float).reshape(-1, self.size)
        self.total += values.sum(axis=0)
        self.total_sq += (values ** 2).sum(axis=0)
        self.count += len(values)
        self.mean = self.total / self.count
        var = self.total_sq / self.count - self.mean ** 2
        self.std = np.sqrt(np.maximum(self.eps ** 2, var))

    def normalize(self, values: np.ndarray) -> np.ndarray:
        return np.clip((values - self.mean) / self.std, -self.clip_range, self.clip_range)

    def state(self) -> dict[str, np.ndarray]:
        return {
            "total": self.total,
            "total_sq": self.total_sq,
            "count": np.array([self.count]),
            "mean": self.mean,
            "std": self.std,
            "settings": np.array([self.eps, self.clip_range]),
        }

    @classmethod
    def from_state(cls, state: dict[str, np.ndarray]) -> "Normalizer":
        eps, clip_range = (float(v) for v in state["settings"])
        norm = cls(len(state["mean"]), eps=eps, clip_range=clip_range)
        norm.total = np.array(state["total"], dtype=float)
        norm.total_sq = np.array(state["total_sq"], dtype=float)
        norm.count = int(state["count"][0])
        norm.mean = np.array(state["mean"], dtype=float)
        norm.std = np.array(state["std"], dtype=float)
        return norm
