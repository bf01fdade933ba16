"""Flat named parameter collection with a mirrored gradient buffer."""

from __future__ import annotations

import numpy as np


class ParamStore:
    """Ordered name -> float64 array mapping plus matching gradients.

    Backward passes accumulate into ``grads``; callers zero the buffer
    between steps.  Iteration order is insertion order, which fixes the
    coordinate order used by checkpoints and the gradient checker.
    """

    def __init__(self, seed: int = 0):
        self.seed = seed
        self.values: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}

    def add(self, name: str, value: np.ndarray) -> np.ndarray:
        if name in self.values:
            raise KeyError(f"duplicate parameter {name!r}")
        arr = np.asarray(value, dtype=np.float64)
        self.values[name] = arr
        self.grads[name] = np.zeros_like(arr)
        return arr

    def __getitem__(self, name: str) -> np.ndarray:
        return self.values[name]

    def __contains__(self, name: str) -> bool:
        return name in self.values

    def names(self) -> list[str]:
        return list(self.values)

    def zero_grads(self) -> None:
        for g in self.grads.values():
            g[...] = 0.0

    def n_coords(self) -> int:
        return sum(v.size for v in self.values.values())

    def load(self, arrays: dict[str, np.ndarray]) -> None:
        """Replace values in place; shapes must match exactly."""
        missing = set(self.values) - set(arrays)
        extra = set(arrays) - set(self.values)
        if missing or extra:
            raise KeyError(f"checkpoint mismatch: missing {sorted(missing)}, "
                           f"unexpected {sorted(extra)}")
        for name, arr in arrays.items():
            if arr.shape != self.values[name].shape:
                raise ValueError(f"{name}: shape {arr.shape} != {self.values[name].shape}")
            self.values[name][...] = arr

    def snapshot(self) -> dict[str, np.ndarray]:
        return {name: v.copy() for name, v in self.values.items()}


def glorot_uniform(rng: np.random.Generator, shape, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)
