"""Named parameter store with gradient slots, optimizer state and checkpoints."""

from __future__ import annotations

import hashlib
import json

import numpy as np

from .tensor import Tensor

CHECKPOINT_VERSION = "econ-ckpt-v1"


def uniform_init(rng: np.random.Generator, shape: tuple, fan_in: int | None = None) -> np.ndarray:
    """Seeded uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)) initialization."""
    if fan_in is None:
        fan_in = shape[-1] if shape else 1
    bound = 1.0 / np.sqrt(max(fan_in, 1))
    return rng.uniform(-bound, bound, size=shape)


class ParamStore:
    """Maps names to parameter tensors plus Adam moment buffers.

    Single writer: optimizer steps mutate values in place; forward passes
    only read them.
    """

    def __init__(self):
        self._params: dict[str, Tensor] = {}
        self._m: dict[str, np.ndarray] = {}
        self._v: dict[str, np.ndarray] = {}
        self.step_count = 0

    def add(self, name: str, value) -> Tensor:
        if name in self._params:
            raise KeyError(f"parameter '{name}' already exists")
        t = Tensor(np.asarray(value, dtype=np.float64), requires_grad=True, name=name)
        self._params[name] = t
        self._m[name] = np.zeros_like(t.value)
        self._v[name] = np.zeros_like(t.value)
        return t

    def create(self, name: str, shape: tuple, rng: np.random.Generator, fan_in: int | None = None) -> Tensor:
        return self.add(name, uniform_init(rng, shape, fan_in))

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def names(self) -> list[str]:
        return list(self._params)

    def tensors(self) -> list[Tensor]:
        return list(self._params.values())

    def items(self):
        return self._params.items()

    def moments(self, name: str) -> tuple[np.ndarray, np.ndarray]:
        return self._m[name], self._v[name]

    def num_params(self) -> int:
        return sum(t.value.size for t in self._params.values())

    def zero_grads(self):
        for t in self._params.values():
            t.zero_grad()

    def copy_values_from(self, other: "ParamStore"):
        for name, t in other.items():
            self._params[name].value = t.value.copy()

    def clone(self) -> "ParamStore":
        out = ParamStore()
        for name, t in self.items():
            out.add(name, t.value.copy())
        return out

    def checksum(self) -> str:
        """Stable digest of all parameter values; used to prove inference
        phases never mutate parameters."""
        h = hashlib.sha256()
        for name in sorted(self._params):
            h.update(name.encode())
            h.update(self._params[name].value.tobytes())
        return h.hexdigest()

    # -- checkpoint container -------------------------------------------

    def save(self, path):
        payload = {
            "version": CHECKPOINT_VERSION,
            "step_count": self.step_count,
            "params": {
                name: {"shape": list(t.value.shape), "data": t.value.ravel().tolist()}
                for name, t in self._params.items()
            },
        }
        with open(path, "w") as fh:
            json.dump(payload, fh)

    @classmethod
    def load(cls, path) -> "ParamStore":
        with open(path) as fh:
            payload = json.load(fh)
        if payload.get("version") != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version: {payload.get('version')!r}")
        store = cls()
        for name, entry in payload["params"].items():
            arr = np.asarray(entry["data"], dtype=np.float64).reshape(entry["shape"])
            store.add(name, arr)
        store.step_count = int(payload["step_count"])
        return store
