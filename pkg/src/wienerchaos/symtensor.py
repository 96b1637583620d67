"""Symmetric tensors over an m-dimensional orthonormal coordinate model of H.

A :class:`SymmetricTensor` stores one value per sorted multi-index (1-based).
The full tensor entry at any permutation of a stored index equals the stored
value; there is no multinomial weight folded into storage.  Pairings therefore
weight each stored entry by :func:`perm_count`.

:class:`DenseTensor` is the full ``(m,)*p`` array form, used for intermediate
results such as contractions, which are not symmetric in general.
"""
from __future__ import annotations

import itertools
import json
import math
from collections import Counter
from dataclasses import dataclass, field
from functools import cached_property, lru_cache
from types import MappingProxyType
from typing import Mapping, Sequence

import numpy as np

__all__ = [
    "ShapeError",
    "SymmetricTensor",
    "DenseTensor",
    "perm_count",
    "inner_product",
    "outer",
    "contract",
    "symmetrize",
    "symmetrize_axes",
    "scale_add",
    "basis_vector",
    "vector",
    "tensor_power",
    "random_symmetric",
    "tensor_to_dict",
    "tensor_from_dict",
    "load_tensor",
    "dump_tensor",
]


class ShapeError(ValueError):
    """Raised when tensor dimensions or orders do not line up."""


@lru_cache(maxsize=4096)
def perm_count(alpha: Sequence[int]) -> int:
    """Number of distinct permutations of the multiset ``alpha``."""
    alpha = tuple(alpha)
    n = math.factorial(len(alpha))
    for mult in Counter(alpha).values():
        n //= math.factorial(mult)
    return n


@lru_cache(maxsize=64)
def _layout(dim: int, order: int):
    """Sorted keys (0-based), inverse map from C-order flat positions, perm counts."""
    if order == 0:
        return np.zeros((1, 0), dtype=np.intp), np.zeros(1, dtype=np.intp), np.ones(1)
    grid = np.indices((dim,) * order).reshape(order, -1).T
    keys, inverse = np.unique(np.sort(grid, axis=1), axis=0, return_inverse=True)
    inverse = inverse.reshape(-1)
    counts = np.bincount(inverse).astype(float)
    return keys, inverse, counts


@lru_cache(maxsize=64)
def _key_rows(dim: int, order: int) -> dict[tuple[int, ...], int]:
    keys = _layout(dim, order)[0]
    return {tuple(int(i) + 1 for i in k): r for r, k in enumerate(keys)}


@dataclass(frozen=True)
class SymmetricTensor:
    """Order-``order`` symmetric tensor on ``R^dim``.

    ``entries`` maps sorted 1-based multi-indices to values; missing keys are
    zero.  Instances are immutable.
    """

    dim: int
    order: int
    entries: Mapping[tuple[int, ...], float] = field(default_factory=dict)

    def __post_init__(self):
        if self.dim < 1:
            raise ShapeError(f"dim must be positive, got {self.dim}")
        if self.order < 0:
            raise ShapeError(f"order must be nonnegative, got {self.order}")
        clean = {}
        for key, value in self.entries.items():
            key = tuple(int(i) for i in key)
            if len(key) != self.order:
                raise ShapeError(f"index {key} has length {len(key)}, expected {self.order}")
            if any(a > b for a, b in zip(key, key[1:])):
                raise ShapeError(f"index {key} is not sorted")
            if key and (key[0] < 1 or key[-1] > self.dim):
                raise ShapeError(f"index {key} out of range 1..{self.dim}")
            value = float(value)
            if not math.isfinite(value):
                raise ValueError(f"non-finite coefficient at {key}")
            clean[key] = value
        if self.order == 0 and not clean:
            clean[()] = 0.0
        object.__setattr__(self, "entries", MappingProxyType(clean))

    @classmethod
    def zeros(cls, dim: int, order: int) -> SymmetricTensor:
        return cls(dim, order, {})

    @classmethod
    def scalar(cls, value: float, dim: int) -> SymmetricTensor:
        return cls(dim, 0, {(): value})

    def __getitem__(self, key) -> float:
        return self.entries.get(tuple(sorted(key)), 0.0)

    @property
    def value(self) -> float:
        """The scalar held by an order-0 tensor."""
        if self.order != 0:
            raise ShapeError("value is only defined for order-0 tensors")
        return self.entries[()]

    def is_zero(self) -> bool:
        return all(v == 0.0 for v in self.entries.values())

    def norm(self) -> float:
        return math.sqrt(inner_product(self, self))

    def scaled(self, a: float) -> SymmetricTensor:
        return SymmetricTensor(self.dim, self.order, {k: a * v for k, v in self.entries.items()})

    def to_vector(self) -> np.ndarray:
        """Values aligned with the sorted-key layout of ``(dim, order)``."""
        rows = _key_rows(self.dim, self.order)
        vec = np.zeros(len(rows))
        for key, value in self.entries.items():
            vec[rows[key]] = value
        return vec

    def to_dense(self) -> np.ndarray:
        _, inverse, _ = _layout(self.dim, self.order)
        return self.to_vector()[inverse].reshape((self.dim,) * self.order)

    @cached_property
    def index_array(self) -> np.ndarray:
        """Stored keys as a 0-based ``(n_entries, order)`` integer array."""
        keys = list(self.entries)
        return np.array(keys, dtype=np.intp).reshape(len(keys), self.order) - 1

    @cached_property
    def value_array(self) -> np.ndarray:
        return np.fromiter(self.entries.values(), dtype=float, count=len(self.entries))

    def __repr__(self):
        return f"SymmetricTensor(dim={self.dim}, order={self.order}, nnz={len(self.entries)})"


@dataclass(frozen=True)
class DenseTensor:
    """Full ``(dim,)*order`` array tensor; generally not symmetric."""

    dim: int
    array: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.array, dtype=float)
        if arr.shape != (self.dim,) * arr.ndim:
            raise ShapeError(f"dense tensor of dim {self.dim} cannot have shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("non-finite entry in dense tensor")
        object.__setattr__(self, "array", arr)

    @property
    def order(self) -> int:
        return self.array.ndim


def _check_dims(f: SymmetricTensor, g: SymmetricTensor):
    if f.dim != g.dim:
        raise ShapeError(f"dimension mismatch: {f.dim} vs {g.dim}")


def inner_product(f: SymmetricTensor, g: SymmetricTensor) -> float:
    """Full-tensor Frobenius pairing, computed on stored entries."""
    _check_dims(f, g)
    if f.order != g.order:
        raise ShapeError(f"order mismatch: {f.order} vs {g.order}")
    if len(g.entries) < len(f.entries):
        f, g = g, f
    total = 0.0
    for key, value in f.entries.items():
        other = g.entries.get(key)
        if other is not None:
            total += perm_count(key) * value * other
    return total


def outer(f: SymmetricTensor, g: SymmetricTensor) -> DenseTensor:
    _check_dims(f, g)
    return DenseTensor(f.dim, np.multiply.outer(f.to_dense(), g.to_dense()))


def contract(f: SymmetricTensor, g: SymmetricTensor, i: int) -> DenseTensor:
    """Contract ``i`` slots of ``f`` against ``i`` slots of ``g``.

    Output axes are the remaining slots of ``f`` followed by those of ``g``.
    """
    _check_dims(f, g)
    if not 0 <= i <= min(f.order, g.order):
        raise ShapeError(f"cannot contract {i} slots of orders {f.order}, {g.order}")
    if i == 0:
        return outer(f, g)
    fa, ga = f.to_dense(), g.to_dense()
    axes = (list(range(f.order - i, f.order)), list(range(g.order - i, g.order)))
    return DenseTensor(f.dim, np.tensordot(fa, ga, axes=axes))


def _average_rows(mat: np.ndarray, dim: int, order: int) -> np.ndarray:
    """Average rows of a ``(dim**order, k)`` matrix over permutation classes."""
    keys, inverse, counts = _layout(dim, order)
    sums = np.zeros((len(keys), mat.shape[1]))
    np.add.at(sums, inverse, mat)
    return sums / counts[:, None]


def symmetrize(T: DenseTensor) -> SymmetricTensor:
    """Average ``T`` over all permutations of its slots."""
    dim, order = T.dim, T.order
    if order == 0:
        return SymmetricTensor.scalar(float(T.array), dim)
    keys, inverse, counts = _layout(dim, order)
    vals = np.bincount(inverse, weights=T.array.reshape(-1), minlength=len(keys)) / counts
    nz = np.nonzero(vals)[0]
    return SymmetricTensor(
        dim, order, {tuple(int(i) + 1 for i in keys[r]): float(vals[r]) for r in nz}
    )


def symmetrize_axes(arr: np.ndarray, axes: Sequence[int]) -> np.ndarray:
    """Symmetrize a dense array over a subset of its axes only."""
    axes = list(axes)
    if len(axes) <= 1:
        return np.asarray(arr, dtype=float)
    dim = arr.shape[axes[0]]
    moved = np.moveaxis(arr, axes, range(len(axes)))
    shape = moved.shape
    mat = moved.reshape(dim ** len(axes), -1)
    _, inverse, _ = _layout(dim, len(axes))
    avg = _average_rows(mat, dim, len(axes))[inverse]
    return np.moveaxis(avg.reshape(shape), range(len(axes)), axes)


def scale_add(a: float, f: SymmetricTensor, b: float, g: SymmetricTensor) -> SymmetricTensor:
    """Entrywise ``a*f + b*g``."""
    _check_dims(f, g)
    if f.order != g.order:
        raise ShapeError(f"order mismatch: {f.order} vs {g.order}")
    out = {}
    for key in f.entries.keys() | g.entries.keys():
        out[key] = a * f.entries.get(key, 0.0) + b * g.entries.get(key, 0.0)
    return SymmetricTensor(f.dim, f.order, out)


def basis_vector(k: int, dim: int) -> SymmetricTensor:
    """The 1-based unit vector e_k."""
    return SymmetricTensor(dim, 1, {(k,): 1.0})


def vector(values: Sequence[float]) -> SymmetricTensor:
    values = list(values)
    return SymmetricTensor(len(values), 1, {(k + 1,): v for k, v in enumerate(values) if v != 0})


def tensor_power(h: SymmetricTensor, n: int) -> SymmetricTensor:
    """``h^{⊗n}`` for an order-1 tensor ``h``; order 0 gives the scalar 1."""
    if h.order != 1:
        raise ShapeError("tensor_power expects an order-1 tensor")
    if n == 0:
        return SymmetricTensor.scalar(1.0, h.dim)
    support = sorted(k for k, in h.entries if h.entries[(k,)] != 0.0)
    out = {}
    for key in itertools.combinations_with_replacement(support, n):
        out[key] = math.prod(h.entries[(k,)] for k in key)
    return SymmetricTensor(h.dim, n, out)


def random_symmetric(rng: np.random.Generator, dim: int, order: int,
                     low: float = -1.0, high: float = 1.0) -> SymmetricTensor:
    """Random tensor with every stored entry uniform in ``[low, high]``."""
    n_keys = math.comb(dim + order - 1, order)
    vals = rng.uniform(low, high, size=n_keys)
    keys = itertools.combinations_with_replacement(range(1, dim + 1), order)
    return SymmetricTensor(dim, order, dict(zip(keys, vals.tolist())))


def tensor_to_dict(f: SymmetricTensor) -> dict:
    return {
        "dim": f.dim,
        "order": f.order,
        "entries": [{"index": list(k), "value": v} for k, v in sorted(f.entries.items())],
    }


def tensor_from_dict(data: Mapping) -> SymmetricTensor:
    try:
        dim, order = int(data["dim"]), int(data["order"])
        entries = {}
        for item in data["entries"]:
            key = tuple(item["index"])
            if key in entries:
                raise ShapeError(f"duplicate index {key}")
            entries[key] = item["value"]
    except (KeyError, TypeError) as exc:
        raise ValueError(f"malformed tensor record: {exc}") from exc
    return SymmetricTensor(dim, order, entries)


def load_tensor(path) -> SymmetricTensor:
    with open(path) as fh:
        return tensor_from_dict(json.load(fh))


def dump_tensor(f: SymmetricTensor, path) -> None:
    with open(path, "w") as fh:
        json.dump(tensor_to_dict(f), fh, indent=1)
