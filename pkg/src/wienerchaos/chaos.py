"""Finite Wiener chaos expansions and the operator calculus acting on them.

An expansion ``sum_n I_n(f_n)`` is stored as a map from chaos order to a
symmetric kernel.  Functionals are realized on the Gaussian coordinates
``xi_k = I_1(e_k)``: a stored kernel entry at sorted index ``alpha`` contributes
``perm_count(alpha) * f[alpha] * prod_k He_{mult_k(alpha)}(xi_k)``.

H-valued (and H^{⊗k}-valued) functionals are :class:`GradedChaos` objects,
whose kernels carry ``k`` extra free slots.  All stored kernels are fully
symmetric in chaos and free slots jointly; gradients of symmetric-kernel
expansions always are.
"""
from __future__ import annotations

import json
import math
from collections import defaultdict
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Mapping

import numpy as np

from .symtensor import (
    DenseTensor,
    ShapeError,
    SymmetricTensor,
    _layout,
    contract,
    inner_product,
    random_symmetric,
    scale_add,
    symmetrize,
    symmetrize_axes,
    tensor_from_dict,
    tensor_power,
    tensor_to_dict,
)

# Largest combined chaos order; factorials up to 12! are exact in float64.
MAX_ORDER = 12

_EVAL_CHUNK_ELEMENTS = 4_000_000


class OrderOverflowError(ValueError):
    """A result would exceed the configured maximum chaos order."""


@dataclass(frozen=True)
class GradedChaos:
    """Chaos expansion with ``free_slots`` open H-slots on every kernel.

    ``terms[n]`` is the kernel at chaos order ``n``; it has tensor order
    ``n + free_slots``.
    """

    dim: int
    terms: Mapping[int, SymmetricTensor] = field(default_factory=dict)
    free_slots: int = 0

    def __post_init__(self):
        if self.free_slots < 0:
            raise ShapeError("free_slots must be nonnegative")
        clean = {}
        for n in sorted(self.terms):
            f = self.terms[n]
            if n < 0:
                raise ShapeError(f"negative chaos order {n}")
            if f.dim != self.dim:
                raise ShapeError(f"term {n} has dim {f.dim}, expansion has dim {self.dim}")
            if f.order != n + self.free_slots:
                raise ShapeError(
                    f"term {n} has tensor order {f.order}, expected {n + self.free_slots}"
                )
            clean[int(n)] = f
        object.__setattr__(self, "terms", MappingProxyType(clean))

    @property
    def max_order(self) -> int:
        return max(self.terms, default=0)

    def term(self, n: int) -> SymmetricTensor:
        return self.terms.get(n) or SymmetricTensor.zeros(self.dim, n + self.free_slots)

    def expectation(self) -> SymmetricTensor:
        """E[U]: the order-0 kernel, an element of H^{⊗k}."""
        return self.term(0)

    def dense_blocks(self) -> dict[int, np.ndarray]:
        """Full arrays per chaos order, chaos slots first, free slots last."""
        return {n: f.to_dense() for n, f in self.terms.items()}

    def _combine(self, other, a, b):
        if not isinstance(other, GradedChaos) or other.free_slots != self.free_slots:
            return NotImplemented
        if other.dim != self.dim:
            raise ShapeError(f"dimension mismatch: {self.dim} vs {other.dim}")
        out = {}
        for n in self.terms.keys() | other.terms.keys():
            out[n] = scale_add(a, self.term(n), b, other.term(n))
        return self._rebuild(out)

    def _rebuild(self, terms):
        if self.free_slots == 0:
            return ChaosExpansion(self.dim, terms)
        return GradedChaos(self.dim, terms, self.free_slots)

    def __add__(self, other):
        return self._combine(other, 1.0, 1.0)

    def __sub__(self, other):
        return self._combine(other, 1.0, -1.0)

    def scaled(self, a: float):
        return self._rebuild({n: f.scaled(a) for n, f in self.terms.items()})

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return self.scaled(float(other))
        if isinstance(other, ChaosExpansion) and isinstance(self, ChaosExpansion):
            return product(self, other)
        return NotImplemented

    def __rmul__(self, other):
        if isinstance(other, (int, float)):
            return self.scaled(float(other))
        return NotImplemented

    def __neg__(self):
        return self.scaled(-1.0)

    def __repr__(self):
        orders = ",".join(str(n) for n in self.terms)
        return f"{type(self).__name__}(dim={self.dim}, free_slots={self.free_slots}, orders=[{orders}])"


@dataclass(frozen=True, repr=False)
class ChaosExpansion(GradedChaos):
    """Real-valued finite chaos expansion; ``terms[0]`` is the mean."""

    def __post_init__(self):
        if self.free_slots != 0:
            raise ShapeError("ChaosExpansion has no free slots; use GradedChaos")
        super().__post_init__()

    @classmethod
    def constant(cls, c: float, dim: int) -> ChaosExpansion:
        return cls(dim, {0: SymmetricTensor.scalar(c, dim)})

    @classmethod
    def zero(cls, dim: int) -> ChaosExpansion:
        return cls(dim, {})

    @property
    def mean(self) -> float:
        return self.term(0).value


@dataclass(frozen=True, repr=False)
class ScaledKernel(SymmetricTensor):
    """A tensor known to equal ``factor * kernel`` for an integer ``factor``.

    The entries hold the rounded product; ``kernel`` keeps the exact source so
    that dividing the factor back out is lossless.
    """

    kernel: SymmetricTensor | None = None
    factor: int = 1

    @classmethod
    def of(cls, kernel: SymmetricTensor, factor: int) -> ScaledKernel:
        entries = {k: factor * v for k, v in kernel.entries.items()}
        return cls(kernel.dim, kernel.order, entries, kernel=kernel, factor=factor)


def from_kernel(f: SymmetricTensor) -> ChaosExpansion:
    """The single-chaos functional I_p(f)."""
    return ChaosExpansion(f.dim, {f.order: f})


def _product_coefficient(p: int, q: int, i: int) -> int:
    return (math.factorial(p) * math.factorial(q)
            // (math.factorial(i) * math.factorial(p - i) * math.factorial(q - i)))


def product(F: ChaosExpansion, G: ChaosExpansion, max_order: int = MAX_ORDER) -> ChaosExpansion:
    """Chaos expansion of the pointwise product F*G.

    Each term pair uses I_p(f) I_q(g) = sum_i c_i I_{p+q-2i}(sym(f ⊗_i g)) with
    c_i = p! q! / (i! (p-i)! (q-i)!), i = 0..min(p, q).
    """
    if F.dim != G.dim:
        raise ShapeError(f"dimension mismatch: {F.dim} vs {G.dim}")
    acc: dict[int, SymmetricTensor] = {}
    for p, f in F.terms.items():
        if f.is_zero():
            continue
        for q, g in G.terms.items():
            if g.is_zero():
                continue
            if p + q > max_order:
                raise OrderOverflowError(
                    f"product of orders {p} and {q} exceeds max order {max_order}"
                )
            for i in range(min(p, q) + 1):
                c = float(_product_coefficient(p, q, i))
                term = symmetrize(contract(f, g, i))
                n = p + q - 2 * i
                acc[n] = scale_add(1.0, acc[n], c, term) if n in acc else term.scaled(c)
    return ChaosExpansion(F.dim, acc)


def _hermite_table(x: np.ndarray, degree: int) -> np.ndarray:
    """He_0..He_degree at every coordinate; shape ``x.shape + (degree+1,)``."""
    table = np.empty(x.shape + (degree + 1,))
    table[..., 0] = 1.0
    if degree >= 1:
        table[..., 1] = x
    for n in range(1, degree):
        table[..., n + 1] = x * table[..., n] - n * table[..., n - 1]
    return table


def _run_lengths(keys: np.ndarray):
    """Distinct indices and multiplicities per sorted key, padded with (0, 0)."""
    n_keys, p = keys.shape
    idx = np.zeros((n_keys, p), dtype=np.intp)
    mult = np.zeros((n_keys, p), dtype=np.intp)
    for r, key in enumerate(keys.tolist()):
        slot = -1
        prev = None
        for k in key:
            if k != prev:
                slot += 1
                idx[r, slot] = k
                prev = k
            mult[r, slot] += 1
    return idx, mult


def _eval_kernel(f: SymmetricTensor, X: np.ndarray) -> np.ndarray:
    """I_p(f) at each row of ``X`` (shape ``(B, dim)``)."""
    p = f.order
    if p == 0:
        return np.full(X.shape[0], f.value)
    if not f.entries:
        return np.zeros(X.shape[0])
    if p == 1:
        return X @ f.to_vector()
    if p == 2:
        # Wick square: xi_j xi_k off the diagonal, xi_j^2 - 1 on it
        M = f.to_dense()
        return np.einsum("bi,ij,bj->b", X, M, X, optimize=True) - np.trace(M)
    keys = f.index_array
    weights = f.value_array * np.array([_perm_count_row(k) for k in keys.tolist()], dtype=float)
    idx, mult = _run_lengths(keys)
    out = np.empty(X.shape[0])
    chunk = max(1, _EVAL_CHUNK_ELEMENTS // (len(keys) * p))
    for start in range(0, X.shape[0], chunk):
        H = _hermite_table(X[start:start + chunk], p)
        monos = H[:, idx, mult].prod(axis=2)
        out[start:start + chunk] = monos @ weights
    return out


def _perm_count_row(key) -> int:
    n = math.factorial(len(key))
    run = 1
    for a, b in zip(key, key[1:]):
        if a == b:
            run += 1
        else:
            n //= math.factorial(run)
            run = 1
    return n // math.factorial(run)


def evaluate(F: ChaosExpansion, x) -> float | np.ndarray:
    """Value of F at Gaussian coordinates ``x``.

    ``x`` may be one sample of length ``dim`` or an array ``(n_samples, dim)``.
    """
    X = np.asarray(x, dtype=float)
    single = X.ndim == 1
    X = np.atleast_2d(X)
    if X.shape[1] != F.dim:
        raise ShapeError(f"sample has {X.shape[1]} coordinates, expansion has dim {F.dim}")
    if F.free_slots:
        raise ShapeError("evaluate expects a real-valued expansion; see evaluate_graded")
    total = np.zeros(X.shape[0])
    for f in F.terms.values():
        total += _eval_kernel(f, X)
    return float(total[0]) if single else total


def evaluate_graded(U: GradedChaos, x) -> np.ndarray:
    """Value of an H^{⊗k}-valued expansion at one sample, as a ``(dim,)*k`` array.

    Sums over full (unsorted) chaos index tuples, so it does not share the
    sorted-key path used by :func:`evaluate`.
    """
    x = np.asarray(x, dtype=float)
    if x.shape != (U.dim,):
        raise ShapeError(f"sample must have shape ({U.dim},)")
    k = U.free_slots
    out = np.zeros((U.dim,) * k)
    for n, f in U.terms.items():
        dense = f.to_dense().reshape(U.dim ** n, U.dim ** k)
        keys, inverse, _ = _layout(U.dim, n)
        if n == 0:
            wick = np.ones(1)
        else:
            H = _hermite_table(x, n)
            idx, mult = _run_lengths(keys)
            wick = H[idx, mult].prod(axis=1)[inverse]
        out += (wick @ dense).reshape((U.dim,) * k)
    return out


def gradient(F: GradedChaos) -> GradedChaos:
    """Malliavin gradient: ∇I_n(f) = n I_{n-1}(f) with one slot freed."""
    terms = {n - 1: f.scaled(float(n)) for n, f in F.terms.items() if n >= 1}
    return GradedChaos(F.dim, terms, F.free_slots + 1)


def divergence(U: GradedChaos) -> GradedChaos:
    """Divergence (adjoint of :func:`gradient`); consumes one free slot.

    A chaos-order-n kernel becomes chaos order n+1.  The kernel is already
    symmetric in all slots, so symmetrizing over the n+1 integrated slots
    leaves it unchanged.
    """
    if U.free_slots < 1:
        raise ShapeError("divergence needs at least one free slot")
    terms = {n + 1: f for n, f in U.terms.items()}
    if U.free_slots == 1:
        return ChaosExpansion(U.dim, terms)
    return GradedChaos(U.dim, terms, U.free_slots - 1)


def ou_apply(F: ChaosExpansion) -> ChaosExpansion:
    """Ornstein-Uhlenbeck (number) operator: multiplies chaos n by n."""
    return ChaosExpansion(F.dim, {n: f.scaled(float(n)) for n, f in F.terms.items() if n >= 1})


def sobolev_norm2(F: ChaosExpansion, k: int = 0) -> float:
    """L^2 Sobolev norm ||(I+L)^{k/2} F|| computed from the kernels."""
    total = math.fsum(
        (1 + n) ** k * math.factorial(n) * inner_product(f, f) for n, f in F.terms.items()
    )
    return math.sqrt(total)


def wick_exponential(h: SymmetricTensor, K: int) -> ChaosExpansion:
    """Truncation at order K of exp(δh - |h|^2/2) = sum_n I_n(h^{⊗n})/n!."""
    if K < 0:
        raise ValueError("truncation order must be nonnegative")
    if h.order != 1:
        raise ShapeError("wick_exponential expects an order-1 tensor")
    terms = {}
    for n in range(K + 1):
        hn = tensor_power(h, n)
        fact = math.factorial(n)
        terms[n] = SymmetricTensor(h.dim, n, {key: v / fact for key, v in hn.entries.items()})
    return ChaosExpansion(h.dim, terms)


def cameron_martin_pairing(F: ChaosExpansion, h: SymmetricTensor) -> float:
    """E[F(· + h)] = sum_n (f_n, h^{⊗n})."""
    if h.order != 1:
        raise ShapeError("shift must be an order-1 tensor")
    if F.dim != h.dim:
        raise ShapeError(f"dimension mismatch: {F.dim} vs {h.dim}")
    return math.fsum(inner_product(f, tensor_power(h, n)) for n, f in F.terms.items())


def stroock_coefficients(F: ChaosExpansion) -> dict[int, SymmetricTensor]:
    """E[∇^n F] = n! f_n for every present order n."""
    return {n: ScaledKernel.of(f, math.factorial(n)) for n, f in F.terms.items()}


def stroock_reconstruct(coeffs: Mapping[int, SymmetricTensor]) -> ChaosExpansion:
    """F = E[F] + sum_n I_n(E[∇^n F]) / n!."""
    dims = {c.dim for c in coeffs.values()}
    if len(dims) > 1:
        raise ShapeError(f"coefficients disagree on dim: {sorted(dims)}")
    terms = {}
    for n, c in coeffs.items():
        if c.order != n:
            raise ShapeError(f"coefficient {n} has order {c.order}")
        fact = math.factorial(n)
        if isinstance(c, ScaledKernel) and c.factor == fact and c.kernel is not None:
            terms[n] = c.kernel
        else:
            terms[n] = SymmetricTensor(c.dim, n, {k: v / fact for k, v in c.entries.items()})
    if not terms:
        # an empty map carries no dim; the zero expansion on R^1 stands in
        return ChaosExpansion.zero(1)
    return ChaosExpansion(dims.pop(), terms)


def graded_product_blocks(A: GradedChaos, B: GradedChaos,
                          max_order: int = MAX_ORDER) -> dict[int, np.ndarray]:
    """Product of two graded expansions as dense blocks per chaos order.

    The chaos parts multiply by the contraction formula; the free slots are
    tensored (A's first) and symmetrized among themselves.  Chaos slots come
    first in every block.
    """
    if A.dim != B.dim:
        raise ShapeError(f"dimension mismatch: {A.dim} vs {B.dim}")
    k1, k2 = A.free_slots, B.free_slots
    k = k1 + k2
    out: dict[int, np.ndarray] = {}
    for n1, a in A.terms.items():
        ad = a.to_dense()
        for n2, b in B.terms.items():
            if n1 + n2 + k > max_order:
                raise OrderOverflowError(f"graded product exceeds max order {max_order}")
            bd = b.to_dense()
            for i in range(min(n1, n2) + 1):
                c = float(_product_coefficient(n1, n2, i))
                T = np.tensordot(ad, bd, axes=(list(range(n1 - i, n1)), list(range(n2 - i, n2))))
                # axes now: A chaos (n1-i), A free (k1), B chaos (n2-i), B free (k2)
                ac = list(range(n1 - i))
                af = list(range(n1 - i, n1 - i + k1))
                bc = list(range(n1 - i + k1, n1 - i + k1 + n2 - i))
                bf = list(range(n1 - i + k1 + n2 - i, T.ndim))
                T = np.transpose(T, ac + bc + af + bf)
                nc = n1 + n2 - 2 * i
                T = symmetrize_axes(T, range(nc))
                T = symmetrize_axes(T, range(nc, nc + k))
                out[nc] = out[nc] + c * T if nc in out else c * T
    return out


def graded_product(A: GradedChaos, B: GradedChaos, max_order: int = MAX_ORDER) -> GradedChaos:
    """:func:`graded_product_blocks` projected onto fully symmetric kernels."""
    k = A.free_slots + B.free_slots
    terms = {}
    for n, block in graded_product_blocks(A, B, max_order).items():
        terms[n] = symmetrize(DenseTensor(A.dim, block)) if block.ndim else \
            SymmetricTensor.scalar(float(block), A.dim)
    if k == 0:
        return ChaosExpansion(A.dim, terms)
    return GradedChaos(A.dim, terms, k)


def iterate_gradient(F: GradedChaos, n: int) -> GradedChaos:
    U = F
    for _ in range(n):
        U = gradient(U)
    return U


def iterate_divergence(U: GradedChaos, n: int) -> GradedChaos:
    for _ in range(n):
        U = divergence(U)
    return U


def leibniz_sides(F: ChaosExpansion, G: ChaosExpansion, n: int):
    """Both sides of ∇^n(FG) = sum_i C(n,i) ∇^i F ⊗̂ ∇^{n-i} G as dense blocks."""
    lhs = iterate_gradient(product(F, G), n).dense_blocks()
    rhs: dict[int, np.ndarray] = defaultdict(float)
    for i in range(n + 1):
        blocks = graded_product_blocks(iterate_gradient(F, i), iterate_gradient(G, n - i))
        for order, block in blocks.items():
            rhs[order] = rhs[order] + math.comb(n, i) * block
    return lhs, dict(rhs)


def max_block_diff(lhs: Mapping[int, np.ndarray], rhs: Mapping[int, np.ndarray]) -> float:
    err = 0.0
    for order in lhs.keys() | rhs.keys():
        a = lhs.get(order, 0.0)
        b = rhs.get(order, 0.0)
        err = max(err, float(np.max(np.abs(np.asarray(a) - np.asarray(b)), initial=0.0)))
    return err


def max_kernel_diff(F: GradedChaos, G: GradedChaos) -> float:
    """Largest entrywise gap between two expansions' stored kernels."""
    if F.dim != G.dim or F.free_slots != G.free_slots:
        raise ShapeError("expansions are not comparable")
    err = 0.0
    for n in F.terms.keys() | G.terms.keys():
        f, g = F.term(n), G.term(n)
        for key in f.entries.keys() | g.entries.keys():
            err = max(err, abs(f.entries.get(key, 0.0) - g.entries.get(key, 0.0)))
    return err


def random_expansion(rng: np.random.Generator, dim: int, max_order: int,
                     free_slots: int = 0) -> GradedChaos:
    """Random expansion with every order 0..top present, top drawn uniformly."""
    top = int(rng.integers(0, max_order + 1))
    terms = {n: random_symmetric(rng, dim, n + free_slots) for n in range(top + 1)}
    if free_slots == 0:
        return ChaosExpansion(dim, terms)
    return GradedChaos(dim, terms, free_slots)


def chaos_to_dict(F: ChaosExpansion) -> dict:
    return {
        "dim": F.dim,
        "terms": [{"order": n, "tensor": tensor_to_dict(f)} for n, f in F.terms.items()],
    }


def chaos_from_dict(data: Mapping) -> ChaosExpansion:
    dim = int(data["dim"])
    terms = {}
    for item in data["terms"]:
        n = int(item["order"])
        if n in terms:
            raise ShapeError(f"duplicate chaos order {n}")
        terms[n] = tensor_from_dict(item["tensor"])
    return ChaosExpansion(dim, terms)


def load_chaos(path) -> ChaosExpansion:
    with open(path) as fh:
        return chaos_from_dict(json.load(fh))


def dump_chaos(F: ChaosExpansion, path) -> None:
    with open(path, "w") as fh:
        json.dump(chaos_to_dict(F), fh, indent=1)
