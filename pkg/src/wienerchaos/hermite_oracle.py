"""Brute-force polynomial oracle.

Chaos expansions are converted to plain multivariate monomials in the
Gaussian coordinates, multiplied by naive convolution, and integrated with
exact Gaussian moments.  Nothing here touches tensor contraction, so it is an
independent check on the chaos product.
"""
from __future__ import annotations

import itertools
import json
import math
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Mapping, Sequence

import numpy as np

from .chaos import ChaosExpansion
from .symtensor import ShapeError, SymmetricTensor

MAX_DEGREE = 12


def hermite_eval(n: int, x):
    """Probabilists' Hermite polynomial He_n at ``x`` (scalar or array)."""
    if n < 0:
        raise ValueError("degree must be nonnegative")
    x = np.asarray(x, dtype=float)
    prev, cur = np.ones_like(x), x
    if n == 0:
        return prev if prev.ndim else float(prev)
    for k in range(1, n):
        prev, cur = cur, x * cur - k * prev
    return cur if cur.ndim else float(cur)


@lru_cache(maxsize=None)
def _hermite_int_coeffs(n: int) -> tuple[int, ...]:
    if n == 0:
        return (1,)
    if n == 1:
        return (0, 1)
    a, b = _hermite_int_coeffs(n - 2), _hermite_int_coeffs(n - 1)
    out = [0] * (n + 1)
    for k, c in enumerate(b):
        out[k + 1] += c
    for k, c in enumerate(a):
        out[k] -= (n - 1) * c
    return tuple(out)


def hermite_coeffs(n: int) -> np.ndarray:
    """Monomial coefficients of He_n, lowest degree first."""
    if n < 0:
        raise ValueError("degree must be nonnegative")
    return np.array(_hermite_int_coeffs(n), dtype=float)


@lru_cache(maxsize=None)
def _power_in_hermite(k: int) -> tuple[Fraction, ...]:
    # x^k = sum_j c_j He_j(x); solved by back-substitution on the unit-triangular basis
    residual = [Fraction(0)] * (k + 1)
    residual[k] = Fraction(1)
    out = [Fraction(0)] * (k + 1)
    for j in range(k, -1, -1):
        c = residual[j]
        if c:
            out[j] = c
            for d, h in enumerate(_hermite_int_coeffs(j)):
                residual[d] -= c * h
    return tuple(out)


@dataclass(frozen=True)
class MonomialPoly:
    """Polynomial in ``dim`` Gaussian coordinates: exponent vector -> coefficient."""

    dim: int
    terms: Mapping[tuple[int, ...], float] = field(default_factory=dict)

    def __post_init__(self):
        clean = {}
        for exps, c in self.terms.items():
            exps = tuple(int(e) for e in exps)
            if len(exps) != self.dim or min(exps, default=0) < 0:
                raise ShapeError(f"bad exponent vector {exps} for dim {self.dim}")
            c = float(c)
            if not math.isfinite(c):
                raise ValueError(f"non-finite coefficient at {exps}")
            if c != 0.0:
                clean[exps] = clean.get(exps, 0.0) + c
        object.__setattr__(self, "terms", clean)

    @classmethod
    def constant(cls, c: float, dim: int) -> MonomialPoly:
        return cls(dim, {(0,) * dim: c})

    @classmethod
    def coordinate(cls, k: int, dim: int) -> MonomialPoly:
        """The 1-based coordinate x_k."""
        exps = [0] * dim
        exps[k - 1] = 1
        return cls(dim, {tuple(exps): 1.0})

    @property
    def degree(self) -> int:
        return max((sum(e) for e in self.terms), default=0)

    def __call__(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        total = np.zeros(x.shape[0])
        for exps, c in self.terms.items():
            total += c * np.prod(x ** np.array(exps), axis=1)
        return total

    def coeff(self, exps) -> float:
        return self.terms.get(tuple(exps), 0.0)


def max_coeff_diff(P: MonomialPoly, Q: MonomialPoly) -> float:
    keys = P.terms.keys() | Q.terms.keys()
    return max((abs(P.coeff(k) - Q.coeff(k)) for k in keys), default=0.0)


def chaos_to_monomial(F: ChaosExpansion) -> MonomialPoly:
    """Expand each Wick monomial prod_k He_{mult_k}(x_k) into monomials."""
    out = defaultdict(float)
    for order, f in F.terms.items():
        for key, value in f.entries.items():
            if value == 0.0:
                continue
            mults = Counter(key)
            weight = math.factorial(order)
            for m in mults.values():
                weight //= math.factorial(m)
            factors = [(k, hermite_coeffs(m)) for k, m in sorted(mults.items())]
            # cartesian product over the per-variable Hermite expansions
            for choice in itertools.product(*(range(len(c)) for _, c in factors)):
                c = weight * value
                exps = [0] * F.dim
                for (k, coeffs), d in zip(factors, choice):
                    c *= coeffs[d]
                    exps[k - 1] = d
                if c != 0.0:
                    out[tuple(exps)] += c
    return MonomialPoly(F.dim, out)


def monomial_to_chaos(P: MonomialPoly) -> ChaosExpansion:
    """Inverse basis change: monomials to Wick monomials, grouped by chaos order."""
    by_order: dict[int, dict[tuple[int, ...], float]] = defaultdict(lambda: defaultdict(float))
    for exps, c in P.terms.items():
        if max(exps, default=0) > MAX_DEGREE:
            raise ValueError(f"per-variable degree above {MAX_DEGREE}")
        expansions = [_power_in_hermite(a) for a in exps]
        for choice in itertools.product(*(range(len(e)) for e in expansions)):
            w = Fraction(1)
            for e, j in zip(expansions, choice):
                w *= e[j]
                if not w:
                    break
            if not w:
                continue
            key = tuple(k + 1 for k, j in enumerate(choice) for _ in range(j))
            mult = math.factorial(len(key))
            for j in choice:
                mult //= math.factorial(j)
            by_order[len(key)][key] += c * float(w) / mult
    terms = {n: SymmetricTensor(P.dim, n, dict(entries)) for n, entries in by_order.items()}
    return ChaosExpansion(P.dim, terms)


def poly_mul(P: MonomialPoly, Q: MonomialPoly) -> MonomialPoly:
    if P.dim != Q.dim:
        raise ShapeError(f"dimension mismatch: {P.dim} vs {Q.dim}")
    out = defaultdict(float)
    for a, ca in P.terms.items():
        for b, cb in Q.terms.items():
            out[tuple(x + y for x, y in zip(a, b))] += ca * cb
    return MonomialPoly(P.dim, out)


def _double_factorial(n: int) -> int:
    return math.prod(range(n, 0, -2)) if n > 0 else 1


def gaussian_moment(exponents: Sequence[int]) -> float:
    """E[prod xi_k^a_k] for independent standard normals."""
    if any(a < 0 for a in exponents):
        raise ValueError("exponents must be nonnegative")
    if any(a % 2 for a in exponents):
        return 0.0
    return float(math.prod(_double_factorial(a - 1) for a in exponents))


def expectation(P: MonomialPoly) -> float:
    return math.fsum(c * gaussian_moment(e) for e, c in P.terms.items())


def poly_to_dict(P: MonomialPoly) -> dict:
    return {
        "dim": P.dim,
        "terms": [{"exponents": list(e), "value": c} for e, c in sorted(P.terms.items())],
    }


def poly_from_dict(data: Mapping) -> MonomialPoly:
    return MonomialPoly(int(data["dim"]), {tuple(t["exponents"]): t["value"] for t in data["terms"]})


def dump_poly(P: MonomialPoly, path) -> None:
    with open(path, "w") as fh:
        json.dump(poly_to_dict(P), fh, indent=1)


def load_poly(path) -> MonomialPoly:
    with open(path) as fh:
        return poly_from_dict(json.load(fh))
