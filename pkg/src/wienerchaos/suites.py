"""Named verification suites; each returns a list of case records."""
from __future__ import annotations

import math
import time
from dataclasses import asdict, dataclass
from typing import Callable

import numpy as np

from . import hermite_oracle as oracle
from .chaos import (
    MAX_ORDER,
    ChaosExpansion,
    GradedChaos,
    cameron_martin_pairing,
    divergence,
    evaluate,
    from_kernel,
    iterate_divergence,
    iterate_gradient,
    leibniz_sides,
    max_block_diff,
    max_kernel_diff,
    ou_apply,
    product,
    random_expansion,
    sobolev_norm2,
    stroock_coefficients,
    stroock_reconstruct,
    wick_exponential,
)
from .montecarlo import (
    StepKernel,
    mc_divergence_ito_test,
    mc_isometry_test,
    mc_ito_convergence_test,
    mc_moments_test,
    mc_offdiagonal_exactness_test,
    mc_product_test,
)
from .report import CaseRecord, VerificationReport, check, digest, merge
from .symtensor import SymmetricTensor, basis_vector, inner_product, random_symmetric
from .symtensor import tensor_power, vector

SUITES = ("product", "leibniz", "stroock", "cameron-martin", "isometry-mc", "ito-convergence")
ALGEBRAIC_TOL = 1e-9


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    suite: str = "all"
    dim: int = 3
    max_order: int = 8
    trials: int = 200
    paths: int = 100_000
    grid: int = 64
    seed: int = 0
    tol: float | None = None
    parallel: bool = False

    def validate(self) -> RunConfig:
        if self.suite not in SUITES + ("all",):
            raise ConfigError(f"unknown suite {self.suite!r}")
        if self.dim < 1 or self.paths < 1 or self.grid < 1:
            raise ConfigError("dim, paths and grid must be positive")
        if self.trials < 0:
            raise ConfigError("trials must be nonnegative")
        if not 0 <= self.max_order <= MAX_ORDER:
            raise ConfigError(f"max order must lie in 0..{MAX_ORDER}")
        if self.seed < 0:
            raise ConfigError("seed must be nonnegative")
        if self.tol is not None and not self.tol > 0:
            raise ConfigError("tolerance override must be positive")
        return self

    @property
    def algebraic_tol(self) -> float:
        return ALGEBRAIC_TOL if self.tol is None else self.tol

    def echo(self) -> dict:
        d = asdict(self)
        d["tolerance_overrides"] = {} if self.tol is None else {"algebraic": self.tol}
        return d


def _rng(config: RunConfig, suite: str) -> np.random.Generator:
    return np.random.default_rng([config.seed, SUITES.index(suite)])


def _chaos_digest(*expansions) -> str:
    parts = []
    for F in expansions:
        for n, f in F.terms.items():
            parts.append([n, sorted((list(k), v) for k, v in f.entries.items())])
    return digest(parts)


def _relative(a: float, b: float) -> float:
    return abs(a - b) / max(1.0, abs(a), abs(b))


def product_suite(config: RunConfig) -> list[CaseRecord]:
    rng = _rng(config, "product")
    tol = config.algebraic_tol
    half = config.max_order // 2
    cases = []
    for t in range(config.trials):
        dim = int(rng.integers(1, config.dim + 1))
        F = random_expansion(rng, dim, half)
        G = random_expansion(rng, dim, half)
        FG = product(F, G, max_order=config.max_order)
        expected = oracle.poly_mul(oracle.chaos_to_monomial(F), oracle.chaos_to_monomial(G))
        err = oracle.max_coeff_diff(oracle.chaos_to_monomial(FG), expected)
        d = _chaos_digest(F, G)
        cases.append(check(f"oracle trial {t}", d, err, tol, dim=dim))
        x = rng.standard_normal((10, dim))
        lhs, rhs = evaluate(FG, x), evaluate(F, x) * evaluate(G, x)
        rel = float(np.max(np.abs(lhs - rhs) / np.maximum(1.0, np.abs(rhs))))
        cases.append(check(f"pointwise trial {t}", d, rel, 10 * tol))
    cases.extend(coefficient_fixtures(tol))
    return cases


def coefficient_fixtures(tol: float) -> list[CaseRecord]:
    e1 = basis_vector(1, 1)
    xi = from_kernel(e1)
    he2 = from_kernel(tensor_power(e1, 2))
    sq = product(xi, xi)
    want_sq = {0: 1.0, 2: 1.0}
    err_sq = max(abs(sq.term(n)[(1,) * n] - v) for n, v in want_sq.items())
    he2sq = product(he2, he2)
    want = {0: 2.0, 2: 4.0, 4: 1.0}
    err4 = max(abs(he2sq.term(n)[(1,) * n] - v) for n, v in want.items())
    stray = set(he2sq.terms) - set(want)
    return [
        check("fixture xi^2 = He2 + 1", "fixture", err_sq, tol),
        check("fixture He2^2 = He4 + 4He2 + 2", "fixture", err4 if not stray else math.inf, tol),
    ]


def leibniz_suite(config: RunConfig) -> list[CaseRecord]:
    rng = _rng(config, "leibniz")
    top = min(3, config.max_order // 2)
    cases = []
    for t in range(config.trials):
        dim = int(rng.integers(1, min(config.dim, 3) + 1))
        F = random_expansion(rng, dim, top)
        G = random_expansion(rng, dim, top)
        n = int(rng.integers(0, 4))
        lhs, rhs = leibniz_sides(F, G, n)
        cases.append(check(f"leibniz trial {t} n={n}", _chaos_digest(F, G),
                           max_block_diff(lhs, rhs), config.algebraic_tol, n=n, dim=dim))
    return cases


def stroock_suite(config: RunConfig) -> list[CaseRecord]:
    rng = _rng(config, "stroock")
    cases = []
    for t in range(config.trials):
        F = random_expansion(rng, config.dim, config.max_order // 2)
        d = _chaos_digest(F)
        coeffs = stroock_coefficients(F)
        back = stroock_reconstruct(coeffs)
        cases.append(check(f"round trip {t}", d, max_kernel_diff(back, F), 0.0))
        norm = sobolev_norm2(F, 0)
        slack = 0.0
        for n, c in coeffs.items():
            lhs = math.sqrt(inner_product(c, c))
            slack = max(slack, lhs - math.sqrt(math.factorial(n)) * norm * (1 + 1e-12))
        cases.append(check(f"bound {t}", d, max(slack, 0.0), 0.0))
        gap = 0.0
        for n, c in coeffs.items():
            via_grad = iterate_gradient(F, n).expectation()
            for key in c.entries:
                gap = max(gap, _relative(c.entries[key], via_grad[key]))
        cases.append(check(f"coefficients vs gradients {t}", d, gap, 1e-12))
        ou_gap = max_kernel_diff(ou_apply(F), divergence(iterate_gradient(F, 1)))
        cases.append(check(f"ou consistency {t}", d, ou_gap, 1e-12))
    for n in range(1, 5):
        h = _unit(rng.standard_normal(config.dim))
        F = from_kernel(tensor_power(h, n))
        lhs = math.sqrt(inner_product(stroock_coefficients(F)[n], stroock_coefficients(F)[n]))
        rhs = math.sqrt(math.factorial(n)) * sobolev_norm2(F, 0)
        cases.append(check(f"bound equality n={n}", digest(n, h.to_vector()),
                           abs(lhs - rhs) / rhs, 1e-12))
    return cases


def _unit(v: np.ndarray) -> SymmetricTensor:
    return vector(v / np.linalg.norm(v))


def cameron_martin_suite(config: RunConfig) -> list[CaseRecord]:
    rng = _rng(config, "cameron-martin")
    tol = 1e-10 if config.tol is None else config.tol
    cases = []
    half = config.max_order // 2
    for t in range(config.trials):
        F = random_expansion(rng, config.dim, half)
        h = vector(rng.uniform(-1, 1, config.dim))
        K = F.max_order + int(rng.integers(0, 2))
        pairing = cameron_martin_pairing(F, h)
        via_wick = product(F, wick_exponential(h, K), max_order=MAX_ORDER).mean
        cases.append(check(f"wick pairing trial {t}", _chaos_digest(F), _relative(pairing, via_wick),
                           tol, K=K))
    xi1 = from_kernel(basis_vector(1, config.dim))
    sq = product(xi1, xi1)
    hand = cameron_martin_pairing(sq, basis_vector(1, config.dim))
    cases.append(check("hand value E[(xi1+1)^2] = 2", "fixture", abs(hand - 2.0), tol))
    cases.extend(divergence_power_cases(rng, config.dim, n_samples=100))
    return cases


def divergence_power_cases(rng: np.random.Generator, dim: int, n_samples: int = 100,
                           tol: float = 1e-9) -> list[CaseRecord]:
    """δ^n h^{⊗n} against |h|^n He_n(<h, xi>/|h|)."""
    cases = []
    for n in range(1, 5):
        hv = rng.uniform(-1, 1, dim)
        h = vector(hv)
        U = GradedChaos(dim, {0: tensor_power(h, n)}, free_slots=n)
        In = iterate_divergence(U, n)
        x = rng.standard_normal((n_samples, dim))
        r = np.linalg.norm(hv)
        closed = r ** n * oracle.hermite_eval(n, x @ hv / r)
        got = evaluate(In, x)
        err = float(np.max(np.abs(got - closed) / np.maximum(1.0, np.abs(closed))))
        cases.append(check(f"divergence power n={n}", digest(n, hv), err, tol))
    return cases


def isometry_mc_suite(config: RunConfig) -> list[CaseRecord]:
    rng = _rng(config, "isometry-mc")
    N, paths, seed = config.grid, config.paths, config.seed
    kw = dict(seed=seed, parallel=config.parallel)
    k1a, k1b = StepKernel.random(rng, N, 1), StepKernel.random(rng, N, 1)
    k2a, k2b = StepKernel.random(rng, N, 2), StepKernel.random(rng, N, 2)
    # scaled so that |f|^2 = 1/2 and E[I_2(f)^2] = 1
    k2n = StepKernel(k2a.values / math.sqrt(2 * k2a.l2_inner(k2a)))
    k3 = StepKernel.random(rng, N, 3, support=min(N, 8))
    cases = [
        mc_isometry_test(k1a, k1b, paths, stream=1, **kw),
        mc_isometry_test(k1a, k2a, paths, stream=2, **kw),
        mc_isometry_test(k2a, k2b, paths, stream=3, **kw),
        mc_isometry_test(k2n, k2n, paths, stream=4, **kw),
        mc_isometry_test(StepKernel.constant(0.0, N, 2), k2a, paths, stream=5, **kw),
    ]
    for stream, f in enumerate((k1a, k2a, k3), start=6):
        cases.extend(mc_moments_test(f, paths, stream=stream, **kw))
    cases.append(mc_divergence_ito_test(k1a, min(paths, 10_000), seed=seed, stream=9))
    small = 8
    pa, pb = StepKernel.random(rng, small, 1), StepKernel.random(rng, small, 2)
    pc = StepKernel.random(rng, small, 2)
    n_prod = min(paths, 10_000)
    for stream, (f, g) in enumerate(((pa, pa), (pa, pb), (pb, pc)), start=10):
        cases.append(mc_product_test(f, g, n_prod, stream=stream, **kw))
    return cases


def ito_convergence_suite(config: RunConfig) -> list[CaseRecord]:
    rng = _rng(config, "ito-convergence")
    paths = min(config.paths, 20_000)
    cases = [mc_ito_convergence_test(n_paths=paths, seed=config.seed, stream=100,
                                     parallel=config.parallel)]
    for p, N in ((2, config.grid), (3, min(config.grid, 16))):
        f = StepKernel.random(rng, N, p)
        vals = f.values.copy()
        idx = np.indices(vals.shape)
        for a in range(p):
            for b in range(a + 1, p):
                vals[idx[a] == idx[b]] = 0.0
        cases.append(mc_offdiagonal_exactness_test(StepKernel(vals), min(paths, 2000),
                                                   seed=config.seed, stream=200 + p))
    return cases


SUITE_FUNCS: dict[str, Callable[[RunConfig], list[CaseRecord]]] = {
    "product": product_suite,
    "leibniz": leibniz_suite,
    "stroock": stroock_suite,
    "cameron-martin": cameron_martin_suite,
    "isometry-mc": isometry_mc_suite,
    "ito-convergence": ito_convergence_suite,
}


def run_suite(config: RunConfig, timing: bool = True) -> VerificationReport:
    """Run the configured suite (or all of them) and build its report."""
    config.validate()
    start = time.perf_counter()
    if config.suite == "all":
        parts = [VerificationReport(name, {}, SUITE_FUNCS[name](config), config.seed)
                 for name in SUITES]
        report = merge("all", config.echo(), config.seed, parts)
    else:
        report = VerificationReport(config.suite, config.echo(),
                                    SUITE_FUNCS[config.suite](config), config.seed)
    if timing:
        report.runtime_ms = int(round((time.perf_counter() - start) * 1000))
    return report
