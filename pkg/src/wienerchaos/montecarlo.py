"""Brownian paths on a uniform grid and Monte Carlo checks of the chaos algebra.

The Cameron-Martin space is modelled by the step basis
``e_j = dt^{-1/2} 1_{((j-1)dt, j dt]}`` (as derivatives), so the Gaussian
coordinates of a path are ``xi_j = ΔW_j / sqrt(dt)``.

Normal variates come from a counter-based Philox stream: path ``i`` under seed
``s`` reads a fixed block of raw 64-bit words at counter offset ``i * words/4``
and turns them into normals by Box-Muller.  A path therefore depends only on
``(seed, stream, i)``, and chunked or parallel runs reproduce serial ones bit
for bit.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .chaos import ChaosExpansion, divergence, evaluate, from_kernel, product
from .chaos import GradedChaos
from .report import CaseRecord, check, digest
from .symtensor import DenseTensor, ShapeError, SymmetricTensor, inner_product, symmetrize
from .symtensor import symmetrize_axes

SE_MULTIPLIER = 4.0
MAX_ITO_ORDER = 4
_CHUNK_PATHS = 4096


@dataclass(frozen=True)
class GridBasis:
    n_steps: int

    def __post_init__(self):
        if self.n_steps < 1:
            raise ValueError("grid needs at least one step")

    @property
    def dt(self) -> float:
        return 1.0 / self.n_steps

    @property
    def midpoints(self) -> np.ndarray:
        return (np.arange(self.n_steps) + 0.5) * self.dt

    def gram(self) -> np.ndarray:
        """Gram matrix of the basis; the identity by construction."""
        return np.eye(self.n_steps)


@dataclass(frozen=True)
class BrownianPath:
    """Increments of one path (shape ``(N,)``) or a batch (shape ``(B, N)``)."""

    increments: np.ndarray
    dt: float

    @property
    def coords(self) -> np.ndarray:
        return self.increments / math.sqrt(self.dt)

    @property
    def terminal(self):
        return self.increments.sum(axis=-1)

    @property
    def n_steps(self) -> int:
        return self.increments.shape[-1]


class PathStream:
    """Seeded, counter-addressed source of Brownian paths on an N-step grid."""

    def __init__(self, seed: int, n_steps: int, stream: int = 0):
        if seed < 0 or stream < 0:
            raise ValueError("seed and stream must be nonnegative")
        self.seed = int(seed)
        self.stream = int(stream)
        self.basis = GridBasis(n_steps)
        n_even = n_steps + n_steps % 2
        self._n_even = n_even
        self.words_per_path = 4 * math.ceil(n_even / 4)

    @property
    def n_steps(self) -> int:
        return self.basis.n_steps

    def normals(self, start: int, count: int) -> np.ndarray:
        """Standard normals for paths ``start .. start+count-1``, shape ``(count, N)``."""
        bg = np.random.Philox(key=(self.seed << 64) | self.stream)
        bg.advance(start * self.words_per_path // 4)
        raw = bg.random_raw(count * self.words_per_path).reshape(count, self.words_per_path)
        u = ((raw[:, : self._n_even] >> np.uint64(11)).astype(float) + 0.5) * 2.0 ** -53
        radius = np.sqrt(-2.0 * np.log(u[:, 0::2]))
        angle = 2.0 * np.pi * u[:, 1::2]
        z = np.empty((count, self._n_even))
        z[:, 0::2] = radius * np.cos(angle)
        z[:, 1::2] = radius * np.sin(angle)
        return z[:, : self.n_steps]

    def paths(self, start: int, count: int) -> BrownianPath:
        dt = self.basis.dt
        return BrownianPath(self.normals(start, count) * math.sqrt(dt), dt)

    def path(self, index: int) -> BrownianPath:
        batch = self.paths(index, 1)
        return BrownianPath(batch.increments[0], batch.dt)


def sample_path(stream: PathStream, index: int = 0) -> BrownianPath:
    return stream.path(index)


def map_paths(fn: Callable[[BrownianPath], np.ndarray], stream: PathStream, n_paths: int,
              parallel: bool = False, chunk: int = _CHUNK_PATHS) -> np.ndarray:
    """Apply ``fn`` to path batches and concatenate the per-path results in order."""
    if n_paths < 1:
        raise ValueError("need at least one path")
    starts = list(range(0, n_paths, chunk))

    def run(start):
        return fn(stream.paths(start, min(chunk, n_paths - start)))

    if parallel and len(starts) > 1:
        with ThreadPoolExecutor() as pool:
            parts = list(pool.map(run, starts))
    else:
        parts = [run(s) for s in starts]
    return np.concatenate(parts, axis=0)


@dataclass(frozen=True)
class StepKernel:
    """Symmetric step function on the grid blocks, shape ``(N,)*p``."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim and len(set(v.shape)) != 1:
            raise ShapeError(f"step kernel must be cubical, got {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("non-finite kernel value")
        for ax in range(1, v.ndim):
            if not np.allclose(v, np.swapaxes(v, 0, ax), rtol=1e-12, atol=1e-14):
                raise ValueError("step kernel is not symmetric")
        object.__setattr__(self, "values", v)

    @property
    def order(self) -> int:
        return self.values.ndim

    @property
    def n_steps(self) -> int:
        return self.values.shape[0]

    @classmethod
    def constant(cls, c: float, n_steps: int, order: int) -> StepKernel:
        return cls(np.full((n_steps,) * order, float(c)))

    @classmethod
    def from_function(cls, fn: Callable[..., np.ndarray], n_steps: int, order: int) -> StepKernel:
        """Sample a symmetric function at block midpoints."""
        mids = GridBasis(n_steps).midpoints
        grids = np.meshgrid(*([mids] * order), indexing="ij")
        vals = np.broadcast_to(np.asarray(fn(*grids), dtype=float), (n_steps,) * order)
        return cls(symmetrize_axes(np.array(vals), range(order)))

    @classmethod
    def random(cls, rng: np.random.Generator, n_steps: int, order: int,
               support: int | None = None) -> StepKernel:
        """Random symmetric kernel, optionally supported on the first ``support`` blocks."""
        support = n_steps if support is None else support
        raw = rng.uniform(-1.0, 1.0, size=(support,) * order)
        vals = np.zeros((n_steps,) * order)
        vals[(slice(0, support),) * order] = symmetrize_axes(raw, range(order))
        return cls(vals)

    @classmethod
    def from_tensor_dict(cls, data) -> StepKernel:
        """Block values given in the tensor JSON layout (dim = N)."""
        from .symtensor import tensor_from_dict

        return cls(tensor_from_dict(data).to_dense())

    def l2_inner(self, other: StepKernel) -> float:
        if self.values.shape != other.values.shape:
            raise ShapeError("kernels live on different grids or orders")
        return float(np.sum(self.values * other.values)) * (1.0 / self.n_steps) ** self.order


def kernel_to_tensor(f: StepKernel, basis: GridBasis | None = None) -> SymmetricTensor:
    """Coordinates of a step kernel in the grid basis: ``f[blocks] * dt^{p/2}``."""
    basis = basis or GridBasis(f.n_steps)
    if basis.n_steps != f.n_steps:
        raise ShapeError(f"kernel has {f.n_steps} blocks, basis has {basis.n_steps}")
    scale = basis.dt ** (f.order / 2)
    if f.order == 0:
        return SymmetricTensor.scalar(float(f.values) * scale, basis.n_steps)
    return symmetrize(DenseTensor(basis.n_steps, f.values * scale))


def _strict_order_mask(n: int, p: int) -> np.ndarray:
    idx = np.indices((n,) * p)
    mask = np.ones((n,) * p, dtype=bool)
    for a in range(p - 1):
        mask &= idx[a] < idx[a + 1]
    return mask


def iterated_ito_sum(f: StepKernel, path: BrownianPath):
    """``p! * sum_{j1<...<jp} f[j] ΔW_j1 ... ΔW_jp`` (diagonal blocks excluded)."""
    p = f.order
    if p > MAX_ITO_ORDER:
        raise ValueError(f"iterated sums limited to order {MAX_ITO_ORDER}, got {p}")
    inc = np.asarray(path.increments, dtype=float)
    if inc.shape[-1] != f.n_steps:
        raise ShapeError(f"path has {inc.shape[-1]} steps, kernel has {f.n_steps}")
    single = inc.ndim == 1
    inc = np.atleast_2d(inc)
    if p == 0:
        out = np.full(inc.shape[0], float(f.values))
    else:
        T = np.where(_strict_order_mask(f.n_steps, p), f.values, 0.0)
        # contract the last axis with each path's increments, one axis at a time
        acc = T.reshape(-1, f.n_steps) @ inc.T
        for _ in range(p - 1):
            acc = acc.reshape(-1, f.n_steps, inc.shape[0])
            acc = np.einsum("ajb,bj->ab", acc, inc)
        out = math.factorial(p) * acc.reshape(-1)
    return float(out[0]) if single else out


def _mean_se(y: np.ndarray) -> tuple[float, float]:
    n = len(y)
    mean = float(np.mean(y))
    se = float(np.std(y, ddof=1) / math.sqrt(n)) if n > 1 else float("inf")
    return mean, se


def mc_isometry_test(f: StepKernel, g: StepKernel, n_paths: int, seed: int = 0,
                     stream: int = 0, parallel: bool = False,
                     se_multiplier: float = SE_MULTIPLIER) -> CaseRecord:
    """Sample mean of I_p(f) I_q(g) against δ_pq p! <f, g>."""
    if n_paths < 1:
        raise ValueError("need at least one path")
    if f.n_steps != g.n_steps:
        raise ShapeError("kernels live on different grids")
    if max(f.order, g.order) > MAX_ITO_ORDER:
        raise ValueError(f"orders limited to {MAX_ITO_ORDER}")
    F, G = from_kernel(kernel_to_tensor(f)), from_kernel(kernel_to_tensor(g))
    ps = PathStream(seed, f.n_steps, stream)
    y = map_paths(lambda b: evaluate(F, b.coords) * evaluate(G, b.coords), ps, n_paths, parallel)
    mean, se = _mean_se(y)
    target = math.factorial(f.order) * f.l2_inner(g) if f.order == g.order else 0.0
    return check(f"isometry p={f.order} q={g.order}", digest(f.values, g.values, n_paths, seed),
                 abs(mean - target), se_multiplier * se,
                 mean=mean, target=target, standard_error=se, paths=n_paths)


def mc_moments_test(f: StepKernel, n_paths: int, seed: int = 0, stream: int = 0,
                    parallel: bool = False,
                    se_multiplier: float = SE_MULTIPLIER) -> list[CaseRecord]:
    """Mean 0 and second moment n!|f|^2 of I_n(f) over simulated coordinates."""
    F = from_kernel(kernel_to_tensor(f))
    ps = PathStream(seed, f.n_steps, stream)
    y = map_paths(lambda b: evaluate(F, b.coords), ps, n_paths, parallel)
    d = digest(f.values, n_paths, seed)
    mean, se = _mean_se(y)
    m2, se2 = _mean_se(y * y)
    target = math.factorial(f.order) * f.l2_inner(f)
    return [
        check(f"moments n={f.order} mean", d, abs(mean), se_multiplier * se,
              mean=mean, standard_error=se),
        check(f"moments n={f.order} second", d, abs(m2 - target), se_multiplier * se2,
              second_moment=m2, target=target, standard_error=se2),
    ]


def mc_product_test(f: StepKernel, g: StepKernel, n_paths: int, seed: int = 0,
                    stream: int = 0, parallel: bool = False,
                    threshold: float = 1e-8) -> CaseRecord:
    """Pathwise residual of the product formula, max over sampled paths."""
    if max(f.order, g.order) > 2:
        raise ValueError("product check is limited to orders <= 2")
    F, G = from_kernel(kernel_to_tensor(f)), from_kernel(kernel_to_tensor(g))
    FG = product(F, G)
    ps = PathStream(seed, f.n_steps, stream)

    def residual(batch):
        x = batch.coords
        return evaluate(F, x) * evaluate(G, x) - evaluate(FG, x)

    r = map_paths(residual, ps, n_paths, parallel)
    return check(f"product p={f.order} q={g.order}", digest(f.values, g.values, n_paths, seed),
                 float(np.max(np.abs(r))), threshold, paths=n_paths)


def mc_divergence_ito_test(h: StepKernel, n_paths: int, seed: int = 0, stream: int = 0,
                           threshold: float = 1e-12) -> CaseRecord:
    """δh evaluated on the coordinates equals the Itô sum of the step integrand."""
    if h.order != 1:
        raise ValueError("divergence check takes an order-1 kernel")
    tensor = kernel_to_tensor(h)
    dh = divergence(GradedChaos(tensor.dim, {0: tensor}, free_slots=1))
    ps = PathStream(seed, h.n_steps, stream)
    r = map_paths(lambda b: evaluate(dh, b.coords) - iterated_ito_sum(h, b), ps, n_paths)
    return check("divergence equals ito sum", digest(h.values, n_paths, seed),
                 float(np.max(np.abs(r))), threshold, paths=n_paths)


def chaos_vs_ito_gap(f: StepKernel, path: BrownianPath):
    """Chaos evaluation minus the strict-order iterated sum, per path."""
    F = from_kernel(kernel_to_tensor(f))
    return evaluate(F, path.coords) - iterated_ito_sum(f, path)


def mc_offdiagonal_exactness_test(f: StepKernel, n_paths: int, seed: int = 0, stream: int = 0,
                                  threshold: float = 1e-12) -> CaseRecord:
    """Iterated sums match the chaos form exactly when diagonal blocks vanish."""
    diag = _diagonal_values(f)
    if np.any(diag != 0.0):
        raise ValueError("kernel has diagonal mass; exactness does not apply")
    ps = PathStream(seed, f.n_steps, stream)
    gap = map_paths(lambda b: np.atleast_1d(chaos_vs_ito_gap(f, b)), ps, n_paths)
    return check(f"off-diagonal exactness p={f.order}", digest(f.values, n_paths, seed),
                 float(np.max(np.abs(gap))), threshold, paths=n_paths)


def _diagonal_values(f: StepKernel) -> np.ndarray:
    # any block tuple with a repeated index counts as diagonal
    if f.order < 2:
        return np.zeros(0)
    idx = np.indices(f.values.shape)
    repeated = np.zeros(f.values.shape, dtype=bool)
    for a in range(f.order):
        for b in range(a + 1, f.order):
            repeated |= idx[a] == idx[b]
    return f.values[repeated]


def expected_gap2(f: StepKernel) -> float:
    """E[gap^2] = 2 dt^2 sum_j f[j,j]^2 for an order-2 step kernel."""
    if f.order != 2:
        raise ValueError("closed form only for order 2")
    dt = 1.0 / f.n_steps
    return 2.0 * dt * dt * float(np.sum(np.diag(f.values) ** 2))


def mc_ito_convergence_test(kernel: Callable[..., np.ndarray] | None = None,
                            grids: Sequence[int] = (8, 16, 32, 64, 128, 256),
                            n_paths: int = 4000, seed: int = 0, stream: int = 0,
                            parallel: bool = False,
                            slope_range: tuple[float, float] = (0.35, 0.65),
                            se_multiplier: float = SE_MULTIPLIER) -> CaseRecord:
    """Rate at which iterated sums approach the chaos form as the grid refines.

    For order-2 kernels the gap is the diagonal term sum_j f_jj (ΔW_j^2 - dt),
    so its L^2 norm scales like sqrt(dt).  Passes when the fitted log-log
    slope of the L^2 gap lies in ``slope_range`` and every per-grid mean
    square gap sits within ``se_multiplier`` standard errors of its closed
    form.
    """
    kernel = kernel or (lambda t, s: np.ones_like(t))
    if len(grids) < 2:
        raise ValueError("need at least two grids to fit a rate")
    dts, gaps, rows = [], [], []
    worst_z = 0.0
    for k, n in enumerate(grids):
        f = StepKernel.from_function(kernel, n, 2)
        expected = expected_gap2(f)
        if expected == 0.0:
            raise ValueError("degenerate kernel: no diagonal mass on the grid")
        ps = PathStream(seed, n, stream + k)
        g = map_paths(lambda b: chaos_vs_ito_gap(f, b), ps, n_paths, parallel)
        gap2, se = _mean_se(g * g)
        worst_z = max(worst_z, abs(gap2 - expected) / se)
        dts.append(1.0 / n)
        gaps.append(gap2)
        rows.append({"n_steps": n, "gap2": gap2, "expected_gap2": expected, "standard_error": se})
    slope_var = float(np.polyfit(np.log(dts), np.log(gaps), 1)[0])
    slope = slope_var / 2.0
    lo, hi = slope_range
    # report distance outside the slope window as the error; 0 means inside
    err = max(lo - slope, slope - hi, 0.0)
    passed = err == 0.0 and worst_z <= se_multiplier
    return CaseRecord(
        "ito convergence p=2", digest(list(grids), n_paths, seed), err, 0.0, passed,
        {"slope_l2": slope, "slope_gap2": slope_var, "slope_range": list(slope_range),
         "max_z": worst_z, "grids": rows},
    )
