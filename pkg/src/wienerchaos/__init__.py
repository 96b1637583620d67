"""Wiener chaos algebra: multiple Wiener integrals, their product formula,
Malliavin gradient/divergence, and checks against a polynomial oracle and
simulated Brownian paths."""

from .chaos import (
    ChaosExpansion,
    GradedChaos,
    OrderOverflowError,
    cameron_martin_pairing,
    divergence,
    evaluate,
    evaluate_graded,
    from_kernel,
    gradient,
    ou_apply,
    product,
    sobolev_norm2,
    stroock_coefficients,
    stroock_reconstruct,
    wick_exponential,
)
from .symtensor import (
    DenseTensor,
    ShapeError,
    SymmetricTensor,
    contract,
    inner_product,
    outer,
    perm_count,
    scale_add,
    symmetrize,
)

__version__ = "0.1.0"
