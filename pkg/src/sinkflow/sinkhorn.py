"""Balanced entropic optimal transport as a two-block instance.

The primal variable is the transport plan, flattened row-major; block 1
constrains row sums to b1, block 2 column sums to b2. The reference is the
product b1 (x) b2, so the plan at u = 0 is the independence coupling tilted
by the cost. Both block updates are soft c-transforms evaluated in the log
domain, which keeps gamma down to 1e-3 usable.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

from .blocklp import BlockProblem, DualState, primal_from_dual

__all__ = [
    "OTProblem",
    "soft_c_transform_1",
    "soft_c_transform_2",
    "plan_from_duals",
    "ot_constants",
    "OTConstants",
]

_BALANCE_TOL = 1e-12


class OTProblem(BlockProblem):
    """Entropic OT instance: cost matrix, marginals, regularization.

    Args:
      cost: (m1, m2) array, finite and entrywise >= 0.
      b1: length-m1 marginal, strictly positive, total mass 1.
      b2: length-m2 marginal, same requirements.
      gamma: regularization strength, > 0.
    """

    def __init__(self, cost, b1, b2, gamma: float):
        cost = np.asarray(cost, dtype=float)
        b1 = np.asarray(b1, dtype=float)
        b2 = np.asarray(b2, dtype=float)
        if cost.ndim != 2:
            raise ValueError("cost must be a matrix")
        m1, m2 = cost.shape
        if b1.shape != (m1,) or b2.shape != (m2,):
            raise ValueError("marginal shapes do not match the cost matrix")
        if not np.all(np.isfinite(cost)) or np.any(cost < 0):
            raise ValueError("cost entries must be finite and >= 0")
        for name, b in (("b1", b1), ("b2", b2)):
            if np.any(b <= 0):
                raise ValueError(f"{name} must be strictly positive")
            if abs(b.sum() - 1.0) > _BALANCE_TOL:
                raise ValueError(f"{name} must sum to 1, got {b.sum()!r}")
        if gamma <= 0:
            raise ValueError("gamma must be positive")

        self.cost_matrix = cost
        self.m1, self.m2 = m1, m2
        self.b1 = b1
        self.b2 = b2
        self.gamma = float(gamma)
        self.log_b1 = np.log(b1)
        self.log_b2 = np.log(b2)

        self.dim_primal = m1 * m2
        self.dims_dual = (m1, m2)
        self.cost = cost.ravel()
        self.log_reference = (self.log_b1[:, None] + self.log_b2[None, :]).ravel()
        self.reference = np.exp(self.log_reference)
        self.op_norm_1to1 = 2.0
        self.label = f"ot-{m1}x{m2}-gamma{gamma:g}"

    def apply_A1(self, x):
        return x.reshape(self.m1, self.m2).sum(axis=1)

    def apply_A2(self, x):
        return x.reshape(self.m1, self.m2).sum(axis=0)

    def apply_A1_adjoint(self, u1):
        return np.repeat(u1, self.m2)

    def apply_A2_adjoint(self, u2):
        return np.tile(u2, self.m1)

    def block_update_1(self, u2):
        return soft_c_transform_1(self, u2)

    def block_update_2(self, u1):
        return soft_c_transform_2(self, u1)


def _neg_lse_rows(gamma: float, scores: np.ndarray) -> np.ndarray:
    # -gamma * log sum_j exp(scores_j / gamma), row-wise, max-shifted
    m = scores.max(axis=1)
    tail = np.log(np.exp((scores - m[:, None]) / gamma).sum(axis=1))
    return -(m + gamma * tail)


def soft_c_transform_1(problem: OTProblem, u2) -> np.ndarray:
    """Exact block-1 maximizer: u1_i = -gamma log sum_j e^{(u2_j - C_ij)/gamma} b2_j.

    After this update the plan's row sums equal b1 exactly (up to roundoff).
    """
    u2 = np.asarray(u2, dtype=float)
    scores = (-problem.cost_matrix + u2[None, :]
              + problem.gamma * problem.log_b2[None, :])
    return _neg_lse_rows(problem.gamma, scores)


def soft_c_transform_2(problem: OTProblem, u1) -> np.ndarray:
    """Column counterpart of soft_c_transform_1; makes column sums equal b2."""
    u1 = np.asarray(u1, dtype=float)
    scores = (-problem.cost_matrix + u1[:, None]
              + problem.gamma * problem.log_b1[:, None])
    return _neg_lse_rows(problem.gamma, scores.T)


def plan_from_duals(problem: OTProblem, u: DualState) -> np.ndarray:
    """Transport plan b1_i b2_j exp((u1_i + u2_j - C_ij) / gamma) as a matrix."""
    return primal_from_dual(problem, u).reshape(problem.m1, problem.m2)


class OTConstants(NamedTuple):
    H_gamma: float
    kappa: float
    U_gamma: float
    X_gamma: float


def ot_constants(problem: OTProblem, tight_u: bool = False) -> OTConstants:
    """Closed-form certificate constants for the OT instance.

    H bounds the log-ratio of the regularized optimum to the reference,
    kappa the constraint-split conditioning, U the dual iterate radius and
    X the primal iterate mass. With tight_u the crude dual radius is
    replaced by the sharper ||C||_inf / 2 estimate; the certificates are
    upper bounds either way.
    """
    c_inf = float(problem.cost_matrix.max()) if problem.dim_primal else 0.0
    log_min_b = abs(float(np.log(min(problem.b1.min(), problem.b2.min()))))
    h = log_min_b + 2.0 * c_inf / problem.gamma
    if tight_u:
        u = c_inf / 2.0
    else:
        u = 4.0 * c_inf + 2.0 * problem.gamma * log_min_b
    return OTConstants(h, 1.0, u, 1.0)
