"""Residues, adaptive sampling distributions, and safe step-size bounds.

Notation used throughout: ``kappa_i = alpha_i + loss'(x_i^T w, y_i)`` is the
per-coordinate residue, ``v_i`` a per-coordinate curvature constant
(``||x_i||^2`` for single-coordinate steps, its ESO-inflated version for
batches), and ``(beta, gamma)`` the convexity-case weights.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

RESIDUE_EPS = 1e-14


class ZeroResidueError(RuntimeError):
    """All residues vanished: the current iterate is a fixed point."""


@dataclass(frozen=True)
class ResidueVector:
    """Residues with their support; off-support entries are exactly zero."""

    kappa: np.ndarray
    support: np.ndarray
    sq_norm: float


@dataclass(frozen=True)
class CaseParams:
    """Weights of the combined optimality gap ||alpha - alpha*||_beta^2 + gamma ||w - w*||^2.

    all_convex:      beta_i = 1 / l_tilde_i,        gamma = n * lam
    average_convex:  beta_i = L_bar / L_i,          gamma = n * L_bar^2
    """

    case: str
    beta: np.ndarray
    gamma: float
    lam: float
    n: int


@dataclass(frozen=True)
class EsoParams:
    """Curvature constants v_i = min(b, omega) * ||x_i||^2 valid for batch sampling."""

    v: np.ndarray
    batch: int
    omega: int
    mode: str


def compute_residues(alpha: np.ndarray, w: np.ndarray, ds, loss) -> ResidueVector:
    """Residues of the current iterate, zeroed below a relative noise floor."""
    if alpha.shape != (ds.n,) or w.shape != (ds.d,):
        raise ValueError("state dimensions do not match the dataset")
    g = loss.derivative(ds.matvec(w), ds.labels)
    raw = alpha + g
    eps = RESIDUE_EPS * (1.0 + np.abs(alpha) + np.abs(g))
    support = np.abs(raw) > eps
    kappa = np.where(support, raw, 0.0)
    return ResidueVector(kappa=kappa, support=support, sq_norm=float(kappa @ kappa))


def case_params(ds, loss, lam: float, case: str = "all_convex") -> CaseParams:
    if lam <= 0.0:
        raise ValueError("regularization must be positive")
    bound = loss.bind(ds)
    n = ds.n
    if case == "all_convex":
        beta = 1.0 / bound.l_tilde_i
        gamma = n * lam
    elif case == "average_convex":
        if np.any(bound.L == 0.0):
            raise ValueError("average_convex weights need every example non-zero")
        beta = bound.L_bar / bound.L
        gamma = n * bound.L_bar**2
    else:
        raise ValueError(f"unknown convexity case {case!r}")
    return CaseParams(case=case, beta=beta, gamma=float(gamma), lam=float(lam), n=n)


def optimal_probabilities(res: ResidueVector, params: CaseParams, v: np.ndarray) -> np.ndarray:
    """Distribution maximizing the admissible step size for the given residues.

    p_i is proportional to sqrt(v_i * gamma + (n*lam)^2 * beta_i) * |kappa_i|
    on the residue support and exactly zero elsewhere (coherence).
    """
    if not res.support.any():
        raise ZeroResidueError("empty residue support: iterate is optimal")
    nl2 = (params.n * params.lam) ** 2
    weights = np.sqrt(v * params.gamma + nl2 * params.beta) * np.abs(res.kappa)
    total = weights.sum()
    return weights / total


def theta_of(res: ResidueVector, p: np.ndarray, params: CaseParams, v: np.ndarray) -> float:
    """Largest contraction-safe step-size multiplier for residues sampled via ``p``.

    ``p`` holds per-draw selection probabilities: the distribution itself for
    single-coordinate sampling, or the marginals q = b * p for batch sampling.
    """
    m = res.support
    if np.any(m & (p <= 0.0)):
        raise ValueError("probabilities are incoherent with the residue support")
    k2 = res.kappa[m] ** 2
    nl2 = (params.n * params.lam) ** 2
    coeff = nl2 * params.beta[m] + v[m] * params.gamma
    return float(nl2 * (params.beta[m] @ k2) / ((coeff / p[m]) @ k2))


def theta_lower_bound(params: CaseParams, v: np.ndarray, batch: int = 1) -> float:
    """Instance-wide lower bound on the adaptive step size, linear in the batch size."""
    if batch < 1:
        raise ValueError("batch size must be at least 1")
    nl2 = (params.n * params.lam) ** 2
    denom = float(np.sum(v * params.gamma / params.beta + nl2))
    return min(1.0, nl2 * batch / denom)


def contraction_certificate(
    res: ResidueVector, p: np.ndarray, theta: float, params: CaseParams, v: np.ndarray
) -> tuple[float, float]:
    """Per-iteration contraction slack and its magnitude scale.

    Returns ``(c2, scale)`` where
    ``c2 = sum_i (-theta*beta_i*(1 - theta/p_i) + theta^2*v_i*gamma/((n*lam)^2*p_i)) * kappa_i^2``;
    ``c2 <= 0`` certifies expected geometric gap decay at this step.  Pass
    q = b * p as ``p`` for batch steps (with the matching ESO ``v``).
    """
    m = res.support
    k2 = res.kappa[m] ** 2
    nl2 = (params.n * params.lam) ** 2
    coeff = nl2 * params.beta[m] + v[m] * params.gamma
    s1 = float(params.beta[m] @ k2)
    s2 = float((coeff / p[m]) @ k2) / nl2
    return -theta * s1 + theta * theta * s2, theta * s1 + theta * theta * s2


def eso_v(ds, batch: int, mode: str = "example_nnz") -> EsoParams:
    """Batch curvature constants v_i = min(b, omega) * ||x_i||^2.

    ``mode='example_nnz'`` takes omega as the largest per-example nonzero count;
    ``mode='feature_degree'`` uses the largest per-feature example count,
    the quantity classical ESO theory bounds the Gram spectrum with.
    """
    if not 1 <= batch <= ds.n:
        raise ValueError("batch size must lie in [1, n]")
    if mode == "example_nnz":
        omega = ds.max_example_nnz
    elif mode == "feature_degree":
        omega = ds.max_feature_degree
    else:
        raise ValueError(f"unknown ESO mode {mode!r}")
    factor = float(min(batch, max(omega, 1)))
    return EsoParams(v=ds.norms * factor, batch=int(batch), omega=int(omega), mode=mode)
