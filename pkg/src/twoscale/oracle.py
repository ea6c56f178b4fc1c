"""Exact ground truth by enumeration and dense linear algebra.

Everything here is computed from the MDP model itself, never from samples:
the behavior chain and its stationary distribution, the moment matrices
``A``, ``b``, ``C``, ``M``, the TD fixed point ``theta*``, the fast-iterate
attractor map ``lambda(theta) = C^{-1}(b - A theta)`` stored as explicit
affine coefficients, the projected-error objective and its gradient, and the
discounted value function. These quantities are the oracles the stochastic
runs are tested against.

State spaces are at most a few hundred states by design, so all enumerations
are plain triple loops over ``(s, a, s')`` and all solves are dense.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from .mdp import FeatureMap, FiniteMdp, Policy, rho_table

__all__ = [
    "NotIrreducibleError",
    "IllConditionedError",
    "ConditionReport",
    "OracleSolution",
    "behavior_matrix",
    "stationary_distribution",
    "stationary_distribution_power",
    "compute_moments",
    "td_fixed_point",
    "bellman_value",
    "solve_oracle",
    "lambda_map",
    "objective_J",
    "grad_J",
    "solution_to_dict",
]

COND_LIMIT = 1e12


class NotIrreducibleError(ValueError):
    """Raised when a transition matrix has no strongly connected support graph."""


class IllConditionedError(ValueError):
    """Raised when a linear system is numerically unusable; carries the condition estimate."""

    def __init__(self, message: str, cond: float):
        super().__init__(message)
        self.cond = cond


def behavior_matrix(mdp: FiniteMdp, pi_b: Policy) -> np.ndarray:
    """State transition matrix of the behavior chain, ``P_b(s, s') = sum_a pi_b(a|s) p(s'|s, a)``."""
    return np.einsum("sa,sax->sx", pi_b.probs, mdp.p)


def stationary_distribution(P: np.ndarray) -> np.ndarray:
    """Unique stationary distribution of an irreducible row-stochastic matrix.

    Irreducibility (strong connectivity of the support graph) is checked first.
    The solve uses least squares on the augmented system ``[P^T - I; 1^T] nu = [0; 1]``,
    which is deterministic and robust at these sizes; power iteration is kept
    separately as an independent cross-check.
    """
    P = np.asarray(P, dtype=float)
    n = P.shape[0]
    if P.shape != (n, n):
        raise ValueError("P must be square")
    n_comp, _ = connected_components(
        csr_matrix((P > 0).astype(float)), directed=True, connection="strong"
    )
    if n_comp != 1:
        raise NotIrreducibleError(
            f"transition matrix is not irreducible: {n_comp} strongly connected classes"
        )
    aug = np.vstack([P.T - np.eye(n), np.ones((1, n))])
    rhs = np.zeros(n + 1)
    rhs[-1] = 1.0
    nu, *_ = np.linalg.lstsq(aug, rhs, rcond=None)
    nu = np.clip(nu, 0.0, None)
    nu /= nu.sum()
    residual = np.abs(nu @ P - nu).max()
    if residual > 1e-10:
        raise ValueError(f"stationary solve failed: residual {residual:.3e}")
    return nu


def stationary_distribution_power(P: np.ndarray, n_iter: int = 100_000) -> np.ndarray:
    """Stationary distribution by plain power iteration (aperiodic chains only)."""
    P = np.asarray(P, dtype=float)
    v = np.full(P.shape[0], 1.0 / P.shape[0])
    for _ in range(n_iter):
        v = v @ P
        v /= v.sum()
    return v


def compute_moments(
    mdp: FiniteMdp,
    pi: Policy,
    pi_b: Policy,
    phi: FeatureMap,
    nu: np.ndarray,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Exact moment matrices of the stationary behavior process.

    With weights ``w(s,a,s') = nu(s) pi_b(a|s) rho(s,a) p(s'|s,a)``:

    - ``A = sum w * phi(s) (phi(s) - gamma phi(s'))^T``
    - ``b = sum w * r(s,a,s') phi(s)``
    - ``C = sum_s nu(s) phi(s) phi(s)^T``
    - ``M = sum w * phi(s') phi(s)^T``

    Returns ``(A, b, C, M)``.
    """
    d = phi.dim
    rho = rho_table(pi, pi_b)
    A = np.zeros((d, d))
    b = np.zeros(d)
    C = np.zeros((d, d))
    M = np.zeros((d, d))
    for s in range(mdp.n_states):
        phi_s = phi.phi[s]
        C += nu[s] * np.outer(phi_s, phi_s)
        for a in range(mdp.n_actions):
            w_sa = nu[s] * pi_b.probs[s, a] * rho[s, a]
            if w_sa == 0.0:
                continue
            for s2 in range(mdp.n_states):
                w = w_sa * mdp.p[s, a, s2]
                if w == 0.0:
                    continue
                phi_s2 = phi.phi[s2]
                A += w * np.outer(phi_s, phi_s - mdp.gamma * phi_s2)
                b += w * mdp.r[s, a, s2] * phi_s
                M += w * np.outer(phi_s2, phi_s)
    return A, b, C, M


def td_fixed_point(A: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Solve ``A theta = b`` by a dense solve; refuses condition numbers above 1e12."""
    cond = float(np.linalg.cond(A))
    if not np.isfinite(cond) or cond > COND_LIMIT:
        raise IllConditionedError(
            f"A is singular or ill-conditioned (cond estimate {cond:.3e})", cond
        )
    theta = np.linalg.solve(A, b)
    residual = np.linalg.norm(A @ theta - b)
    if residual > 1e-8 * np.linalg.norm(b):
        raise IllConditionedError(
            f"fixed-point residual {residual:.3e} exceeds 1e-8 * ||b||", cond
        )
    return theta


def bellman_value(mdp: FiniteMdp, pi: Policy) -> np.ndarray:
    """Discounted value function ``V = (I - gamma P_pi)^{-1} r_pi`` of a policy."""
    P_pi = np.einsum("sa,sax->sx", pi.probs, mdp.p)
    r_pi = np.einsum("sa,sax,sax->s", pi.probs, mdp.p, mdp.r)
    return np.linalg.solve(np.eye(mdp.n_states) - mdp.gamma * P_pi, r_pi)


@dataclass(frozen=True)
class ConditionReport:
    """Condition numbers and stability spectra of the oracle matrices."""

    cond_A: float
    cond_C: float
    min_eig_C: float
    fast_eigs: np.ndarray  # eigenvalues of -C (the fast-field matrix)
    slow_eigs: np.ndarray  # eigenvalues of -A^T C^{-1} A (the slow-field matrix)

    @property
    def fast_stable(self) -> bool:
        return bool(np.all(np.real(self.fast_eigs) < 0))

    @property
    def slow_stable(self) -> bool:
        return bool(np.all(np.real(self.slow_eigs) < 0))


@dataclass(frozen=True)
class OracleSolution:
    """Ground-truth bundle for one ``(mdp, pi, pi_b, phi)`` instance.

    ``lambda_mat = C^{-1} A`` and ``lambda_off = C^{-1} b`` are the affine
    coefficients of the fast-iterate attractor ``lambda(theta) = lambda_off -
    lambda_mat @ theta``; they are stored explicitly (never as a closure) so
    the Lipschitz constant ``||C^{-1} A||`` can be inspected directly.
    """

    nu: np.ndarray
    P_b: np.ndarray
    A: np.ndarray
    b: np.ndarray
    C: np.ndarray
    M: np.ndarray
    theta_star: np.ndarray
    lambda_mat: np.ndarray
    lambda_off: np.ndarray
    gamma: float
    cond_report: ConditionReport

    def __post_init__(self) -> None:
        if np.abs(self.nu @ self.P_b - self.nu).max() > 1e-10:
            raise ValueError("nu is not stationary for P_b within 1e-10")
        if abs(self.nu.sum() - 1.0) > 1e-12 or self.nu.min() < -1e-15:
            raise ValueError("nu is not a probability vector")
        if np.linalg.norm(self.A @ self.theta_star - self.b) > 1e-8 * np.linalg.norm(self.b):
            raise ValueError("theta_star does not solve A theta = b within tolerance")
        if np.abs(self.C - self.C.T).max() > 1e-12:
            raise ValueError("C is not symmetric")
        if self.cond_report.min_eig_C <= 0:
            raise ValueError("C is not positive definite")
        if np.abs(self.A - (self.C - self.gamma * self.M.T)).max() > 1e-10:
            raise ValueError("identity A = C - gamma M^T violated beyond 1e-10")

    @property
    def dim(self) -> int:
        return self.b.shape[0]

    @property
    def lambda_lipschitz(self) -> float:
        return float(np.linalg.norm(self.lambda_mat, 2))


def solve_oracle(mdp: FiniteMdp, pi: Policy, pi_b: Policy, phi: FeatureMap) -> OracleSolution:
    """Assemble the full oracle: stationary analysis, moments, fixed point, spectra."""
    P_b = behavior_matrix(mdp, pi_b)
    nu = stationary_distribution(P_b)
    A, b, C, M = compute_moments(mdp, pi, pi_b, phi, nu)
    theta_star = td_fixed_point(A, b)
    lambda_mat = np.linalg.solve(C, A)
    lambda_off = np.linalg.solve(C, b)
    slow_matrix = -A.T @ lambda_mat
    report = ConditionReport(
        cond_A=float(np.linalg.cond(A)),
        cond_C=float(np.linalg.cond(C)),
        min_eig_C=float(np.linalg.eigvalsh(C).min()),
        fast_eigs=np.linalg.eigvalsh(-C),
        slow_eigs=np.linalg.eigvals(slow_matrix),
    )
    return OracleSolution(
        nu=nu,
        P_b=P_b,
        A=A,
        b=b,
        C=C,
        M=M,
        theta_star=theta_star,
        lambda_mat=lambda_mat,
        lambda_off=lambda_off,
        gamma=mdp.gamma,
        cond_report=report,
    )


def lambda_map(solution: OracleSolution, theta: np.ndarray) -> np.ndarray:
    """Fast-iterate attractor ``lambda(theta) = C^{-1}(b - A theta)``."""
    return solution.lambda_off - solution.lambda_mat @ np.asarray(theta, dtype=float)


def objective_J(solution: OracleSolution, theta: np.ndarray) -> float:
    """Mean-square projected error objective ``J(theta) = (b - A theta)^T C^{-1} (b - A theta)``."""
    r = solution.b - solution.A @ np.asarray(theta, dtype=float)
    return float(r @ np.linalg.solve(solution.C, r))


def grad_J(solution: OracleSolution, theta: np.ndarray) -> np.ndarray:
    """Gradient of :func:`objective_J`; equals ``-2 A^T C^{-1} (b - A theta)``."""
    r = solution.b - solution.A @ np.asarray(theta, dtype=float)
    return -2.0 * solution.A.T @ np.linalg.solve(solution.C, r)


def solution_to_dict(solution: OracleSolution) -> dict:
    """JSON-compatible dump used by the CLI summary output."""
    rep = solution.cond_report

    def _complex_list(values: np.ndarray) -> list:
        if np.iscomplexobj(values):
            return [[float(v.real), float(v.imag)] for v in values]
        return [float(v) for v in values]

    return {
        "nu": solution.nu.tolist(),
        "P_b": solution.P_b.tolist(),
        "A": solution.A.tolist(),
        "b": solution.b.tolist(),
        "C": solution.C.tolist(),
        "M": solution.M.tolist(),
        "theta_star": solution.theta_star.tolist(),
        "lambda_mat": solution.lambda_mat.tolist(),
        "lambda_off": solution.lambda_off.tolist(),
        "lambda_lipschitz": solution.lambda_lipschitz,
        "gamma": solution.gamma,
        "condition": {
            "cond_A": rep.cond_A,
            "cond_C": rep.cond_C,
            "min_eig_C": rep.min_eig_C,
            "fast_eigs": _complex_list(rep.fast_eigs),
            "slow_eigs": _complex_list(rep.slow_eigs),
            "fast_stable": rep.fast_stable,
            "slow_stable": rep.slow_stable,
        },
    }
