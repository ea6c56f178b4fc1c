"""Off-policy temporal-difference learning with gradient correction (TDC)
under importance weighting, packaged as a two-timescale problem.

Per transition ``(s, a, R, s')`` with importance weight ``rho = pi(a|s)/pi_b(a|s)``
and TD error ``delta = R + gamma theta^T phi(s') - theta^T phi(s)``, the updates are

    theta' = theta + a_n * rho * [delta * phi(s) - gamma (phi(s)^T w) phi(s')]
    w'     = w     + b_n * [(rho * delta - phi(s)^T w) * phi(s)]

The Markov noise state handed to the engine is the *previous* chain state
``z_n = X_{n-1}``: each engine step draws the current state ``X_n`` from the
behavior chain at ``z_n``, then the action and successor, so the sampled
update's conditional law given ``z_n`` matches :func:`conditional_h` /
:func:`conditional_g` exactly (one chain step plus action and successor),
which is what makes the martingale audit implementable by enumeration.

Conditional means are affine in ``(theta, w)``; the coefficient tensors are
built once per problem by exact enumeration and reused by diagnostics and the
non-autonomous ODE integrator.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .engine import TwoTimescaleProblem
from .mdp import FeatureMap, FiniteMdp, Policy, Transition, rho_table, validate_mdp
from .oracle import behavior_matrix

__all__ = [
    "TdcProblem",
    "td_error",
    "tdc_directions",
    "tdc_step",
    "conditional_h",
    "conditional_g",
    "make_tdc_problem",
    "empirical_moments",
]


def td_error(theta: np.ndarray, tr: Transition, phi: FeatureMap, gamma: float) -> float:
    """One-step bootstrapped residual ``R + gamma theta^T phi(s') - theta^T phi(s)``."""
    return float(tr.reward + gamma * (theta @ phi.phi[tr.s_next]) - theta @ phi.phi[tr.s])


def tdc_directions(
    theta: np.ndarray,
    w: np.ndarray,
    tr: Transition,
    rho: float,
    phi: FeatureMap,
    gamma: float,
) -> tuple[np.ndarray, np.ndarray]:
    """Unscaled update directions of the two recursions for one transition.

    ``rho`` multiplies the entire slow-update bracket, so an action excluded by
    the target policy (``rho = 0``) leaves theta untouched while the fast
    iterate still regresses ``phi^T w`` toward zero.
    """
    phi_s = phi.phi[tr.s]
    phi_s2 = phi.phi[tr.s_next]
    delta = tr.reward + gamma * (theta @ phi_s2) - theta @ phi_s
    pw = phi_s @ w
    d_theta = rho * (delta * phi_s - gamma * pw * phi_s2)
    d_w = (rho * delta - pw) * phi_s
    return d_theta, d_w


def tdc_step(
    theta: np.ndarray,
    w: np.ndarray,
    tr: Transition,
    rho: float,
    a_n: float,
    b_n: float,
    phi: FeatureMap,
    gamma: float,
) -> tuple[np.ndarray, np.ndarray]:
    """Apply one TDC update pair; pure function of its inputs."""
    if a_n < 0 or b_n < 0:
        raise ValueError("step sizes must be nonnegative")
    d_theta, d_w = tdc_directions(theta, w, tr, rho, phi, gamma)
    return theta + a_n * d_theta, w + b_n * d_w


@dataclass
class TdcProblem:
    """TDC instance: MDP, target/behavior policies, features, reward-noise config.

    Construction validates the instance (row-stochasticity, gamma range,
    coverage) and precomputes the sampling tables and the affine coefficients
    of the conditional means. Treat instances as immutable.
    """

    mdp: FiniteMdp
    pi: Policy
    pi_b: Policy
    phi: FeatureMap
    reward_noise: float = 0.0
    init_state: int = 0

    # caches filled in __post_init__
    rho: np.ndarray = field(init=False, repr=False)
    p_b: np.ndarray = field(init=False, repr=False)

    def __post_init__(self) -> None:
        report = validate_mdp(self.mdp, self.pi, self.pi_b)
        if not report.ok:
            kinds = sorted(report.kinds())
            raise ValueError(f"invalid TDC instance, violations: {kinds}; {report.to_dict()}")
        if self.phi.n_states != self.mdp.n_states:
            raise ValueError("feature map does not match the MDP state count")
        if not 0 <= self.init_state < self.mdp.n_states:
            raise ValueError("init_state out of range")
        if self.reward_noise < 0:
            raise ValueError("reward_noise must be nonnegative")
        self.rho = rho_table(self.pi, self.pi_b)
        self.p_b = behavior_matrix(self.mdp, self.pi_b)
        # flat row lists keep the per-step sampling free of 2-D indexing overhead
        self._cum_pb = [np.cumsum(row) for row in self.p_b]
        self._cum_act = [np.cumsum(row) for row in self.pi_b.probs]
        self._cum_next = [[np.cumsum(self.mdp.p[s, a]) for a in range(self.mdp.n_actions)]
                          for s in range(self.mdp.n_states)]
        self._phi_rows = [np.ascontiguousarray(row) for row in self.phi.phi]
        self._build_mean_tensors()

    @property
    def dim(self) -> int:
        return self.phi.dim

    @property
    def max_rho(self) -> float:
        return float(self.rho.max())

    @property
    def max_phi_norm(self) -> float:
        return self.phi.max_row_norm

    def _build_mean_tensors(self) -> None:
        """Exact enumeration of the conditional means' affine coefficients.

        From noise state ``z``: ``X ~ P_b(z, .)``, ``A ~ pi_b(.|X)``,
        ``X' ~ p(.|X, A)``. The slow mean is
        ``h(theta, w, z) = hc[z] - hA[z] @ theta - gamma * hM[z] @ w`` and the
        fast mean is ``g(theta, w, z) = hc[z] - hA[z] @ theta - gC[z] @ w``.
        """
        S, Act, d = self.mdp.n_states, self.mdp.n_actions, self.phi.dim
        bc = np.zeros((S, d))       # E[rho R phi(X) | X = x] pieces, per current state
        bA = np.zeros((S, d, d))    # E[rho phi(X)(phi(X) - gamma phi(X'))^T | X = x]
        bM = np.zeros((S, d, d))    # E[rho phi(X') phi(X)^T | X = x]
        bC = np.zeros((S, d, d))    # phi(x) phi(x)^T
        for x in range(S):
            phi_x = self.phi.phi[x]
            bC[x] = np.outer(phi_x, phi_x)
            for a in range(Act):
                w_a = self.pi_b.probs[x, a] * self.rho[x, a]
                if w_a == 0.0:
                    continue
                for x2 in range(S):
                    w = w_a * self.mdp.p[x, a, x2]
                    if w == 0.0:
                        continue
                    phi_x2 = self.phi.phi[x2]
                    bc[x] += w * self.mdp.r[x, a, x2] * phi_x
                    bA[x] += w * np.outer(phi_x, phi_x - self.mdp.gamma * phi_x2)
                    bM[x] += w * np.outer(phi_x2, phi_x)
        # integrate one behavior-chain step from z
        self._h_const = self.p_b @ bc
        self._h_theta = np.einsum("zx,xij->zij", self.p_b, bA)
        self._h_w = np.einsum("zx,xij->zij", self.p_b, bM)
        self._g_w = np.einsum("zx,xij->zij", self.p_b, bC)

    def sample_update(self, theta, w, z, rng):
        """Shared-noise combined draw: ``(H, G, z_next)`` from one chain sample."""
        cum = self._cum_pb[z]
        x = min(int(cum.searchsorted(rng.random() * cum[-1], side="right")), cum.size - 1)
        cum = self._cum_act[x]
        a = min(int(cum.searchsorted(rng.random() * cum[-1], side="right")), cum.size - 1)
        cum = self._cum_next[x][a]
        x2 = min(int(cum.searchsorted(rng.random() * cum[-1], side="right")), cum.size - 1)
        rho = self.rho[x, a]
        reward = self.mdp.r[x, a, x2]
        if self.reward_noise > 0.0:
            reward = reward + rng.uniform(-self.reward_noise, self.reward_noise)
        gamma = self.mdp.gamma
        phi_x = self._phi_rows[x]
        phi_x2 = self._phi_rows[x2]
        delta = reward + gamma * (theta @ phi_x2) - theta @ phi_x
        pw = phi_x @ w
        H = rho * (delta * phi_x - gamma * pw * phi_x2)
        G = (rho * delta - pw) * phi_x
        return H, G, x

    def advance_noise(self, z, theta, w, rng) -> int:
        """One behavior-chain step of the noise state."""
        cum = self._cum_pb[z]
        return min(int(cum.searchsorted(rng.random() * cum[-1], side="right")), cum.size - 1)

    def to_engine(self) -> TwoTimescaleProblem:
        """Wire sampling and exact conditional means into the engine contract."""
        return TwoTimescaleProblem(
            dim_slow=self.dim,
            dim_fast=self.dim,
            init_noise=self.init_state,
            combined_update=self.sample_update,
            noise_step=self.advance_noise,
            exact_slow_mean=lambda theta, w, z: conditional_h(self, theta, w, z),
            exact_fast_mean=lambda theta, w, z: conditional_g(self, theta, w, z),
            shared_noise=True,
            noise_states=range(self.mdp.n_states),
            noise_desc=f"previous behavior-chain state, {self.mdp.n_states} states",
            theta0=np.zeros(self.dim),
            w0=np.zeros(self.dim),
        )


def conditional_h(problem: TdcProblem, theta: np.ndarray, w: np.ndarray, z: int) -> np.ndarray:
    """Exact conditional mean of the slow update given noise state ``z = X_{n-1}``."""
    return (
        problem._h_const[z]
        - problem._h_theta[z] @ theta
        - problem.mdp.gamma * (problem._h_w[z] @ w)
    )


def conditional_g(problem: TdcProblem, theta: np.ndarray, w: np.ndarray, z: int) -> np.ndarray:
    """Exact conditional mean of the fast update given noise state ``z = X_{n-1}``."""
    return problem._h_const[z] - problem._h_theta[z] @ theta - problem._g_w[z] @ w


def make_tdc_problem(
    mdp: FiniteMdp,
    pi: Policy,
    pi_b: Policy,
    phi: FeatureMap,
    reward_noise: float = 0.0,
    init_state: int = 0,
) -> TwoTimescaleProblem:
    """Validated TDC instance as an engine problem (shared-noise mode, exact means registered)."""
    return TdcProblem(mdp, pi, pi_b, phi, reward_noise, init_state).to_engine()


def empirical_moments(
    mdp: FiniteMdp,
    pi: Policy,
    pi_b: Policy,
    phi: FeatureMap,
    n_samples: int,
    seed: int = 0,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Monte-Carlo estimates of ``(A, b, C)`` from one behavior trajectory.

    Samples ``n_samples`` transitions after a burn-in of 1% of ``n_samples``
    (the chain mixes fast at these sizes) and averages
    ``rho phi (phi - gamma phi')^T``, ``rho R phi``, and ``phi phi^T``.
    Transition counts are tabulated so the averages are exact sums over the
    realized empirical distribution.
    """
    rng = np.random.default_rng(seed)
    rho = rho_table(pi, pi_b)
    cum_act = np.cumsum(pi_b.probs, axis=1)
    cum_next = np.cumsum(mdp.p, axis=2)
    counts = np.zeros((mdp.n_states, mdp.n_actions, mdp.n_states), dtype=np.int64)
    s = 0
    burn = n_samples // 100
    for i in range(burn + n_samples):
        cum = cum_act[s]
        a = min(int(np.searchsorted(cum, rng.random() * cum[-1], side="right")), cum.size - 1)
        cum = cum_next[s, a]
        s2 = min(int(np.searchsorted(cum, rng.random() * cum[-1], side="right")), cum.size - 1)
        if i >= burn:
            counts[s, a, s2] += 1
        s = s2
    f = phi.phi
    weights = counts * rho[:, :, None] / n_samples
    A_hat = np.einsum("sax,si,sj->ij", weights, f, f) - mdp.gamma * np.einsum(
        "sax,si,xj->ij", weights, f, f
    )
    b_hat = np.einsum("sax,sax,si->i", weights, mdp.r, f)
    state_freq = counts.sum(axis=(1, 2)) / n_samples
    C_hat = np.einsum("s,si,sj->ij", state_freq, f, f)
    return A_hat, b_hat, C_hat
