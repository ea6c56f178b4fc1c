"""Executable checks of the structural assumptions on concrete problem instances.

Only assumptions that can actually fail on an instance are tested here:
martingale-difference structure of the sampled-update noise, Lipschitz
continuity of the conditional-mean fields, and the state-dependent-Lipschitz
random-walk example. Compactness of the noise space and continuity of the
kernel hold structurally for finite chains; step-size conditions live in the
engine's schedule validator.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .engine import TwoTimescaleProblem

__all__ = [
    "ComponentCheck",
    "MartingaleReport",
    "martingale_check",
    "lipschitz_estimate",
    "estimate_noise_bound",
    "WalkResult",
    "transient_walk",
]


@dataclass(frozen=True)
class ComponentCheck:
    """Per-recursion martingale diagnostic.

    ``mean_deviation`` is the norm of (empirical mean of draws - exact
    conditional mean); ``bound`` is ``4 sigma_hat / sqrt(n)`` with
    ``sigma_hat`` the root-sum-square of per-coordinate standard deviations,
    so a correct sampler fails with probability ~6e-5. The second-moment
    ratio is ``E[||M||^2] / (1 + ||theta||^2 + ||w||^2)``, the constant whose
    uniform boundedness the noise assumption demands.
    """

    mean_deviation: float
    bound: float
    second_moment_ratio: float

    @property
    def passed(self) -> bool:
        return self.mean_deviation <= self.bound

    def to_dict(self) -> dict:
        return {
            "mean_deviation": self.mean_deviation,
            "bound": self.bound,
            "second_moment_ratio": self.second_moment_ratio,
            "passed": self.passed,
        }


@dataclass(frozen=True)
class MartingaleReport:
    slow: ComponentCheck
    fast: ComponentCheck
    n_draws: int
    theta_norm: float
    w_norm: float

    @property
    def passed(self) -> bool:
        return self.slow.passed and self.fast.passed

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "n_draws": self.n_draws,
            "theta_norm": self.theta_norm,
            "w_norm": self.w_norm,
            "slow": self.slow.to_dict(),
            "fast": self.fast.to_dict(),
        }


def martingale_check(
    problem: TwoTimescaleProblem,
    theta: np.ndarray,
    w: np.ndarray,
    z,
    n_draws: int,
    seed: int = 0,
) -> MartingaleReport:
    """Empirically verify that sampled updates center on the exact conditional means.

    Draws ``H`` and ``G`` ``n_draws`` times at the fixed ``(theta, w, z)`` and
    compares the empirical means against the registered exact means.
    """
    if not problem.has_exact_means:
        raise ValueError("martingale check needs exact conditional means registered on the problem")
    theta = np.asarray(theta, dtype=float)
    w = np.asarray(w, dtype=float)
    rng = np.random.default_rng(seed)
    hs = np.empty((n_draws, problem.dim_slow))
    gs = np.empty((n_draws, problem.dim_fast))
    for i in range(n_draws):
        H, G, _ = problem.draw(theta, w, z, rng)
        hs[i] = H
        gs[i] = G
    scale = 1.0 + float(theta @ theta) + float(w @ w)

    def component(samples: np.ndarray, exact: np.ndarray) -> ComponentCheck:
        dev = samples - exact[None, :]
        mean_dev = float(np.linalg.norm(dev.mean(axis=0)))
        sigma = float(np.sqrt(dev.var(axis=0).sum()))
        return ComponentCheck(
            mean_deviation=mean_dev,
            bound=4.0 * sigma / np.sqrt(n_draws),
            second_moment_ratio=float((dev**2).sum(axis=1).mean()) / scale,
        )

    return MartingaleReport(
        slow=component(hs, np.asarray(problem.exact_slow_mean(theta, w, z), float)),
        fast=component(gs, np.asarray(problem.exact_fast_mean(theta, w, z), float)),
        n_draws=n_draws,
        theta_norm=float(np.linalg.norm(theta)),
        w_norm=float(np.linalg.norm(w)),
    )


def lipschitz_estimate(
    problem: TwoTimescaleProblem,
    n_pairs: int,
    radius: float = 5.0,
    seed: int = 0,
) -> tuple[float, float]:
    """Empirical Lipschitz constants of the conditional-mean fields.

    Maximizes ``||f(theta,w,z) - f(theta',w',z)|| / (||theta-theta'|| + ||w-w'||)``
    over ``n_pairs`` sampled iterate pairs (uniform in a ball of the given
    radius) and over every enumerable noise state. Returns
    ``(L_hat_slow, L_hat_fast)``; the bound must be taken uniformly over the
    noise state, so a finite ``noise_states`` enumeration is required.
    """
    if not problem.has_exact_means:
        raise ValueError("lipschitz estimate needs exact conditional means")
    if problem.noise_states is None:
        raise ValueError("lipschitz estimate needs a finite noise-state enumeration")
    rng = np.random.default_rng(seed)
    d, k = problem.dim_slow, problem.dim_fast
    states = list(problem.noise_states)
    best_h = 0.0
    best_g = 0.0
    for _ in range(n_pairs):
        x = rng.uniform(-radius, radius, size=d + k)
        y = rng.uniform(-radius, radius, size=d + k)
        denom = float(np.linalg.norm(x[:d] - y[:d]) + np.linalg.norm(x[d:] - y[d:]))
        if denom == 0.0:
            continue
        for z in states:
            dh = np.linalg.norm(
                np.asarray(problem.exact_slow_mean(x[:d], x[d:], z))
                - np.asarray(problem.exact_slow_mean(y[:d], y[d:], z))
            )
            dg = np.linalg.norm(
                np.asarray(problem.exact_fast_mean(x[:d], x[d:], z))
                - np.asarray(problem.exact_fast_mean(y[:d], y[d:], z))
            )
            best_h = max(best_h, float(dh) / denom)
            best_g = max(best_g, float(dg) / denom)
    return best_h, best_g


def estimate_noise_bound(
    problem: TwoTimescaleProblem,
    n_probes: int = 5,
    n_draws: int = 2000,
    radius: float = 5.0,
    seed: int = 0,
    margin: float = 2.0,
) -> float:
    """Fix the noise-variance constant once per problem.

    Probes a few random ``(theta, w, z)`` triples, measures
    ``E[||M||^2] / (1 + ||theta||^2 + ||w||^2)`` for both components, and
    returns the max scaled by ``margin``. Later checks assert that fresh
    triples stay below this constant.
    """
    if problem.noise_states is None:
        raise ValueError("needs a finite noise-state enumeration")
    rng = np.random.default_rng(seed)
    states = list(problem.noise_states)
    worst = 0.0
    for i in range(n_probes):
        theta = rng.uniform(-radius, radius, size=problem.dim_slow)
        w = rng.uniform(-radius, radius, size=problem.dim_fast)
        z = states[int(rng.integers(len(states)))]
        rep = martingale_check(problem, theta, w, z, n_draws, seed=seed + 1000 + i)
        worst = max(worst, rep.slow.second_moment_ratio, rep.fast.second_moment_ratio)
    return margin * worst


@dataclass(frozen=True)
class WalkResult:
    """Summary of one transient-random-walk path.

    The walk on the integers moves up with probability ``p > 1/2``, so it
    drifts to +infinity and its minimum is finite almost surely. With the
    state-dependent constant ``L(n) = ((1-p)/p)^n``, decreasing in ``n``, the
    path supremum of ``L`` is attained at the minimum visited position:
    ``sup_L = ((1-p)/p)^min_position``. The bound is random (not uniform in
    the sample point), which is exactly what the relaxed Lipschitz assumption
    permits.
    """

    p: float
    horizon: int
    seed: int
    min_position: int
    final_position: int
    sup_lipschitz: float

    def to_dict(self) -> dict:
        return {
            "p": self.p,
            "horizon": self.horizon,
            "seed": self.seed,
            "min_position": self.min_position,
            "final_position": self.final_position,
            "sup_lipschitz": self.sup_lipschitz,
        }


def transient_walk(p: float, horizon: int, seed: int = 0) -> WalkResult:
    """Simulate the upward-drifting walk from 0 and report its Lipschitz supremum."""
    if not 0.5 < p < 1.0:
        raise ValueError("p must lie in (0.5, 1)")
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    rng = np.random.default_rng(seed)
    steps = np.where(rng.random(horizon) < p, 1, -1)
    path = np.concatenate(([0], np.cumsum(steps)))
    min_pos = int(path.min())
    ratio = (1.0 - p) / p
    return WalkResult(
        p=p,
        horizon=horizon,
        seed=seed,
        min_position=min_pos,
        final_position=int(path[-1]),
        sup_lipschitz=float(ratio**min_pos),
    )
