"""Scikit-learn style front end for off-policy value estimation with TDC.

The estimator wraps problem construction and the two-timescale run behind the
familiar ``fit``/``predict`` surface so the algorithm composes with the wider
ecosystem (``get_params``/``set_params``/``clone`` all work). ``fit`` consumes
the environment model (a :class:`~twoscale.mdp.FiniteMdp`); policies, features,
and schedules are hyperparameters.
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .engine import AffineMap, SchedulePair, StepSchedule, run_two_timescale
from .mdp import FiniteMdp, Policy, random_features, tabular_features
from .oracle import solve_oracle
from .tdc import TdcProblem

__all__ = ["TdcValueEstimator"]


class TdcValueEstimator(BaseEstimator):
    """Estimate a target policy's state values from behavior-policy simulation.

    Parameters
    ----------
    target_policy, behavior_policy : Policy
        The policy being evaluated and the policy generating data.
    features : {"tabular", "random"}
        State features; ``"random"`` uses ``feature_dim`` Gaussian features.
    feature_dim : int or None
        Dimension for random features (defaults to n_states).
    feature_seed : int
        Seed for random feature generation.
    slow_schedule, fast_schedule : StepSchedule
        Step-size schedules of the two recursions.
    horizon : int
        Number of update steps.
    seed : int
        Seed of the simulation stream.
    thinning, divergence_bound, reward_noise : run options passed through.

    Attributes
    ----------
    theta_, w_ : fitted iterates. ``log_`` holds the full trajectory log,
    ``oracle_`` the exact solution used for diagnostics, ``values_`` the
    fitted state-value table.
    """

    def __init__(
        self,
        target_policy: Policy | None = None,
        behavior_policy: Policy | None = None,
        features: str = "tabular",
        feature_dim: int | None = None,
        feature_seed: int = 0,
        slow_schedule: StepSchedule = StepSchedule.from_initial(0.5, 1e4, 1.0),
        fast_schedule: StepSchedule = StepSchedule.from_initial(0.5, 1e4, 0.6),
        horizon: int = 200_000,
        seed: int = 0,
        thinning: int = 100,
        divergence_bound: float = 1e6,
        reward_noise: float = 0.0,
    ):
        self.target_policy = target_policy
        self.behavior_policy = behavior_policy
        self.features = features
        self.feature_dim = feature_dim
        self.feature_seed = feature_seed
        self.slow_schedule = slow_schedule
        self.fast_schedule = fast_schedule
        self.horizon = horizon
        self.seed = seed
        self.thinning = thinning
        self.divergence_bound = divergence_bound
        self.reward_noise = reward_noise

    def fit(self, X: FiniteMdp, y=None):
        """Run TDC on the given MDP; ``X`` is the environment model."""
        if not isinstance(X, FiniteMdp):
            raise TypeError("X must be a FiniteMdp")
        if self.target_policy is None or self.behavior_policy is None:
            raise ValueError("target_policy and behavior_policy must be set")
        if self.features == "tabular":
            phi = tabular_features(X.n_states)
        elif self.features == "random":
            d = self.feature_dim if self.feature_dim is not None else X.n_states
            phi = random_features(X.n_states, d, seed=self.feature_seed)
        else:
            raise ValueError(f"unknown feature kind {self.features!r}")
        problem = TdcProblem(
            X, self.target_policy, self.behavior_policy, phi, reward_noise=self.reward_noise
        )
        solution = solve_oracle(X, self.target_policy, self.behavior_policy, phi)
        tracker = AffineMap(matrix=-solution.lambda_mat, offset=solution.lambda_off)
        log = run_two_timescale(
            problem.to_engine(),
            SchedulePair(self.slow_schedule, self.fast_schedule),
            horizon=self.horizon,
            seed=self.seed,
            thinning=self.thinning,
            divergence_bound=self.divergence_bound,
            tracker=tracker,
        )
        self.phi_ = phi
        self.problem_ = problem
        self.oracle_ = solution
        self.log_ = log
        self.theta_ = log.final_theta.copy()
        self.w_ = log.final_w.copy()
        self.values_ = phi.phi @ self.theta_
        self.n_iter_ = int(log.ns[-1])
        return self

    def predict(self, X) -> np.ndarray:
        """Estimated values for an array of state ids."""
        if not hasattr(self, "theta_"):
            raise NotFittedError("call fit before predict")
        states = np.asarray(X, dtype=int)
        return self.phi_.phi[states] @ self.theta_
