"""Canonical problem instances used across tests, configs, and docs."""
from __future__ import annotations

import numpy as np

from .mdp import FeatureMap, FiniteMdp, Policy, tabular_features

__all__ = ["chain3", "chain3_features", "STAY", "GO"]

STAY = 0
GO = 1


def chain3() -> tuple[FiniteMdp, Policy, Policy]:
    """Three-state ring MDP with actions {stay, go}.

    ``go`` moves ``s -> (s + 1) mod 3`` surely, ``stay`` holds surely, and the
    reward is 1 exactly when the successor is state 0. The behavior policy is
    uniform, so its chain is doubly stochastic and the stationary distribution
    is uniform; the target policy always takes ``go``, whose value function has
    a closed-form cycle solve. Returns ``(mdp, target, behavior)``.
    """
    n = 3
    p = np.zeros((n, 2, n))
    r = np.zeros((n, 2, n))
    for s in range(n):
        p[s, STAY, s] = 1.0
        p[s, GO, (s + 1) % n] = 1.0
    r[:, :, 0] = 1.0
    mdp = FiniteMdp(n, 2, p, r, gamma=0.9)
    target = Policy.greedy(n, 2, GO)
    behavior = Policy.uniform(n, 2)
    return mdp, target, behavior


def chain3_features() -> FeatureMap:
    return tabular_features(3)
