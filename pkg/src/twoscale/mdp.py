"""Finite MDP data model: validation, behavior-policy sampling, importance weights,
feature maps, and JSON serialization.

States and actions are dense integer ids starting at 0. All container types are
immutable after construction (array buffers are flagged read-only); sampling takes
an explicit ``numpy.random.Generator`` so concurrent runs with independent streams
are safe.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

__all__ = [
    "FiniteMdp",
    "Policy",
    "FeatureMap",
    "Transition",
    "Violation",
    "ValidationReport",
    "validate_mdp",
    "importance_weight",
    "sample_step",
    "random_mdp",
    "tabular_features",
    "random_features",
    "mdp_to_dict",
    "mdp_from_dict",
    "save_mdp",
    "load_mdp",
]

ROW_SUM_TOL = 1e-9
RANK_TOL = 1e-8


def _readonly(a: np.ndarray) -> np.ndarray:
    out = np.ascontiguousarray(np.asarray(a, dtype=float))
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class FiniteMdp:
    """Finite MDP with transition tensor ``p[s, a, s']`` and expected rewards ``r[s, a, s']``.

    The constructor only enforces shapes and finiteness; stochasticity of ``p``
    and the range of ``gamma`` are checked by :func:`validate_mdp` so that
    malformed instances can be constructed and reported on.
    """

    n_states: int
    n_actions: int
    p: np.ndarray
    r: np.ndarray
    gamma: float

    def __post_init__(self) -> None:
        shape = (self.n_states, self.n_actions, self.n_states)
        p = _readonly(self.p)
        r = _readonly(self.r)
        if p.shape != shape:
            raise ValueError(f"p has shape {p.shape}, expected {shape}")
        if r.shape != shape:
            raise ValueError(f"r has shape {r.shape}, expected {shape}")
        if not (np.isfinite(p).all() and np.isfinite(r).all()):
            raise ValueError("p and r must be finite")
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "r", r)
        object.__setattr__(self, "gamma", float(self.gamma))


@dataclass(frozen=True)
class Policy:
    """Row-stochastic action-probability table ``probs[s, a]``."""

    probs: np.ndarray

    def __post_init__(self) -> None:
        probs = _readonly(self.probs)
        if probs.ndim != 2:
            raise ValueError("policy table must be 2-D (states x actions)")
        if not np.isfinite(probs).all():
            raise ValueError("policy table must be finite")
        object.__setattr__(self, "probs", probs)

    @property
    def n_states(self) -> int:
        return self.probs.shape[0]

    @property
    def n_actions(self) -> int:
        return self.probs.shape[1]

    @staticmethod
    def uniform(n_states: int, n_actions: int) -> "Policy":
        return Policy(np.full((n_states, n_actions), 1.0 / n_actions))

    @staticmethod
    def greedy(n_states: int, n_actions: int, action: int) -> "Policy":
        """Point mass on one action in every state."""
        if not 0 <= action < n_actions:
            raise ValueError(f"action {action} out of range [0, {n_actions})")
        probs = np.zeros((n_states, n_actions))
        probs[:, action] = 1.0
        return Policy(probs)


@dataclass(frozen=True)
class FeatureMap:
    """State-feature matrix ``phi[s, :]`` (one row per state).

    Full column rank is an invariant (smallest singular value of the
    column-normalized matrix must exceed 1e-8) so that the feature covariance
    under any fully supported state distribution is positive definite.
    """

    phi: np.ndarray

    def __post_init__(self) -> None:
        phi = _readonly(self.phi)
        if phi.ndim != 2:
            raise ValueError("phi must be 2-D (states x features)")
        if not np.isfinite(phi).all():
            raise ValueError("phi must be finite")
        norms = np.linalg.norm(phi, axis=0)
        scaled = phi / np.where(norms > 0, norms, 1.0)
        smin = np.linalg.svd(scaled, compute_uv=False).min() if min(phi.shape) else 0.0
        if phi.shape[1] > phi.shape[0] or smin <= RANK_TOL:
            raise ValueError(
                f"feature matrix must have full column rank "
                f"(min singular value {smin:.3e} <= {RANK_TOL:g})"
            )
        object.__setattr__(self, "phi", phi)

    @property
    def n_states(self) -> int:
        return self.phi.shape[0]

    @property
    def dim(self) -> int:
        return self.phi.shape[1]

    @property
    def max_row_norm(self) -> float:
        return float(np.linalg.norm(self.phi, axis=1).max())


@dataclass(frozen=True)
class Transition:
    """One sampled step ``(s, a, reward, s_next)`` under the behavior policy."""

    s: int
    a: int
    reward: float
    s_next: int


@dataclass(frozen=True)
class Violation:
    kind: str
    where: tuple
    detail: str


@dataclass(frozen=True)
class ValidationReport:
    """Report-style validation result; an empty violation list means valid."""

    violations: tuple[Violation, ...]

    @property
    def ok(self) -> bool:
        return not self.violations

    def kinds(self) -> set[str]:
        return {v.kind for v in self.violations}

    def to_dict(self) -> dict:
        return {
            "ok": self.ok,
            "violations": [
                {"kind": v.kind, "where": list(v.where), "detail": v.detail}
                for v in self.violations
            ],
        }


def validate_mdp(mdp: FiniteMdp, pi: Policy, pi_b: Policy) -> ValidationReport:
    """Check row-stochasticity, probability signs, ``gamma`` range, and coverage.

    Coverage requires ``pi_b(a|s) > 0`` wherever ``pi(a|s) > 0``; without it the
    importance weight is undefined on transitions the target policy can take.
    Shape mismatches are a precondition failure and raise immediately.
    """
    shape = (mdp.n_states, mdp.n_actions)
    if pi.probs.shape != shape or pi_b.probs.shape != shape:
        raise ValueError(
            f"policy shapes {pi.probs.shape}, {pi_b.probs.shape} do not match MDP {shape}"
        )
    violations: list[Violation] = []

    def check_rows(name: str, table: np.ndarray, where_prefix: tuple) -> None:
        sums = table.sum(axis=-1)
        for idx in np.argwhere(np.abs(sums - 1.0) > ROW_SUM_TOL):
            loc = tuple(int(i) for i in idx)
            violations.append(
                Violation("row-stochastic", where_prefix + loc, f"{name} row sums to {sums[loc]:.12g}")
            )
        for idx in np.argwhere(table < 0):
            loc = tuple(int(i) for i in idx)
            violations.append(
                Violation("negative-probability", where_prefix + loc[:-1], f"{name} entry {table[tuple(idx)]:.3g} < 0")
            )

    check_rows("p", mdp.p, ("p",))
    check_rows("pi", pi.probs, ("pi",))
    check_rows("pi_b", pi_b.probs, ("pi_b",))

    if not 0.0 < mdp.gamma < 1.0:
        violations.append(Violation("gamma-range", (), f"gamma={mdp.gamma} not in (0, 1)"))

    uncovered = (pi.probs > 0) & (pi_b.probs <= 0)
    for s, a in np.argwhere(uncovered):
        violations.append(
            Violation("coverage", (int(s), int(a)), "pi(a|s) > 0 but pi_b(a|s) = 0")
        )
    return ValidationReport(tuple(violations))


def importance_weight(pi: Policy, pi_b: Policy, s: int, a: int) -> float:
    """Per-action likelihood ratio ``pi(a|s) / pi_b(a|s)``."""
    denom = pi_b.probs[s, a]
    if denom <= 0.0:
        raise ValueError(f"behavior policy has zero probability at (s={s}, a={a})")
    return float(pi.probs[s, a] / denom)


def rho_table(pi: Policy, pi_b: Policy) -> np.ndarray:
    """Table of importance weights, 0 wherever the behavior policy has no mass.

    Entries with ``pi > 0`` but ``pi_b = 0`` are a coverage violation; they
    also come out 0 here, so callers must run :func:`validate_mdp` first when
    coverage matters.
    """
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(pi_b.probs > 0, pi.probs / pi_b.probs, 0.0)


def _draw_index(prob_row: np.ndarray, rng: np.random.Generator) -> int:
    cum = np.cumsum(prob_row)
    idx = int(np.searchsorted(cum, rng.random() * cum[-1], side="right"))
    return min(idx, len(prob_row) - 1)


def sample_step(
    mdp: FiniteMdp,
    pi_b: Policy,
    s: int,
    rng: np.random.Generator,
    reward_noise: float = 0.0,
) -> Transition:
    """Sample one behavior-policy transition from state ``s``.

    The reward carried is the expected reward ``r(s, a, s')``; when
    ``reward_noise > 0`` a zero-mean uniform perturbation on
    ``[-reward_noise, reward_noise]`` is added, which keeps all conditional
    means intact while exercising the martingale-difference noise terms.
    """
    if not 0 <= s < mdp.n_states:
        raise ValueError(f"state {s} out of range [0, {mdp.n_states})")
    a = _draw_index(pi_b.probs[s], rng)
    s_next = _draw_index(mdp.p[s, a], rng)
    reward = float(mdp.r[s, a, s_next])
    if reward_noise > 0.0:
        reward += float(rng.uniform(-reward_noise, reward_noise))
    return Transition(int(s), a, reward, s_next)


def _strongly_connected(support: np.ndarray) -> bool:
    graph = csr_matrix(support.astype(float))
    n_comp, _ = connected_components(graph, directed=True, connection="strong")
    return n_comp == 1


def random_mdp(
    n_states: int,
    n_actions: int,
    sparsity: float = 0.0,
    seed: int = 0,
    gamma: float = 0.9,
    max_retries: int = 100,
) -> FiniteMdp:
    """Generate a random MDP whose behavior chain is irreducible.

    ``sparsity`` in [0, 1) is the target fraction of successor states excluded
    from each ``(s, a)`` row; every row keeps at least two successors, which
    promotes irreducibility. Irreducibility of the union support graph (the
    support of any fully-mixed behavior policy's chain) is verified post hoc;
    generation retries with an incremented seed, giving up after
    ``max_retries`` attempts.
    """
    if n_states < 2:
        raise ValueError("n_states must be >= 2")
    if n_actions < 1:
        raise ValueError("n_actions must be >= 1")
    if not 0.0 <= sparsity < 1.0:
        raise ValueError("sparsity must be in [0, 1)")
    support_size = max(2, int(round((1.0 - sparsity) * n_states)))
    for attempt in range(max_retries):
        rng = np.random.default_rng(seed + attempt)
        p = np.zeros((n_states, n_actions, n_states))
        for s in range(n_states):
            for a in range(n_actions):
                support = rng.choice(n_states, size=support_size, replace=False)
                weights = rng.random(support_size) + 1e-3
                p[s, a, support] = weights / weights.sum()
        if _strongly_connected(p.sum(axis=1) > 0):
            r = rng.uniform(0.0, 1.0, size=(n_states, n_actions, n_states))
            return FiniteMdp(n_states, n_actions, p, r, gamma)
    raise RuntimeError(
        f"could not generate an irreducible MDP in {max_retries} attempts "
        f"(n_states={n_states}, n_actions={n_actions}, sparsity={sparsity})"
    )


def tabular_features(n_states: int) -> FeatureMap:
    """One-hot features; with these the TD fixed point is the exact value function."""
    return FeatureMap(np.eye(n_states))


def random_features(n_states: int, d: int, seed: int = 0, max_retries: int = 100) -> FeatureMap:
    """Random Gaussian feature rows with guaranteed full column rank.

    Rows are scaled to unit norm so that per-step stability thresholds of
    feature-space recursions match the tabular case (max_s ||phi(s)|| = 1)
    regardless of dimension.
    """
    if d > n_states:
        raise ValueError(f"feature dimension {d} exceeds n_states {n_states}")
    for attempt in range(max_retries):
        rng = np.random.default_rng(seed + attempt)
        phi = rng.standard_normal((n_states, d))
        row_norms = np.linalg.norm(phi, axis=1, keepdims=True)
        if row_norms.min() <= 0:
            continue
        phi = phi / row_norms
        col_norms = np.linalg.norm(phi, axis=0)
        scaled = phi / np.where(col_norms > 0, col_norms, 1.0)
        if np.linalg.svd(scaled, compute_uv=False).min() > RANK_TOL:
            return FeatureMap(phi)
    raise RuntimeError(f"could not draw a full-rank {n_states}x{d} feature matrix")


# JSON schema for MDP files: field names are fixed, see docs/formats.md.

def mdp_to_dict(mdp: FiniteMdp) -> dict:
    return {
        "n_states": mdp.n_states,
        "n_actions": mdp.n_actions,
        "gamma": mdp.gamma,
        "p": mdp.p.tolist(),
        "r": mdp.r.tolist(),
    }


def mdp_from_dict(data: dict) -> FiniteMdp:
    missing = {"n_states", "n_actions", "gamma", "p", "r"} - set(data)
    if missing:
        raise ValueError(f"MDP document missing fields: {sorted(missing)}")
    return FiniteMdp(
        int(data["n_states"]),
        int(data["n_actions"]),
        np.asarray(data["p"], dtype=float),
        np.asarray(data["r"], dtype=float),
        float(data["gamma"]),
    )


def save_mdp(mdp: FiniteMdp, path: str | Path) -> None:
    Path(path).write_text(json.dumps(mdp_to_dict(mdp), indent=2))


def load_mdp(path: str | Path) -> FiniteMdp:
    return mdp_from_dict(json.loads(Path(path).read_text()))
