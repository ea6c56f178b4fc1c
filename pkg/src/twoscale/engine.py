"""Generic two-timescale stochastic approximation driver.

The engine iterates the coupled recursions

    theta_{n+1} = theta_n + a(n) * H(theta_n, w_n, z_n, rng)
    w_{n+1}     = w_n     + b(n) * G(theta_n, w_n, z_n, rng)
    z_{n+1}     = noise_step(z_n, theta_n, w_n, rng)

where ``H`` and ``G`` are sampled updates whose conditional means given the
Markov noise state ``z_n`` are the drift fields of the two timescales. The
engine consumes the combined samples directly: implementations only ever draw
the mean-plus-martingale sum, so exact conditional means are optional inputs
used solely by diagnostics.

Shared-noise mode (one ``z`` stream driving both recursions, the temporal-
difference case) is first class: a problem may provide a fused
``combined_update`` that produces both increments and the next noise state
from a single draw. Independent-noise problems carry a composite ``z`` (for
example a pair) and handle the split themselves.

The iterate-time axis ``t(n) = sum_{m<n} a(m)`` is accumulated with
compensated summation so the interpolation grid stays accurate over long
horizons. Divergence is monitored, not enforced: when ``||theta|| + ||w||``
exceeds the bound the run halts and the partial log is returned with its
divergence flag set (projection could introduce spurious fixed points, so the
engine never projects).
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from math import sqrt as _sqrt
from typing import Any, Callable, Sequence

import numpy as np

__all__ = [
    "StepSchedule",
    "SchedulePair",
    "CheckResult",
    "ScheduleReport",
    "validate_schedule_pair",
    "AffineMap",
    "TwoTimescaleProblem",
    "TrajectoryLog",
    "run_two_timescale",
    "interpolate",
    "CouplingSeries",
    "coupling_error_series",
    "with_frozen_slow",
    "trajectory_to_csv",
    "summary_dict",
]


@dataclass(frozen=True)
class StepSchedule:
    """Power-law step-size schedule ``a(n) = scale / (n + offset)^exponent``.

    The constructor only requires positivity (``scale > 0``, ``offset >= 1``,
    ``exponent > 0``), which already makes the schedule positive and
    non-increasing. The summability conditions that make a schedule *valid*
    (divergent sum, square-summable, correct timescale separation) are checked
    by :func:`validate_schedule_pair` so that invalid schedules can be
    constructed and reported on.
    """

    scale: float
    offset: float
    exponent: float

    def __post_init__(self) -> None:
        if not self.scale > 0:
            raise ValueError("scale must be positive")
        if not self.offset >= 1:
            raise ValueError("offset must be >= 1")
        if not self.exponent > 0:
            raise ValueError("exponent must be positive")

    def __call__(self, n):
        return self.scale / (n + self.offset) ** self.exponent

    def describe(self) -> str:
        return f"{self.scale:g}/(n+{self.offset:g})^{self.exponent:g}"

    @classmethod
    def from_initial(cls, initial: float, ramp: float, exponent: float) -> "StepSchedule":
        """Schedule ``initial / (1 + n/ramp)^exponent`` in canonical form."""
        return cls(initial * ramp**exponent, ramp, exponent)


@dataclass(frozen=True)
class SchedulePair:
    """Slow schedule ``a(n)`` and fast schedule ``b(n)``; valid pairs have a(n)/b(n) -> 0."""

    slow: StepSchedule
    fast: StepSchedule

    def describe(self) -> str:
        return f"a(n)={self.slow.describe()}, b(n)={self.fast.describe()}"


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str = ""


@dataclass(frozen=True)
class ScheduleReport:
    conditions: tuple[CheckResult, ...]

    @property
    def ok(self) -> bool:
        return all(c.passed for c in self.conditions)

    def failed(self) -> tuple[CheckResult, ...]:
        return tuple(c for c in self.conditions if not c.passed)

    def to_dict(self) -> dict:
        return {
            "ok": self.ok,
            "conditions": [
                {"name": c.name, "passed": c.passed, "detail": c.detail}
                for c in self.conditions
            ],
        }


def validate_schedule_pair(pair: SchedulePair) -> ScheduleReport:
    """Analytic validity check on the power-law family.

    For ``a(n) = c/(n + n0)^alpha``: the sum diverges iff ``alpha <= 1``, the
    squared sum is finite iff ``alpha > 1/2``, positivity and monotonicity hold
    by construction, and ``a(n)/b(n) -> 0`` iff the slow exponent strictly
    exceeds the fast one.
    """
    a, b = pair.slow, pair.fast
    conditions = (
        CheckResult(
            "positive-nonincreasing",
            True,
            "power-law schedules are positive and non-increasing by construction",
        ),
        CheckResult("sum-a-diverges", a.exponent <= 1.0, f"slow exponent {a.exponent:g}"),
        CheckResult("sum-b-diverges", b.exponent <= 1.0, f"fast exponent {b.exponent:g}"),
        CheckResult("sum-a-squared-finite", a.exponent > 0.5, f"slow exponent {a.exponent:g}"),
        CheckResult("sum-b-squared-finite", b.exponent > 0.5, f"fast exponent {b.exponent:g}"),
        CheckResult(
            "ratio-a-over-b-vanishes",
            a.exponent > b.exponent,
            f"slow exponent {a.exponent:g} vs fast exponent {b.exponent:g}",
        ),
    )
    return ScheduleReport(conditions)


@dataclass(frozen=True)
class AffineMap:
    """Affine map ``x -> offset + matrix @ x`` with inspectable coefficients."""

    matrix: np.ndarray
    offset: np.ndarray

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return self.offset + self.matrix @ x

    @property
    def lipschitz(self) -> float:
        return float(np.linalg.norm(self.matrix, 2))


@dataclass
class TwoTimescaleProblem:
    """Contract between a concrete problem and the engine.

    Updates are *sampled*: ``slow_update``/``fast_update`` draw the combined
    mean-plus-noise increments. A problem whose two recursions are driven by
    one shared draw per step supplies ``combined_update`` instead, returning
    ``(H, G, z_next)`` from a single sample. ``exact_slow_mean`` and
    ``exact_fast_mean``, when supplied, must satisfy
    ``E[H(theta, w, z, .)] = exact_slow_mean(theta, w, z)`` (checked
    empirically by the assumption audit).

    ``noise_states`` optionally enumerates a finite noise state space, which
    lets audits take suprema over it. ``control`` is the optional control-
    process hook on the noise kernel; it defaults to "no control" and, when
    set, is called as ``control(z, theta, w)`` and its value passed as a fifth
    argument to ``noise_step``.
    """

    dim_slow: int
    dim_fast: int
    init_noise: Any
    slow_update: Callable | None = None
    fast_update: Callable | None = None
    noise_step: Callable | None = None
    combined_update: Callable | None = None
    exact_slow_mean: Callable | None = None
    exact_fast_mean: Callable | None = None
    shared_noise: bool = True
    noise_states: Sequence | None = None
    control: Callable | None = None
    noise_desc: str = ""
    theta0: np.ndarray | None = None
    w0: np.ndarray | None = None

    def __post_init__(self) -> None:
        if self.combined_update is None and self.noise_step is None:
            raise ValueError("problem needs either combined_update or noise_step")

    @property
    def has_exact_means(self) -> bool:
        return self.exact_slow_mean is not None and self.exact_fast_mean is not None

    def initial_iterates(self) -> tuple[np.ndarray, np.ndarray]:
        theta0 = np.zeros(self.dim_slow) if self.theta0 is None else np.asarray(self.theta0, float)
        w0 = np.zeros(self.dim_fast) if self.w0 is None else np.asarray(self.w0, float)
        return theta0.copy(), w0.copy()

    def draw(self, theta: np.ndarray, w: np.ndarray, z: Any, rng: np.random.Generator):
        """One sampled step: returns ``(H, G, z_next)``."""
        if self.combined_update is not None:
            return self.combined_update(theta, w, z, rng)
        H = np.zeros(self.dim_slow) if self.slow_update is None else self.slow_update(theta, w, z, rng)
        G = np.zeros(self.dim_fast) if self.fast_update is None else self.fast_update(theta, w, z, rng)
        if self.control is not None:
            z_next = self.noise_step(z, theta, w, rng, self.control(z, theta, w))
        else:
            z_next = self.noise_step(z, theta, w, rng)
        return H, G, z_next


def with_frozen_slow(problem: TwoTimescaleProblem) -> TwoTimescaleProblem:
    """Variant of a problem with the slow update forced to zero (theta frozen)."""
    zero = np.zeros(problem.dim_slow)

    if problem.combined_update is not None:
        inner = problem.combined_update

        def frozen_combined(theta, w, z, rng):
            _, G, z_next = inner(theta, w, z, rng)
            return zero, G, z_next

        return dataclasses.replace(
            problem,
            combined_update=frozen_combined,
            exact_slow_mean=(lambda theta, w, z: zero) if problem.exact_slow_mean else None,
        )
    return dataclasses.replace(
        problem,
        slow_update=lambda theta, w, z, rng: zero,
        exact_slow_mean=(lambda theta, w, z: zero) if problem.exact_slow_mean else None,
    )


@dataclass
class TrajectoryLog:
    """Thinned record of one run plus diagnostics computed on the unthinned stream.

    Records hold every ``thinning``-th iterate and always the final one. When a
    tracker map was registered for the run, ``coupling`` holds
    ``||w_n - lambda(theta_n)||`` at the records, while ``decade_medians``
    holds exact medians of that error over all iterates with index in
    ``[10^j, 10^{j+1})`` (computed before thinning).
    """

    ns: np.ndarray
    ts: np.ndarray
    thetas: np.ndarray
    ws: np.ndarray
    zs: np.ndarray | None
    coupling: np.ndarray | None
    thinning: int
    seed: int
    schedule_desc: str
    horizon: int
    diverged: bool = False
    divergence_index: int | None = None
    decade_medians: tuple[tuple[int, float], ...] | None = None
    final_coupling: float | None = None

    @property
    def dim_slow(self) -> int:
        return self.thetas.shape[1]

    @property
    def dim_fast(self) -> int:
        return self.ws.shape[1]

    @property
    def final_theta(self) -> np.ndarray:
        return self.thetas[-1]

    @property
    def final_w(self) -> np.ndarray:
        return self.ws[-1]


def run_two_timescale(
    problem: TwoTimescaleProblem,
    schedules: SchedulePair,
    horizon: int,
    seed: int,
    thinning: int = 100,
    divergence_bound: float = 1e6,
    theta0: np.ndarray | None = None,
    w0: np.ndarray | None = None,
    tracker: AffineMap | Callable | None = None,
) -> TrajectoryLog:
    """Run the coupled recursions for ``horizon`` steps.

    ``tracker``, when given, registers the fast-iterate attractor map; the
    coupling error ``||w_n - tracker(theta_n)||`` is then computed for every
    iterate (before thinning) and summarized per decade. Identical
    ``(problem, schedules, horizon, seed)`` produce bit-identical logs.
    """
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    if thinning < 1:
        raise ValueError("thinning must be >= 1")
    rng = np.random.default_rng(seed)
    theta, w = problem.initial_iterates()
    if theta0 is not None:
        theta = np.asarray(theta0, dtype=float).copy()
    if w0 is not None:
        w = np.asarray(w0, dtype=float).copy()
    if theta.shape != (problem.dim_slow,) or w.shape != (problem.dim_fast,):
        raise ValueError("initial iterates do not match problem dimensions")
    z = problem.init_noise

    a_arr = schedules.slow(np.arange(horizon, dtype=float))
    b_arr = schedules.fast(np.arange(horizon, dtype=float))

    if isinstance(tracker, AffineMap):
        track_mat, track_off = tracker.matrix, tracker.offset

        def coupling_at(th, ww):
            diff = ww - track_off - track_mat.dot(th)
            return _sqrt(diff.dot(diff))

    elif tracker is not None:

        def coupling_at(th, ww):
            diff = ww - tracker(th)
            return _sqrt(diff.dot(diff))

    cpl = np.empty(horizon + 1) if tracker is not None else None

    n_rec = horizon // thinning + 2
    rec_n = np.empty(n_rec, dtype=np.int64)
    rec_t = np.empty(n_rec)
    rec_theta = np.empty((n_rec, problem.dim_slow))
    rec_w = np.empty((n_rec, problem.dim_fast))
    rec_z: list = []

    t = 0.0
    t_comp = 0.0  # compensated-summation carry for the time axis
    k = 0
    rec_n[0] = 0
    rec_t[0] = 0.0
    rec_theta[0] = theta
    rec_w[0] = w
    rec_z.append(z)
    k = 1
    if cpl is not None:
        cpl[0] = coupling_at(theta, w)

    draw = problem.draw
    diverged = False
    divergence_index: int | None = None
    final_n = horizon

    for n in range(horizon):
        H, G, z_next = draw(theta, w, z, rng)
        a_n = a_arr[n]
        theta = theta + a_n * H
        w = w + b_arr[n] * G
        z = z_next
        # Kahan update of t(n+1) = t(n) + a(n)
        y = a_n - t_comp
        t_new = t + y
        t_comp = (t_new - t) - y
        t = t_new
        m = n + 1
        if cpl is not None:
            cpl[m] = coupling_at(theta, w)
        norm_sum = _sqrt(theta.dot(theta)) + _sqrt(w.dot(w))
        if norm_sum > divergence_bound:
            diverged = True
            divergence_index = m
            final_n = m
            break
        if m % thinning == 0 and m != horizon:
            rec_n[k] = m
            rec_t[k] = t
            rec_theta[k] = theta
            rec_w[k] = w
            rec_z.append(z)
            k += 1

    # final iterate is always recorded
    rec_n[k] = final_n
    rec_t[k] = t
    rec_theta[k] = theta
    rec_w[k] = w
    rec_z.append(z)
    k += 1

    decade_medians = None
    final_coupling = None
    coupling_records = None
    if cpl is not None:
        cpl = cpl[: final_n + 1]
        final_coupling = float(cpl[-1])
        medians = []
        j = 0
        while 10**j <= final_n:
            lo = 10**j
            hi = min(10 ** (j + 1), final_n + 1)
            medians.append((j, float(np.median(cpl[lo:hi]))))
            j += 1
        decade_medians = tuple(medians)
        coupling_records = cpl[rec_n[:k]]

    zs = np.asarray(rec_z) if rec_z else None
    return TrajectoryLog(
        ns=rec_n[:k].copy(),
        ts=rec_t[:k].copy(),
        thetas=rec_theta[:k].copy(),
        ws=rec_w[:k].copy(),
        zs=zs,
        coupling=coupling_records,
        thinning=thinning,
        seed=seed,
        schedule_desc=schedules.describe(),
        horizon=horizon,
        diverged=diverged,
        divergence_index=divergence_index,
        decade_medians=decade_medians,
        final_coupling=final_coupling,
    )


def interpolate(log: TrajectoryLog, t: float) -> tuple[np.ndarray, np.ndarray]:
    """Piecewise-linear interpolant ``(theta_bar(t), w_bar(t))`` of an unthinned log."""
    if log.thinning != 1:
        raise ValueError("exact interpolation requires an unthinned log (thinning=1)")
    ts = log.ts
    if t < ts[0] or t > ts[-1]:
        raise ValueError(f"t={t:g} outside logged time range [{ts[0]:g}, {ts[-1]:g}]")
    idx = int(np.searchsorted(ts, t, side="right")) - 1
    if idx >= len(ts) - 1:
        return log.thetas[-1].copy(), log.ws[-1].copy()
    span = ts[idx + 1] - ts[idx]
    frac = 0.0 if span == 0 else (t - ts[idx]) / span
    theta = log.thetas[idx] + frac * (log.thetas[idx + 1] - log.thetas[idx])
    w = log.ws[idx] + frac * (log.ws[idx + 1] - log.ws[idx])
    return theta, w


@dataclass(frozen=True)
class CouplingSeries:
    """Coupling-error series ``||w_n - lambda(theta_n)||`` with per-decade medians."""

    ns: np.ndarray
    errors: np.ndarray
    decade_medians: tuple[tuple[int, float], ...]
    exact: bool  # True when medians come from the unthinned in-run stream


def coupling_error_series(log: TrajectoryLog, tracker: AffineMap | Callable) -> CouplingSeries:
    """Coupling errors at the log's records.

    Per-decade medians are taken from the log's exact in-run medians whenever
    the log was produced with the same registered map (detected by comparing
    the recomputed record errors against the stored ones); otherwise they are
    medians over the record values falling in each decade.
    """
    errors = np.array(
        [np.linalg.norm(w - tracker(theta)) for theta, w in zip(log.thetas, log.ws)]
    )
    exact = (
        log.decade_medians is not None
        and log.coupling is not None
        and log.coupling.shape == errors.shape
        and np.allclose(log.coupling, errors, rtol=1e-12, atol=1e-12)
    )
    if exact:
        medians = log.decade_medians
    else:
        final_n = int(log.ns[-1])
        meds = []
        j = 0
        while 10**j <= final_n:
            mask = (log.ns >= 10**j) & (log.ns < 10 ** (j + 1))
            if mask.any():
                meds.append((j, float(np.median(errors[mask]))))
            j += 1
        medians = tuple(meds)
    return CouplingSeries(log.ns.copy(), errors, medians, exact)


def trajectory_to_csv(log: TrajectoryLog, path, timestamp: str | None = None) -> None:
    """Write the record stream as CSV.

    Header is ``n,t,theta_0..theta_{d-1},w_0..w_{k-1},coupling_err``; the body
    is deterministic (floats use round-trip precision), the optional leading
    ``# generated-at`` comment line is the only nondeterministic content.
    """
    d, kdim = log.dim_slow, log.dim_fast
    cols = ["n", "t"] + [f"theta_{i}" for i in range(d)] + [f"w_{i}" for i in range(kdim)]
    cols.append("coupling_err")
    with open(path, "w") as f:
        if timestamp is not None:
            f.write(f"# generated-at {timestamp}\n")
        f.write(",".join(cols) + "\n")
        for i in range(len(log.ns)):
            row = [str(int(log.ns[i])), f"{log.ts[i]:.17g}"]
            row += [f"{v:.17g}" for v in log.thetas[i]]
            row += [f"{v:.17g}" for v in log.ws[i]]
            row.append(f"{log.coupling[i]:.17g}" if log.coupling is not None else "nan")
            f.write(",".join(row) + "\n")


def summary_dict(log: TrajectoryLog) -> dict:
    """JSON-compatible run summary (final iterates, divergence flag, seed, schedule)."""
    return {
        "seed": log.seed,
        "horizon": log.horizon,
        "thinning": log.thinning,
        "schedule": log.schedule_desc,
        "final_n": int(log.ns[-1]),
        "final_t": float(log.ts[-1]),
        "final_theta": log.final_theta.tolist(),
        "final_w": log.final_w.tolist(),
        "diverged": log.diverged,
        "divergence_index": log.divergence_index,
        "final_coupling": log.final_coupling,
        "decade_medians": [[j, m] for j, m in log.decade_medians] if log.decade_medians else None,
    }
