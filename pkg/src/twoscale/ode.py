"""ODE machinery behind the convergence diagnostics.

The two limiting dynamics of the TDC problem are affine:

- fast timescale, theta frozen:  ``dw/dt = (b - A theta) - C w`` with
  equilibrium ``lambda(theta)``;
- slow timescale, w on its attractor:  ``dtheta/dt = A^T C^{-1} (b - A theta)``
  with equilibrium ``theta*`` (the negative half-gradient of the projected
  error objective).

Integration is classical fixed-step fourth-order Runge-Kutta: every field
here is affine or piecewise-affine-in-time with known scales, so determinism
and reproducibility beat adaptivity. The non-autonomous integrator follows a
piecewise-constant noise path and never steps across a path knot, matching
the piecewise-constant occupation of the interpolated iterate trajectory.

``tracking_error`` realizes the tracking diagnostic: starting the
non-autonomous ODE on the interpolated iterate trajectory at time ``s`` and
measuring the sup deviation over a fixed window, which should vanish as
``s`` grows.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .engine import AffineMap, TrajectoryLog, interpolate
from .oracle import OracleSolution, lambda_map
from .tdc import TdcProblem, conditional_h

__all__ = [
    "OdeField",
    "OdeTrajectory",
    "faster_field",
    "slower_field",
    "integrate",
    "nonautonomous_integrate",
    "tracking_error",
    "ode_trajectory_to_csv",
]


@dataclass(frozen=True)
class OdeField:
    """Vector field ``x -> dx/dt``; affine fields expose matrix and offset for spectral checks."""

    dim: int
    func: Callable[[np.ndarray], np.ndarray]
    matrix: np.ndarray | None = None
    offset: np.ndarray | None = None
    equilibrium: np.ndarray | None = None

    @property
    def is_affine(self) -> bool:
        return self.matrix is not None

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return self.func(x)


@dataclass(frozen=True)
class OdeTrajectory:
    times: np.ndarray
    states: np.ndarray

    @property
    def final(self) -> np.ndarray:
        return self.states[-1]


def _affine_field(matrix: np.ndarray, offset: np.ndarray, equilibrium: np.ndarray) -> OdeField:
    def func(x: np.ndarray) -> np.ndarray:
        return offset + matrix @ x

    return OdeField(dim=offset.shape[0], func=func, matrix=matrix, offset=offset, equilibrium=equilibrium)


def faster_field(solution: OracleSolution, theta: np.ndarray) -> OdeField:
    """Fast-timescale field ``w -> (b - A theta) - C w``; equilibrium ``lambda(theta)``."""
    theta = np.asarray(theta, dtype=float)
    offset = solution.b - solution.A @ theta
    return _affine_field(-solution.C, offset, lambda_map(solution, theta))


def slower_field(solution: OracleSolution) -> OdeField:
    """Slow-timescale field ``theta -> A^T C^{-1} (b - A theta)``; equilibrium ``theta*``."""
    AtCinv = np.linalg.solve(solution.C, solution.A).T  # (C^{-1} A)^T = A^T C^{-1}
    return _affine_field(-AtCinv @ solution.A, AtCinv @ solution.b, solution.theta_star.copy())


def default_dt(field: OdeField) -> float:
    """Conservative default step for affine fields: ``1e-3 / (1 + ||matrix||_2)``."""
    if not field.is_affine:
        raise ValueError("default step only defined for affine fields; pass dt explicitly")
    return 1e-3 / (1.0 + np.linalg.norm(field.matrix, 2))


def _rk4_step(func, x: np.ndarray, h: float) -> np.ndarray:
    k1 = func(x)
    k2 = func(x + 0.5 * h * k1)
    k3 = func(x + 0.5 * h * k2)
    k4 = func(x + h * k3)
    return x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def integrate(field: OdeField, x0: np.ndarray, T: float, dt: float | None = None) -> OdeTrajectory:
    """Fixed-step RK4 from 0 to ``T``; sampled at multiples of ``dt``, final point at ``T`` exactly.

    Aborts on non-finite state.
    """
    if dt is None:
        dt = default_dt(field)
    if dt <= 0:
        raise ValueError("dt must be positive")
    if T < dt:
        raise ValueError("T must be at least dt")
    x = np.asarray(x0, dtype=float).copy()
    times = [0.0]
    states = [x.copy()]
    n_full = int(np.floor(T / dt + 1e-12))
    t = 0.0
    for _ in range(n_full):
        x = _rk4_step(field.func, x, dt)
        t += dt
        if not np.isfinite(x).all():
            raise FloatingPointError(f"integration blew up at t={t:g}")
        times.append(t)
        states.append(x.copy())
    if t < T - 1e-12 * max(1.0, T):
        x = _rk4_step(field.func, x, T - t)  # shortened last step lands on T
        if not np.isfinite(x).all():
            raise FloatingPointError(f"integration blew up at t={T:g}")
        times.append(T)
        states.append(x.copy())
    else:
        times[-1] = T
    return OdeTrajectory(np.asarray(times), np.asarray(states))


def nonautonomous_integrate(
    problem: TdcProblem,
    tracker: AffineMap | Callable,
    noise_times: np.ndarray,
    noise_states: np.ndarray,
    theta_s: np.ndarray,
    t_span: tuple[float, float],
    dt: float = 0.02,
    eval_times: Sequence[float] | None = None,
) -> OdeTrajectory:
    """Integrate ``dtheta/dt = h(theta, lambda(theta), z(t))`` along a recorded noise path.

    ``z(t)`` is piecewise constant: ``noise_states[i]`` on
    ``[noise_times[i], noise_times[i+1])``. The path must cover ``t_span``;
    RK4 substeps of at most ``dt`` are taken inside each constant piece and
    never cross a knot. Returns the solution at ``eval_times`` (default: the
    knots inside the span plus both endpoints).
    """
    t0, t1 = float(t_span[0]), float(t_span[1])
    noise_times = np.asarray(noise_times, dtype=float)
    if t1 < t0:
        raise ValueError("empty time span")
    if noise_times[0] > t0 + 1e-12 or noise_times[-1] < t1 - 1e-12:
        raise ValueError(
            f"noise path [{noise_times[0]:g}, {noise_times[-1]:g}] does not cover span [{t0:g}, {t1:g}]"
        )
    if eval_times is None:
        inside = noise_times[(noise_times > t0) & (noise_times < t1)]
        eval_times = np.concatenate(([t0], inside, [t1]))
    eval_times = np.asarray(eval_times, dtype=float)
    if eval_times.size == 0 or eval_times[0] < t0 - 1e-12 or eval_times[-1] > t1 + 1e-12:
        raise ValueError("eval_times must lie within the span")

    # union grid of piece boundaries and evaluation points
    knots = noise_times[(noise_times > t0) & (noise_times < t1)]
    grid = np.unique(np.concatenate(([t0], knots, eval_times, [t1])))

    theta = np.asarray(theta_s, dtype=float).copy()
    out_states = []
    out_idx = 0
    hc, hth, hw = problem._h_const, problem._h_theta, problem._h_w
    gamma = problem.mdp.gamma
    if isinstance(tracker, AffineMap):
        tmat, toff = tracker.matrix, tracker.offset

        def lam(th):
            return toff + tmat @ th
    else:
        lam = tracker

    def field_at(z):
        c, Hm, Wm = hc[z], hth[z], hw[z]

        def f(th):
            return c - Hm @ th - gamma * (Wm @ lam(th))

        return f

    # emit values at eval points as the sweep passes them
    def maybe_emit(t_now):
        nonlocal out_idx
        while out_idx < eval_times.size and eval_times[out_idx] <= t_now + 1e-12:
            out_states.append(theta.copy())
            out_idx += 1

    maybe_emit(t0)
    piece = int(np.searchsorted(noise_times, t0, side="right")) - 1
    piece = max(piece, 0)
    for gi in range(grid.size - 1):
        left, right = grid[gi], grid[gi + 1]
        if right <= left:
            continue
        while piece + 1 < noise_times.size and noise_times[piece + 1] <= left + 1e-12:
            piece += 1
        z = int(noise_states[min(piece, noise_states.shape[0] - 1)])
        f = field_at(z)
        span = right - left
        n_sub = max(1, int(np.ceil(span / dt - 1e-12)))
        h = span / n_sub
        for _ in range(n_sub):
            theta = _rk4_step(f, theta, h)
        if not np.isfinite(theta).all():
            raise FloatingPointError(f"non-autonomous integration blew up near t={right:g}")
        maybe_emit(right)
    maybe_emit(t1 + 1.0)  # flush any eval point equal to t1 within tolerance
    return OdeTrajectory(eval_times.copy(), np.asarray(out_states[: eval_times.size]))


def tracking_error(
    log: TrajectoryLog,
    problem: TdcProblem,
    tracker: AffineMap | Callable,
    s: float,
    T: float,
    dt: float = 0.02,
) -> float:
    """Sup over ``[s, s+T]`` of the distance between the interpolated iterate
    trajectory and the noise-path ODE solution started on it at time ``s``.

    Requires an unthinned log with recorded noise states covering the window;
    the sup is evaluated on the union grid of iterate times and ``dt``
    multiples from ``s``.
    """
    if log.thinning != 1:
        raise ValueError("tracking diagnostic requires an unthinned log (thinning=1)")
    if log.zs is None:
        raise ValueError("tracking diagnostic requires recorded noise states")
    ts = log.ts
    if s < ts[0] - 1e-12 or s + T > ts[-1] + 1e-12:
        raise ValueError(
            f"window [{s:g}, {s + T:g}] not covered by log times [{ts[0]:g}, {ts[-1]:g}]"
        )
    if T < 0:
        raise ValueError("window length must be nonnegative")
    if T == 0:
        return 0.0
    t_end = min(s + T, ts[-1])
    iter_times = ts[(ts > s) & (ts < t_end)]
    dts = np.arange(s, t_end, dt)
    grid = np.unique(np.concatenate((iter_times, dts, [s, t_end])))
    theta_bar_s, _ = interpolate(log, s)
    sol = nonautonomous_integrate(
        problem,
        tracker,
        noise_times=ts,
        noise_states=np.asarray(log.zs, dtype=int),
        theta_s=theta_bar_s,
        t_span=(s, t_end),
        dt=dt,
        eval_times=grid,
    )
    sup = 0.0
    for t, theta_ode in zip(sol.times, sol.states):
        theta_bar, _ = interpolate(log, min(t, ts[-1]))
        sup = max(sup, float(np.linalg.norm(theta_bar - theta_ode)))
    return sup


def ode_trajectory_to_csv(traj: OdeTrajectory, path) -> None:
    """CSV export with header ``t,x_0..x_{m-1}``."""
    m = traj.states.shape[1]
    with open(path, "w") as f:
        f.write(",".join(["t"] + [f"x_{i}" for i in range(m)]) + "\n")
        for t, x in zip(traj.times, traj.states):
            f.write(",".join([f"{t:.17g}"] + [f"{v:.17g}" for v in x]) + "\n")
