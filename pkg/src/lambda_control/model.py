"""Density-matrix dynamics of a driven, dissipative three-level lambda system.

The two lower levels |1> and |3> couple to a lossy intermediate level |2>
through a pump field (|1>-|2>) and a Stokes field (|2>-|3>) whose amplitudes
share a fixed power budget, omega_p**2 + omega_s**2 = omega0**2.  Controls
are therefore parameterized by a single mixing angle theta,

    omega_p = omega0 * sin(theta),   omega_s = omega0 * cos(theta),

so the amplitude constraint holds identically.  The intermediate level decays
into |1> and |3> with rates gamma1 and gamma3 (gamma1 = gamma3 = Gamma/2 in
the symmetric case).  Both detunings are zero.

The density matrix is stored as 9 real components, in this order:

    x1 = rho11, x2 = rho22, x3 = rho33,
    x4 = Im rho12, x5 = Im rho23, x6 = Re rho13,
    y1 = Re rho12, y2 = Re rho23, y3 = Im rho13.

Starting from rho = |1><1| the y block stays identically zero; it is kept in
the state vector as a free sanity channel rather than dropped.

All public quantities are dimensionless ratios: rates are given relative to
the Rabi bound omega0 (default 1.0) and durations as omega0 * T.

Note on asymmetric decay: only the population feeding terms split into
gamma1/gamma3; every coherence keeps the total-rate damping Gamma/2 =
(gamma1 + gamma3)/2.  (The alternative of splitting the coherence rates as
well is a different dissipator and is not used here.)
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "STATE_DIM",
    "SystemParams",
    "FullState",
    "ControlSignal",
    "Trajectory",
    "IntegrationError",
    "rhs_full",
    "system_matrix",
    "system_matrix_dtheta",
    "rk4_step_matrix",
    "rk4_step_matrix_pair",
    "default_max_step",
    "integrate_full",
    "reconstruct_density",
    "optical_pumping_control",
]

HALF_PI = math.pi / 2.0

STATE_DIM = 9

# Slack used when validating user-provided angles/grids against exact bounds.
_EDGE_TOL = 1e-12


class IntegrationError(RuntimeError):
    """Integration failed (non-finite state or step-size underflow).

    Attributes
    ----------
    last_time : float
        Last time at which the state was still finite.
    """

    def __init__(self, message: str, last_time: float):
        super().__init__(message)
        self.last_time = float(last_time)


@dataclass(frozen=True)
class SystemParams:
    """Physical constants of the lambda system.

    Parameters
    ----------
    gamma_total : float
        Total decay rate Gamma = gamma1 + gamma3 of the intermediate level,
        in units of omega0.
    gamma_diff : float
        Decay asymmetry gamma = gamma1 - gamma3 (zero for the symmetric
        system).  Must satisfy ``abs(gamma_diff) <= gamma_total`` so both
        branch rates are nonnegative.
    omega0 : float
        Rabi amplitude bound.  Defaults to 1.0; all times are then read as
        omega0 * T.
    """

    gamma_total: float
    gamma_diff: float = 0.0
    omega0: float = 1.0

    def __post_init__(self):
        for name in ("gamma_total", "gamma_diff", "omega0"):
            value = getattr(self, name)
            if not math.isfinite(value):
                raise ValueError(f"{name} must be finite, got {value!r}")
        if self.omega0 <= 0.0:
            raise ValueError(f"omega0 must be positive, got {self.omega0!r}")
        if self.gamma_total <= 0.0:
            raise ValueError(
                f"gamma_total must be positive, got {self.gamma_total!r}"
            )
        if abs(self.gamma_diff) > self.gamma_total:
            raise ValueError(
                "need |gamma_diff| <= gamma_total so both decay branches are "
                f"nonnegative, got gamma_diff={self.gamma_diff!r}, "
                f"gamma_total={self.gamma_total!r}"
            )

    @property
    def gamma1(self) -> float:
        """Decay rate of |2> into |1>: (Gamma + gamma) / 2."""
        return 0.5 * (self.gamma_total + self.gamma_diff)

    @property
    def gamma3(self) -> float:
        """Decay rate of |2> into |3>: (Gamma - gamma) / 2."""
        return 0.5 * (self.gamma_total - self.gamma_diff)

    @property
    def is_symmetric(self) -> bool:
        return self.gamma_diff == 0.0


@dataclass(frozen=True)
class FullState:
    """Real 9-component encoding of the 3x3 density matrix."""

    x1: float = 0.0  # rho11
    x2: float = 0.0  # rho22
    x3: float = 0.0  # rho33
    x4: float = 0.0  # Im rho12
    x5: float = 0.0  # Im rho23
    x6: float = 0.0  # Re rho13
    y1: float = 0.0  # Re rho12
    y2: float = 0.0  # Re rho23
    y3: float = 0.0  # Im rho13

    @classmethod
    def ground(cls) -> "FullState":
        """All population in |1> (the standard initial condition)."""
        return cls(x1=1.0)

    @classmethod
    def from_array(cls, values) -> "FullState":
        arr = np.asarray(values, dtype=float).reshape(-1)
        if arr.size != STATE_DIM:
            raise ValueError(f"expected {STATE_DIM} components, got {arr.size}")
        return cls(*arr.tolist())

    def as_array(self) -> np.ndarray:
        return np.array(
            [self.x1, self.x2, self.x3, self.x4, self.x5, self.x6,
             self.y1, self.y2, self.y3]
        )

    @property
    def populations(self) -> tuple[float, float, float]:
        return (self.x1, self.x2, self.x3)


def _state_array(state) -> np.ndarray:
    if isinstance(state, FullState):
        return state.as_array()
    arr = np.asarray(state, dtype=float).reshape(-1)
    if arr.size != STATE_DIM:
        raise ValueError(f"expected {STATE_DIM} state components, got {arr.size}")
    return arr


class ControlSignal:
    """Piecewise-constant mixing-angle schedule theta(t) on [grid[0], grid[-1]].

    ``theta[k]`` holds on the half-open interval [grid[k], grid[k+1]); the
    final time belongs to the last interval.  Angles must lie in [0, pi/2].
    """

    __slots__ = ("grid", "theta")

    def __init__(self, grid, theta):
        grid = np.atleast_1d(np.asarray(grid, dtype=float))
        theta = np.atleast_1d(np.asarray(theta, dtype=float))
        if grid.ndim != 1 or grid.size < 2:
            raise ValueError("grid must contain at least two time stamps")
        if not np.all(np.isfinite(grid)):
            raise ValueError("grid times must be finite")
        if np.any(np.diff(grid) <= 0.0):
            raise ValueError("grid times must be strictly increasing")
        if theta.shape != (grid.size - 1,):
            raise ValueError(
                f"theta must have one value per interval "
                f"({grid.size - 1}), got shape {theta.shape}"
            )
        if not np.all(np.isfinite(theta)):
            raise ValueError("theta values must be finite")
        if theta.min() < -_EDGE_TOL or theta.max() > HALF_PI + _EDGE_TOL:
            raise ValueError("theta values must lie in [0, pi/2]")
        theta = np.clip(theta, 0.0, HALF_PI)
        grid.setflags(write=False)
        theta.setflags(write=False)
        self.grid = grid
        self.theta = theta

    # -- constructors ------------------------------------------------------

    @classmethod
    def constant(cls, theta: float, duration: float, n_intervals: int = 1):
        if duration <= 0.0:
            raise ValueError(f"duration must be positive, got {duration!r}")
        grid = np.linspace(0.0, float(duration), int(n_intervals) + 1)
        return cls(grid, np.full(int(n_intervals), float(theta)))

    @classmethod
    def linear_ramp(cls, theta_start: float, theta_end: float,
                    duration: float, n_intervals: int):
        """Midpoint-sampled linear ramp from theta_start to theta_end."""
        if duration <= 0.0:
            raise ValueError(f"duration must be positive, got {duration!r}")
        n = int(n_intervals)
        grid = np.linspace(0.0, float(duration), n + 1)
        mid = (np.arange(n) + 0.5) / n
        return cls(grid, theta_start + (theta_end - theta_start) * mid)

    @classmethod
    def from_function(cls, fn, duration: float, n_intervals: int):
        """Midpoint samples of a callable theta(t), clipped to [0, pi/2]."""
        if duration <= 0.0:
            raise ValueError(f"duration must be positive, got {duration!r}")
        n = int(n_intervals)
        grid = np.linspace(0.0, float(duration), n + 1)
        mids = 0.5 * (grid[:-1] + grid[1:])
        theta = np.clip([float(fn(t)) for t in mids], 0.0, HALF_PI)
        return cls(grid, theta)

    @classmethod
    def piecewise(cls, start_times, thetas, duration: float):
        """Intervals starting at the given times; the last one ends at duration."""
        starts = np.asarray(start_times, dtype=float).reshape(-1)
        if starts.size == 0 or starts[0] != 0.0:
            raise ValueError("start times must begin at 0")
        if starts[-1] >= duration:
            raise ValueError("last start time must precede the duration")
        grid = np.append(starts, float(duration))
        return cls(grid, thetas)

    # -- accessors ---------------------------------------------------------

    @property
    def duration(self) -> float:
        return float(self.grid[-1])

    @property
    def n_intervals(self) -> int:
        return self.theta.size

    @property
    def durations(self) -> np.ndarray:
        return np.diff(self.grid)

    def with_theta(self, theta) -> "ControlSignal":
        return ControlSignal(self.grid, theta)

    def interval_index(self, t) -> np.ndarray:
        idx = np.searchsorted(self.grid, np.asarray(t, dtype=float), side="right") - 1
        return np.clip(idx, 0, self.n_intervals - 1)

    def theta_at(self, t):
        """theta evaluated at time(s) t (right-continuous step function)."""
        return self.theta[self.interval_index(t)]

    def omega_pair(self, omega0: float = 1.0):
        """Per-interval (omega_p, omega_s); satisfies the amplitude constraint."""
        return omega0 * np.sin(self.theta), omega0 * np.cos(self.theta)

    def total_variation(self) -> float:
        return float(np.sum(np.abs(np.diff(self.theta))))

    def __eq__(self, other):
        return (
            isinstance(other, ControlSignal)
            and np.array_equal(self.grid, other.grid)
            and np.array_equal(self.theta, other.theta)
        )

    def __repr__(self):
        return (f"ControlSignal(n_intervals={self.n_intervals}, "
                f"duration={self.duration!r})")


def optical_pumping_control(duration: float) -> ControlSignal:
    """Pump at full amplitude for the whole window: one interval at theta = pi/2."""
    if not duration > 0.0:
        raise ValueError(f"duration must be positive, got {duration!r}")
    return ControlSignal.constant(HALF_PI, duration)


# ---------------------------------------------------------------------------
# Equations of motion
# ---------------------------------------------------------------------------

def rhs_full(state, theta: float, params: SystemParams) -> np.ndarray:
    """Time derivative of the 9-component state at mixing angle theta.

    The population derivatives sum to zero for every state, angle and decay
    asymmetry, so the trace is conserved exactly by the dynamics.
    """
    s = _state_array(state)
    x1, x2, x3, x4, x5, x6, y1, y2, y3 = s
    op = params.omega0 * math.sin(theta)
    os_ = params.omega0 * math.cos(theta)
    g = params.gamma_total
    g1 = params.gamma1
    g3 = params.gamma3
    return np.array([
        -op * x4 + g1 * x2,
        op * x4 - os_ * x5 - g * x2,
        os_ * x5 + g3 * x2,
        0.5 * op * (x1 - x2) + 0.5 * os_ * x6 - 0.5 * g * x4,
        0.5 * os_ * (x2 - x3) - 0.5 * op * x6 - 0.5 * g * x5,
        0.5 * (op * x5 - os_ * x4),
        -0.5 * os_ * y3 - 0.5 * g * y1,
        0.5 * op * y3 - 0.5 * g * y2,
        0.5 * (os_ * y1 - op * y2),
    ])


def system_matrix(theta: float, params: SystemParams) -> np.ndarray:
    """Generator A(theta) with rhs_full(state) == A @ state.

    Block diagonal: the x block (indices 0..5) and the y block (6..8) never
    couple, which is why the y block stays exactly zero from the standard
    initial condition.
    """
    op = params.omega0 * math.sin(theta)
    os_ = params.omega0 * math.cos(theta)
    g = params.gamma_total
    A = np.zeros((STATE_DIM, STATE_DIM))
    A[0, 1] = params.gamma1
    A[0, 3] = -op
    A[1, 1] = -g
    A[1, 3] = op
    A[1, 4] = -os_
    A[2, 1] = params.gamma3
    A[2, 4] = os_
    A[3, 0] = 0.5 * op
    A[3, 1] = -0.5 * op
    A[3, 3] = -0.5 * g
    A[3, 5] = 0.5 * os_
    A[4, 1] = 0.5 * os_
    A[4, 2] = -0.5 * os_
    A[4, 4] = -0.5 * g
    A[4, 5] = -0.5 * op
    A[5, 3] = -0.5 * os_
    A[5, 4] = 0.5 * op
    A[6, 6] = -0.5 * g
    A[6, 8] = -0.5 * os_
    A[7, 7] = -0.5 * g
    A[7, 8] = 0.5 * op
    A[8, 6] = 0.5 * os_
    A[8, 7] = -0.5 * op
    return A


def system_matrix_dtheta(theta: float, params: SystemParams) -> np.ndarray:
    """Derivative dA/dtheta of the generator (d omega_p = omega_s, d omega_s = -omega_p)."""
    op = params.omega0 * math.sin(theta)
    os_ = params.omega0 * math.cos(theta)
    D = np.zeros((STATE_DIM, STATE_DIM))
    D[0, 3] = -os_
    D[1, 3] = os_
    D[1, 4] = op
    D[2, 4] = -op
    D[3, 0] = 0.5 * os_
    D[3, 1] = -0.5 * os_
    D[3, 5] = -0.5 * op
    D[4, 1] = -0.5 * op
    D[4, 2] = 0.5 * op
    D[4, 5] = -0.5 * os_
    D[5, 3] = 0.5 * op
    D[5, 4] = 0.5 * os_
    D[6, 8] = 0.5 * op
    D[7, 8] = 0.5 * os_
    D[8, 6] = -0.5 * op
    D[8, 7] = -0.5 * os_
    return D


# ---------------------------------------------------------------------------
# Fixed-step RK4 for the linear system
# ---------------------------------------------------------------------------

def rk4_step_matrix(A: np.ndarray, h: float) -> np.ndarray:
    """One classical RK4 step for xdot = A x, as a transition matrix.

    For a linear autonomous system the RK4 update is exactly the degree-4
    Taylor polynomial of the matrix exponential, so repeated application of
    this matrix reproduces stepwise RK4 in exact arithmetic.
    """
    B = h * A
    B2 = B @ B
    B3 = B2 @ B
    B4 = B3 @ B
    M = B + B2 / 2.0 + B3 / 6.0 + B4 / 24.0
    M[np.diag_indices_from(M)] += 1.0
    return M


def rk4_step_matrix_pair(A: np.ndarray, dA: np.ndarray, h: float):
    """RK4 one-step matrix M and its derivative dM/dtheta, given dA/dtheta."""
    B = h * A
    D = h * dA
    B2 = B @ B
    D2 = D @ B + B @ D
    B3 = B2 @ B
    D3 = D2 @ B + B2 @ D
    B4 = B3 @ B
    D4 = D3 @ B + B3 @ D
    M = B + B2 / 2.0 + B3 / 6.0 + B4 / 24.0
    M[np.diag_indices_from(M)] += 1.0
    dM = D + D2 / 2.0 + D3 / 6.0 + D4 / 24.0
    return M, dM


def default_max_step(params: SystemParams) -> float:
    """Step bound: omega0*h <= 0.01 and Gamma*h <= 0.1."""
    return min(0.01 / params.omega0, 0.1 / params.gamma_total)


# ---------------------------------------------------------------------------
# Trajectories
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Trajectory:
    """Sampled state history: times (n,), states (n, 9), thetas (n,)."""

    times: np.ndarray
    states: np.ndarray
    thetas: np.ndarray

    @property
    def rho11(self) -> np.ndarray:
        return self.states[:, 0]

    @property
    def rho22(self) -> np.ndarray:
        return self.states[:, 1]

    @property
    def rho33(self) -> np.ndarray:
        return self.states[:, 2]

    @property
    def final_state(self) -> np.ndarray:
        return self.states[-1]

    @property
    def final_rho33(self) -> float:
        return float(self.states[-1, 2])

    def trace_drift(self) -> float:
        """Largest deviation of rho11 + rho22 + rho33 from 1 over all samples."""
        return float(np.max(np.abs(self.states[:, :3].sum(axis=1) - 1.0)))

    def max_y(self) -> float:
        """Largest |y| component over all samples (zero from the standard start)."""
        return float(np.max(np.abs(self.states[:, 6:9])))

    def write_csv(self, path, omega0: float = 1.0, comment: str | None = None):
        """Plot-ready export; times are in units of 1/omega0."""
        lines = []
        if comment:
            lines.append(f"# {comment}")
        lines.append("t,rho11,rho22,rho33,x4,x5,x6,theta,omega_p,omega_s")
        for t, s, th in zip(self.times, self.states, self.thetas):
            row = [t, s[0], s[1], s[2], s[3], s[4], s[5], th,
                   omega0 * math.sin(th), omega0 * math.cos(th)]
            lines.append(",".join(format(v, ".17g") for v in row))
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("\n".join(lines) + "\n")


def _check_finite(state: np.ndarray, t: float, last_good: float):
    if not np.all(np.isfinite(state)):
        raise IntegrationError(
            f"non-finite state encountered at t={t:.6g}", last_time=last_good
        )


def _integrate_piecewise_rk4(control: ControlSignal, params: SystemParams,
                             T: float, x0: np.ndarray, h_max: float,
                             max_samples: int) -> Trajectory:
    edges = control.grid[control.grid < T - _EDGE_TOL * max(1.0, T)]
    starts = edges
    ends = np.append(edges[1:], T)
    thetas = control.theta[: starts.size]

    steps = np.maximum(1, np.ceil((ends - starts) / h_max - 1e-12).astype(int))
    total = int(steps.sum())
    stride = max(1, math.ceil(total / max(1, max_samples - 1)))

    times = [0.0]
    samples = [x0.copy()]
    sample_theta = [thetas[0]]
    state = x0.copy()
    last_good = 0.0

    # Divergence is detected via the finite check; silence the transient
    # overflow warnings it rides in on.
    with np.errstate(over="ignore", invalid="ignore"):
        for t0, t1, th, m in zip(starts, ends, thetas, steps):
            h = (t1 - t0) / m
            A = system_matrix(th, params)
            M = rk4_step_matrix(A, h)
            n_chunks, rem = divmod(m, stride)
            M_stride = np.linalg.matrix_power(M, stride) if n_chunks else None
            done = 0
            for _ in range(n_chunks):
                state = M_stride @ state
                done += stride
                t = t1 if done == m else t0 + done * h
                _check_finite(state, t, last_good)
                last_good = t
                times.append(t)
                samples.append(state.copy())
                sample_theta.append(th)
            if rem:
                state = np.linalg.matrix_power(M, rem) @ state
                _check_finite(state, t1, last_good)
                last_good = t1
                times.append(t1)
                samples.append(state.copy())
                sample_theta.append(th)

    times = np.asarray(times)
    times[-1] = T
    return Trajectory(times, np.asarray(samples), np.asarray(sample_theta))


def _integrate_callable_rk4(theta_fn, params: SystemParams, T: float,
                            x0: np.ndarray, h_max: float,
                            max_samples: int) -> Trajectory:
    n = max(1, math.ceil(T / h_max - 1e-12))
    h = T / n
    stride = max(1, math.ceil(n / max(1, max_samples - 1)))

    times = [0.0]
    samples = [x0.copy()]
    sample_theta = [float(theta_fn(0.0))]
    state = x0.copy()
    last_good = 0.0

    with np.errstate(over="ignore", invalid="ignore"):
        for i in range(n):
            t = i * h
            th_mid = float(theta_fn(t + 0.5 * h))
            k1 = rhs_full(state, float(theta_fn(t)), params)
            k2 = rhs_full(state + 0.5 * h * k1, th_mid, params)
            k3 = rhs_full(state + 0.5 * h * k2, th_mid, params)
            k4 = rhs_full(state + h * k3, float(theta_fn(t + h)), params)
            state = state + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            if (i + 1) % stride == 0 or i + 1 == n:
                t_next = T if i + 1 == n else (i + 1) * h
                _check_finite(state, t_next, last_good)
                last_good = t_next
                times.append(t_next)
                samples.append(state.copy())
                sample_theta.append(float(theta_fn(t_next)))

    return Trajectory(np.asarray(times), np.asarray(samples),
                      np.asarray(sample_theta))


def _integrate_adaptive(control, params: SystemParams, T: float,
                        x0: np.ndarray, max_samples: int,
                        rtol: float, atol: float) -> Trajectory:
    from scipy.integrate import solve_ivp

    if callable(control):
        def fun(t, s):
            return rhs_full(s, float(control(t)), params)

        t_eval = np.linspace(0.0, T, min(max_samples, 512))
        sol = solve_ivp(fun, (0.0, T), x0, method="DOP853",
                        rtol=rtol, atol=atol, t_eval=t_eval)
        if not sol.success:
            raise IntegrationError(sol.message, last_time=float(sol.t[-1]))
        thetas = np.array([float(control(t)) for t in sol.t])
        return Trajectory(sol.t.copy(), sol.y.T.copy(), thetas)

    edges = control.grid[control.grid < T - _EDGE_TOL * max(1.0, T)]
    starts = edges
    ends = np.append(edges[1:], T)
    thetas = control.theta[: starts.size]

    times = [0.0]
    samples = [x0.copy()]
    sample_theta = [thetas[0]]
    state = x0.copy()
    per_interval = max(2, math.ceil(max_samples / starts.size))

    for t0, t1, th in zip(starts, ends, thetas):
        def fun(t, s, _th=th):
            return rhs_full(s, _th, params)

        t_eval = np.linspace(t0, t1, per_interval)[1:]
        sol = solve_ivp(fun, (t0, t1), state, method="DOP853",
                        rtol=rtol, atol=atol, t_eval=t_eval)
        if not sol.success:
            raise IntegrationError(sol.message, last_time=times[-1])
        for t, col in zip(sol.t, sol.y.T):
            times.append(t)
            samples.append(col)
            sample_theta.append(th)
        state = sol.y[:, -1]

    times = np.asarray(times)
    times[-1] = T
    return Trajectory(times, np.asarray(samples), np.asarray(sample_theta))


def integrate_full(control, params: SystemParams, T: float | None = None, *,
                   initial_state=None, max_step: float | None = None,
                   max_samples: int = 2048, method: str = "rk4",
                   rtol: float = 1e-10, atol: float = 1e-12) -> Trajectory:
    """Integrate the full 9-variable system under the given control.

    Parameters
    ----------
    control : ControlSignal or callable
        Piecewise-constant schedule, or a callable t -> theta for smooth
        controls (a callable requires T).
    T : float, optional
        Final time; defaults to the control duration.  The control must
        cover [0, T].
    initial_state : optional
        Defaults to all population in |1>.
    max_step : float, optional
        Override of the default step bound (omega0*h <= 0.01, Gamma*h <= 0.1).
    method : {"rk4", "adaptive"}
        Fixed-step RK4 (default), or adaptive high-order integration for
        oracle-grade runs (scipy DOP853 at rtol/atol).

    The returned trajectory always contains the final sample at exactly t = T.
    """
    if initial_state is None:
        x0 = FullState.ground().as_array()
    else:
        x0 = _state_array(initial_state).copy()

    if callable(control) and not isinstance(control, ControlSignal):
        if T is None:
            raise ValueError("T is required when the control is a callable")
        T = float(T)
        if T <= 0.0:
            raise ValueError(f"T must be positive, got {T!r}")
        if method == "adaptive":
            return _integrate_adaptive(control, params, T, x0, max_samples,
                                       rtol, atol)
        h_max = default_max_step(params) if max_step is None else float(max_step)
        return _integrate_callable_rk4(control, params, T, x0, h_max,
                                       max_samples)

    if not isinstance(control, ControlSignal):
        raise TypeError("control must be a ControlSignal or a callable")
    T = control.duration if T is None else float(T)
    if T <= 0.0:
        raise ValueError(f"T must be positive, got {T!r}")
    if control.grid[0] != 0.0 or control.duration < T - _EDGE_TOL * max(1.0, T):
        raise ValueError(
            f"control grid [{control.grid[0]!r}, {control.duration!r}] "
            f"does not cover [0, {T!r}]"
        )
    if method == "adaptive":
        return _integrate_adaptive(control, params, T, x0, max_samples,
                                   rtol, atol)
    if method != "rk4":
        raise ValueError(f"unknown method {method!r}")
    h_max = default_max_step(params) if max_step is None else float(max_step)
    if h_max <= 0.0:
        raise ValueError("max_step must be positive")
    return _integrate_piecewise_rk4(control, params, T, x0, h_max, max_samples)


def reconstruct_density(state) -> np.ndarray:
    """3x3 complex density matrix from the real encoding (Hermitian by construction)."""
    x1, x2, x3, x4, x5, x6, y1, y2, y3 = _state_array(state)
    r12 = y1 + 1j * x4
    r23 = y2 + 1j * x5
    r13 = x6 + 1j * y3
    return np.array([
        [x1, r12, r13],
        [np.conj(r12), x2, r23],
        [np.conj(r13), np.conj(r23), x3],
    ])
