"""Time-stepping for u_t = K u + a(t,x) u and its certified test solutions.

Classical RK4 with a stability-guarded step drives everything: plain
propagation, sup-norm propagator evaluation with overflow renormalization,
comparison-principle checks, the decaying-integral supersolution, the
bounded entire solution of the scalar auxiliary ODE, and the logistic
steady-state solver. All operations are pure functions of immutable inputs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _accel
from ._linalg import power_perron_matrix
from .coefficients import APField
from .discretize import DiscreteOperator

DEFAULT_DT = 0.05
POS_TOL = 1e-12
RENORM_LO = 1e-100
RENORM_HI = 1e100


class NumericalFailure(RuntimeError):
    """Non-finite values or a failed iteration inside a numerical routine."""


@dataclass
class State:
    t: float
    u: np.ndarray
    log_scale: float = 0.0    # true solution is u * exp(log_scale)
    meta: str = ""

    @property
    def rescaled(self):
        return self.log_scale != 0.0


def coeff_pack(a: APField, grid, shift=0.0):
    """Flatten a coefficient field into the array pack the RK4 kernels take."""
    nodes = grid.nodes
    c0 = a.c0(nodes) - shift
    m = len(a.modes)
    amps = np.empty((m, nodes.shape[0]))
    for j, mode in enumerate(a.modes):
        amps[j] = mode.profile(nodes)
    omegas = np.array([mode.omega for mode in a.modes])
    thetas = np.array([mode.theta for mode in a.modes])
    return c0, amps, omegas, thetas


def dt_max(K: DiscreteOperator, a: APField, shift=0.0) -> float:
    """Stability guard: 0.5 / (||K||_inf + sup|a - shift|)."""
    bound = K.sup_norm() + a.shifted(-shift).sup_bound(K.grid.nodes)
    return 0.5 / max(bound, 1e-12)


def choose_dt(K, a, target=DEFAULT_DT, shift=0.0) -> float:
    return min(target, 0.8 * dt_max(K, a, shift))


def _steps(span, dt):
    n = max(1, math.ceil(span / dt - 1e-9))
    return n, span / n


def _steps_strided(span, dt, max_stride=512):
    """Step count, step, and stride with nsteps a stride multiple.

    The stride caps how many steps pass between renormalization checks: the
    stability guard bounds log growth by ~0.5 per step, so 512 steps cannot
    overflow a float from the 1e100 renormalization threshold.
    """
    n = max(1, math.ceil(span / dt - 1e-9))
    stride = min(n, max_stride)
    n = int(math.ceil(n / stride) * stride)
    return n, span / n, stride


def propagate(K: DiscreteOperator, a: APField, s, t, u0, dt=None, meta="",
              use_numba=None) -> State:
    """Evolve u0 from time s to t; deterministic for fixed inputs."""
    if t < s:
        raise ValueError("propagate requires t >= s")
    if t == s:
        return State(t=float(t), u=np.asarray(u0, dtype=float).copy(), meta=meta)
    guard = dt_max(K, a)
    if dt is None:
        dt = min(DEFAULT_DT, 0.8 * guard)
    elif dt > guard:
        raise ValueError(f"dt={dt} exceeds stability bound {guard:.4g}")
    nsteps, dt, stride = _steps_strided(t - s, dt)
    pack = coeff_pack(a, K.grid)
    u, log_scale, _, status = _accel.rk4_trace(K.dense, pack, u0, s, dt, nsteps,
                                               stride=stride, renorm_lo=RENORM_LO,
                                               renorm_hi=RENORM_HI, use_numba=use_numba)
    if status != 0:
        raise NumericalFailure("non-finite values during propagation")
    if abs(log_scale) > 0 and abs(log_scale) < 600:
        u = u * math.exp(log_scale)
        log_scale = 0.0
    return State(t=float(t), u=u, log_scale=log_scale, meta=meta)


@dataclass
class Propagator:
    """The solution operator Phi(t, s; a) as a callable action."""

    s: float
    t: float
    action: callable = field(repr=False)

    def __call__(self, u0):
        return self.action(u0)


def make_propagator(K, a, s, t, dt=None, use_numba=None) -> Propagator:
    def action(u0):
        st = propagate(K, a, s, t, u0, dt=dt, use_numba=use_numba)
        if st.rescaled:
            raise NumericalFailure("propagator action overflowed; use propagator_log_norm")
        return st.u
    return Propagator(s=float(s), t=float(t), action=action)


@dataclass
class PropagatorNorm:
    log_value: float
    value: float | None       # None when the norm overflows a float
    renormalized: bool


def propagator_log_norm(K, a, s, t, dt=None, use_numba=None) -> PropagatorNorm:
    """sup-operator norm of Phi(t,s;a), attained on the constant-one function
    because the propagator is positive."""
    if t < s:
        raise ValueError("requires t >= s")
    if t == s:
        return PropagatorNorm(log_value=0.0, value=1.0, renormalized=False)
    guard = dt_max(K, a)
    dt = min(dt if dt is not None else DEFAULT_DT, 0.8 * guard)
    nsteps, dt, stride = _steps_strided(t - s, dt)
    pack = coeff_pack(a, K.grid)
    ones = np.ones(K.n)
    _, _, lognorms, status = _accel.rk4_trace(K.dense, pack, ones, s, dt, nsteps,
                                              stride=stride, use_numba=use_numba)
    if status != 0:
        raise NumericalFailure("non-finite values during norm evaluation")
    logv = float(lognorms[-1])
    renorm = abs(logv) > math.log(1e300)
    return PropagatorNorm(log_value=logv, value=None if renorm else math.exp(logv),
                          renormalized=renorm)


def log_norm_trace(K, a, s, t, dt=None, checkpoint_every=1.0, u0=None, use_numba=None):
    """(times, log||u||_inf) along the propagation of u0 (default: all ones)."""
    guard = dt_max(K, a)
    dt = min(dt if dt is not None else 2 * DEFAULT_DT, 0.8 * guard)
    stride = max(1, round(checkpoint_every / dt))
    nsteps, dt = _steps(t - s, dt)
    nsteps = int(math.ceil(nsteps / stride) * stride)
    dt = (t - s) / nsteps
    pack = coeff_pack(a, K.grid)
    u0 = np.ones(K.n) if u0 is None else np.asarray(u0, dtype=float)
    _, _, lognorms, status = _accel.rk4_trace(K.dense, pack, u0, s, dt, nsteps,
                                              stride=stride, use_numba=use_numba)
    if status != 0:
        raise NumericalFailure("non-finite values during trace")
    ts = s + dt * stride * np.arange(len(lognorms))
    return ts, lognorms


def trajectory(K, a, s, t, u0, dt=None, n_checkpoints=50, use_numba=None):
    """Checkpointed run: returns (times, states) with states[k] = u(times[k])."""
    guard = dt_max(K, a)
    dt = min(dt if dt is not None else DEFAULT_DT, 0.8 * guard)
    nsteps, dt = _steps(t - s, dt)
    nsteps = int(math.ceil(nsteps / n_checkpoints) * n_checkpoints)
    dt = (t - s) / nsteps
    stride = nsteps // n_checkpoints
    pack = coeff_pack(a, K.grid)
    _, states, status = _accel.rk4_store(K.dense, pack, u0, s, dt, nsteps, stride,
                                         use_numba=use_numba)
    if status != 0:
        raise NumericalFailure("non-finite values during trajectory run")
    ts = s + dt * stride * np.arange(states.shape[0])
    return ts, states


@dataclass
class ComparisonReport:
    times: np.ndarray
    max_violation: float      # max over checkpoints of max(u1 - u2)
    min_u1: float
    min_u2: float
    ordered: bool
    nonnegative: bool


def check_comparison(K, a1: APField, a2: APField, u0, horizon, n_checkpoints=50,
                     dt=None, cmp_tol=1e-9, use_numba=None) -> ComparisonReport:
    """Propagate under a1 <= a2 and check the solutions stay ordered and nonnegative."""
    u0 = np.asarray(u0, dtype=float)
    if np.any(u0 < 0):
        raise ValueError("comparison check requires u0 >= 0")
    nodes = K.grid.nodes
    ts = np.linspace(0.0, horizon, 201)
    gap = a2.eval_tx(ts, nodes) - a1.eval_tx(ts, nodes)
    if np.min(gap) < -1e-12:
        raise ValueError("precondition a1 <= a2 violated on sampled (t, x)")
    dt = min(dt if dt is not None else 0.02, 0.5 * min(dt_max(K, a1), dt_max(K, a2)))
    t1, s1 = trajectory(K, a1, 0.0, horizon, u0, dt=dt, n_checkpoints=n_checkpoints,
                        use_numba=use_numba)
    _, s2 = trajectory(K, a2, 0.0, horizon, u0, dt=dt, n_checkpoints=n_checkpoints,
                       use_numba=use_numba)
    viol = float(np.max(s1 - s2))
    scale = max(float(np.max(np.abs(s1))), float(np.max(np.abs(s2))))
    min1, min2 = float(np.min(s1)), float(np.min(s2))
    return ComparisonReport(
        times=t1, max_violation=viol, min_u1=min1, min_u2=min2,
        ordered=viol <= cmp_tol * max(1.0, scale),
        nonnegative=min(min1, min2) >= -POS_TOL * max(1.0, scale))


def _scalar_antiderivative(a: APField, x):
    """A(t) with A' = a(t, x) at a fixed point x, exact for the finite trig sum."""
    node = np.atleast_2d(np.asarray(x, dtype=float))
    c0 = float(a.c0(node)[0])
    terms = [(float(m.profile(node)[0]), m.omega, m.theta) for m in a.modes]

    def A(t):
        t = np.asarray(t, dtype=float)
        out = c0 * t
        for amp, w, th in terms:
            out = out + (amp / w) * np.sin(w * t + th)
        return out

    return A


@dataclass
class EntirePath:
    ts: np.ndarray
    values: np.ndarray
    trunc_bound: float


def bounded_entire_solution(a: APField, x, lam, g, ts, lower_horizon=None,
                            margin=0.05, step=0.02) -> EntirePath:
    """phi*(t) = integral_{t-H}^{t} exp(int_s^t a(tau,x) dtau - lam (t-s)) g(s) ds.

    The unique bounded solution of phi' = (a(t,x) - lam) phi + g; requires
    lam > hat a(x) + margin so the integral converges. Composite Simpson with
    the closed-form antiderivative of a in the exponent.
    """
    node = np.atleast_2d(np.asarray(x, dtype=float))
    ahat = float(a.time_average(node)[0])
    delta = lam - ahat
    if delta <= margin:
        raise ValueError(f"lam must exceed hat a(x) + {margin}; gap is {delta:.4g}")
    if lower_horizon is None:
        lower_horizon = math.log(1e10) / delta
    m = int(math.ceil(lower_horizon / step / 2) * 2)
    hs = lower_horizon / m
    ts = np.asarray(ts, dtype=float)
    A = _scalar_antiderivative(a, x)
    offs = hs * np.arange(m + 1)
    S = ts[:, None] - lower_horizon + offs[None, :]
    expo = A(ts)[:, None] - A(S) - lam * (ts[:, None] - S)
    gv = g(S) if callable(g) else float(g) * np.ones_like(S)
    integrand = np.exp(expo) * gv
    wts = np.ones(m + 1)
    wts[1:-1:2] = 4.0
    wts[2:-1:2] = 2.0
    vals = (hs / 3.0) * integrand @ wts
    osc = sum(abs(float(mm.profile(node)[0])) / mm.omega for mm in a.modes)
    g_sup = float(np.max(np.abs(gv)))
    trunc = g_sup * math.exp(-delta * lower_horizon + 2 * osc) / delta
    return EntirePath(ts=ts, values=vals, trunc_bound=trunc)


@dataclass
class SupersolutionResult:
    ts: np.ndarray            # window checkpoint times
    phi: np.ndarray           # (len(ts), n) strictly positive when feasible
    inf_phi: float
    residual_min: float
    residual_max: float       # should sit near -1 (the forcing) when feasible
    decay_slope: float        # fitted slope of log||Phi_lambda(t, -H) 1||
    tail_bound: float         # norm of the truncated history term
    feasible: bool
    reason: str = ""


def _fit_slope(ts, ys):
    if len(ts) < 2:
        return 0.0
    return float(np.polyfit(ts, ys, 1)[0])


def build_supersolution(K, a: APField, lam, decay_hint=None, lower_horizon=None,
                        window=20.0, dt=None, window_dt=0.025, horizon_cap=2000.0,
                        slope_factor=0.2, use_numba=None) -> SupersolutionResult:
    """Candidate for the generalized-eigenvalue upper set at shift lam.

    Integrates phi(t) = integral_{t-H}^t Phi_lambda(t,s) 1 ds as a forced ODE
    after a spin-up of length H, alongside the homogeneous companion whose
    decay certifies that lam sits above the top growth rate. When lam is
    below it, the companion (and the integral) grow: reported as infeasible.
    """
    delta = max(decay_hint if decay_hint is not None else 0.05, 1e-3)
    if lower_horizon is None:
        lower_horizon = min(horizon_cap, math.log(1e10) / delta)
    guard = dt_max(K, a, shift=lam)
    dt = min(dt if dt is not None else 2 * DEFAULT_DT, 0.8 * guard)
    pack = coeff_pack(a, K.grid, shift=lam)
    n = K.n

    # spin-up: build the history integral on [-H, 0]
    nsteps, dts = _steps(lower_horizon, dt)
    stride = max(1, nsteps // 512)
    nsteps = int(math.ceil(nsteps / stride) * stride)
    dts = lower_horizon / nsteps
    psi0 = np.zeros(n)
    w0 = np.ones(n)
    psi, w, logw_scale, logw, _, nrec, status = _accel.rk4_forced_pair(
        K.dense, pack, psi0, w0, -lower_horizon, dts, nsteps, stride,
        use_numba=use_numba)
    if status == 2:
        raise NumericalFailure("non-finite values in supersolution spin-up")
    tgrid = -lower_horizon + dts * stride * np.arange(nrec)
    half = nrec // 2
    slope = _fit_slope(tgrid[half:nrec], logw[half:nrec])
    if status == 1 or slope > -slope_factor * delta:
        return SupersolutionResult(
            ts=np.empty(0), phi=np.empty((0, n)), inf_phi=math.nan,
            residual_min=math.nan, residual_max=math.nan, decay_slope=slope,
            tail_bound=math.exp(logw_scale + math.log(max(np.max(np.abs(w)), 1e-300))),
            feasible=False, reason="decay precondition violated (growing integrand)")

    # window [0, W]: store every step, finer dt for finite-difference residuals
    wsteps, dtw = _steps(window, min(dt, window_dt))
    wsteps = max(wsteps, 8)
    dtw = window / wsteps
    psi, w2, logw_scale2, _, psis, nrec2, status2 = _accel.rk4_forced_pair(
        K.dense, pack, psi, w, 0.0, dtw, wsteps, 1, use_numba=use_numba)
    if status2 != 0:
        return SupersolutionResult(
            ts=np.empty(0), phi=np.empty((0, n)), inf_phi=math.nan,
            residual_min=math.nan, residual_max=math.nan, decay_slope=slope,
            tail_bound=math.inf, feasible=False,
            reason="growth detected inside the reporting window")
    ts = dtw * np.arange(nrec2)
    phi = psis[:nrec2]
    tail = math.exp(logw_scale + logw_scale2) * float(np.max(np.abs(w2)))

    # residual -phi_t + K phi + (a - lam) phi via 5-point stencils, interior only
    res_lo, res_hi = math.inf, -math.inf
    nodes = K.grid.nodes
    for i in range(2, nrec2 - 2, max(1, (nrec2 - 4) // 64)):
        dphi = (phi[i - 2] - 8 * phi[i - 1] + 8 * phi[i + 1] - phi[i + 2]) / (12 * dtw)
        av = a.eval(ts[i], nodes)
        r = -dphi + K.dense @ phi[i] + (av - lam) * phi[i]
        res_lo = min(res_lo, float(np.min(r)))
        res_hi = max(res_hi, float(np.max(r)))
    inf_phi = float(np.min(phi))
    return SupersolutionResult(ts=ts, phi=phi, inf_phi=inf_phi, residual_min=res_lo,
                               residual_max=res_hi, decay_slope=slope, tail_bound=tail,
                               feasible=inf_phi > 0 and res_hi < 0.0, reason="")


@dataclass
class SteadyState:
    phi: np.ndarray | None
    extinct: bool
    residual: float
    iterations: int
    converged: bool = True


def logistic_steady_state(K, a_vals, b_vals, fixp_tol=1e-12, max_iter=20000,
                          damping=0.5) -> SteadyState:
    """Positive solution of K phi + phi (a - b phi) = 0, or extinction.

    Branch decided by the Perron value of K + diag(a); the positive branch is
    found by a damped positive-preserving fixed point started from the Perron
    eigenvector.
    """
    a_vals = np.asarray(a_vals, dtype=float)
    b_vals = np.asarray(b_vals, dtype=float)
    if np.min(b_vals) <= 0:
        raise ValueError("logistic solver needs inf b > 0")
    M = K.dense + np.diag(a_vals)
    shift = float(np.max(np.abs(a_vals))) + 1.0
    pr = power_perron_matrix(M + shift * np.eye(K.n), tol=1e-12)
    lam = pr.value - shift
    if lam <= 0:
        return SteadyState(phi=None, extinct=True, residual=0.0, iterations=pr.iterations)
    c = float(np.max(a_vals)) + 1.0
    phi = pr.vector * lam / float(np.min(b_vals))
    converged = False
    for it in range(1, max_iter + 1):
        new = (K.dense @ phi + c * phi) / (b_vals * phi + c - a_vals)
        phi_next = (1.0 - damping) * phi + damping * new
        step = float(np.max(np.abs(phi_next - phi)))
        phi = phi_next
        if step <= fixp_tol * max(1.0, float(np.max(phi))):
            converged = True
            break
    residual = float(np.max(np.abs(K.dense @ phi + phi * (a_vals - b_vals * phi))))
    if np.min(phi) <= 0 or not np.isfinite(residual):
        raise NumericalFailure("logistic iteration left the positive cone")
    return SteadyState(phi=phi, extinct=False, residual=residual, iterations=it,
                       converged=converged)
