"""Principal spectral estimators for the discrete dispersal evolution.

Top Lyapunov exponents from log-norm slopes, Perron eigenpairs with
Collatz-Wielandt bounds, Floquet analysis of periodic coefficients, and the
two generalized principal eigenvalues: the upper one by bisection over
decaying-integral supersolutions, the lower one by certified subsolutions
built from periodic rational-frequency approximants.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _accel
from ._linalg import PerronResult, power_perron_matrix
from .coefficients import APField, periodic_approximant, sampled_max_excess
from .evolve import (NumericalFailure, build_supersolution, coeff_pack, dt_max)

WINDOW_TOL = 1e-2
SLOPE_TOL = 1e-2
BISECT_TOL = 1e-2
PROBE_MARGIN = 0.02
THETA_TOL = 1e-6


def _fit_slope(ts, ys):
    return float(np.polyfit(ts, ys, 1)[0])


@dataclass
class LyapunovResult:
    lambda_PL: float
    lambda_PL_lower: float
    windows: list                  # [(t0, t1, slope)]
    window_spread: float
    converged: bool
    horizon: float
    ts: np.ndarray = field(repr=False, default=None)
    lognorms: np.ndarray = field(repr=False, default=None)


def lyapunov_top(K, a: APField, horizon=200.0, u0=None, dt=None,
                 checkpoint_every=1.0, n_windows=4, use_numba=None) -> LyapunovResult:
    """Top Lyapunov exponent from the slope of log||u(t)||_inf over [T/2, T].

    u0 must be strictly positive (the limit is then initial-data independent).
    The min/max slopes over n_windows equal subwindows of [T/2, T] estimate
    the liminf/limsup variants; a spread above WINDOW_TOL flags an
    unconverged horizon (reported, not fatal).
    """
    n = K.n
    u0 = np.ones(n) if u0 is None else np.asarray(u0, dtype=float)
    if np.min(u0) <= 0:
        raise ValueError("lyapunov_top requires inf u0 > 0")
    guard = dt_max(K, a)
    dt = min(dt if dt is not None else 0.1, 0.8 * guard)
    stride = max(1, round(checkpoint_every / dt))
    nsteps = math.ceil(horizon / dt)
    nsteps = int(math.ceil(nsteps / stride) * stride)
    dt = horizon / nsteps
    pack = coeff_pack(a, K.grid)
    _, _, lognorms, status = _accel.rk4_trace(K.dense, pack, u0, 0.0, dt, nsteps,
                                              stride=stride, use_numba=use_numba)
    if status != 0:
        raise NumericalFailure("non-finite values during Lyapunov run")
    ts = dt * stride * np.arange(len(lognorms))
    half = ts >= horizon / 2.0
    lam = _fit_slope(ts[half], lognorms[half])
    edges = np.linspace(horizon / 2.0, horizon, n_windows + 1)
    windows = []
    for i in range(n_windows):
        m = (ts >= edges[i]) & (ts <= edges[i + 1])
        if np.count_nonzero(m) >= 2:
            windows.append((float(edges[i]), float(edges[i + 1]),
                            _fit_slope(ts[m], lognorms[m])))
    slopes = [wslope for _, _, wslope in windows]
    spread = max(slopes) - min(slopes) if slopes else math.inf
    return LyapunovResult(lambda_PL=lam, lambda_PL_lower=min(slopes) if slopes else lam,
                          windows=windows, window_spread=spread,
                          converged=spread <= WINDOW_TOL, horizon=horizon,
                          ts=ts, lognorms=lognorms)


def principal_eigen_autonomous(K, a_vals, tol=1e-10, max_iter=200000) -> PerronResult:
    """Perron eigenpair of K + diag(a) by shifted power iteration.

    The shift sup|a| + 1 makes the iteration matrix nonnegative regardless of
    the sign of a; the returned Collatz-Wielandt bounds are shifted back.
    """
    a_vals = np.asarray(a_vals, dtype=float)
    M = K.dense + np.diag(a_vals)
    shift = float(np.max(np.abs(a_vals))) + 1.0
    pr = power_perron_matrix(M + shift * np.eye(K.n), tol=tol, max_iter=max_iter)
    if not pr.converged:
        raise NumericalFailure(
            f"power iteration did not converge: CW gap {pr.gap:.3e} after {pr.iterations} iters")
    return PerronResult(lam_lo=pr.lam_lo - shift, lam_hi=pr.lam_hi - shift,
                        vector=pr.vector, iterations=pr.iterations, converged=True)


@dataclass
class MonodromyResult:
    lambda_s: float
    lambda_lo: float
    lambda_hi: float
    period: float
    phi0: np.ndarray = field(repr=False, default=None)


def monodromy_spectrum(K, a: APField, period=None, dt=None, tol=1e-10,
                       use_numba=None) -> MonodromyResult:
    """ln(spectral radius of Phi(T, 0)) / T for a T-periodic coefficient.

    The monodromy matrix is assembled by propagating the identity columns,
    then its Perron value is bracketed by power iteration. Time-independent
    coefficients are treated as 1-periodic.
    """
    if period is None:
        period = 1.0 if a.is_time_independent() else a.common_period()
    if period is None:
        raise ValueError("coefficient is not periodic; monodromy undefined")
    guard = dt_max(K, a)
    dt = min(dt if dt is not None else 0.025, 0.8 * guard)
    nsteps = max(1, math.ceil(period / dt))
    dt = period / nsteps
    pack = coeff_pack(a, K.grid)
    U, status = _accel.rk4_mat(K.dense, pack, np.eye(K.n), 0.0, dt, nsteps,
                               use_numba=use_numba)
    if status != 0:
        raise NumericalFailure("non-finite values during monodromy assembly")
    pr = power_perron_matrix(U, tol=tol)
    if not pr.converged:
        raise NumericalFailure("monodromy power iteration did not converge")
    return MonodromyResult(lambda_s=math.log(pr.value) / period,
                           lambda_lo=math.log(pr.lam_lo) / period,
                           lambda_hi=math.log(pr.lam_hi) / period,
                           period=period, phi0=pr.vector)


def _period_map_power(K, a: APField, s0, period, shift, dt, tol=1e-9, max_sweeps=200,
                      use_numba=None):
    """Power iteration on the shifted period propagator Phi_shift(s0+T, s0).

    Works in log space so long periods cannot overflow. Returns
    (log_ratio_lo, log_ratio_hi, v, sweeps): the Perron value of the period
    map lies in [exp(lo), exp(hi)] and the top exponent in
    shift + [lo, hi]/T.
    """
    pack = coeff_pack(a, K.grid, shift=shift)
    nsteps = max(1, math.ceil(period / dt))
    stride = min(nsteps, 512)
    nsteps = int(math.ceil(nsteps / stride) * stride)
    dts = period / nsteps
    v = np.ones(K.n)
    lo = hi = 0.0
    for sweep in range(1, max_sweeps + 1):
        w, log_scale, _, status = _accel.rk4_trace(K.dense, pack, v, s0, dts, nsteps,
                                                   stride=stride, use_numba=use_numba)
        if status != 0 or np.any(w <= 0):
            raise NumericalFailure("period map lost positivity")
        log_ratios = log_scale + np.log(w / v)
        lo, hi = float(np.min(log_ratios)), float(np.max(log_ratios))
        v = w / np.max(w)
        if (hi - lo) / period <= tol:
            return lo, hi, v, sweep
    return lo, hi, v, max_sweeps


@dataclass
class FeasibilityCertificate:
    lam: float
    kind: str                    # "subsolution" | "supersolution"
    ts: np.ndarray = field(repr=False, default=None)
    phi: np.ndarray = field(repr=False, default=None)
    residual_min: float = math.nan
    residual_max: float = math.nan
    inf_phi: float = math.nan
    extra: dict = field(default_factory=dict)

    def dump_csv(self, path):
        body = self.phi if self.phi.ndim == 2 else self.phi.reshape(1, -1)
        ts = self.ts if self.ts is not None and len(self.ts) else np.zeros(body.shape[0])
        np.savetxt(path, np.column_stack([ts, body]), delimiter=",")


@dataclass
class PEPrimeResult:
    value: float
    certificate: FeasibilityCertificate
    probes: list                 # [(lambda, feasible)]


def estimate_lambda_PE_prime(K, a: APField, bracket=None, lambda_PL_est=None,
                             bisect_tol=BISECT_TOL, final_window=10.0, dt=None,
                             use_numba=None) -> PEPrimeResult:
    """Least lambda admitting a uniformly positive decaying-integral supersolution.

    Bisection over the bracket: a shift is feasible when build_supersolution
    succeeds (companion decays, inf phi > 0, residual pinned near the forcing
    value -1). Returns the smallest feasible shift found, within bisect_tol.
    """
    if lambda_PL_est is None:
        lambda_PL_est = lyapunov_top(K, a, horizon=200.0, use_numba=use_numba).lambda_PL
    if bracket is None:
        bracket = (lambda_PL_est, lambda_PL_est + 1.0)
    lo, hi = float(bracket[0]), float(bracket[1])
    if hi <= lambda_PL_est:
        raise ValueError("bracket upper end must exceed the Lyapunov estimate")
    probes = []

    def probe(lam):
        # the spin-up dominates the cost, so every probe carries the full
        # certificate window and the last feasible one is returned as-is
        r = build_supersolution(K, a, lam, decay_hint=lam - lambda_PL_est,
                                window=final_window, dt=dt, use_numba=use_numba)
        probes.append((lam, r.feasible))
        return r

    res_hi = probe(hi)
    if not res_hi.feasible:
        raise ValueError(f"bracket too tight: no supersolution at lambda={hi} ({res_hi.reason})")
    best = (hi, res_hi)
    while hi - lo > bisect_tol:
        mid = 0.5 * (lo + hi)
        r = probe(mid)
        if r.feasible:
            hi, best = mid, (mid, r)
        else:
            lo = mid
    lam_final, final = best
    cert = FeasibilityCertificate(
        lam=lam_final, kind="supersolution", ts=final.ts, phi=final.phi,
        residual_min=final.residual_min, residual_max=final.residual_max,
        inf_phi=final.inf_phi,
        extra={"decay_slope": final.decay_slope, "tail_bound": final.tail_bound})
    return PEPrimeResult(value=lam_final, certificate=cert, probes=probes)


@dataclass
class PELowerResult:
    value: float
    certificate: FeasibilityCertificate
    per_q: list                  # [(q, lambda_eig, distance, certified)]
    method: str


def estimate_lambda_PE(K, a: APField, denominators=(5, 29, 99), dt=None,
                       window_checkpoints=512, use_numba=None) -> PELowerResult:
    """Certified lower bound for the subsolution-side generalized eigenvalue.

    Time-independent fields use the Perron pair directly (the Collatz-
    Wielandt floor gives an exact componentwise subsolution). Periodic fields
    use the eigenpair of the period map. Quasi-periodic fields are certified
    through rational-frequency approximants a_q: with eigenvalue lambda_q of
    a_q and phi_q extended over one period, lambda_q minus the sampled excess
    of a_q over a on the certification window is a subsolution shift for a.
    """
    nodes = K.grid.nodes
    if a.is_time_independent():
        pr = principal_eigen_autonomous(K, a.time_average(nodes))
        M = K.dense + np.diag(a.time_average(nodes))
        r = M @ pr.vector - pr.lam_lo * pr.vector
        cert = FeasibilityCertificate(lam=pr.lam_lo, kind="subsolution",
                                      ts=np.empty(0), phi=pr.vector,
                                      residual_min=float(np.min(r)),
                                      residual_max=float(np.max(r)),
                                      inf_phi=float(np.min(pr.vector)),
                                      extra={"cw_gap": pr.gap})
        return PELowerResult(value=pr.lam_lo, certificate=cert,
                             per_q=[], method="perron")

    exact_period = a.common_period()
    if exact_period is not None:
        lam, cert = _certify_periodic(K, a, a, exact_period, 0.0, dt,
                                      window_checkpoints, use_numba)
        return PELowerResult(value=lam, certificate=cert,
                             per_q=[(0, cert.extra["lambda_eig"], 0.0, lam)],
                             method="monodromy")

    best = None
    per_q = []
    for q in denominators:
        rep = periodic_approximant(a, q)
        dist = sampled_max_excess(rep.field, a, nodes, -rep.period / 2.0,
                                  rep.period / 2.0)
        lam, cert = _certify_periodic(K, rep.field, a, rep.period, max(0.0, dist),
                                      dt, window_checkpoints, use_numba)
        per_q.append((q, cert.extra["lambda_eig"], dist, lam))
        if best is None or lam > best[0]:
            best = (lam, cert)
    if best is None:
        raise NumericalFailure("no certifiable approximant")
    return PELowerResult(value=best[0], certificate=best[1], per_q=per_q,
                         method="periodic-approximant")


def _certify_periodic(K, a_per: APField, a_target: APField, period, excess, dt,
                      window_checkpoints, use_numba):
    """Eigenpair of the period map of a_per, extended over one period and
    certified as a subsolution for a_target at lambda_eig - excess."""
    s0 = -period / 2.0
    guard = dt_max(K, a_per, shift=0.0)
    dts = min(dt if dt is not None else 0.1, 0.8 * guard)
    shift = 1.0 + float(np.mean(a_per.time_average(K.grid.nodes)))
    lo, hi, v, _ = _period_map_power(K, a_per, s0, period, shift, dts,
                                     use_numba=use_numba)
    lam_eig = shift + lo / period           # certified Collatz-Wielandt floor
    lam_cert = lam_eig - excess
    nsteps = max(1, math.ceil(period / dts))
    dtw = period / nsteps
    stride = max(1, math.ceil(nsteps / window_checkpoints))
    nsteps = int(math.ceil(nsteps / stride) * stride)
    dtw = period / nsteps
    pack = coeff_pack(a_per, K.grid, shift=lam_eig)
    _, phis, status = _accel.rk4_store(K.dense, pack, v, s0, dtw, nsteps, stride,
                                       use_numba=use_numba)
    if status != 0:
        raise NumericalFailure("non-finite values during certificate window")
    ts = s0 + dtw * stride * np.arange(phis.shape[0])
    # L(a)phi - lam_cert*phi = (a - a_per + excess) * phi exactly along the flow
    diff = a_target.eval_tx(ts, K.grid.nodes) - a_per.eval_tx(ts, K.grid.nodes) + excess
    resid = diff * phis
    seam_gap = float(np.min(phis[-1] - phis[0]))
    cert = FeasibilityCertificate(
        lam=lam_cert, kind="subsolution", ts=ts, phi=phis,
        residual_min=float(np.min(resid)), residual_max=float(np.max(resid)),
        inf_phi=float(np.min(phis)),
        extra={"lambda_eig": lam_eig, "cw_width": (hi - lo) / period,
               "excess": excess, "seam_gap": seam_gap, "period": period})
    return lam_cert, cert


def dichotomy_probe(K, a: APField, lam, horizon=200.0, dt=None, margin=PROBE_MARGIN,
                    use_numba=None) -> str:
    """Classify the shifted flow: 'decay' / 'growth' / 'inconclusive'.

    Tracks log||Phi(t,0) 1|| - lam*t and fits the terminal slope over the
    second half of the horizon.
    """
    res = lyapunov_top(K, a, horizon=horizon, dt=dt, use_numba=use_numba)
    half = res.ts >= horizon / 2.0
    slope = _fit_slope(res.ts[half], res.lognorms[half] - lam * res.ts[half])
    if slope <= -margin:
        return "decay"
    if slope >= margin:
        return "growth"
    return "inconclusive"


@dataclass
class ThetaVerdict:
    independent: bool
    x_star: int | None
    theta_row: np.ndarray | None
    spread: float


def theta_dichotomy_check(w, theta_tol=THETA_TOL) -> ThetaVerdict:
    """Either w(t,x) is x-independent, or some x* has theta(x*, y) >= 1 for
    all y with strict excess somewhere; theta(x,y) = mean_t w(t,y)/w(t,x).

    The candidate x* minimizes the time-averaged log of w: by Jensen,
    theta(x*, y) >= exp(mean ln w(.,y) - mean ln w(.,x*)) >= 1.
    """
    w = np.asarray(w, dtype=float)
    if w.ndim != 2:
        raise ValueError("w must be (time, space) samples")
    if np.min(w) <= 0:
        raise ValueError("theta check requires strictly positive samples")
    spread = float(np.max((np.max(w, axis=1) - np.min(w, axis=1)) / np.min(w, axis=1)))
    if spread <= theta_tol:
        return ThetaVerdict(independent=True, x_star=None, theta_row=None, spread=spread)
    theta = (1.0 / w).T @ w / w.shape[0]     # theta[x, y]
    x_star = int(np.argmin(np.mean(np.log(w), axis=0)))
    row = theta[x_star]
    if not (np.min(row) >= 1.0 - theta_tol and np.max(row) > 1.0 + theta_tol):
        x_star = int(np.argmax(np.min(theta, axis=1)))
        row = theta[x_star]
    return ThetaVerdict(independent=False, x_star=x_star, theta_row=row, spread=spread)


@dataclass
class SpectralReport:
    lambda_PL: float = math.nan
    lambda_PL_lower: float = math.nan
    windows: list = field(default_factory=list)
    lambda_PE: float | None = None
    lambda_PE_prime: float | None = None
    lambda_s: float | None = None
    method: dict = field(default_factory=dict)
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "lambda_PL": self.lambda_PL,
            "lambda_PL_lower": self.lambda_PL_lower,
            "windows": [list(wd) for wd in self.windows],
            "lambda_PE": self.lambda_PE,
            "lambda_PE_prime": self.lambda_PE_prime,
            "lambda_s": self.lambda_s,
            "method": self.method,
            "diagnostics": self.diagnostics,
        }

    def check(self, slope_tol=SLOPE_TOL, bracket_tol=BISECT_TOL):
        ok = self.lambda_PL_lower <= self.lambda_PL + slope_tol
        if self.lambda_PE is not None and self.lambda_PE_prime is not None:
            ok = ok and self.lambda_PE <= self.lambda_PE_prime + bracket_tol
        return ok
