"""RK4 time-stepping kernels: numba-jitted hot path with a pure-numpy fallback.

Each loop below is self-contained (coefficient evaluation and RK4 stages
inlined) so numba can cache the compiled kernels across processes. The plain
Python objects double as the numpy fallback lane; `numba.njit` compiles the
identical source for the fast lane. Set NLDISP_DISABLE_NUMBA=1 to force the
numpy lane. Both lanes call the same BLAS matvec, so results match bitwise
on a given machine.

All kernels integrate u' = (K + a(t)) u (+ forcing) with
a(t) = c0 + cos(omega*t + theta) @ amps evaluated on the fly; spectral
shifts are folded into c0 by the callers.
"""

from __future__ import annotations

import os

import numpy as np

DISABLE_ENV = "NLDISP_DISABLE_NUMBA"

_disabled = os.environ.get(DISABLE_ENV, "").strip().lower() in ("1", "true", "yes")
if not _disabled:
    try:
        import numba
        HAVE_NUMBA = True
    except ImportError:      # pragma: no cover - exercised via the env flag instead
        HAVE_NUMBA = False
else:
    HAVE_NUMBA = False


def backend() -> str:
    return "numba" if HAVE_NUMBA else "numpy"


def _trace_loop(K, c0, amps, omegas, thetas, u0, t0, dt, nsteps, stride,
                renorm_lo, renorm_hi):
    """Propagate a vector, recording log max|u| every `stride` steps and
    renormalizing whenever the norm leaves [renorm_lo, renorm_hi].

    Returns (u, log_scale, lognorms, status); status 1 = non-finite state.
    """
    u = u0.copy()
    nchk = nsteps // stride + 1
    lognorms = np.empty(nchk)
    log_scale = 0.0
    lognorms[0] = np.log(np.max(np.abs(u)))
    idx = 1
    for k in range(nsteps):
        t = t0 + k * dt
        if amps.shape[0] == 0:
            a1 = c0
            a2 = c0
            a3 = c0
        else:
            a1 = c0 + np.dot(np.cos(omegas * t + thetas), amps)
            a2 = c0 + np.dot(np.cos(omegas * (t + 0.5 * dt) + thetas), amps)
            a3 = c0 + np.dot(np.cos(omegas * (t + dt) + thetas), amps)
        k1 = np.dot(K, u) + a1 * u
        v = u + (0.5 * dt) * k1
        k2 = np.dot(K, v) + a2 * v
        v = u + (0.5 * dt) * k2
        k3 = np.dot(K, v) + a2 * v
        v = u + dt * k3
        k4 = np.dot(K, v) + a3 * v
        u = u + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if (k + 1) % stride == 0:
            m = np.max(np.abs(u))
            if not np.isfinite(m) or m <= 0.0:
                lognorms[idx:] = np.nan
                return u, log_scale, lognorms, 1
            lognorms[idx] = log_scale + np.log(m)
            idx += 1
            if m > renorm_hi or m < renorm_lo:
                u = u / m
                log_scale = log_scale + np.log(m)
    return u, log_scale, lognorms, 0


def _store_loop(K, c0, amps, omegas, thetas, u0, t0, dt, nsteps, stride):
    """Propagate a vector, storing the state every `stride` steps.

    No renormalization; returns (u, states, status)."""
    u = u0.copy()
    nchk = nsteps // stride + 1
    out = np.empty((nchk, u.shape[0]))
    out[0] = u
    idx = 1
    for k in range(nsteps):
        t = t0 + k * dt
        if amps.shape[0] == 0:
            a1 = c0
            a2 = c0
            a3 = c0
        else:
            a1 = c0 + np.dot(np.cos(omegas * t + thetas), amps)
            a2 = c0 + np.dot(np.cos(omegas * (t + 0.5 * dt) + thetas), amps)
            a3 = c0 + np.dot(np.cos(omegas * (t + dt) + thetas), amps)
        k1 = np.dot(K, u) + a1 * u
        v = u + (0.5 * dt) * k1
        k2 = np.dot(K, v) + a2 * v
        v = u + (0.5 * dt) * k2
        k3 = np.dot(K, v) + a2 * v
        v = u + dt * k3
        k4 = np.dot(K, v) + a3 * v
        u = u + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if (k + 1) % stride == 0:
            out[idx] = u
            idx += 1
    status = 0 if np.all(np.isfinite(u)) else 1
    return u, out, status


def _forced_pair_loop(K, c0, amps, omegas, thetas, psi0, w0, t0, dt, nsteps, stride,
                      abort_norm):
    """Forced integral psi' = A(t) psi + 1 alongside the homogeneous companion
    w' = A(t) w. w is renormalized at every stride and its log norm traced;
    psi is stored at strides. Aborts with status 1 when psi exceeds
    abort_norm (growing integrand), status 2 on non-finite values.

    Returns (psi, w, logw_scale, logw, psis, n_recorded, status)."""
    psi = psi0.copy()
    w = w0.copy()
    nchk = nsteps // stride + 1
    logw = np.empty(nchk)
    psis = np.empty((nchk, psi.shape[0]))
    logw_scale = 0.0
    logw[0] = np.log(np.max(np.abs(w)))
    psis[0] = psi
    idx = 1
    for k in range(nsteps):
        t = t0 + k * dt
        if amps.shape[0] == 0:
            a1 = c0
            a2 = c0
            a3 = c0
        else:
            a1 = c0 + np.dot(np.cos(omegas * t + thetas), amps)
            a2 = c0 + np.dot(np.cos(omegas * (t + 0.5 * dt) + thetas), amps)
            a3 = c0 + np.dot(np.cos(omegas * (t + dt) + thetas), amps)
        k1 = np.dot(K, psi) + a1 * psi + 1.0
        v = psi + (0.5 * dt) * k1
        k2 = np.dot(K, v) + a2 * v + 1.0
        v = psi + (0.5 * dt) * k2
        k3 = np.dot(K, v) + a2 * v + 1.0
        v = psi + dt * k3
        k4 = np.dot(K, v) + a3 * v + 1.0
        psi = psi + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        k1 = np.dot(K, w) + a1 * w
        v = w + (0.5 * dt) * k1
        k2 = np.dot(K, v) + a2 * v
        v = w + (0.5 * dt) * k2
        k3 = np.dot(K, v) + a2 * v
        v = w + dt * k3
        k4 = np.dot(K, v) + a3 * v
        w = w + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if (k + 1) % stride == 0:
            mw = np.max(np.abs(w))
            mp = np.max(np.abs(psi))
            if not (np.isfinite(mw) and np.isfinite(mp)) or mw <= 0.0:
                logw[idx:] = np.nan
                return psi, w, logw_scale, logw, psis, idx, 2
            logw[idx] = logw_scale + np.log(mw)
            psis[idx] = psi
            idx += 1
            w = w / mw
            logw_scale = logw_scale + np.log(mw)
            if mp > abort_norm:
                return psi, w, logw_scale, logw, psis, idx, 1
    return psi, w, logw_scale, logw, psis, idx, 0


def _mat_loop(K, c0, amps, omegas, thetas, U0, t0, dt, nsteps):
    """Propagate a matrix of columns (no renormalization).

    Returns (U, status); status 1 = non-finite."""
    U = U0.copy()
    n = U.shape[0]
    for k in range(nsteps):
        t = t0 + k * dt
        if amps.shape[0] == 0:
            a1 = c0
            a2 = c0
            a3 = c0
        else:
            a1 = c0 + np.dot(np.cos(omegas * t + thetas), amps)
            a2 = c0 + np.dot(np.cos(omegas * (t + 0.5 * dt) + thetas), amps)
            a3 = c0 + np.dot(np.cos(omegas * (t + dt) + thetas), amps)
        k1 = np.dot(K, U) + a1.reshape(n, 1) * U
        V = U + (0.5 * dt) * k1
        k2 = np.dot(K, V) + a2.reshape(n, 1) * V
        V = U + (0.5 * dt) * k2
        k3 = np.dot(K, V) + a2.reshape(n, 1) * V
        V = U + dt * k3
        k4 = np.dot(K, V) + a3.reshape(n, 1) * V
        U = U + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    status = 0 if np.all(np.isfinite(U)) else 1
    return U, status


_PY_IMPLS = {
    "trace": _trace_loop,
    "store": _store_loop,
    "forced_pair": _forced_pair_loop,
    "mat": _mat_loop,
}

if HAVE_NUMBA:
    _NB_IMPLS = {name: numba.njit(fn, cache=True) for name, fn in _PY_IMPLS.items()}
else:
    _NB_IMPLS = {}


def _impl(name, use_numba):
    if use_numba is None:
        use_numba = HAVE_NUMBA
    if use_numba and not HAVE_NUMBA:
        raise RuntimeError("numba lane requested but numba is unavailable or disabled")
    return _NB_IMPLS[name] if use_numba else _PY_IMPLS[name]


def _as_c(x):
    return np.ascontiguousarray(np.asarray(x, dtype=float))


def _prep(K, pack):
    c0, amps, omegas, thetas = pack
    c0 = _as_c(c0)
    omegas = _as_c(omegas)
    thetas = _as_c(thetas)
    amps = _as_c(amps)
    if amps.size == 0:
        amps = np.empty((0, c0.shape[0]))
    else:
        amps = amps.reshape(omegas.shape[0], c0.shape[0])
    return _as_c(K), c0, amps, omegas, thetas


def rk4_trace(K, pack, u0, t0, dt, nsteps, stride=None, renorm_lo=1e-100,
              renorm_hi=1e100, use_numba=None):
    if stride is None:
        stride = nsteps
    if nsteps % stride != 0:
        raise ValueError("nsteps must be a multiple of stride")
    Kc, c0, amps, omegas, thetas = _prep(K, pack)
    return _impl("trace", use_numba)(Kc, c0, amps, omegas, thetas, _as_c(u0),
                                     float(t0), float(dt), int(nsteps), int(stride),
                                     float(renorm_lo), float(renorm_hi))


def rk4_store(K, pack, u0, t0, dt, nsteps, stride, use_numba=None):
    if nsteps % stride != 0:
        raise ValueError("nsteps must be a multiple of stride")
    Kc, c0, amps, omegas, thetas = _prep(K, pack)
    return _impl("store", use_numba)(Kc, c0, amps, omegas, thetas, _as_c(u0),
                                     float(t0), float(dt), int(nsteps), int(stride))


def rk4_forced_pair(K, pack, psi0, w0, t0, dt, nsteps, stride, abort_norm=1e12,
                    use_numba=None):
    if nsteps % stride != 0:
        raise ValueError("nsteps must be a multiple of stride")
    Kc, c0, amps, omegas, thetas = _prep(K, pack)
    return _impl("forced_pair", use_numba)(Kc, c0, amps, omegas, thetas, _as_c(psi0),
                                           _as_c(w0), float(t0), float(dt), int(nsteps),
                                           int(stride), float(abort_norm))


def rk4_mat(K, pack, U0, t0, dt, nsteps, use_numba=None):
    Kc, c0, amps, omegas, thetas = _prep(K, pack)
    return _impl("mat", use_numba)(Kc, c0, amps, omegas, thetas, _as_c(U0),
                                   float(t0), float(dt), int(nsteps))


def warmup(n=4):
    """Trigger JIT compilation of every kernel on a tiny problem."""
    if not HAVE_NUMBA:
        return
    K = np.eye(n) * 0.1
    pack = (np.zeros(n), np.full((1, n), 0.1), np.ones(1), np.zeros(1))
    u = np.ones(n)
    rk4_trace(K, pack, u, 0.0, 0.01, 4, stride=2)
    rk4_store(K, pack, u, 0.0, 0.01, 4, stride=2)
    rk4_forced_pair(K, pack, u, u, 0.0, 0.01, 4, stride=2)
    rk4_mat(K, pack, np.eye(n), 0.0, 0.01, 2)
