"""Dispersal kernels: nonnegative, unit-mass densities with exponential tails.

Built-in kinds are the Gaussian density, a compactly supported bump, and
radially tabulated data. Each kernel carries user-declared tail metadata
(mu, M) meaning kappa(z) <= exp(-mu*|z|) for |z| >= M, which `verify_h1`
checks empirically.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

NORM_TOL = 1e-8
TAIL_SAMPLES = 512


@dataclass(frozen=True)
class Kernel:
    """Immutable dispersal kernel. Safe for concurrent evaluation."""

    kind: str                 # "gaussian" | "bump" | "tabulated"
    dim: int
    tail_mu: float
    tail_M: float
    symmetric: bool = True
    sigma: float = 0.0        # gaussian
    r: float = 0.0            # bump support radius
    bump_norm: float = 0.0    # bump normalization constant, fixed at construction
    radii: np.ndarray | None = field(default=None, repr=False)   # tabulated
    values: np.ndarray | None = field(default=None, repr=False)

    @property
    def support_radius(self):
        """Radius beyond which the kernel is treated as zero."""
        if self.kind == "gaussian":
            return 8.0 * self.sigma
        if self.kind == "bump":
            return self.r
        return float(self.radii[-1])

    @property
    def mesh_scale(self):
        """Coarsest mesh width that still resolves the kernel."""
        if self.kind == "gaussian":
            return self.sigma
        if self.kind == "bump":
            return self.r / 4.0
        return float(self.radii[-1]) / 4.0


def eval_kernel(k: Kernel, z) -> np.ndarray | float:
    """Evaluate kappa(z) for a single point (dim,) or a batch (m, dim)."""
    z = np.asarray(z, dtype=float)
    single = z.ndim <= 1
    if z.ndim == 0:
        z = z.reshape(1, 1)
    elif z.ndim == 1:
        z = z.reshape(1, -1)
    if z.shape[1] != k.dim:
        raise ValueError(f"point dimension {z.shape[1]} does not match kernel dim {k.dim}")
    rad = np.sqrt(np.sum(z * z, axis=1))
    if k.kind == "gaussian":
        out = (2.0 * np.pi * k.sigma**2) ** (-k.dim / 2.0) * np.exp(-0.5 * (rad / k.sigma) ** 2)
    elif k.kind == "bump":
        out = np.zeros_like(rad)
        inside = rad < k.r
        s = (rad[inside] / k.r) ** 2
        out[inside] = k.bump_norm * np.exp(-1.0 / (1.0 - s))
    else:
        out = np.interp(rad, k.radii, k.values, left=k.values[0], right=0.0)
        out = np.where(rad > k.radii[-1], 0.0, out)
    return float(out[0]) if single else out


def _mass_grid(k: Kernel):
    """Default midpoint grid for the unit-mass check (documented resolutions)."""
    R = k.support_radius
    if k.kind == "gaussian":
        n = 1024 if k.dim == 1 else 256
    else:
        n = 2048 if k.dim == 1 else 256
    h = 2.0 * R / n
    axis = -R + (np.arange(n) + 0.5) * h
    return axis, h


def kernel_mass(k: Kernel, axis=None, h=None) -> float:
    """Midpoint quadrature of kappa over the truncation box."""
    if axis is None:
        axis, h = _mass_grid(k)
    if k.dim == 1:
        pts = axis.reshape(-1, 1)
        return float(np.sum(eval_kernel(k, pts)) * h)
    if k.dim == 2:
        X, Y = np.meshgrid(axis, axis, indexing="ij")
        pts = np.column_stack([X.ravel(), Y.ravel()])
        return float(np.sum(eval_kernel(k, pts)) * h * h)
    raise ValueError("mass check implemented for dim <= 2")


def _validate(k: Kernel, check_mass=True):
    if k.dim < 1:
        raise ValueError("kernel dim must be >= 1")
    if k.tail_mu <= 0 or k.tail_M <= 0:
        raise ValueError("tail constants mu, M must be positive")
    k0 = eval_kernel(k, np.zeros(k.dim))
    if not k0 > 0:
        raise ValueError("kappa(0) must be positive")
    if check_mass:
        err = abs(kernel_mass(k) - 1.0)
        if err > NORM_TOL:
            raise ValueError(f"kernel mass deviates from 1 by {err:.3e} (> {NORM_TOL})")
    return k


def gaussian_kernel(sigma=1.0, dim=1, mu=1.0, M=4.0) -> Kernel:
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    return _validate(Kernel(kind="gaussian", dim=dim, tail_mu=mu, tail_M=M, sigma=sigma))


def bump_kernel(r=1.0, dim=1, mu=1.0, M=None) -> Kernel:
    """C^1 bump supported on |z| < r, normalized to unit mass on the default grid."""
    if r <= 0:
        raise ValueError("r must be positive")
    if M is None:
        M = r
    raw = Kernel(kind="bump", dim=dim, tail_mu=mu, tail_M=M, r=r, bump_norm=1.0)
    c = 1.0 / kernel_mass(raw)
    return _validate(Kernel(kind="bump", dim=dim, tail_mu=mu, tail_M=M, r=r, bump_norm=c))


def tabulated_kernel(radii, values, dim=1, mu=1.0, M=None, check_mass=True) -> Kernel:
    """Radially symmetric kernel interpolated piecewise-linearly between samples."""
    radii = np.asarray(radii, dtype=float)
    values = np.asarray(values, dtype=float)
    if radii.ndim != 1 or radii.shape != values.shape or len(radii) < 2:
        raise ValueError("tabulated kernel needs matching 1-d radius/value arrays")
    if radii[0] != 0.0 or np.any(np.diff(radii) <= 0):
        raise ValueError("radii must start at 0 and increase strictly")
    if np.any(values < 0):
        raise ValueError("tabulated values must be nonnegative")
    if M is None:
        M = float(radii[-1])
    k = Kernel(kind="tabulated", dim=dim, tail_mu=mu, tail_M=M, radii=radii, values=values)
    return _validate(k, check_mass=check_mass)


def load_tabulated_csv(path, dim=1, mu=1.0, M=None, check_mass=True) -> Kernel:
    """Load a two-column (radius, value) CSV."""
    radii, values = [], []
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            if not row or row[0].strip().startswith("#"):
                continue
            radii.append(float(row[0]))
            values.append(float(row[1]))
    return tabulated_kernel(radii, values, dim=dim, mu=mu, M=M, check_mass=check_mass)


@dataclass
class H1Report:
    norm_error: float
    tail_violations: np.ndarray   # (k, dim) sampled points violating the tail bound
    kappa0: float

    @property
    def ok(self):
        return self.norm_error <= NORM_TOL and len(self.tail_violations) == 0


def _tail_directions(dim):
    dirs = []
    for i in range(dim):
        e = np.zeros(dim)
        e[i] = 1.0
        dirs.append(e)
        dirs.append(-e)
    if dim > 1:
        d = np.ones(dim) / np.sqrt(dim)
        dirs.append(d)
        dirs.append(-d)
    return dirs


def verify_h1(k: Kernel, probe_radii=None) -> H1Report:
    """Check unit mass and the exponential tail bound kappa(z) <= exp(-mu*|z|).

    The tail is sampled on TAIL_SAMPLES radii in [M, M + 5/mu] along each
    coordinate direction (and the diagonal for dim > 1).
    """
    if probe_radii is None:
        probe_radii = np.linspace(k.tail_M, k.tail_M + 5.0 / k.tail_mu, TAIL_SAMPLES)
    probe_radii = np.asarray(probe_radii, dtype=float)
    if probe_radii.size == 0:
        raise ValueError("empty probe grid")
    norm_error = abs(kernel_mass(k) - 1.0)
    bad = []
    for d in _tail_directions(k.dim):
        pts = probe_radii[:, None] * d[None, :]
        vals = np.atleast_1d(eval_kernel(k, pts))
        bound = np.exp(-k.tail_mu * probe_radii)
        mask = vals > bound
        if np.any(mask):
            bad.append(pts[mask])
    violations = np.vstack(bad) if bad else np.empty((0, k.dim))
    return H1Report(norm_error=norm_error, tail_violations=violations,
                    kappa0=float(eval_kernel(k, np.zeros(k.dim))))


def kernel_from_config(cfg: dict) -> Kernel:
    """Build a kernel from its JSON config block."""
    kind = cfg.get("kind")
    dim = int(cfg.get("dim", 1))
    mu = float(cfg.get("mu", 1.0))
    M = cfg.get("M")
    M = float(M) if M is not None else None
    if kind == "gaussian":
        return gaussian_kernel(sigma=float(cfg.get("sigma", 1.0)), dim=dim,
                               mu=mu, M=M if M is not None else 4.0 * float(cfg.get("sigma", 1.0)))
    if kind == "bump":
        return bump_kernel(r=float(cfg.get("r", 1.0)), dim=dim, mu=mu, M=M)
    if kind == "tabulated":
        return load_tabulated_csv(cfg["csv"], dim=dim, mu=mu, M=M,
                                  check_mass=bool(cfg.get("check_mass", True)))
    raise ValueError(f"unknown kernel kind: {kind!r}")
