"""Grids, midpoint quadrature, and the discrete kernel operator.

Bounded domains are axis-aligned boxes (Dirichlet-type truncation of the
integral); R^N is approximated by a torus whose period should exceed the
kernel support twice over (wrap-once rule). Midpoint weights keep the
assembled stencil nonnegative, which the comparison-principle checks rely on.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import product

import numpy as np

from .kernels import Kernel, eval_kernel

ROWSUM_TOL = 1e-6


@dataclass(frozen=True)
class Grid:
    domain: str                   # "box" | "torus"
    lo: np.ndarray
    hi: np.ndarray                # box upper corner, or lo + period for torus
    n: tuple                      # points per axis
    h: np.ndarray = field(init=False)
    nodes: np.ndarray = field(init=False)     # (total, dim)
    weights: np.ndarray = field(init=False)   # (total,)

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lo, dtype=float))
        hi = np.atleast_1d(np.asarray(self.hi, dtype=float))
        n = tuple(int(v) for v in np.atleast_1d(self.n))
        if lo.shape != hi.shape or len(n) != len(lo):
            raise ValueError("lo, hi, n must have matching lengths")
        if np.any(hi <= lo) or any(v < 1 for v in n):
            raise ValueError("need hi > lo and n >= 1 per axis")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)
        object.__setattr__(self, "n", n)
        h = (hi - lo) / np.array(n, dtype=float)
        object.__setattr__(self, "h", h)
        if self.domain == "box":
            axes = [lo[i] + (np.arange(n[i]) + 0.5) * h[i] for i in range(len(n))]
        elif self.domain == "torus":
            axes = [lo[i] + np.arange(n[i]) * h[i] for i in range(len(n))]
        else:
            raise ValueError(f"unknown domain {self.domain!r}")
        mesh = np.meshgrid(*axes, indexing="ij")
        nodes = np.column_stack([m.ravel() for m in mesh])
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "weights", np.full(nodes.shape[0], float(np.prod(h))))
        object.__setattr__(self, "axes", axes)

    @property
    def dim(self):
        return len(self.n)

    @property
    def size(self):
        return self.nodes.shape[0]

    @property
    def is_torus(self):
        return self.domain == "torus"

    @property
    def period(self):
        return self.hi - self.lo

    @property
    def volume(self):
        return float(np.prod(self.hi - self.lo))


def box_grid(lo, hi, n) -> Grid:
    return Grid(domain="box", lo=np.atleast_1d(lo), hi=np.atleast_1d(hi), n=n)


def torus_grid(L, n) -> Grid:
    L = np.atleast_1d(np.asarray(L, dtype=float))
    return Grid(domain="torus", lo=np.zeros_like(L), hi=L, n=n)


def grid_from_config(cfg: dict) -> Grid:
    if cfg.get("domain") == "torus":
        return torus_grid(cfg["L"], cfg["n"])
    if cfg.get("domain") == "box":
        return box_grid(cfg["lo"], cfg["hi"], cfg["n"])
    raise ValueError(f"unknown grid domain {cfg.get('domain')!r}")


@dataclass(frozen=True)
class DiscreteOperator:
    """Quadrature-weighted kernel matrix: K[i, j] = kappa(x_j - x_i) * w_j.

    Immutable after assembly; `apply` is pure and safe to call concurrently.
    Torus operators also carry the circulant stencil for FFT application.
    """

    grid: Grid
    dense: np.ndarray
    stencil: np.ndarray | None = field(default=None, repr=False)   # torus only, grid-shaped
    stencil_fft: np.ndarray | None = field(default=None, repr=False)
    symmetric_weighted: bool = True

    @property
    def n(self):
        return self.dense.shape[0]

    def row_sums(self) -> np.ndarray:
        return self.dense.sum(axis=1)

    def sup_norm(self) -> float:
        return float(np.max(self.row_sums()))

    def apply(self, u: np.ndarray, fast=None) -> np.ndarray:
        """Operator action; FFT cyclic convolution on the torus, BLAS otherwise."""
        u = np.asarray(u, dtype=float)
        if u.shape[0] != self.n:
            raise ValueError(f"vector length {u.shape[0]} != operator size {self.n}")
        if fast is None:
            fast = self.stencil_fft is not None
        if fast and self.stencil_fft is None:
            raise ValueError("fast path only available for torus operators")
        if not fast:
            return self.dense @ u
        shape = self.grid.n
        axes = tuple(range(len(shape)))
        uf = np.fft.rfftn(u.reshape(shape))
        # cross-correlation with the stencil: conjugate spectrum
        return np.fft.irfftn(uf * np.conj(self.stencil_fft), s=shape, axes=axes).ravel()

    def to_csv(self, path):
        np.savetxt(path, self.dense, delimiter=",")


def _check_mesh(kernel: Kernel, grid: Grid):
    if kernel.dim != grid.dim:
        raise ValueError(f"kernel dim {kernel.dim} != grid dim {grid.dim}")
    if np.any(grid.h > kernel.mesh_scale):
        raise ValueError(
            f"grid too coarse: h={grid.h} exceeds kernel mesh scale {kernel.mesh_scale}")


def assemble(kernel: Kernel, grid: Grid) -> DiscreteOperator:
    """Build the discrete operator u |-> integral of kappa(y-x) u(y) dy.

    On the torus the kernel images are summed over one wrap in each axis,
    which requires the kernel support to fit in half the period.
    """
    _check_mesh(kernel, grid)
    nodes = grid.nodes
    w = grid.weights
    if grid.is_torus:
        L = grid.period
        if np.any(kernel.support_radius > L / 2.0):
            raise ValueError(
                f"kernel support {kernel.support_radius} exceeds half period {L / 2.0}")
        # first-column displacements x_d - x_0 folded over one wrap per axis
        disp = nodes - nodes[0]
        vals = np.zeros(grid.size)
        shifts = list(product(*[(-Li, 0.0, Li) for Li in L]))
        for s in shifts:
            vals += np.atleast_1d(eval_kernel(kernel, disp + np.array(s)))
        stencil = (vals * w[0]).reshape(grid.n)
        dense = _circulant_dense(stencil, grid)
        fft = np.fft.rfftn(stencil)
        return DiscreteOperator(grid=grid, dense=dense, stencil=stencil, stencil_fft=fft,
                                symmetric_weighted=kernel.symmetric)
    dense = np.empty((grid.size, grid.size))
    for i0 in range(0, grid.size, 512):    # chunked rows bound the memory spike
        blk = nodes[None, :, :] - nodes[i0:i0 + 512, None, :]
        rows = blk.shape[0]
        dense[i0:i0 + 512] = np.atleast_1d(
            eval_kernel(kernel, blk.reshape(-1, grid.dim))).reshape(rows, grid.size)
    dense *= w[None, :]
    return DiscreteOperator(grid=grid, dense=dense, symmetric_weighted=kernel.symmetric)


def _circulant_dense(stencil: np.ndarray, grid: Grid) -> np.ndarray:
    """Materialize the dense matrix of a (block-)circulant stencil."""
    shape = grid.n
    m = grid.size
    dense = np.empty((m, m))
    idx = np.indices(shape).reshape(grid.dim, m)
    for i in range(m):
        pos = np.unravel_index(i, shape)
        shifted = tuple((idx[d] - pos[d]) % shape[d] for d in range(grid.dim))
        dense[i] = stencil[shifted]
    return dense


def neumann_form(K: DiscreteOperator, a: np.ndarray):
    """Rewrite K u + a u as (K - rowsum I) u + a~ u with a~ = a + rowsum."""
    a = np.asarray(a, dtype=float)
    return K, a + K.row_sums()


def check_operator(K: DiscreteOperator, rowsum_tol=ROWSUM_TOL) -> dict:
    """Structural invariants: nonnegativity, positive diagonal, row-sum bounds."""
    rs = K.row_sums()
    report = {
        "min_entry": float(K.dense.min()),
        "min_diag": float(np.min(np.diag(K.dense))),
        "rowsum_min": float(rs.min()),
        "rowsum_max": float(rs.max()),
    }
    ok = report["min_entry"] >= 0.0 and report["min_diag"] > 0.0
    if K.grid.is_torus:
        ok = ok and abs(report["rowsum_max"] - 1.0) <= rowsum_tol \
            and abs(report["rowsum_min"] - 1.0) <= rowsum_tol
    else:
        ok = ok and report["rowsum_max"] <= 1.0 + rowsum_tol
    report["ok"] = ok
    return report
