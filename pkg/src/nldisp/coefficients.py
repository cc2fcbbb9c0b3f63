"""Almost periodic coefficients a(t,x) as finite quasi-periodic trigonometric sums.

a(t,x) = c0(x) + sum_j c_j(x) * cos(omega_j * t + theta_j)

Space profiles are closed-form expressions in a small grammar (constants,
x components, cos, sin, +, -, *), plain constants, or raw per-node arrays
bound to a grid. The constant Fourier term c0 is the exact time average.
"""

from __future__ import annotations

import ast
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

_ALLOWED_CALLS = {"cos": np.cos, "sin": np.sin}
_ALLOWED_NAMES = {"pi": math.pi}


def _compile_expr(text: str):
    """Compile a mini-grammar expression into a vectorized f(nodes) -> values."""
    tree = ast.parse(text, mode="eval")

    def check(node):
        if isinstance(node, ast.Expression):
            return check(node.body)
        if isinstance(node, ast.BinOp) and isinstance(node.op, (ast.Add, ast.Sub, ast.Mult)):
            check(node.left)
            check(node.right)
            return
        if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
            check(node.operand)
            return
        if isinstance(node, ast.Call):
            if not (isinstance(node.func, ast.Name) and node.func.id in _ALLOWED_CALLS
                    and len(node.args) == 1 and not node.keywords):
                raise ValueError(f"only cos(...)/sin(...) calls allowed: {text!r}")
            check(node.args[0])
            return
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
            return
        if isinstance(node, ast.Name):
            if node.id in _ALLOWED_NAMES or node.id in ("x", "x1", "x2", "x3"):
                return
            raise ValueError(f"unknown name {node.id!r} in expression {text!r}")
        raise ValueError(f"disallowed syntax in expression {text!r}")

    check(tree)
    code = compile(tree, "<profile>", "eval")

    def evaluate(nodes):
        env = dict(_ALLOWED_NAMES)
        env.update(_ALLOWED_CALLS)
        env["x"] = env["x1"] = nodes[:, 0]
        for i in range(1, nodes.shape[1]):
            env[f"x{i + 1}"] = nodes[:, i]
        out = eval(code, {"__builtins__": {}}, env)
        return np.broadcast_to(np.asarray(out, dtype=float), (nodes.shape[0],)).copy()

    return evaluate


@dataclass(frozen=True)
class SpaceProfile:
    """Spatial factor: constant, closed-form expression, or grid samples."""

    kind: str                       # "constant" | "smooth_bounded" | "trig_periodic" | "grid"
    value: float = 0.0
    expr: str | None = None
    samples: np.ndarray | None = field(default=None, repr=False)
    period: tuple | None = None     # trig_periodic only

    def __post_init__(self):
        if self.kind != "constant" and self.expr is None and self.samples is None:
            raise ValueError("non-constant profile needs an expression or grid samples")
        if self.expr is not None:
            object.__setattr__(self, "_fn", _compile_expr(self.expr))

    def __call__(self, nodes: np.ndarray) -> np.ndarray:
        if self.kind == "constant":
            return np.full(nodes.shape[0], self.value)
        if self.samples is not None:
            if len(self.samples) != nodes.shape[0]:
                raise ValueError("grid profile bound to a different grid")
            return np.asarray(self.samples, dtype=float)
        return self._fn(nodes)

    def torus_compatible(self):
        return self.kind in ("constant", "trig_periodic", "grid")


def constant_profile(v) -> SpaceProfile:
    return SpaceProfile(kind="constant", value=float(v))


def profile_from_config(spec, grid=None, rng=None) -> SpaceProfile:
    if isinstance(spec, (int, float)):
        return constant_profile(spec)
    if isinstance(spec, str):
        try:
            return constant_profile(float(spec))
        except ValueError:
            return SpaceProfile(kind="smooth_bounded", expr=spec)
    if isinstance(spec, dict):
        if "random" in spec:
            r = spec["random"]
            if grid is None or rng is None:
                raise ValueError("random profile needs a grid and a seeded rng")
            lo, hi = float(r.get("low", -0.5)), float(r.get("high", 0.5))
            vals = lo + (hi - lo) * rng.random(grid.nodes.shape[0])
            return SpaceProfile(kind="grid", samples=vals)
        kind = spec.get("kind", "smooth_bounded")
        period = tuple(spec["period"]) if "period" in spec else None
        return SpaceProfile(kind=kind, expr=spec["expr"], period=period)
    raise ValueError(f"bad space profile spec: {spec!r}")


@dataclass(frozen=True)
class Mode:
    profile: SpaceProfile
    omega: float
    theta: float = 0.0


@dataclass(frozen=True)
class APField:
    """Finite quasi-periodic sum; immutable, safe for concurrent evaluation."""

    c0: SpaceProfile
    modes: tuple = ()

    def __post_init__(self):
        omegas = [m.omega for m in self.modes]
        if any(w <= 0 for w in omegas):
            raise ValueError("mode frequencies must be positive")
        if len(set(omegas)) != len(omegas):
            raise ValueError("mode frequencies must be distinct")

    @property
    def omegas(self):
        return np.array([m.omega for m in self.modes])

    def eval(self, t, nodes) -> np.ndarray:
        """a(t, x) on the given nodes at scalar time t."""
        out = self.c0(nodes)
        for m in self.modes:
            out = out + m.profile(nodes) * math.cos(m.omega * t + m.theta)
        return out

    def eval_tx(self, ts, nodes) -> np.ndarray:
        """a(t, x) on a time grid: returns (len(ts), n_nodes)."""
        ts = np.asarray(ts, dtype=float)
        out = np.broadcast_to(self.c0(nodes), (len(ts), nodes.shape[0])).copy()
        for m in self.modes:
            out += np.cos(m.omega * ts + m.theta)[:, None] * m.profile(nodes)[None, :]
        return out

    def time_average(self, nodes) -> np.ndarray:
        """hat a(x): exactly the constant Fourier term c0(x)."""
        return self.c0(nodes)

    def numeric_time_average(self, nodes, T, nt=None) -> np.ndarray:
        """Trapezoid average over [0, T]; converges to c0(x) at rate O(1/T)."""
        if nt is None:
            nt = min(200_000, max(256, int(40 * T)))
        ts = np.linspace(0.0, T, nt + 1)
        vals = self.eval_tx(ts, nodes)
        return np.trapezoid(vals, ts, axis=0) / T

    def sup_bound(self, nodes) -> float:
        """Grid sup-norm bound: |c0| plus the sum of mode amplitudes."""
        out = np.abs(self.c0(nodes))
        for m in self.modes:
            out = out + np.abs(m.profile(nodes))
        return float(np.max(out))

    def shifted(self, c) -> "APField":
        base = self.c0
        if base.kind == "constant":
            new0 = constant_profile(base.value + c)
        elif base.samples is not None:
            new0 = SpaceProfile(kind="grid", samples=base.samples + c)
        else:
            new0 = SpaceProfile(kind=base.kind, expr=f"({base.expr})+({float(c)!r})",
                                period=base.period)
        return APField(c0=new0, modes=self.modes)

    def is_time_independent(self):
        return len(self.modes) == 0

    def common_period(self, tol=1e-9, max_den=1000):
        """Exact common time period, or None if frequencies are incommensurate.

        Frequency ratios are rationalized with denominators up to max_den; an
        incommensurate pair (e.g. 1 and sqrt(2)) fails the tolerance check.
        """
        if not self.modes:
            return None
        base = self.modes[0].omega
        dens = []
        for m in self.modes:
            ratio = m.omega / base
            f = Fraction(ratio).limit_denominator(max_den)
            if abs(float(f) - ratio) > tol * max(1.0, ratio):
                return None
            dens.append(f.denominator)
        return 2 * math.pi * math.lcm(*dens) / base


def space_time_average(a: APField, grid) -> float:
    """bar a: quadrature average of hat a over the domain (one cell for a torus)."""
    if grid.is_torus:
        profs = [a.c0] + [m.profile for m in a.modes]
        if not all(p.torus_compatible() for p in profs):
            raise ValueError("non-almost-periodic spatial profile on unbounded-domain surrogate")
    hat = a.time_average(grid.nodes)
    return float(np.sum(hat * grid.weights) / np.sum(grid.weights))


@dataclass
class ApproximantReport:
    field: "APField"
    period: float
    freq_errors: np.ndarray
    sup_distance_bound: float


def periodic_approximant(a: APField, q: int) -> ApproximantReport:
    """Rationalize each frequency to the nearest p/q, yielding an exactly periodic field.

    The reported sup-distance bound is sum_j ||c_j||_inf * min(2, |domega_j| * T/2),
    valid on the period window centered at t = 0 (the drift |domega|*|t| is not
    bounded uniformly on all of R unless the frequency is exact).
    """
    if q < 1:
        raise ValueError("denominator bound q must be >= 1")
    if not a.modes:
        return ApproximantReport(field=a, period=math.inf, freq_errors=np.empty(0),
                                 sup_distance_bound=0.0)
    new_modes = []
    fracs = []
    errs = []
    for m in a.modes:
        p = max(1, round(m.omega * q))
        f = Fraction(p, q)
        fracs.append(f)
        errs.append(abs(m.omega - float(f)))
        new_modes.append(Mode(profile=m.profile, omega=float(f), theta=m.theta))
    # common period: smallest T with T*(p_j/q_j) a multiple of 2*pi
    g = fracs[0]
    for f in fracs[1:]:
        g = Fraction(math.gcd(g.numerator, f.numerator),
                     math.lcm(g.denominator, f.denominator))
    period = float(2 * math.pi / g)
    errs = np.array(errs)
    return ApproximantReport(field=APField(c0=a.c0, modes=tuple(new_modes)), period=period,
                             freq_errors=errs, sup_distance_bound=float(np.sum(np.minimum(2.0, errs * period / 2.0))))


def sampled_sup_distance(a: APField, b: APField, nodes, t_lo, t_hi, nt=4096) -> float:
    """max |a - b| sampled on [t_lo, t_hi] x nodes."""
    ts = np.linspace(t_lo, t_hi, nt)
    return float(np.max(np.abs(a.eval_tx(ts, nodes) - b.eval_tx(ts, nodes))))


def sampled_max_excess(a: APField, b: APField, nodes, t_lo, t_hi, nt=4096) -> float:
    """max (a - b) sampled on [t_lo, t_hi] x nodes (one-sided)."""
    ts = np.linspace(t_lo, t_hi, nt)
    return float(np.max(a.eval_tx(ts, nodes) - b.eval_tx(ts, nodes)))


def field_from_config(cfg: dict, grid=None, rng=None) -> APField:
    """Build a coefficient field from its JSON config block."""
    c0 = profile_from_config(cfg.get("c0", 0.0), grid=grid, rng=rng)
    modes = []
    for mspec in cfg.get("modes", []):
        prof = profile_from_config(mspec.get("amp", 1.0), grid=grid, rng=rng)
        modes.append(Mode(profile=prof, omega=float(mspec["omega"]),
                          theta=float(mspec.get("theta", 0.0))))
    return APField(c0=c0, modes=tuple(modes))
