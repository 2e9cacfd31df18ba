"""Regularity measurements on discrete radial fields.

Fields are read as their piecewise-linear interpolants in r. Measures carry
the full radial weight |S^{N-1}| r^(N-1), so they are volumes in R^N.
"""

from dataclasses import dataclass
import math

import numpy as np

from .discretization import RadialOperator, shell_integral, sphere_area
from .errors import InsufficientData, InvalidParameter, InvalidTestFunction, NotApplicable
from .scalar import T

MIN_FIT_SAMPLES = 6
_GL_X, _GL_W = np.polynomial.legendre.leggauss(4)


# Level-set geometry ------------------------------------------------------

def _level_window(a, b, lo, hi):
    """Parameter range [t0, t1] in [0, 1] where the linear a + t (b - a) lies in [lo, hi].

    Empty ranges come back with t1 <= t0.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    d = b - a
    flat = d == 0
    with np.errstate(divide="ignore", invalid="ignore"):
        ta = (lo - a) / d
        tb = (hi - a) / d
    t0 = np.clip(np.minimum(ta, tb), 0.0, 1.0)
    t1 = np.clip(np.maximum(ta, tb), 0.0, 1.0)
    inside = (a >= lo) & (a <= hi)
    t0 = np.where(flat, 0.0, t0)
    t1 = np.where(flat, np.where(inside, 1.0, 0.0), t1)
    return t0, t1


def _sub_radii(mesh, t0, t1):
    r0, h = mesh.nodes[:-1], mesh.widths
    return r0 + t0 * h, r0 + t1 * h


def distribution_function(field, levels, N):
    """|{u >= k}| for each level k, with exact sub-cell crossings."""
    levels = np.asarray(levels, dtype=float)
    if levels.ndim != 1 or np.any(levels <= 0) or np.any(np.diff(levels) <= 0):
        raise InvalidParameter("levels must be positive and increasing")
    u = field.values
    mesh = field.mesh
    out = np.empty(levels.size)
    for j, k in enumerate(levels):
        t0, t1 = _level_window(u[:-1], u[1:], k, np.inf)
        a, b = _sub_radii(mesh, t0, t1)
        out[j] = sphere_area(N) * np.sum(np.where(t1 > t0, shell_integral(a, b, N), 0.0))
    return out


def gradient_distribution(field, levels, N):
    """|{|grad u| >= lambda}| with the gradient constant on each interval."""
    levels = np.asarray(levels, dtype=float)
    if levels.ndim != 1 or np.any(levels <= 0) or np.any(np.diff(levels) <= 0):
        raise InvalidParameter("levels must be positive and increasing")
    g = np.abs(field.gradient())
    vol = field.mesh.interval_volumes(N)
    order = np.argsort(g)
    gs, cum = g[order], np.cumsum(vol[order][::-1])[::-1]
    pos = np.searchsorted(gs, levels, side="left")
    return np.where(pos < gs.size, cum[np.minimum(pos, gs.size - 1)], 0.0)


def resolution_floor(mesh, N, cells=10):
    """Volume of the innermost ``cells`` intervals: smaller superlevel balls are under-resolved."""
    cells = min(cells, mesh.M)
    return sphere_area(N) * float(shell_integral(mesh.nodes[0], mesh.nodes[cells], N))


def default_levels(top, start=1.0, count=60):
    """Geometric levels from ``start`` to ``top``."""
    if not (np.isfinite(top) and top > start):
        raise InsufficientData(f"field range up to {top} leaves no levels above {start}")
    return np.geomspace(start, top, count)


# Tail fits ---------------------------------------------------------------

@dataclass(frozen=True)
class WindowPolicy:
    """Drop the lowest ``drop_decades`` of levels and measures under ``floor_cells`` cells."""

    drop_decades: float = 1.0
    floor_cells: int = 10


@dataclass(frozen=True)
class TailFit:
    exponent: float          # decay rate s in |{u >= k}| ~ k^-s
    intercept: float         # log-measure at log k = 0
    r_squared: float
    window: tuple
    count: int


def fit_tail_exponent(levels, measures, *, policy=WindowPolicy(), floor=0.0):
    """Least-squares slope of log(measure) against log(level) inside the window."""
    k = np.asarray(levels, dtype=float)
    mu = np.asarray(measures, dtype=float)
    if k.shape != mu.shape or k.ndim != 1:
        raise InvalidParameter("levels and measures must be matching 1-d arrays")
    if k.size == 0:
        raise InsufficientData("no samples")
    keep = (mu > 0) & (mu >= floor) & (k >= k.min() * 10.0 ** policy.drop_decades)
    if np.count_nonzero(keep) < MIN_FIT_SAMPLES:
        raise InsufficientData(
            f"{np.count_nonzero(keep)} usable samples, need {MIN_FIT_SAMPLES}")
    x, y = np.log(k[keep]), np.log(mu[keep])
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 if ss_tot == 0 else max(0.0, min(1.0, 1.0 - float(np.sum(resid ** 2)) / ss_tot))
    return TailFit(float(-slope), float(intercept), r2,
                   (float(k[keep].min()), float(k[keep].max())), int(np.count_nonzero(keep)))


def solution_tail(field, N, levels=None, policy=WindowPolicy()):
    if levels is None:
        levels = default_levels(float(np.max(field.values)))
    mu = distribution_function(field, levels, N)
    return fit_tail_exponent(levels, mu, policy=policy,
                             floor=resolution_floor(field.mesh, N, policy.floor_cells))


def gradient_tail(field, N, levels=None, policy=WindowPolicy()):
    if levels is None:
        levels = default_levels(float(np.max(np.abs(field.gradient()))))
    mu = gradient_distribution(field, levels, N)
    return fit_tail_exponent(levels, mu, policy=policy,
                             floor=resolution_floor(field.mesh, N, policy.floor_cells))


# Energies ----------------------------------------------------------------

def _gauss(a, b, fn):
    """4-point Gauss-Legendre integral of fn over [a, b], elementwise in a, b."""
    mid, half = 0.5 * (a + b), 0.5 * (b - a)
    total = 0.0
    for x, w in zip(_GL_X, _GL_W):
        total = total + w * fn(mid + half * x)
    return half * total


def truncated_energy(field, k, p, N):
    """|S^{N-1}| int r^(N-1) |d/dr T_k(u)|^p dr on the piecewise-linear interpolant."""
    if not k > 0:
        raise InvalidParameter("k must be positive")
    u = field.values
    t0, t1 = _level_window(u[:-1], u[1:], -k, k)
    a, b = _sub_radii(field.mesh, t0, t1)
    g = np.abs(field.gradient()) ** p
    shells = np.where(t1 > t0, shell_integral(a, b, N), 0.0)
    return sphere_area(N) * float(np.sum(g * shells))


def trace_power(gamma1, p):
    """Exponent q = (gamma1 - 1 + p)/p with T_k(u)^q of finite energy when gamma1 > 1."""
    if not gamma1 > 1:
        raise NotApplicable("the power-truncation estimate concerns gamma1 > 1")
    return (gamma1 - 1.0 + p) / p


def strong_singular_trace(field, spec, k):
    """Energy of T_k(u)^q, q = (gamma1 - 1 + p)/p, on the piecewise-linear interpolant."""
    if not k > 0:
        raise InvalidParameter("k must be positive")
    q = trace_power(spec.h.gamma1, spec.p)
    p, N = spec.p, spec.dim_N
    mesh = field.mesh
    u = np.maximum(field.values, 0.0)
    g = field.gradient()
    t0, t1 = _level_window(u[:-1], u[1:], -k, k)
    a, b = _sub_radii(mesh, t0, t1)
    r0 = mesh.nodes[:-1]
    u0 = u[:-1]

    def integrand(r):
        uh = np.maximum(u0 + g * (r - r0), 0.0)
        return r ** (N - 1) * (q * uh ** (q - 1.0) * np.abs(g)) ** p

    vals = np.where(t1 > t0, _gauss(a, b, integrand), 0.0)
    return sphere_area(N) * float(np.sum(vals))


def fit_energy_growth(field, levels, p, N):
    """Slope eta of log E(k) against log k, E the truncated energy."""
    E = np.array([truncated_energy(field, k, p, N) for k in levels])
    good = E > 0
    if np.count_nonzero(good) < 2:
        raise InsufficientData("truncated energy vanishes on the window")
    slope, _ = np.polyfit(np.log(np.asarray(levels)[good]), np.log(E[good]), 1)
    return float(slope)


@dataclass(frozen=True)
class AuxReport:
    eta: float
    predicted_t: float
    predicted_r: float
    measured_t: float
    measured_r: float
    tol: float

    @property
    def t_ok(self):
        return self.measured_t >= self.predicted_t * (1.0 - self.tol)

    @property
    def r_ok(self):
        return self.measured_r >= self.predicted_r * (1.0 - self.tol)

    @property
    def passed(self):
        return self.t_ok and self.r_ok


def aux_check(field, p, N, *, tol=0.1, policy=WindowPolicy(), start=1.0):
    """Fit the truncated-energy growth eta, then test the tails it implies.

    A growth bound E(k) <= c k^eta gives u in M^{N(p-eta)/(N-p)} and
    |grad u| in M^{N(p-eta)/(N-eta)}; measured tails must reach those indices
    up to the relative slack ``tol``.
    """
    top = float(np.max(field.values))
    if not top > start * 10.0 ** (policy.drop_decades + 1):
        raise NotApplicable(f"sup u = {top:.6g}: no tail range, energy saturates (bounded field)")
    sol = solution_tail(field, N, default_levels(top, start), policy)
    eta_levels = np.geomspace(*sol.window, 20)
    eta = max(0.0, fit_energy_growth(field, eta_levels, p, N))
    if eta >= p:
        raise NotApplicable(f"fitted energy growth eta = {eta:.4g} >= p")
    grad = gradient_tail(field, N, policy=policy)
    return AuxReport(eta, N * (p - eta) / (N - p), N * (p - eta) / (N - eta),
                     sol.exponent, grad.exponent, tol)


# Entropy inequality -------------------------------------------------------

@dataclass(frozen=True)
class TestFunction:
    """Built-in test functions: ``zero``, ``truncation`` (c T_j(u)), ``bump`` (c (1 - r^2))."""

    __test__ = False  # not a pytest class
    kind: str = "zero"
    c: float = 1.0
    j: float = 1.0

    def __post_init__(self):
        if self.kind not in ("zero", "truncation", "bump"):
            raise InvalidTestFunction(f"unknown test function {self.kind!r}")
        if self.kind == "truncation" and not self.j > 0:
            raise InvalidTestFunction("truncation level j must be positive")
        if not math.isfinite(self.c):
            raise InvalidTestFunction("c must be finite")

    def values(self, field):
        r, u = field.r, field.values
        if self.kind == "zero":
            return np.zeros_like(u)
        if self.kind == "truncation":
            return self.c * T(self.j, u)
        return self.c * (1.0 - r * r)


def _test_values(phi, field):
    vals = phi.values(field) if isinstance(phi, TestFunction) else np.asarray(phi, dtype=float)
    if vals.shape != field.values.shape or not np.all(np.isfinite(vals)):
        raise InvalidTestFunction("test function must be finite on every node")
    dirichlet = [-1] if field.mesh.has_origin else [0, -1]
    if np.any(np.abs(vals[dirichlet]) > 1e-14):
        raise InvalidTestFunction("test function must vanish on the boundary")
    return vals


@dataclass(frozen=True)
class EntropyTerms:
    lhs: float      # int a(u, grad u) . grad T_k(u - phi)
    rhs: float      # int h(u) f T_k(u - phi)

    @property
    def residual(self):
        return self.lhs - self.rhs

    @property
    def scale(self):
        return abs(self.lhs) + abs(self.rhs) + 1.0


def entropy_terms(field, spec, phi, k, *, n_reg=None, quadrature="scheme"):
    """Both sides of the truncated entropy inequality for the field.

    ``quadrature="scheme"`` uses the solver's own fluxes and cell sources
    (summation by parts), so for a discrete solution at level ``n_reg`` the
    two sides agree up to the algebraic residual. ``"reconstruction"``
    integrates the piecewise-linear interpolant cell by cell instead, which
    exposes the discretization defect. ``n_reg=None`` uses untruncated h and f.
    """
    if not k > 0:
        raise InvalidParameter("k must be positive")
    if quadrature not in ("scheme", "reconstruction"):
        raise InvalidParameter(f"unknown quadrature {quadrature!r}")
    phi_vals = _test_values(phi, field)
    u = field.values
    w = u - phi_vals
    omega = sphere_area(spec.dim_N)
    op = RadialOperator(spec, field.mesh, n_reg)
    if quadrature == "scheme":
        psi = T(k, w)
        lhs = omega * float(np.sum(op.fluxes(u) * np.diff(psi)))
        with np.errstate(invalid="ignore"):
            q = op.sources(u) * psi
        rhs = omega * float(np.sum(np.where(psi == 0, 0.0, q)))
        return EntropyTerms(lhs, rhs)
    return _reconstruction_terms(field, spec, w, k, n_reg, op, omega)


def _reconstruction_terms(field, spec, w, k, n_reg, op, omega):
    mesh = field.mesh
    N, p = spec.dim_N, spec.p
    u = field.values
    r0, hw = mesh.nodes[:-1], mesh.widths
    g = field.gradient()
    gw = np.diff(w) / hw
    e = spec.theta * (p - 1.0)
    flux_g = np.abs(g) ** (p - 2.0) * g if p != 2 else g
    flux_g = np.where(g == 0, 0.0, flux_g)

    def coef(uh):
        t = uh if n_reg is None else np.minimum(uh, n_reg)
        return (1.0 + np.maximum(t, 0.0)) ** (-e)

    t0, t1 = _level_window(w[:-1], w[1:], -k, k)
    a, b = _sub_radii(mesh, t0, t1)

    def lhs_integrand(r):
        return r ** (N - 1) * coef(u[:-1] + g * (r - r0)) * flux_g * gw

    lhs = omega * float(np.sum(np.where(t1 > t0, _gauss(a, b, lhs_integrand), 0.0)))

    # rhs: exact moments of the source weight against the linear interpolant
    # of h(u) T_k(u - phi) between breakpoints (cell ends, crossings of |w| = k)
    src = spec.source
    cuts = [np.zeros_like(r0), np.ones_like(r0), t0, t1]
    if n_reg is not None and src.sigma > 0 and src.amplitude > 0:
        rc = math.exp(min((math.log(src.amplitude) - math.log(n_reg)) / src.sigma, 700.0))
        cuts.append(np.clip((rc - r0) / hw, 0.0, 1.0))
    else:
        rc = 0.0
    ts = np.sort(np.stack(cuts), axis=0)
    hfun = spec.h if n_reg is None else (lambda s: spec.h.truncated(n_reg, s))

    def G(t):
        uh = u[:-1] + t * np.diff(u)
        tk = T(k, w[:-1] + t * np.diff(w))
        with np.errstate(invalid="ignore"):
            val = hfun(np.maximum(uh, 0.0)) * tk
        return np.where(tk == 0, 0.0, val)

    rhs = 0.0
    A, s = src.amplitude, src.sigma
    for lo_t, hi_t in zip(ts[:-1], ts[1:]):
        ra, rb = r0 + lo_t * hw, r0 + hi_t * hw
        span = rb - ra
        ok = span > 0
        capped = (0.5 * (ra + rb)) < rc
        m0 = np.where(capped, n_reg * shell_integral(ra, rb, N) if n_reg else 0.0,
                      A * shell_integral(ra, rb, N - s))
        m1 = np.where(capped, n_reg * shell_integral(ra, rb, N + 1) if n_reg else 0.0,
                      A * shell_integral(ra, rb, N + 1 - s))
        ga, gb = G(lo_t), G(hi_t)
        with np.errstate(invalid="ignore", divide="ignore"):
            piece = ga * m0 + (gb - ga) * (m1 - ra * m0) / span
        rhs += float(np.sum(np.where(ok, piece, 0.0)))
    return EntropyTerms(lhs, omega * rhs)


def entropy_residual(field, spec, phi, k, *, n_reg=None, quadrature="scheme"):
    """LHS - RHS of the truncated entropy inequality (nonpositive for entropy solutions)."""
    return entropy_terms(field, spec, phi, k, n_reg=n_reg, quadrature=quadrature).residual


# Decay of superlevel sets --------------------------------------------------

@dataclass(frozen=True)
class LogDecayReport:
    exponent: float
    constants: tuple      # fitted c per continuation level
    spread: float         # relative spread of c over the last three levels

    @property
    def finite(self):
        return all(math.isfinite(c) for c in self.constants)

    @property
    def stable(self):
        return self.spread <= 0.1

    @property
    def passed(self):
        return self.finite and self.stable


def log_decay_check(fields, N, p, levels=None):
    """Smallest c with |{u_n >= k}| <= c / log(1+k)^(N(p-1)/(N-p)) over the levels, per field."""
    fields = list(fields)
    if len(fields) < 3:
        raise InsufficientData("need at least three continuation levels")
    if levels is None:
        levels = np.geomspace(1.0, 1e3, 31)
    levels = np.asarray(levels, dtype=float)
    if np.any(levels < 1):
        raise InvalidParameter("levels must be >= 1")
    e = N * (p - 1.0) / (N - p)
    weight = np.log1p(levels) ** e
    consts = tuple(float(np.max(distribution_function(f, levels, N) * weight)) for f in fields)
    last = consts[-3:]
    spread = (max(last) / min(last) - 1.0) if min(last) > 0 else (0.0 if max(last) == 0 else math.inf)
    return LogDecayReport(e, consts, spread)


# Boundedness ---------------------------------------------------------------

@dataclass(frozen=True)
class BoundReport:
    kind: str
    sup_u: float
    bound: float
    passed: bool


def bound_checks(field, spec, tol=1e-8):
    """sup u against the applicable bound: s_bar for the zero variant of h,
    0 for vanishing data, finiteness when f lies in L^m with m > N/p."""
    sup_u = float(np.max(field.values))
    if spec.h.is_zero_variant:
        bound = spec.h.s_bar
        return BoundReport("zero-variant", sup_u, bound, sup_u <= bound + tol)
    if spec.source.amplitude == 0:
        return BoundReport("zero-data", sup_u, 0.0, sup_u <= tol)
    if spec.source.sup_lebesgue_index(spec.dim_N) > spec.dim_N / spec.p:
        return BoundReport("bounded-data", sup_u, math.inf, math.isfinite(sup_u))
    raise NotApplicable("no boundedness statement for this data")
