"""Damped Newton for one regularization level and warm-started continuation
in the level n, plus the transformed (coercive) route."""

from dataclasses import dataclass, field, replace
import logging
import math

import numpy as np
from scipy.linalg import solve_banded

from .discretization import DiscreteField, RadialOperator, sphere_area, shell_integral
from .errors import DivergenceDetected, InvalidParameter, InvalidState, NonConvergence, SolverError
from .scalar import ComposedH, T, phi_forward, phi_inverse

log = logging.getLogger(__name__)

ENERGY_LEVELS = (1.0, 10.0, 100.0)
MIN_STEP = 2.0 ** -30
MAX_REL_CHANGE = 1.0
DEFAULT_SCHEDULE = tuple(2 ** j for j in range(4, 25))


@dataclass
class SolveDiagnostics:
    n_reg: float = None
    residual_norms: list = field(default_factory=list)   # 2-norm before each accepted step, then final
    damping: list = field(default_factory=list)
    converged: bool = False
    iterations: int = 0
    final_residual_inf: float = math.nan
    source_scale: float = math.nan


@dataclass
class LevelRecord:
    n: float
    newton: SolveDiagnostics
    energy_diffs: dict        # k -> d_k(n); empty at the first level
    sup_u: float
    active: tuple = ()        # levels k below sup u of both fields compared
    field: object = None      # the level's solution, kept only on request


@dataclass
class ContinuationDiagnostics:
    levels: list = field(default_factory=list)
    converged: bool = False
    diverged: bool = False
    divergence_level: int = None
    energy_levels: tuple = ENERGY_LEVELS

    def energy_series(self, k):
        return [lv.energy_diffs[k] for lv in self.levels[1:]]

    def sup_growth(self):
        """Ratios sup u_n / sup u_prev along the schedule."""
        sups = [lv.sup_u for lv in self.levels]
        return [b / a if a > 0 else math.inf for a, b in zip(sups, sups[1:])]

    def blowup_indicator(self, window=4, factor=2.0):
        """True when sup u grew by at least ``factor`` on each of the last ``window`` levels.

        Not part of the divergence signal; reported alongside it.
        """
        g = self.sup_growth()
        return len(g) >= window and all(x >= factor for x in g[-window:])

    @property
    def schedule(self):
        return [lv.n for lv in self.levels]

    def rows(self):
        """Flat per-Newton-step rows for diagnostics.csv."""
        out = []
        for j, lv in enumerate(self.levels):
            for it, (res, damp) in enumerate(zip(lv.newton.residual_norms, lv.newton.damping + [None])):
                row = {"level": j, "n": lv.n, "iteration": it, "residual_l2": res,
                       "damping": damp, "sup_u": lv.sup_u,
                       "converged": lv.newton.converged}
                for k in self.energy_levels:
                    row[f"d_{k:g}"] = lv.energy_diffs.get(k)
                out.append(row)
        return out


class _CoefficientPrimitive:
    """v = int_0^u (1+T_n(t))^(-theta) dt and its inverse.

    Newton runs in v: with the truncated coefficient this change of unknowns
    removes the degenerate coefficient from the continuous operator, so steps
    behave like those of a coercive problem. The discrete solution is unchanged.
    """

    def __init__(self, theta, n):
        self.theta = theta
        self.n = n
        self.vn = math.inf if n is None else float(phi_forward(theta, n))
        self.slope = 0.0 if n is None else (1.0 + n) ** (-theta)

    def forward(self, u):
        u = np.maximum(u, 0.0)
        if self.n is None:
            return phi_forward(self.theta, u)
        return np.where(u <= self.n, phi_forward(self.theta, np.minimum(u, self.n)),
                        self.vn + (u - self.n) * self.slope)

    def inverse(self, v):
        v = np.maximum(v, 0.0)
        if self.n is None:
            return phi_inverse(self.theta, v)
        return np.where(v <= self.vn, phi_inverse(self.theta, np.minimum(v, self.vn)),
                        self.n + (v - self.vn) / self.slope)

    def du_dv(self, u):
        t = u if self.n is None else np.minimum(u, self.n)
        return (1.0 + t) ** self.theta


def _banded_step(bands, R, idx, size):
    step = solve_banded((1, 1), bands, -R)
    if not np.all(np.isfinite(step)):
        raise FloatingPointError("non-finite Newton step")
    out = np.zeros(size)
    out[idx] = step
    return out


def _scale_columns(bands, s):
    out = bands.copy()
    out[0, 1:] *= s[1:]
    out[1] *= s
    out[2, :-1] *= s[:-1]
    return out


def _line_search(op, rnorm, x, dx, to_u, du_lin):
    """Backtracking (factor 1/2) on ||R||_2; None if no step found.

    Trials that change some nodal value by more than MAX_REL_CHANGE * (1 + |u|)
    are rejected before the residual is evaluated. Components that would turn negative are
    shortened individually to land on zero, so one node pinned near zero
    cannot stall the whole step.
    """
    u0 = to_u(x)
    with np.errstate(divide="ignore"):
        ratio = MAX_REL_CHANGE * (1.0 + np.abs(u0)) / np.abs(du_lin)
    t = float(min(1.0, np.min(ratio, initial=1.0)))
    while t >= MIN_STEP:
        tu = to_u(np.maximum(x + t * dx, 0.0))
        if not np.all(np.abs(tu - u0) <= MAX_REL_CHANGE * (1.0 + np.abs(u0))):
            t *= 0.5
            continue
        if np.all(np.isfinite(tu)):
            with np.errstate(all="ignore"):
                Rt = op.residual(tu)
            nt = float(np.linalg.norm(Rt))
            if np.isfinite(nt) and nt <= (1.0 - 1e-4 * t) * rnorm:
                return t, tu, Rt, nt
        t *= 0.5
    return None


def solve_regularized(spec, n_reg, init, tol=1e-10, *, max_iter=100, step_tol=1e-12,
                      flux_delta=1e-10):
    """Damped Newton solve of the level-``n_reg`` discrete problem.

    Converged when ||R||_inf <= tol (1 + ||Q||_inf) and the last Newton update is
    below ``step_tol`` relative to the field. Steps are halved until the 2-norm
    of the residual decreases, and shortened so no nodal value turns negative.
    Iterates are parametrized by the primitive of the (truncated) coefficient.
    """
    if not tol > 0:
        raise InvalidParameter("tol must be positive")
    if n_reg is not None and n_reg < 1:
        raise InvalidParameter("n_reg must be >= 1")
    mesh = init.mesh
    op = RadialOperator(spec, mesh, n_reg, flux_delta=flux_delta)
    u = init.values.copy()
    if not np.all(np.isfinite(u)):
        raise InvalidState("initial field contains non-finite values")
    u = np.maximum(u, 0.0)
    u[-1] = 0.0
    if not mesh.has_origin:
        u[0] = 0.0
    chart = _CoefficientPrimitive(spec.theta, n_reg)
    v = chart.forward(u)
    idx = op.idx
    diag = SolveDiagnostics(n_reg=n_reg)

    def fail(cls, msg):
        diag.residual_norms.append(rnorm)
        return cls(msg, diag, DiscreteField(mesh, u))

    R = op.residual(u)
    rnorm = float(np.linalg.norm(R))
    if not np.isfinite(rnorm):
        raise InvalidState("residual of the initial field is not finite")
    for it in range(max_iter + 1):
        qscale = op.source_scale(u)
        rinf = float(np.max(np.abs(R), initial=0.0))
        diag.final_residual_inf, diag.source_scale = rinf, qscale
        res_ok = rinf <= tol * (1.0 + qscale)
        if res_ok and rinf == 0.0:
            diag.residual_norms.append(rnorm)
            diag.converged = True
            break
        if it == max_iter:
            raise fail(NonConvergence, f"Newton did not converge in {max_iter} iterations "
                                       f"at level n={n_reg}")
        bands = op.jacobian_bands(u)
        try:
            with np.errstate(all="raise"):
                du_u = _banded_step(bands, R, idx, u.size)
                du_v = _banded_step(_scale_columns(bands, chart.du_dv(u[idx])), R, idx, u.size)
        except (np.linalg.LinAlgError, FloatingPointError, ValueError) as exc:
            raise fail(SolverError, f"singular Jacobian at level n={n_reg}: {exc}") from exc
        du_lin = du_v * chart.du_dv(u)
        small = float(np.max(np.abs(du_lin))) <= step_tol * (1.0 + float(np.max(np.abs(u))))
        if res_ok and small:
            v = np.maximum(v + du_v, 0.0)
            u = chart.inverse(v)
            R = op.residual(u)
            diag.residual_norms.append(rnorm)
            diag.damping.append(1.0)
            diag.iterations += 1
            diag.final_residual_inf = float(np.max(np.abs(R), initial=0.0))
            rnorm = float(np.linalg.norm(R))
            diag.residual_norms.append(rnorm)
            diag.converged = True
            break

        best = _line_search(op, rnorm, v, du_v, chart.inverse, du_lin)
        if best is None or best[0] < 0.125:
            alt = _line_search(op, rnorm, u, du_u, lambda w: w, du_u)
            if alt is not None and (best is None or alt[3] < best[3]):
                best = alt
        if best is None:
            if res_ok:
                # stagnation at roundoff once the residual test already holds
                diag.residual_norms.append(rnorm)
                diag.converged = True
                break
            raise fail(NonConvergence, f"line search failed at level n={n_reg}, iteration {it}")
        t, u, R, nt = best
        diag.residual_norms.append(rnorm)
        diag.damping.append(t)
        diag.iterations += 1
        v, rnorm = chart.forward(u), nt

    return DiscreteField(mesh, u), diag


def truncated_gradient_difference(a, b, k, p, N):
    """|| grad T_k(a) - grad T_k(b) ||_p with the radial measure."""
    mesh = a.mesh
    g = np.diff(T(k, a.values) - T(k, b.values)) / mesh.widths
    w = shell_integral(mesh.nodes[:-1], mesh.nodes[1:], N) * sphere_area(N)
    return float(np.sum(w * np.abs(g) ** p) ** (1.0 / p))


def solve_continuation(spec, mesh=None, schedule=DEFAULT_SCHEDULE, tol=1e-10, *, init=None,
                       energy_tol=1e-8, energy_levels=ENERGY_LEVELS, stop_when_converged=True,
                       raise_on_divergence=True, divergence_window=4, max_iter=100,
                       flux_delta=1e-10, keep_fields=False):
    """Warm-started solves along an increasing schedule of truncation levels.

    Convergence: every d_k(n) below ``energy_tol`` on two consecutive levels.
    Divergence: some d_k(n) above ``energy_tol`` and non-decreasing over
    ``divergence_window`` consecutive levels, counting only levels where k is
    below sup u of both compared fields.
    """
    schedule = list(schedule)
    if not schedule:
        raise InvalidParameter("schedule must be nonempty")
    if any(b <= a for a, b in zip(schedule, schedule[1:])):
        raise InvalidParameter("schedule must be strictly increasing")
    if init is None:
        if mesh is None:
            raise InvalidParameter("need a mesh or an initial field")
        init = DiscreteField.zeros(mesh)
    diag = ContinuationDiagnostics(energy_levels=tuple(energy_levels))
    prev = init
    quiet = 0
    for j, n in enumerate(schedule):
        try:
            cur, nd = solve_regularized(spec, n, prev, tol, max_iter=max_iter, flux_delta=flux_delta)
        except SolverError as exc:
            # keep the failed level's Newton history alongside the completed ones
            if isinstance(exc.diagnostics, SolveDiagnostics):
                sup_fail = float(exc.field.values.max()) if exc.field is not None else math.nan
                diag.levels.append(LevelRecord(n, exc.diagnostics, {}, sup_fail))
            exc.diagnostics = (diag, exc.diagnostics)
            raise
        diffs = {}
        active = ()
        sup_u = float(cur.values.max())
        if j > 0:
            for k in energy_levels:
                diffs[k] = truncated_gradient_difference(cur, prev, k, spec.p, spec.dim_N)
            active = tuple(k for k in energy_levels if k < min(sup_u, diag.levels[-1].sup_u))
        diag.levels.append(LevelRecord(n, nd, diffs, sup_u, active,
                                       cur if keep_fields else None))
        log.debug("level n=%g: %d Newton steps, d=%s", n, nd.iterations, diffs)
        prev = cur
        if j == 0:
            continue
        if all(d < energy_tol for d in diffs.values()):
            quiet += 1
        else:
            quiet = 0
        if quiet >= 2:
            diag.converged = True
            if stop_when_converged:
                break
        if _divergence_signal(diag, energy_levels, energy_tol, divergence_window):
            diag.diverged = True
            diag.divergence_level = j
            if raise_on_divergence:
                raise DivergenceDetected(
                    f"truncated energy differences non-decreasing over {divergence_window} levels "
                    f"(up to n={n})", diag, cur)
    return prev, diag


def _divergence_signal(diag, energy_levels, energy_tol, window):
    # A level k at or above sup u makes T_k the identity, so d_k then measures
    # the full (possibly infinite) energy; such values are not counted.
    recent = diag.levels[1:][-window:]
    if len(recent) < window:
        return False
    for k in energy_levels:
        if not all(k in lv.active for lv in recent):
            continue
        tail = [lv.energy_diffs[k] for lv in recent]
        if min(tail) > energy_tol and all(b >= a for a, b in zip(tail, tail[1:])):
            return True
    return False


def transform_solve(spec, mesh=None, schedule=DEFAULT_SCHEDULE, tol=1e-10, **kwargs):
    """Solve through v = Phi(u): -Delta_p v = f h(Phi^{-1}(v)), then map back.

    Returns (u field, continuation diagnostics of the v problem).
    """
    vspec = replace(spec, theta=0.0, h=ComposedH(spec.h, spec.theta))
    vfield, diag = solve_continuation(vspec, mesh, schedule, tol, **kwargs)
    u = phi_inverse(spec.theta, vfield.values)
    if not np.all(np.isfinite(u)):
        raise SolverError("transformed solution reaches the cap of Phi (u infinite)", diag, vfield)
    return DiscreteField(vfield.mesh, u), diag
