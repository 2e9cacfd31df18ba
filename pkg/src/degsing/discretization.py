"""Radial meshes, problem data and the vertex-centred finite-volume operator.

Unknowns live at mesh nodes. Node i owns the dual cell between the midpoints
of its two neighbouring intervals; the node at the origin (r_in = 0) owns a
half cell and carries a zero-flux condition, every other boundary node is a
homogeneous Dirichlet node.
"""

from dataclasses import dataclass, field
from functools import cached_property
import math

import numpy as np
from scipy.special import gammaln

from .errors import InvalidParameter, InvalidState
from .scalar import HModel

MIN_CELLS = 8


def sphere_area(N):
    """Surface measure of the unit sphere in R^N (real N allowed)."""
    return 2.0 * math.exp(0.5 * N * math.log(math.pi) - gammaln(0.5 * N))


def shell_integral(a, b, N):
    """int_a^b r^(N-1) dr."""
    return (np.power(b, N) - np.power(a, N)) / N


@dataclass(frozen=True)
class SourceSpec:
    """f(x) = amplitude * |x|^(-sigma)."""

    amplitude: float = 1.0
    sigma: float = 0.0

    def __post_init__(self):
        if self.amplitude < 0 or self.sigma < 0:
            raise InvalidParameter("source amplitude and singularity must be nonnegative")

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        with np.errstate(divide="ignore"):
            return self.amplitude * r ** (-self.sigma) if self.sigma else np.full_like(r, self.amplitude)

    def in_lebesgue(self, m, N):
        """Whether f belongs to L^m of the unit ball."""
        return self.amplitude == 0 or self.sigma * m < N

    def sup_lebesgue_index(self, N):
        return math.inf if self.sigma == 0 else N / self.sigma

    def cell_integrals(self, a, b, N, cap=None):
        """Exact int_a^b r^(N-1) min(f(r), cap) dr, cellwise."""
        a = np.asarray(a, dtype=float)
        b = np.asarray(b, dtype=float)
        A, s = self.amplitude, self.sigma
        if A == 0:
            return np.zeros_like(a)
        if not s < N:
            raise InvalidParameter("source must be integrable: need sigma < N")
        if cap is None or (s == 0 and A <= cap):
            return A * shell_integral(a, b, N - s)
        if s == 0:
            return cap * shell_integral(a, b, N)
        # f > cap exactly on r < rc; log form since rc overflows for tiny sigma
        rc = math.exp(min((math.log(A) - math.log(cap)) / s, 700.0))
        lo = np.clip(rc, a, b)
        return cap * shell_integral(a, lo, N) + A * shell_integral(lo, b, N - s)


@dataclass(frozen=True)
class ProblemSpec:
    """Radial boundary-value problem with the separable model operator
    a(s, xi) = |xi|^(p-2) xi / (1+s)^(theta(p-1))."""

    dim_N: float
    p: float
    theta: float
    h: HModel
    source: SourceSpec
    r_in: float = 0.0
    alpha: float = 1.0

    def __post_init__(self):
        if not 1 < self.p < self.dim_N:
            raise InvalidParameter(f"need 1 < p < N, got p={self.p}, N={self.dim_N}")
        if self.theta < 0:
            raise InvalidParameter("theta must be nonnegative")
        if not 0 <= self.r_in < 1:
            raise InvalidParameter("need 0 <= r_in < 1")
        if self.source.amplitude > 0 and not self.source.sigma < self.dim_N:
            raise InvalidParameter("source must be integrable: need sigma < N")


@dataclass(frozen=True, eq=False)
class RadialMesh:
    nodes: np.ndarray
    grading: float = 1.0

    def __post_init__(self):
        r = np.asarray(self.nodes, dtype=float)
        if r.ndim != 1 or r.size < 2 or np.any(np.diff(r) <= 0):
            raise InvalidParameter("mesh nodes must be strictly increasing")
        object.__setattr__(self, "nodes", r)

    @property
    def M(self):
        return self.nodes.size - 1

    @property
    def r_in(self):
        return float(self.nodes[0])

    @property
    def has_origin(self):
        return self.nodes[0] == 0.0

    @cached_property
    def midpoints(self):
        return 0.5 * (self.nodes[1:] + self.nodes[:-1])

    @cached_property
    def widths(self):
        return np.diff(self.nodes)

    @cached_property
    def dual_bounds(self):
        """(left, right) radii of each node's dual cell."""
        r = self.nodes
        left = np.concatenate(([r[0]], self.midpoints))
        right = np.concatenate((self.midpoints, [r[-1]]))
        return left, right

    def dual_volumes(self, N, weighted=True):
        left, right = self.dual_bounds
        v = shell_integral(left, right, N)
        return v * sphere_area(N) if weighted else v

    def interval_volumes(self, N, weighted=True):
        v = shell_integral(self.nodes[:-1], self.nodes[1:], N)
        return v * sphere_area(N) if weighted else v

    def domain_measure(self, N):
        return sphere_area(N) * (1.0 - self.r_in ** N) / N

    @cached_property
    def interior(self):
        """Indices of unknown nodes."""
        start = 0 if self.has_origin else 1
        return np.arange(start, self.M)

    def __eq__(self, other):
        return (isinstance(other, RadialMesh) and self.grading == other.grading
                and np.array_equal(self.nodes, other.nodes))

    def __hash__(self):
        return hash((self.nodes.tobytes(), self.grading))


def build_mesh(M, grading=1.0, r_in=0.0, *, min_cells=MIN_CELLS):
    """Nodes r_i = r_in + (1 - r_in) (i/M)^grading, i = 0..M."""
    if M < min_cells:
        raise InvalidParameter(f"need at least {min_cells} cells, got {M}")
    if grading < 1:
        raise InvalidParameter("grading exponent must be >= 1")
    if not 0 <= r_in < 1:
        raise InvalidParameter("need 0 <= r_in < 1")
    s = np.arange(M + 1) / M
    nodes = r_in + (1.0 - r_in) * s ** grading
    nodes[-1] = 1.0
    return RadialMesh(nodes, float(grading))


@dataclass(frozen=True, eq=False)
class DiscreteField:
    mesh: RadialMesh
    values: np.ndarray

    def __post_init__(self):
        u = np.asarray(self.values, dtype=float)
        if u.shape != self.mesh.nodes.shape:
            raise InvalidState("field and mesh sizes differ")
        object.__setattr__(self, "values", u)

    @property
    def r(self):
        return self.mesh.nodes

    def validate(self, atol=0.0):
        u = self.values
        if not np.all(np.isfinite(u)):
            raise InvalidState("field contains non-finite values")
        if u.min() < -atol:
            raise InvalidState(f"field is negative (min {u.min():.3e})")
        if u[-1] != 0 or (not self.mesh.has_origin and u[0] != 0):
            raise InvalidState("field violates the Dirichlet condition")
        return self

    def gradient(self):
        """Cellwise difference quotients on mesh intervals."""
        return np.diff(self.values) / self.mesh.widths

    def to_text(self):
        return "".join(f"{r:.17g} {u:.17g}\n" for r, u in zip(self.r, self.values))

    @classmethod
    def from_text(cls, text, grading=1.0):
        data = np.loadtxt(text.splitlines(), ndmin=2)
        return cls(RadialMesh(data[:, 0], grading), data[:, 1])

    @classmethod
    def interpolate(cls, mesh, fn, origin_value=None):
        """Nodal interpolant of fn, forced to zero on Dirichlet nodes."""
        r = mesh.nodes
        with np.errstate(divide="ignore", invalid="ignore"):
            u = np.array(fn(r), dtype=float)
        if mesh.has_origin and origin_value is not None:
            u[0] = origin_value
        u[-1] = 0.0
        if not mesh.has_origin:
            u[0] = 0.0
        return cls(mesh, u)

    @classmethod
    def zeros(cls, mesh):
        return cls(mesh, np.zeros(mesh.M + 1))

    @classmethod
    def constant(cls, mesh, c):
        """c at every unknown node, zero on Dirichlet nodes."""
        u = np.zeros(mesh.M + 1)
        u[mesh.interior] = c
        return cls(mesh, u)


@dataclass
class RadialOperator:
    """Finite-volume residual R(u) = -(F_{i+1/2} - F_{i-1/2}) - Q_i and its
    tridiagonal Jacobian for one truncation level.

    ``n_reg=None`` evaluates the untruncated limit problem.
    """

    spec: ProblemSpec
    mesh: RadialMesh
    n_reg: float = None
    flux_delta: float = 1e-10
    source_cells: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        N = self.spec.dim_N
        left, right = self.mesh.dual_bounds
        self.source_cells = self.spec.source.cell_integrals(left, right, N, cap=self.n_reg)
        self.face_weight = self.mesh.midpoints ** (N - 1)
        self.idx = self.mesh.interior

    # Flux pieces ---------------------------------------------------------
    def _phi(self, D):
        p = self.spec.p
        if p == 2:
            return D, np.ones_like(D)
        d2 = D * D + self.flux_delta ** 2
        val = d2 ** ((p - 2) / 2) * D
        der = d2 ** ((p - 4) / 2) * ((p - 1) * D * D + self.flux_delta ** 2)
        return val, der

    def _coef(self, ubar):
        e = self.spec.theta * (self.spec.p - 1)
        if e == 0:
            return np.ones_like(ubar), np.zeros_like(ubar)
        if self.n_reg is None:
            t, active = ubar, np.ones_like(ubar, dtype=bool)
        else:
            t = np.clip(ubar, -self.n_reg, self.n_reg)
            active = np.abs(ubar) < self.n_reg
        c = (1.0 + t) ** (-e)
        dc = np.where(active, -e * (1.0 + t) ** (-e - 1.0), 0.0)
        return c, dc

    def fluxes(self, u):
        D = np.diff(u) / self.mesh.widths
        ph, _ = self._phi(D)
        c, _ = self._coef(0.5 * (u[1:] + u[:-1]))
        return self.face_weight * ph * c

    def flux_coefficient_values(self, u):
        """a(u_bar, D) on each interval (flux without the radial weight)."""
        D = np.diff(u) / self.mesh.widths
        ph, _ = self._phi(D)
        c, _ = self._coef(0.5 * (u[1:] + u[:-1]))
        return ph * c

    def h_values(self, u):
        h = self.spec.h
        if self.n_reg is None:
            return h(u)
        return h.truncated(self.n_reg, u)

    def sources(self, u):
        with np.errstate(invalid="ignore"):
            q = self.h_values(u) * self.source_cells
        return np.where(self.source_cells == 0, 0.0, q)

    def full_residual(self, u):
        """Residual on every node (Dirichlet rows included, not meaningful there)."""
        F = self.fluxes(u)
        div = np.zeros_like(u)
        div[:-1] -= F
        div[1:] += F
        return div - self.sources(u)

    def residual(self, u):
        return self.full_residual(u)[self.idx]

    def jacobian_bands(self, u):
        """Banded (3, n) Jacobian of ``residual`` w.r.t. unknowns, scipy solve_banded layout."""
        dr = self.mesh.widths
        D = np.diff(u) / dr
        ph, dph = self._phi(D)
        c, dc = self._coef(0.5 * (u[1:] + u[:-1]))
        w = self.face_weight
        dF_right = w * (dph * c / dr + 0.5 * ph * dc)   # dF_{i+1/2}/du_{i+1}
        dF_left = w * (-dph * c / dr + 0.5 * ph * dc)   # dF_{i+1/2}/du_i
        n = u.size
        diag = np.zeros(n)
        upper = np.zeros(n)   # dR_i/du_{i+1}
        lower = np.zeros(n)   # dR_i/du_{i-1}
        # R_i = -F_{i+1/2} + F_{i-1/2} - Q_i
        diag[:-1] -= dF_left
        upper[:-1] -= dF_right
        diag[1:] += dF_right
        lower[1:] += dF_left
        h = self.spec.h
        if self.n_reg is None:
            dh = h.derivative(u)
        else:
            dh = h.truncated_derivative(self.n_reg, u)
        diag -= np.where(self.source_cells == 0, 0.0, dh * self.source_cells)
        idx = self.idx
        bands = np.zeros((3, idx.size))
        bands[0, 1:] = upper[idx][:-1]
        bands[1] = diag[idx]
        bands[2, :-1] = lower[idx][1:]
        return bands

    def source_scale(self, u):
        return float(np.max(np.abs(self.sources(u)[self.idx]), initial=0.0))


def assemble_residual(spec, n_reg, field):
    """Residual of the level-``n_reg`` discrete problem at every unknown node."""
    if n_reg is not None and n_reg < 1:
        raise InvalidParameter("n_reg must be >= 1")
    u = field.values
    if not np.all(np.isfinite(u)):
        raise InvalidState("field contains non-finite values")
    return RadialOperator(spec, field.mesh, n_reg).residual(u)
