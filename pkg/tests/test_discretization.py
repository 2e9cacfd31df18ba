import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from degsing.discretization import (DiscreteField, ProblemSpec, RadialOperator, SourceSpec,
                                    assemble_residual, build_mesh, shell_integral, sphere_area)
from degsing.errors import CriticalCaseError, InvalidParameter, InvalidState
from degsing.oracles import exact_radial_solution, manufactured_solution
from degsing.scalar import HModel


@pytest.mark.parametrize("N, area", [(2, 2 * math.pi), (3, 4 * math.pi), (4, 2 * math.pi ** 2)])
def test_sphere_area(N, area):
    assert sphere_area(N) == pytest.approx(area, rel=1e-14)


def test_mesh_nodes():
    assert build_mesh(4, 1.0, min_cells=1).nodes == pytest.approx([0, 0.25, 0.5, 0.75, 1])
    assert build_mesh(2, 2.0, min_cells=1).nodes == pytest.approx([0, 0.25, 1])
    assert build_mesh(8, 1.0, 0.5).nodes[0] == 0.5


@pytest.mark.parametrize("M, g, r_in", [(4, 1.0, 0.0), (16, 0.5, 0.0), (16, 1.0, 1.0)])
def test_mesh_rejects_bad_input(M, g, r_in):
    with pytest.raises(InvalidParameter):
        build_mesh(M, g, r_in)


@given(st.integers(8, 400), st.floats(1.0, 4.0), st.floats(0.0, 0.9), st.floats(2.1, 6.0))
def test_volumes_sum_to_domain_measure(M, g, r_in, N):
    mesh = build_mesh(M, g, r_in)
    total = sphere_area(N) * (1 - r_in ** N) / N
    assert np.all(np.diff(mesh.nodes) > 0)
    assert mesh.domain_measure(N) == pytest.approx(total, rel=1e-12)
    assert np.sum(mesh.interval_volumes(N)) == pytest.approx(total, rel=1e-12)
    assert np.sum(mesh.dual_volumes(N)) == pytest.approx(total, rel=1e-12)


@pytest.mark.parametrize("A, s, cap", [(2.0, 0.0, None), (0.375, 2.5, None), (0.375, 2.5, 64.0),
                                       (5.0, 1.0, 3.0), (1.0, 0.0, 0.5)])
def test_source_quadrature(A, s, cap):
    from scipy.integrate import quad
    src = SourceSpec(A, s)
    N = 3.0
    a = np.array([0.0, 0.01, 0.3])
    b = np.array([0.01, 0.3, 1.0])
    got = src.cell_integrals(a, b, N, cap)
    for lo, hi, val in zip(a, b, got):
        fn = (lambda r: r ** (N - 1) * min(A * r ** -s, cap)) if cap else (
            lambda r: r ** (N - 1) * A * r ** -s)
        ref, _ = quad(fn, lo, hi, points=[(A / cap) ** (1 / s)] if cap and s else None,
                      epsabs=1e-14, epsrel=1e-12)
        assert val == pytest.approx(ref, rel=1e-9, abs=1e-15)


def test_source_lebesgue_membership():
    src = SourceSpec(1.0, 2.5)
    assert src.in_lebesgue(1.19, 3) and not src.in_lebesgue(1.2, 3)
    assert src.sup_lebesgue_index(3) == 1.2
    with pytest.raises(InvalidParameter):
        SourceSpec(-1.0)


def test_problem_spec_validation():
    with pytest.raises(InvalidParameter):
        ProblemSpec(3, 3, 0.0, HModel(), SourceSpec())
    with pytest.raises(InvalidParameter):
        ProblemSpec(3, 2, 0.0, HModel(), SourceSpec(1.0, 3.0))


def test_zero_data_zero_residual():
    spec = ProblemSpec(3, 2, 0.5, HModel(0.0, 0.5), SourceSpec(0.0))
    field = DiscreteField.zeros(build_mesh(32))
    assert np.all(assemble_residual(spec, 16, field) == 0.0)


@pytest.mark.parametrize("N", [3, 4.5, 5])
def test_manufactured_interpolant_is_discrete_solution(N):
    ms = manufactured_solution(N)
    for M in (16, 64, 256):
        field = DiscreteField.interpolate(build_mesh(M), ms)
        assert np.max(np.abs(assemble_residual(ms.problem(), 10 ** 6, field))) < 1e-13


def test_exact_radial_residual_decreases():
    ex = exact_radial_solution(3, 0.5, 0.5, 0.5)
    norms = []
    for M in (256, 1024, 4096):
        mesh = build_mesh(M, 2.0)
        field = DiscreteField.interpolate(mesh, ex, origin_value=float(ex(mesh.nodes[1])))
        norms.append(np.max(np.abs(assemble_residual(ex.problem(), None, field)[1:])))
    assert norms[0] > norms[1] > norms[2]
    assert norms[2] < 1e-5


def test_residual_rejects_nonfinite():
    mesh = build_mesh(16)
    u = np.zeros(17)
    u[3] = np.nan
    with pytest.raises(InvalidState):
        assemble_residual(manufactured_solution(3).problem(), 4, DiscreteField(mesh, u))


specs = st.builds(
    lambda N, p, theta, g1, g2, A, s, g: (
        ProblemSpec(N, p, theta, HModel(g1, g2), SourceSpec(A, s * N)), g),
    st.floats(2.5, 5.0), st.floats(1.3, 2.4), st.floats(0.0, 2.0), st.floats(0.0, 0.9),
    st.floats(0.0, 2.0), st.floats(0.1, 5.0), st.floats(0.0, 0.9), st.floats(1.0, 2.5))


@settings(deadline=None, max_examples=40)
@given(specs, st.integers(8, 64), st.sampled_from([None, 4, 1024]), st.integers(0, 2 ** 31))
def test_flux_telescoping(spec_g, M, n_reg, seed):
    spec, g = spec_g
    mesh = build_mesh(M, g)
    u = np.random.default_rng(seed).uniform(0.1, 5.0, M + 1)
    u[-1] = 0.0
    op = RadialOperator(spec, mesh, n_reg)
    R = op.residual(u)
    F = op.fluxes(u)
    Q = op.sources(u)[op.idx]
    lhs = np.sum(R)
    rhs = -F[-1] - np.sum(Q)
    assert lhs == pytest.approx(rhs, rel=1e-12, abs=1e-12 * (np.sum(np.abs(F)) + np.sum(np.abs(Q))))


@settings(deadline=None, max_examples=40)
@given(specs, st.sampled_from([None, 3, 1000]), st.integers(0, 2 ** 31))
def test_jacobian_matches_finite_differences(spec_g, n_reg, seed):
    spec, g = spec_g
    mesh = build_mesh(12, g)
    rng = np.random.default_rng(seed)
    u = np.sort(rng.uniform(0.2, 6.0, 13))[::-1].copy()
    u[-1] = 0.0
    op = RadialOperator(spec, mesh, n_reg)
    bands = op.jacobian_bands(u)
    idx = op.idx
    n = idx.size
    J = np.zeros((n, n))
    for j in range(n):
        J[j, j] = bands[1, j]
        if j + 1 < n:
            J[j, j + 1] = bands[0, j + 1]
            J[j + 1, j] = bands[2, j]
    for j, node in enumerate(idx):
        step = 1e-7 * max(1.0, abs(u[node]))
        up, um = u.copy(), u.copy()
        up[node] += step
        um[node] -= step
        fd = (op.residual(up) - op.residual(um)) / (2 * step)
        if n_reg is not None and (np.any(np.abs(up - n_reg) < 2 * step) or
                                  np.any(spec.h.truncated(n_reg, [up[node], um[node]]) >= n_reg)):
            continue  # kink of a truncation inside the stencil
        scale = np.max(np.abs(fd)) + 1e-12
        assert np.max(np.abs(J[:, j] - fd)) <= 1e-5 * scale


def test_text_round_trip():
    mesh = build_mesh(33, 2.0)
    field = DiscreteField(mesh, np.linspace(1.0, 0.0, 34) ** 3 * math.pi)
    back = DiscreteField.from_text(field.to_text())
    assert np.array_equal(back.values, field.values)
    assert np.array_equal(back.r, field.r)
    first = field.to_text().splitlines()[1].split()
    assert len(first) == 2


def test_field_validation():
    mesh = build_mesh(8)
    good = DiscreteField.constant(mesh, 2.0)
    assert good.validate() is good
    with pytest.raises(InvalidState):
        DiscreteField(mesh, -np.ones(9)).validate()
    with pytest.raises(InvalidState):
        DiscreteField(mesh, np.ones(9)).validate()
    with pytest.raises(InvalidState):
        DiscreteField(mesh, np.ones(5))


def test_annulus_constant_keeps_inner_dirichlet():
    field = DiscreteField.constant(build_mesh(8, 1.0, 0.25), 3.0)
    assert field.values[0] == 0.0 and field.values[-1] == 0.0


# Oracles -----------------------------------------------------------------

def test_exact_radial_parameters():
    ex = exact_radial_solution(3, 0.5, 0.5, 0.5)
    assert ex.alpha == -0.5
    assert ex.amplitude == pytest.approx(0.375, rel=1e-15)


@given(st.floats(3.0, 8.0), st.floats(0.0, 2.0), st.floats(0.0, 2.0), st.floats(0.05, 0.95))
def test_exact_radial_exponent_identity(N, theta, g2, eps_frac):
    eps = eps_frac * (N - 2)
    den = 1 - theta + g2
    if abs(den) < 1e-3 or (2 + eps - N) / den > 0:
        return
    try:
        ex = exact_radial_solution(N, theta, g2, eps)
    except InvalidParameter:
        return
    a = ex.alpha
    assert a * (1 - theta) - 2 == pytest.approx(-(N - eps) - a * g2, abs=1e-10)


@pytest.mark.parametrize("N, theta, g2, eps", [(3, 0.5, 0.5, 0.5), (3, 0.5, 0.5, 0.25),
                                               (4, 0.2, 1.0, 1.0), (5, 1.0, 0.5, 1.5)])
def test_exact_radial_satisfies_equation(N, theta, g2, eps):
    # -(flux)' / r^(N-1) against C r^-(N-eps) (1+u)^-gamma2, by high-order differences
    ex = exact_radial_solution(N, theta, g2, eps)
    r = np.linspace(0.1, 0.9, 17)
    hstep = 1e-3 * r
    d = (-ex.flux(r + 2 * hstep) + 8 * ex.flux(r + hstep) - 8 * ex.flux(r - hstep)
         + ex.flux(r - 2 * hstep)) / (12 * hstep)
    lhs = -d / r ** (N - 1)
    rhs = ex.amplitude * r ** -(N - eps) * (1 + ex(r)) ** -g2
    assert lhs == pytest.approx(rhs, rel=1e-9)
    # the flux helper agrees with r^(N-1) u' (1+u)^-theta
    direct = r ** (N - 1) * ex.gradient(r) * (1 + ex(r)) ** -theta
    assert ex.flux(r) == pytest.approx(direct, rel=1e-13)


def test_exact_radial_errors():
    with pytest.raises(CriticalCaseError):
        exact_radial_solution(3, 1.5, 0.5, 0.5)
    with pytest.raises(InvalidParameter):
        exact_radial_solution(3, 2.0, 0.5, 0.5)   # alpha > 0
    zero = exact_radial_solution(3, 0.5, 0.5, 1.0)
    assert zero.alpha == 0 and zero.amplitude == 0


def test_exact_superlevel_measure():
    ex = exact_radial_solution(3, 0.5, 0.5, 0.5)
    k = np.array([1.0, 10.0])
    assert ex.superlevel_measure(k) == pytest.approx(4 * math.pi / 3 * (1 + k) ** -6.0)


@pytest.mark.parametrize("N, f", [(3, 6.0), (5, 10.0)])
def test_manufactured_source(N, f):
    ms = manufactured_solution(N)
    assert ms.source_value == f
    assert ms(1.0) == 0.0
    with pytest.raises(InvalidParameter):
        manufactured_solution(N, p=3)
