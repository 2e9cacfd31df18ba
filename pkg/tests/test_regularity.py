import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from degsing.discretization import (DiscreteField, ProblemSpec, SourceSpec, build_mesh,
                                    sphere_area)
from degsing.errors import InsufficientData, InvalidParameter, InvalidTestFunction, NotApplicable
from degsing.oracles import exact_radial_solution, manufactured_solution
from degsing.regularity import (TestFunction, WindowPolicy, aux_check, bound_checks,
                                default_levels, distribution_function, entropy_residual,
                                entropy_terms, fit_energy_growth, fit_tail_exponent,
                                gradient_distribution, gradient_tail, log_decay_check,
                                resolution_floor, solution_tail, strong_singular_trace,
                                trace_power, truncated_energy)
from degsing.scalar import HModel
from degsing.scenarios import _sampled_exact, closed_form_truncated_energy
from degsing.solver import solve_continuation

EXACT = exact_radial_solution(3, 0.5, 0.5, 0.5)
BALL = 4 * math.pi / 3


@pytest.fixture(scope="module")
def sampled():
    return _sampled_exact(EXACT, build_mesh(4096, 2.0))


@pytest.fixture(scope="module")
def exact_solve():
    mesh = build_mesh(1024, 2.0)
    field, diag = solve_continuation(EXACT.problem(), mesh, raise_on_divergence=False)
    return field, diag.levels[-1].n


# Distribution functions ----------------------------------------------------

def test_constant_field_distribution():
    mesh = build_mesh(64)
    field = DiscreteField(mesh, np.full(65, 2.0))
    mu = distribution_function(field, [1.0, 1.999, 2.5], 3)
    assert mu[:2] == pytest.approx([BALL, BALL], rel=1e-14)
    assert mu[2] == 0.0


def test_exact_distribution_closed_form(sampled):
    k = np.array([1.0, 3.0, 10.0, 30.0])
    assert distribution_function(sampled, k, 3) == pytest.approx(BALL * (1 + k) ** -6.0, rel=1e-4)


def test_distribution_rejects_bad_levels(sampled):
    with pytest.raises(InvalidParameter):
        distribution_function(sampled, [2.0, 1.0], 3)
    with pytest.raises(InvalidParameter):
        gradient_distribution(sampled, [0.0, 1.0], 3)


@settings(deadline=None, max_examples=30)
@given(st.lists(st.floats(0.0, 50.0), min_size=9, max_size=40), st.floats(2.5, 6.0))
def test_distribution_non_increasing(vals, N):
    mesh = build_mesh(len(vals) - 1)
    field = DiscreteField(mesh, np.array(vals))
    levels = np.geomspace(1e-3, 60.0, 50)
    mu = distribution_function(field, levels, N)
    assert np.all(np.diff(mu) <= 1e-15)
    assert np.all(mu <= mesh.domain_measure(N) * (1 + 1e-12))
    g = gradient_distribution(field, levels, N)
    assert np.all(np.diff(g) <= 1e-15)


def test_linear_field_gradient_point_mass():
    mesh = build_mesh(32)
    field = DiscreteField.interpolate(mesh, lambda r: 3 * (1 - r))
    mu = gradient_distribution(field, [1.0, 2.999, 3.001, 5.0], 3)
    assert mu == pytest.approx([BALL, BALL, 0.0, 0.0], rel=1e-12)


def test_exact_gradient_distribution(sampled):
    # |u'| = r^-3/2 / 2 >= lam on r <= (2 lam)^-2/3, measure ~ lam^-2
    lam = np.array([30.0, 100.0])
    ref = BALL * (2 * lam) ** -2.0
    assert gradient_distribution(sampled, lam, 3) == pytest.approx(ref, rel=0.05)


# Tail fits -----------------------------------------------------------------

def test_fit_synthetic_power_law():
    k = np.geomspace(1, 1e4, 40)
    fit = fit_tail_exponent(k, 7 * k ** -3.0)
    assert fit.exponent == pytest.approx(3.0, rel=1e-12)
    assert fit.r_squared == pytest.approx(1.0)
    assert fit.window[0] >= 10.0 and fit.count >= 6


def test_fit_insufficient_data():
    k = np.geomspace(1, 100, 8)
    with pytest.raises(InsufficientData):
        fit_tail_exponent(k, k ** -2.0)
    with pytest.raises(InsufficientData):
        fit_tail_exponent(np.geomspace(1, 1e4, 40), np.zeros(40))
    with pytest.raises(InsufficientData):
        default_levels(0.5)


def test_fit_floor_removes_small_measures():
    k = np.geomspace(1, 1e4, 40)
    mu = k ** -2.0
    fit = fit_tail_exponent(k, mu, floor=1e-6)
    assert fit.window[1] <= 1e3 * (1 + 1e-12)
    fit0 = fit_tail_exponent(k, mu, policy=WindowPolicy(drop_decades=0.0))
    assert fit0.window[0] == 1.0


def test_exact_tails(sampled):
    sol = solution_tail(sampled, 3)
    grad = gradient_tail(sampled, 3)
    assert sol.exponent == pytest.approx(6.0, rel=0.05)
    assert grad.exponent == pytest.approx(2.0, rel=0.05)
    assert sol.exponent == pytest.approx(5.87306277943381, rel=1e-9)
    assert grad.exponent == pytest.approx(2.0008420695049773, rel=1e-9)
    assert 0 <= sol.r_squared <= 1


def test_resolution_floor():
    mesh = build_mesh(100)
    assert resolution_floor(mesh, 3) == pytest.approx(BALL * 0.1 ** 3, rel=1e-12)


# Energies ------------------------------------------------------------------

def test_truncated_energy_saturates_above_sup():
    mesh = build_mesh(64)
    field = DiscreteField.interpolate(mesh, lambda r: 1 - r * r)
    full = sphere_area(3) * 4 / 5          # int_0^1 r^2 (2r)^2 dr = 4/5
    assert truncated_energy(field, 2.0, 2.0, 3) == pytest.approx(full, rel=1e-3)
    assert truncated_energy(field, 2.0, 2.0, 3) == truncated_energy(field, 5.0, 2.0, 3)


@pytest.mark.parametrize("k", [0.5, 1.0, 10.0, 100.0])
def test_truncated_energy_closed_form(sampled, k):
    assert truncated_energy(sampled, k, 2.0, 3) == pytest.approx(
        closed_form_truncated_energy(EXACT, k), rel=1e-3)


def test_truncated_energy_non_decreasing(sampled):
    E = [truncated_energy(sampled, k, 2.0, 3) for k in np.geomspace(0.01, 1e4, 40)]
    assert np.all(np.diff(E) >= 0)


def test_truncated_energy_grows_logarithmically(sampled):
    # E(k) = 2 pi log(1 + k) for this instance, so the fitted power is far below 1
    k = np.geomspace(10, 300, 20)
    eta = fit_energy_growth(sampled, k, 2.0, 3)
    assert 0.15 < eta < 0.35
    assert closed_form_truncated_energy(EXACT, 100.0) == pytest.approx(
        2 * math.pi * math.log(101.0), rel=1e-12)


def test_aux_check_exact(sampled):
    rep = aux_check(sampled, 2.0, 3)
    assert rep.passed
    assert rep.eta == pytest.approx(0.2431516788342, rel=1e-6)


def test_aux_check_synthetic_near_equality():
    mesh = build_mesh(4096, 2.0)
    field = DiscreteField.interpolate(mesh, lambda r: 1 / r - 1, origin_value=1 / mesh.nodes[1] - 1)
    rep = aux_check(field, 2.0, 3)
    assert rep.eta == pytest.approx(1.0, rel=0.01)
    assert rep.measured_t == pytest.approx(rep.predicted_t, rel=0.02)
    assert rep.measured_r == pytest.approx(rep.predicted_r, rel=0.02)


def test_aux_check_bounded_not_applicable():
    field = DiscreteField.interpolate(build_mesh(256), lambda r: 5 * (1 - r * r))
    with pytest.raises(NotApplicable):
        aux_check(field, 2.0, 3)


# Entropy inequality --------------------------------------------------------

def test_test_function_family():
    mesh = build_mesh(16)
    field = DiscreteField.interpolate(mesh, lambda r: 4 * (1 - r))
    assert np.all(TestFunction().values(field) == 0)
    assert np.max(TestFunction("truncation", 0.5, 1.0).values(field)) == 0.5
    assert TestFunction("bump", 2.0).values(field)[0] == 2.0
    with pytest.raises(InvalidTestFunction):
        TestFunction("spike")
    with pytest.raises(InvalidTestFunction):
        TestFunction("truncation", 1.0, 0.0)


def test_entropy_rejects_boundary_violation():
    mesh = build_mesh(16)
    field = DiscreteField.interpolate(mesh, lambda r: 1 - r)
    spec = manufactured_solution(3).problem()
    with pytest.raises(InvalidTestFunction):
        entropy_residual(field, spec, np.ones(17), 1.0)
    with pytest.raises(InvalidParameter):
        entropy_residual(field, spec, TestFunction(), 0.0)
    with pytest.raises(InvalidParameter):
        entropy_residual(field, spec, TestFunction(), 1.0, quadrature="simpson")


@pytest.mark.parametrize("k", [0.1, 1.0, 10.0])
def test_entropy_zero_phi_discrete_balance(exact_solve, k):
    field, n = exact_solve
    t = entropy_terms(field, EXACT.problem(), TestFunction(), k, n_reg=n)
    assert t.residual <= 1e-6 * t.scale
    assert abs(t.residual) <= 1e-9 * t.scale


@pytest.mark.parametrize("phi", [TestFunction(), TestFunction("truncation", 0.5, 1.0),
                                 TestFunction("bump", 0.5)])
@pytest.mark.parametrize("k", [0.1, 1.0, 10.0])
def test_entropy_manufactured(phi, k):
    ms = manufactured_solution(3)
    spec = ms.problem()
    field, diag = solve_continuation(spec, build_mesh(512))
    n = diag.levels[-1].n
    assert entropy_residual(field, spec, phi, k, n_reg=n) <= 1e-8
    # the reconstruction of the exact interpolant is a discretization of the identity
    t = entropy_terms(field, spec, phi, k, n_reg=n, quadrature="reconstruction")
    assert abs(t.residual) <= 1e-4 * t.scale


@pytest.mark.parametrize("phi", [TestFunction("truncation", 0.5, 1.0), TestFunction("bump", 0.5)])
def test_entropy_reconstruction_trend(phi):
    vals = []
    for M in (256, 1024):
        mesh = build_mesh(M, 2.0)
        field, diag = solve_continuation(EXACT.problem(), mesh, raise_on_divergence=False)
        t = entropy_terms(field, EXACT.problem(), phi, 1.0, n_reg=diag.levels[-1].n,
                          quadrature="reconstruction")
        vals.append(abs(t.residual) / t.scale)
    assert vals[1] < vals[0]
    assert vals[1] <= 1.0 / 1024


def test_entropy_scheme_quadrature_matches_weak_form():
    # with phi = 0 and k above sup u, LHS is the discrete energy (midpoint weights), RHS the work
    ms = manufactured_solution(3)
    spec = ms.problem()
    field, _ = solve_continuation(spec, build_mesh(128))
    t = entropy_terms(field, spec, TestFunction(), 10.0, n_reg=10 ** 6)
    energy = truncated_energy(field, 10.0, 2.0, 3)
    assert t.lhs == pytest.approx(energy, rel=1e-4)
    assert t.lhs == pytest.approx(t.rhs, rel=1e-12)


# Log decay -----------------------------------------------------------------

def test_log_decay_exact_family():
    mesh = build_mesh(1024, 2.0)
    _, diag = solve_continuation(EXACT.problem(), mesh, keep_fields=True,
                                 raise_on_divergence=False)
    rep = log_decay_check([lv.field for lv in diag.levels], 3, 2.0)
    assert rep.exponent == 3.0
    assert rep.finite and rep.stable


def test_log_decay_bounded_trivial():
    mesh = build_mesh(64)
    fields = [DiscreteField.interpolate(mesh, lambda r, c=c: c * (1 - r)) for c in (0.5, 0.6, 0.7)]
    rep = log_decay_check(fields, 3, 2.0)
    assert rep.constants == (0.0, 0.0, 0.0)
    assert rep.passed


def test_log_decay_needs_three_levels():
    mesh = build_mesh(16)
    with pytest.raises(InsufficientData):
        log_decay_check([DiscreteField.zeros(mesh)] * 2, 3, 2.0)


# Bounds ----------------------------------------------------------------------

def test_bound_zero_variant():
    spec = ProblemSpec(3, 2, 3.0, HModel(0.0, 0.0, s_bar=2.0), SourceSpec(100.0))
    field, _ = solve_continuation(spec, build_mesh(256))
    rep = bound_checks(field, spec)
    assert rep.kind == "zero-variant" and rep.passed
    assert rep.sup_u <= 2 + 1e-8


def test_bound_zero_data():
    spec = ProblemSpec(3, 2, 0.5, HModel(0.5, 0.5), SourceSpec(0.0))
    field, _ = solve_continuation(spec, build_mesh(64), [4, 8, 16])
    rep = bound_checks(field, spec)
    assert rep.kind == "zero-data" and rep.passed and rep.sup_u == 0.0


def test_bound_bounded_data_refinement():
    spec = ProblemSpec(3, 2, 0.5, HModel(0.0, 0.5), SourceSpec(10.0, 1.0))
    sups = []
    for M in (512, 1024):
        field, _ = solve_continuation(spec, build_mesh(M, 2.0))
        rep = bound_checks(field, spec)
        assert rep.kind == "bounded-data" and rep.passed
        sups.append(rep.sup_u)
    assert abs(sups[1] - sups[0]) <= 0.01 * sups[1]


def test_bound_not_applicable():
    with pytest.raises(NotApplicable):
        bound_checks(DiscreteField.zeros(build_mesh(16)), EXACT.problem())


# Strongly singular trace ----------------------------------------------------

@pytest.mark.parametrize("g1, p, q", [(2.0, 2.0, 1.5), (1.0 + 1e-12, 2.0, 1.0), (3.0, 1.5, 7 / 3)])
def test_trace_power(g1, p, q):
    assert trace_power(g1, p) == pytest.approx(q, rel=1e-10)


def test_trace_not_applicable():
    with pytest.raises(NotApplicable):
        trace_power(1.0, 2.0)


def test_trace_reduces_to_energy_near_one():
    mesh = build_mesh(256)
    field = DiscreteField.interpolate(mesh, lambda r: 3 * (1 - r * r))
    spec = ProblemSpec(3, 2, 0.0, HModel(1.0 + 1e-9, 0.0), SourceSpec(1.0))
    assert strong_singular_trace(field, spec, 1.0) == pytest.approx(
        truncated_energy(field, 1.0, 2.0, 3), rel=1e-6)


def test_strong_singular_refinement():
    spec = ProblemSpec(3, 2, 0.0, HModel(2.0, 2.0), SourceSpec(1.0))
    traces, energies = [], []
    for M in (1024, 4096):
        field, _ = solve_continuation(spec, build_mesh(M), raise_on_divergence=False)
        traces.append(strong_singular_trace(field, spec, 1.0))
        energies.append(truncated_energy(field, 1.0, 2.0, 3))
    assert traces[1] / traces[0] == pytest.approx(1.0, rel=0.1)
    assert traces[1] / traces[0] == pytest.approx(1.00110605229453, rel=1e-6)
    assert energies[1] > energies[0]
