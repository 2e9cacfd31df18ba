"""Scenario pipelines: build the problem from a config, solve, analyse, emit check rows."""

from dataclasses import dataclass, field as dc_field
import math
import random

import numpy as np

from .config import ExperimentConfig
from .discretization import DiscreteField, ProblemSpec, SourceSpec, build_mesh
from .errors import InsufficientData, NotApplicable, RegimeError
from .exponents import (ParameterSet, atlas_row, classify_regime, existence_threshold,
                        lebesgue_regularity, marcinkiewicz_exponents, radial_exponents,
                        uniqueness_min_m)
from .oracles import exact_radial_solution, manufactured_solution
from .regularity import (TestFunction, aux_check, bound_checks, entropy_terms, gradient_tail,
                         log_decay_check, solution_tail, strong_singular_trace, truncated_energy)
from .report import CheckRow, lower_check, rel_check, upper_check
from .scalar import HModel
from .solver import solve_continuation, transform_solve


@dataclass
class ScenarioResult:
    rows: list
    field: DiscreteField = None
    diagnostics: list = dc_field(default_factory=list)   # (label, ContinuationDiagnostics)
    summary: dict = dc_field(default_factory=dict)       # scalar values for sweep summaries
    tables: dict = dc_field(default_factory=dict)        # file name -> (fieldnames, rows)


def make_spec(c):
    h = HModel(c["problem.gamma1"], c["problem.gamma2"], c["problem.c_h"], c["problem.s_bar"])
    return ProblemSpec(c["problem.N"], c["problem.p"], c["problem.theta"], h,
                       SourceSpec(c["problem.amplitude"], c["problem.sigma"]))


def continuation(c, spec, mesh, **kw):
    opts = dict(schedule=c["solver.schedule"], tol=c["solver.tol"],
                energy_tol=c["solver.energy_tol"], max_iter=c["solver.max_iter"],
                divergence_window=c["solver.window"],
                stop_when_converged=c["solver.stop_when_converged"],
                raise_on_divergence=False)
    opts.update(kw)
    return solve_continuation(spec, mesh, **opts)


def _mesh(c, M=None):
    return build_mesh(M or c["mesh.M"], c["mesh.grading"])


def _exact(c):
    return exact_radial_solution(c["problem.N"], c["problem.theta"], c["problem.gamma2"],
                                 c["problem.epsilon"])


def _outer_rel_error(field, exact, r_min):
    r = field.r
    sel = (r >= r_min) & (r < 1.0)
    ue = exact(r[sel])
    return float(np.max(np.abs(field.values[sel] - ue) / ue))


def _sampled_exact(exact, mesh):
    return DiscreteField.interpolate(mesh, exact, origin_value=float(exact(mesh.nodes[1])))


def _marcinkiewicz(c):
    try:
        return marcinkiewicz_exponents(c["problem.N"], c["problem.p"], c["problem.theta"],
                                       c["problem.gamma2"])
    except RegimeError:
        return None


def _discrete_tail_rows(s, c, fld):
    """Measured tails of a discrete solution against the L^1-data indices (one-sided)."""
    tr = _marcinkiewicz(c)
    if tr is None:
        return []
    N, slack = c["problem.N"], c["check.slack"]
    rows = []
    for name, fit, bound in (("solution-tail>=t", solution_tail, tr[0]),
                             ("gradient-tail>=r", gradient_tail, tr[1])):
        try:
            rows.append(lower_check(s, name, bound, fit(fld, N).exponent, slack))
        except InsufficientData as exc:
            rows.append(CheckRow(s, name, bound, f"insufficient-data: {exc}",
                                 f"one-sided {slack!r}", False))
    return rows


# Scenarios ---------------------------------------------------------------

def run_exact_radial(c):
    s = c.scenario
    ex = _exact(c)
    mesh = _mesh(c)
    fld, diag = continuation(c, ex.problem(), mesh)
    rows = []
    if ex.alpha == 0:
        err = float(np.max(np.abs(fld.values)))
        rows.append(upper_check(s, "max-abs-error(u=0)", c["check.bound_tol"], err))
        return ScenarioResult(rows, fld, [("direct", diag)], {"max_abs_error": err})
    err = _outer_rel_error(fld, ex, c["check.r_min"])
    rows.append(upper_check(s, f"max-rel-error(r>={c['check.r_min']!r})", c["check.rel_error"], err))
    rex = radial_exponents(ex.dim_N, ex.theta, ex.gamma2, ex.epsilon)
    sampled = _sampled_exact(ex, mesh)
    sol = solution_tail(sampled, ex.dim_N).exponent
    grad = gradient_tail(sampled, ex.dim_N).exponent
    rows.append(rel_check(s, "exact-solution-tail", rex.sol_tail, sol, c["check.tail_tol"]))
    rows.append(rel_check(s, "exact-gradient-tail", rex.grad_tail, grad, c["check.tail_tol"]))
    rows += _discrete_tail_rows(s, c, fld)
    return ScenarioResult(rows, fld, [("direct", diag)],
                          {"max_rel_error": err, "solution_tail": sol, "gradient_tail": grad})


def midpoint_error(fld, exact):
    """Max error of the piecewise-linear reconstruction, sampled at nodes and midpoints."""
    mid = 0.5 * (fld.values[1:] + fld.values[:-1])
    e_mid = np.abs(mid - exact(fld.mesh.midpoints))
    return float(max(np.max(e_mid), np.max(np.abs(fld.values - exact(fld.r)))))


def convergence_order(Ms, errors):
    slope, _ = np.polyfit(np.log(Ms), np.log(errors), 1)
    return float(-slope)


def run_manufactured(c):
    s = c.scenario
    ms = manufactured_solution(c["problem.N"], c["problem.p"])
    spec = ms.problem()
    fld, diag = continuation(c, spec, _mesh(c))
    nodal = float(np.max(np.abs(fld.values - ms(fld.r))))
    rows = [upper_check(s, "nodal-max-error", c["check.max_error"], nodal)]
    Ms = list(c["check.order_meshes"])
    errs = [midpoint_error(continuation(c, spec, _mesh(c, M))[0], ms) for M in Ms]
    order = convergence_order(Ms, errs)
    ok = abs(order - c["check.order"]) <= c["check.order_tol"]
    rows.append(CheckRow(s, "convergence-order", c["check.order"], order,
                         f"abs {c['check.order_tol']!r}", ok))
    return ScenarioResult(rows, fld, [("direct", diag)],
                          {"nodal_error": nodal, "order": order,
                           **{f"error_M{M}": e for M, e in zip(Ms, errs)}})


def random_admissible(rng):
    """(N, p, theta, gamma2) with 1.05 <= p <= 0.9 N and theta inside the L^1 range."""
    N = rng.choice([2, 3, 4, 5, 6, 8, 10])
    p = rng.uniform(1.05, 0.9 * N)
    g2 = rng.uniform(0.0, 3.0)
    lo = max(0.0, (g2 - 1.0) / (p - 1.0))
    thr = existence_threshold(p, g2)
    theta = rng.uniform(lo, lo + 0.99 * (thr - lo))
    return float(N), p, theta, g2


def continuity_gap(N, p, theta, g2, dm=1e-8):
    """Largest relative gap between L^m exponents at m = 1 + dm and the L^1 indices."""
    t, r = marcinkiewicz_exponents(N, p, theta, g2)
    reg = lebesgue_regularity(N, p, theta, g2, 1.0 + dm)
    gaps = [abs(reg.sol_exp - t) / t]
    if reg.grad_exp is not None:
        gaps.append(abs(reg.grad_exp - r) / r)
    return max(gaps)


def run_exponent_atlas(c):
    s = c.scenario
    N, p, theta, g1, g2, m = (c["problem.N"], c["problem.p"], c["problem.theta"],
                              c["problem.gamma1"], c["problem.gamma2"], c["problem.m"])
    params = ParameterSet(N, p, theta, g1, g2, m)
    rep = classify_regime(params)
    row = atlas_row(params)
    rows = [CheckRow(s, "existence-classification", rep.theta_max, theta, "theta <= theta_max",
                     rep.existence_ok == (theta <= rep.theta_max + 1e-12))]
    if rep.marc_t is not None and rep.marc_r is not None:
        rows.append(CheckRow(s, "gradient-index<solution-index", rep.marc_t, rep.marc_r,
                             "strict", rep.marc_r < rep.marc_t))
        if g1 <= 1:
            gap = continuity_gap(N, p, theta, g2)
            rows.append(upper_check(s, "continuity(m=1+1e-8)", c["check.continuity_tol"], gap))
    if p == 2 and g2 == 0 and rep.existence_ok:
        closed = N / (N - theta * (N - 2))
        rows.append(upper_check(s, "uniqueness-threshold-closed-form", 1e-15,
                                abs(uniqueness_min_m(N, p, theta, g2) - closed) / closed))
    if c["check.random_points"] > 0:
        rng = random.Random(c["seed"])
        gap = max(continuity_gap(*random_admissible(rng))
                  for _ in range(c["check.random_points"]))
        rows.append(upper_check(s, f"random-continuity({c['check.random_points']})",
                                c["check.continuity_tol"], gap))
    return ScenarioResult(rows, None, [], dict(row),
                          {"atlas.csv": (list(row), [row])})


def closed_form_truncated_energy(ex, k):
    """|S^{N-1}| int_{u<=k} r^(N-1) |u'|^2 dr for u = r^alpha - 1."""
    from .discretization import sphere_area
    a, N = ex.alpha, ex.dim_N
    rho = (1.0 + k) ** (1.0 / a)
    e = 2.0 * a + N - 2.0
    core = -math.log(rho) if e == 0 else (1.0 - rho ** e) / e
    return sphere_area(N) * a * a * core


def run_tail_fit(c):
    s = c.scenario
    ex = _exact(c)
    mesh = _mesh(c)
    fld, diag = continuation(c, ex.problem(), mesh, keep_fields=True)
    N, p = ex.dim_N, 2.0
    rows = _discrete_tail_rows(s, c, fld)
    summary = {}
    if ex.alpha < 0:
        sampled = _sampled_exact(ex, mesh)
        for k in c["check.levels"]:
            rows.append(rel_check(s, f"truncated-energy(k={k!r})",
                                  closed_form_truncated_energy(ex, k),
                                  truncated_energy(sampled, k, p, N), 1e-2))
        try:
            aux = aux_check(sampled, p, N, tol=c["check.slack"])
            summary["eta"] = aux.eta
            rows.append(lower_check(s, "aux-solution-tail", aux.predicted_t, aux.measured_t,
                                    aux.tol))
            rows.append(lower_check(s, "aux-gradient-tail", aux.predicted_r, aux.measured_r,
                                    aux.tol))
        except (NotApplicable, InsufficientData):
            pass
    fields = [lv.field for lv in diag.levels]
    if len(fields) >= 3:
        dec = log_decay_check(fields, N, p)
        summary["log_decay_c"] = dec.constants[-1]
        rows.append(upper_check(s, "log-decay-constant-spread", 0.1, dec.spread))
    for lv in diag.levels:
        lv.field = None
    return ScenarioResult(rows, fld, [("direct", diag)], summary)


def entropy_family():
    return (TestFunction("zero"), TestFunction("truncation", 0.5, 1.0), TestFunction("bump", 0.5))


def run_entropy_check(c):
    s = c.scenario
    if c["problem.instance"] == "manufactured":
        spec = manufactured_solution(c["problem.N"]).problem()
    else:
        spec = _exact(c).problem()
    rows, diags, last = [], [], None
    history = {}
    for M in c["mesh.refine"]:
        fld, diag = continuation(c, spec, _mesh(c, M))
        diags.append((f"M={M}", diag))
        n_reg = diag.levels[-1].n
        for phi in entropy_family():
            for k in c["check.levels"]:
                if phi.kind == "zero":
                    t = entropy_terms(fld, spec, phi, k, n_reg=n_reg, quadrature="scheme")
                    rows.append(upper_check(s, f"entropy(phi=zero,k={k!r},M={M})",
                                            c["check.entropy_tol"], t.residual / t.scale))
                else:
                    t = entropy_terms(fld, spec, phi, k, n_reg=n_reg, quadrature="reconstruction")
                    rel = t.residual / t.scale
                    history.setdefault((phi.kind, k), []).append(rel)
                    rows.append(upper_check(s, f"entropy(phi={phi.kind},k={k!r},M={M})",
                                            1.0 / M, rel))
        last = fld
    for (kind, k), vals in history.items():
        if len(vals) > 1:
            pos = [max(v, 0.0) for v in vals]
            rows.append(CheckRow(s, f"entropy-trend(phi={kind},k={k!r})", pos[0], pos[-1],
                                 "finest <= coarsest", pos[-1] <= pos[0]))
    return ScenarioResult(rows, last, diags)


def run_h_zero(c):
    s = c.scenario
    spec = make_spec(c)
    fld, diag = continuation(c, spec, _mesh(c))
    b = bound_checks(fld, spec, c["check.bound_tol"])
    rows = [CheckRow(s, "max-u<=s_bar", b.bound, b.sup_u, f"abs {c['check.bound_tol']!r}",
                     b.passed),
            CheckRow(s, "newton-converged", True, all(lv.newton.converged for lv in diag.levels),
                     "all levels", all(lv.newton.converged for lv in diag.levels))]
    return ScenarioResult(rows, fld, [("direct", diag)], {"sup_u": b.sup_u})


def run_bounded(c):
    s = c.scenario
    spec = make_spec(c)
    sups, diags, fld, b = [], [], None, None
    for M in c["mesh.refine"]:
        fld, diag = continuation(c, spec, _mesh(c, M))
        b = bound_checks(fld, spec, c["check.bound_tol"])
        sups.append(b.sup_u)
        diags.append((f"M={M}", diag))
    rows = [CheckRow(s, f"bound({b.kind})", b.bound, b.sup_u,
                     "finite" if math.isinf(b.bound) else f"abs {c['check.bound_tol']!r}",
                     b.passed)]
    if len(sups) > 1:
        rel = abs(sups[-1] - sups[0]) / max(abs(sups[-1]), 1e-300)
        rows.append(upper_check(s, "sup-u-refinement", c["check.refine_tol"], rel))
    return ScenarioResult(rows, fld, diags, {"sup_u": sups[-1]})


def run_transform_crosscheck(c):
    s = c.scenario
    ex = _exact(c)
    spec = ex.problem()
    mesh = _mesh(c)
    f1, d1 = continuation(c, spec, mesh)
    f2, d2 = transform_solve(spec, mesh, c["solver.schedule"], c["solver.tol"],
                             energy_tol=c["solver.energy_tol"], max_iter=c["solver.max_iter"],
                             divergence_window=c["solver.window"],
                             stop_when_converged=c["solver.stop_when_converged"],
                             raise_on_divergence=False)
    r = mesh.nodes
    sel = (r >= c["check.r_min"]) & (r < 1.0)
    if ex.alpha == 0:
        diff = float(np.max(np.abs(f1.values - f2.values)))
        rows = [upper_check(s, "direct-vs-transform", c["check.bound_tol"], diff)]
        return ScenarioResult(rows, f1, [("direct", d1), ("transform", d2)], {"diff": diff})
    err = _outer_rel_error(f1, ex, c["check.r_min"])
    diff = float(np.max(np.abs(f1.values[sel] - f2.values[sel]) / ex(r[sel])))
    rows = [CheckRow(s, "direct-vs-transform", 2.0 * err, diff, "<= 2 x direct error",
                     diff <= 2.0 * err)]
    return ScenarioResult(rows, f1, [("direct", d1), ("transform", d2)],
                          {"direct_error": err, "diff": diff})


def run_uniqueness_probe(c):
    s = c.scenario
    spec = make_spec(c)
    N, p, theta, g2 = spec.dim_N, spec.p, spec.theta, spec.h.gamma2
    umin = uniqueness_min_m(N, p, theta, g2)
    m_f = spec.source.sup_lebesgue_index(N)
    decreasing = spec.h.gamma1 == 0 or spec.h.is_zero_variant
    rows = [CheckRow(s, "data-above-uniqueness-index", umin, m_f, "f in L^m for some m >= min",
                     m_f > umin and spec.source.amplitude > 0 and decreasing)]
    mesh = _mesh(c)
    results, diags = [], []
    for sname, sched in (("schedule", c["solver.schedule"]), ("alt_schedule", c["solver.alt_schedule"])):
        for iname, init in (("zero", DiscreteField.zeros(mesh)), ("ones", DiscreteField.constant(mesh, 1.0))):
            fld, diag = continuation(c, spec, mesh, schedule=sched, init=init)
            results.append(fld)
            diags.append((f"{sname}/{iname}", diag))
    ref = results[0].values
    scale = max(float(np.max(np.abs(ref))), 1e-300)
    gap = max(float(np.max(np.abs(f.values - ref))) / scale for f in results[1:])
    rows.append(upper_check(s, "fields-agree", c["check.agree_tol"], gap))
    return ScenarioResult(rows, results[0], diags, {"max_gap": gap})


def threshold_problem(c):
    N, p, g2 = c["problem.N"], c["problem.p"], c["problem.gamma2"]
    base = exact_radial_solution(N, c["problem.theta"], g2, c["problem.epsilon"])
    theta = c["problem.threshold_factor"] * existence_threshold(p, g2)
    return ProblemSpec(N, p, theta, HModel(0.0, g2),
                       SourceSpec(c["problem.amplitude_factor"] * base.amplitude,
                                  N - c["problem.epsilon"]))


def run_threshold_probe(c):
    s = c.scenario
    spec = threshold_problem(c)
    fld, diag = continuation(c, spec, _mesh(c))
    growth = diag.sup_growth()
    rows = [CheckRow(s, "divergence-signal", True, diag.diverged,
                     f"d_k non-decreasing over {c['solver.window']} levels", diag.diverged),
            CheckRow(s, "sup-u-blowup", 2.0, growth[-1] if growth else math.nan,
                     f"growth >= 2 on last {c['solver.window']} levels",
                     diag.blowup_indicator(c["solver.window"]))]
    summary = {"theta": spec.theta, "amplitude": spec.source.amplitude,
               "final_sup_u": diag.levels[-1].sup_u, "diverged": diag.diverged}
    return ScenarioResult(rows, fld, [("direct", diag)], summary)


def run_strong_singular(c):
    s = c.scenario
    spec = make_spec(c)
    k = c["check.k"]
    energies, diags, fld = [], [], None
    for M in c["mesh.refine"]:
        fld, diag = continuation(c, spec, _mesh(c, M))
        energies.append(strong_singular_trace(fld, spec, k))
        diags.append((f"M={M}", diag))
    ratio = energies[-1] / energies[0]
    rows = [rel_check(s, f"trace-energy-ratio(k={k!r})", 1.0, ratio, c["check.ratio_tol"])]
    return ScenarioResult(rows, fld, diags,
                          {f"trace_energy_M{M}": e for M, e in zip(c["mesh.refine"], energies)})


PIPELINES = {
    "exact-radial": run_exact_radial,
    "manufactured": run_manufactured,
    "exponent-atlas": run_exponent_atlas,
    "tail-fit": run_tail_fit,
    "entropy-check": run_entropy_check,
    "h-zero": run_h_zero,
    "bounded": run_bounded,
    "transform-crosscheck": run_transform_crosscheck,
    "uniqueness-probe": run_uniqueness_probe,
    "threshold-probe": run_threshold_probe,
    "strong-singular": run_strong_singular,
}


def run_scenario(c: ExperimentConfig) -> ScenarioResult:
    return PIPELINES[c.scenario](c)
