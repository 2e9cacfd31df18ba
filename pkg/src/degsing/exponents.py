"""Closed-form thresholds and regularity exponents, and regime classification.

All formulas work on floats or :class:`fractions.Fraction`; when every input
is rational, regime boundaries are decided exactly, otherwise with a 1e-12
tolerance. Boundary cases follow the closed intervals of the existence theory
(theta equal to the existence threshold is admissible).
"""

import math
from dataclasses import dataclass, field, fields
from fractions import Fraction
from numbers import Rational
from typing import Optional

from .errors import CriticalCaseError, InvalidParameter, RegimeError

BOUNDARY_TOL = 1e-12


def _exact(*xs):
    return all(isinstance(x, Rational) for x in xs)


def _eq(a, b):
    if _exact(a, b):
        return a == b
    return abs(a - b) <= BOUNDARY_TOL * max(1.0, abs(a), abs(b))


def _le(a, b):
    return a <= b or _eq(a, b)


def _lt(a, b):
    return a < b and not _eq(a, b)


def _one(x):
    return Fraction(1) if isinstance(x, Rational) else 1.0


@dataclass(frozen=True)
class ParameterSet:
    dim_N: float
    p: float
    theta: float = 0.0
    gamma1: float = 0.0
    gamma2: float = 0.0
    m: float = 1.0

    def __post_init__(self):
        if not 1 < self.p < self.dim_N:
            raise InvalidParameter(f"need 1 < p < N, got p={self.p}, N={self.dim_N}")
        if min(self.theta, self.gamma1, self.gamma2) < 0:
            raise InvalidParameter("theta, gamma1, gamma2 must be nonnegative")
        if self.m < 1:
            raise InvalidParameter("m must be >= 1")


def _check_basic(N, p):
    if not 1 < p < N:
        raise InvalidParameter(f"need 1 < p < N, got p={p}, N={N}")


def existence_threshold(p, gamma2):
    """Largest degeneracy exponent for which entropy solutions exist: 1 + gamma2/(p-1)."""
    if not p > 1:
        raise InvalidParameter("p must exceed 1")
    if gamma2 < 0:
        raise InvalidParameter("gamma2 must be nonnegative")
    return _one(p) + gamma2 / (p - 1)


def finite_energy_case_bound(p, gamma2):
    """Upper end of the finite-energy range for L^1 data, (gamma2 - 1)/(p - 1)."""
    return (gamma2 - 1) / (p - 1)


def marcinkiewicz_exponents(N, p, theta, gamma2):
    """Marcinkiewicz indices (t, r) of u and |grad u| for L^1 data."""
    _check_basic(N, p)
    lo = max(0, finite_energy_case_bound(p, gamma2))
    hi = existence_threshold(p, gamma2)
    if not (_le(lo, theta) and _lt(theta, hi)):
        if gamma2 >= 1 and _le(theta, finite_energy_case_bound(p, gamma2)):
            raise RegimeError("theta is in the finite-energy range: u has finite energy (case i)")
        raise RegimeError(f"theta={theta} outside [{lo}, {hi}) where Marcinkiewicz indices are known")
    num = N * ((p - 1) * (1 - theta) + gamma2)
    t = num / (N - p)
    r = num / (N - theta * (p - 1) - 1 + gamma2)
    return t, r


def sobolev_conjugate(N, p):
    return N * p / (N - p)


def finite_energy_min_m(N, p, theta, gamma2):
    """max(p*/(p* - theta(p-1) - 1 + gamma2), 1)."""
    ps = sobolev_conjugate(N, p)
    return max(ps / (ps - theta * (p - 1) - 1 + gamma2), _one(ps))


@dataclass(frozen=True)
class LebesgueRegularity:
    sol_exp: Optional[float]
    grad_exp: Optional[float]
    finite_energy: bool
    bounded: bool
    every_lq: bool


def lebesgue_regularity(N, p, theta, gamma2, m):
    """Lebesgue exponents of u and |grad u| for data in L^m."""
    _check_basic(N, p)
    if m < 1:
        raise InvalidParameter("m must be >= 1")
    thr = existence_threshold(p, gamma2)
    if not _le(theta, thr):
        raise RegimeError(f"theta={theta} exceeds the existence threshold {thr}")
    critical = _eq(theta, thr)
    Np = N / p
    sol_exp = grad_exp = None
    base = (p - 1) * (1 - theta) + gamma2
    if critical:
        every_lq = _le(Np, m)
        finite_energy = every_lq
    else:
        every_lq = False
        fe_min = finite_energy_min_m(N, p, theta, gamma2)
        finite_energy = _le(fe_min, m)
        if _lt(1, m) and _lt(m, Np):
            sol_exp = N * m * base / (N - m * p)
            if not finite_energy:
                grad_exp = N * m * base / (N - m * (theta * (p - 1) + 1 - gamma2))
    bounded = _lt(Np, m)
    return LebesgueRegularity(sol_exp, grad_exp, finite_energy, bounded, every_lq)


def uniqueness_min_m(N, p, theta, gamma2):
    """Smallest Lebesgue index of f guaranteeing at most one entropy solution."""
    _check_basic(N, p)
    if not _le(theta, existence_threshold(p, gamma2)):
        raise RegimeError("uniqueness bound stated only under the existence condition")
    den = (N - p) * (gamma2 - theta * (p - 1)) + N * (p - 1)
    assert den > 0, "denominator positive whenever theta is admissible"
    return max(N * (p - 1) / den, _one(den))


def distributional_threshold_theta(N, p, gamma2):
    """theta at which |grad u| sits exactly in M^{p-1} for L^1 data."""
    return _one(p) / (N - p + 1) + gamma2 / (p - 1)


def distributional_min_m(N, p, theta, gamma2):
    """(m_min, strict): entropy solutions are distributional for m >= m_min (m > m_min if strict)."""
    _check_basic(N, p)
    if not _le(theta, existence_threshold(p, gamma2)):
        raise RegimeError("distributional bound stated only under the existence condition")
    den = (N * (1 - theta) + 1 + theta * (p - 1)) * (p - 1) + gamma2 * (N - p + 1)
    assert den > 0
    strict = _eq(theta, distributional_threshold_theta(N, p, gamma2))
    return max(N * (p - 1) / den, _one(den)), strict


@dataclass(frozen=True)
class RadialExponents:
    alpha: float
    sol_tail: float
    grad_tail: float
    w11_ok: bool
    f_sup_m: float
    bounded: bool = False


def radial_exponent_alpha(N, theta, gamma2, epsilon):
    den = 1 - theta + gamma2
    if _eq(den, 0):
        raise CriticalCaseError("1 - theta + gamma2 = 0: the radial solution loses all Marcinkiewicz regularity")
    return (2 + epsilon - N) / den


def radial_exponents(N, theta, gamma2, epsilon):
    """Exponents of the explicit radial solution u = |x|^alpha - 1 (p = 2)."""
    if N < 3:
        raise InvalidParameter("the radial example needs N >= 3")
    if not epsilon > 0:
        raise InvalidParameter("epsilon must be positive")
    alpha = radial_exponent_alpha(N, theta, gamma2, epsilon)
    w11_ok = _lt(theta, (1 + epsilon) / (N - 1) + gamma2)
    f_sup_m = N / (N - epsilon) if N > epsilon else math.inf
    if alpha >= 0:
        return RadialExponents(alpha, math.inf, math.inf, True, f_sup_m, bounded=True)
    return RadialExponents(alpha, N / abs(alpha), N / (1 - alpha), w11_ok, f_sup_m)


def finite_energy_gamma_threshold(p):
    """Solutions of -Delta_p v = f v^-gamma have finite energy iff gamma < 2 + 1/(p-1)."""
    if not p > 1:
        raise InvalidParameter("p must exceed 1")
    return 2 + _one(p) / (p - 1)


@dataclass
class RegimeReport:
    theta_max: float
    existence_ok: bool
    marc_t: Optional[float] = None
    marc_r: Optional[float] = None
    sol_lebesgue_exp: Optional[float] = None
    grad_lebesgue_exp: Optional[float] = None
    finite_energy: bool = False
    bounded: bool = False
    every_lq: bool = False
    uniqueness_min_m: Optional[float] = None
    distributional_min_m: Optional[float] = None
    distributional_strict: bool = False
    case_overlap: bool = False
    notes: list = field(default_factory=list)

    def as_dict(self):
        return {f.name: getattr(self, f.name) for f in fields(self)}

    def to_record(self):
        """Flat ``key=value`` lines, full round-trip precision."""
        lines = []
        for key, val in self.as_dict().items():
            if key == "notes":
                val = " | ".join(val)
            lines.append(f"{key}={format_value(val)}")
        return "\n".join(lines) + "\n"


def format_value(val):
    if val is None:
        return "none"
    if isinstance(val, bool):
        return "true" if val else "false"
    if isinstance(val, (float, Fraction)):
        return repr(float(val))
    return str(val)


def classify_regime(params: ParameterSet) -> RegimeReport:
    N, p, theta, g1, g2, m = (params.dim_N, params.p, params.theta, params.gamma1,
                              params.gamma2, params.m)
    thr = existence_threshold(p, g2)
    ok = _le(theta, thr)
    rep = RegimeReport(theta_max=thr, existence_ok=ok)
    notes = rep.notes
    if not ok:
        notes.append("theta above existence threshold: no entropy existence (nonexistence for large data)")
        return rep
    notes.append("existence: theta within [0, 1 + gamma2/(p-1)]")
    if g1 > 1:
        notes.append("gamma1 > 1: strongly singular, distributional framework only; no Marcinkiewicz prediction")

    if m == 1 and g1 <= 1:
        lo = finite_energy_case_bound(p, g2)
        if g2 >= 1 and _le(theta, lo):
            rep.finite_energy = True
            notes.append("L1 data, finite-energy case: u in W^{1,p}_0")
        try:
            rep.marc_t, rep.marc_r = marcinkiewicz_exponents(N, p, theta, g2)
            notes.append("L1 data: u in M^t, |grad u| in M^r")
            if rep.finite_energy:
                rep.case_overlap = True
                notes.append("theta on the boundary shared by both L1 cases; both predictions reported")
        except RegimeError as exc:
            if not rep.finite_energy:
                notes.append(f"no Marcinkiewicz prediction: {exc}")
    elif g1 <= 1:
        reg = lebesgue_regularity(N, p, theta, g2, m)
        rep.sol_lebesgue_exp = reg.sol_exp
        rep.grad_lebesgue_exp = reg.grad_exp
        rep.finite_energy = reg.finite_energy
        rep.bounded = reg.bounded
        rep.every_lq = reg.every_lq
        if reg.sol_exp is not None:
            notes.append("L^m data, 1 < m < N/p: power of u integrable")
        if reg.grad_exp is not None:
            notes.append("gradient power integrable (infinite-energy range)")
        if reg.finite_energy:
            notes.append("finite energy")
        if reg.bounded:
            notes.append("m > N/p: u bounded")
        if reg.every_lq:
            notes.append("critical theta with m >= N/p: u in every L^q")
        if _eq(theta, thr) and not reg.every_lq:
            notes.append("critical theta with m < N/p: no Lebesgue prediction")
    else:
        reg = lebesgue_regularity(N, p, theta, g2, m)
        rep.bounded = reg.bounded

    rep.uniqueness_min_m = uniqueness_min_m(N, p, theta, g2)
    rep.distributional_min_m, rep.distributional_strict = distributional_min_m(N, p, theta, g2)
    notes.append("uniqueness for decreasing h and f > 0 when m >= uniqueness_min_m")
    if rep.distributional_strict:
        notes.append("distributional solution needs m > distributional_min_m (strict)")
    return rep


def atlas_fieldnames():
    return ["N", "p", "theta", "gamma1", "gamma2", "m"] + [
        f.name for f in fields(RegimeReport)]


def atlas_row(params: ParameterSet):
    rep = classify_regime(params)
    row = {"N": params.dim_N, "p": params.p, "theta": params.theta,
           "gamma1": params.gamma1, "gamma2": params.gamma2, "m": params.m}
    row.update(rep.as_dict())
    row["notes"] = " | ".join(rep.notes)
    return {k: format_value(v) for k, v in row.items()}
