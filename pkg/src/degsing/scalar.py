"""Scalar building blocks: truncations, the singular nonlinearity h, and the
change of variable that removes the degenerate coefficient.

Everything here accepts scalars or numpy arrays and returns the same shape.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import InvalidParameter

# Below this distance from 1 an exponent is treated as exactly 1 (log branch).
LOG_BRANCH_TOL = 1e-10


def _check_level(k):
    if not k > 0:
        raise InvalidParameter(f"truncation level must be positive, got {k!r}")


def T(k, s):
    """Truncation at height k: max(-k, min(s, k))."""
    _check_level(k)
    return np.clip(s, -k, k)


def G(k, s):
    """Remainder of the truncation, so that T(k, s) + G(k, s) == s."""
    _check_level(k)
    s = np.asarray(s, dtype=float)
    out = np.maximum(np.abs(s) - k, 0.0) * np.sign(s)
    return out if out.ndim else float(out)


def V(k, s):
    """Plateau cutoff: 1 on |s| <= k, linear down to 0 on k < |s| < 2k."""
    _check_level(k)
    a = np.abs(np.asarray(s, dtype=float))
    out = np.clip((2.0 * k - a) / k, 0.0, 1.0)
    return out if out.ndim else float(out)


def truncation_family(kind, k, s):
    try:
        fn = {"T": T, "G": G, "V": V}[kind]
    except KeyError:
        raise InvalidParameter(f"unknown truncation kind {kind!r}") from None
    return fn(k, s)


def _as_real(x):
    """Float array, keeping extended precision when the input carries it."""
    x = np.asarray(x)
    return x if x.dtype == np.longdouble else x.astype(float)


def _power_primitive(q, s):
    """int_0^s (1+t)^(-q) dt for s >= 0 (may be +inf when q <= 1)."""
    s = _as_real(s)
    if abs(q - 1.0) < LOG_BRANCH_TOL:
        out = np.log1p(s)
    else:
        e = 1.0 - q
        with np.errstate(over="ignore"):
            out = np.expm1(e * np.log1p(s)) / e
    return out if out.ndim else float(out)


def phi_forward(theta, u):
    """Phi(u) = int_0^u (1+t)^(-theta) dt."""
    if theta < 0:
        raise InvalidParameter("theta must be nonnegative")
    u = _as_real(u)
    if np.any(u < 0):
        raise InvalidParameter("phi_forward is defined for u >= 0")
    return _power_primitive(theta, u)


def phi_sup(theta):
    """Supremum of Phi over [0, inf): finite exactly when theta > 1."""
    if theta <= 1.0 + LOG_BRANCH_TOL:
        return np.inf
    return 1.0 / (theta - 1.0)


def phi_inverse(theta, v):
    """Exact inverse of :func:`phi_forward`; +inf at or beyond ``phi_sup(theta)``."""
    if theta < 0:
        raise InvalidParameter("theta must be nonnegative")
    v = _as_real(v)
    if np.any(v < 0):
        raise InvalidParameter("phi_inverse is defined for v >= 0")
    if abs(theta - 1.0) < LOG_BRANCH_TOL:
        with np.errstate(over="ignore"):
            out = np.expm1(v)
    else:
        e = 1.0 - theta
        arg = e * v
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            out = np.where(arg > -1.0, np.expm1(np.log1p(np.maximum(arg, -1.0)) / e), np.inf)
    return out if out.ndim else float(out)


def phi_inverse_derivative(theta, v):
    """d Phi^{-1}/dv = (1 + Phi^{-1}(v))^theta."""
    u = phi_inverse(theta, v)
    return (1.0 + u) ** theta


def H_weight(theta, gamma2, p, s):
    """H(s) = int_0^s (1+t)^(-(theta - gamma2/(p-1))) dt, the boundedness weight."""
    if not p > 1:
        raise InvalidParameter("p must exceed 1")
    q = theta - gamma2 / (p - 1.0)
    return _power_primitive(q, np.abs(s)) * np.sign(s)


def H_limit(theta, gamma2, p):
    """lim_{s->inf} H(s); infinite iff the weight exponent is at most 1."""
    if not p > 1:
        raise InvalidParameter("p must exceed 1")
    q = theta - gamma2 / (p - 1.0)
    if q <= 1.0 + LOG_BRANCH_TOL:
        return np.inf
    return 1.0 / (q - 1.0)


@dataclass(frozen=True)
class HModel:
    """Singular nonlinearity h with blow-up rate gamma1 at 0 and decay rate gamma2 at infinity.

    Base family: ``c_h * (1+s)**(gamma1-gamma2) * s**(-gamma1)``.
    With ``s_bar`` set, the zero variant ``c_h * s**(-gamma1) * max(0, 1 - s/s_bar)``
    is used instead; it vanishes for s >= s_bar.
    """

    gamma1: float = 0.0
    gamma2: float = 0.0
    c_h: float = 1.0
    s_bar: Optional[float] = None
    s1: float = 0.5
    s2: float = 2.0

    def __post_init__(self):
        if self.gamma1 < 0 or self.gamma2 < 0:
            raise InvalidParameter("gamma1 and gamma2 must be nonnegative")
        if not self.c_h > 0:
            raise InvalidParameter("c_h must be positive")
        if self.s_bar is not None and not self.s_bar > 0:
            raise InvalidParameter("s_bar must be positive")
        if not 0 < self.s1 < self.s2:
            raise InvalidParameter("need 0 < s1 < s2")

    @property
    def is_zero_variant(self):
        return self.s_bar is not None

    @property
    def sup(self):
        """sup of h over (0, inf)."""
        return np.inf if self.gamma1 > 0 else self.c_h

    def __call__(self, s):
        s = np.asarray(s, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            sing = np.where(s > 0, s, 0.0) ** (-self.gamma1) if self.gamma1 > 0 else np.ones_like(s)
            if self.is_zero_variant:
                out = self.c_h * sing * np.maximum(0.0, 1.0 - s / self.s_bar)
                out = np.where(s >= self.s_bar, 0.0, out)
            else:
                out = self.c_h * np.power(1.0 + s, self.gamma1 - self.gamma2) * sing
        out = np.where(s <= 0, self.c_h if self.gamma1 == 0 else np.inf, out)
        return out if out.ndim else float(out)

    def derivative(self, s):
        """dh/ds for s > 0."""
        s = np.asarray(s, dtype=float)
        g1 = self.gamma1
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            sp = np.where(s > 0, s, np.nan)
            if self.is_zero_variant:
                lin = 1.0 - sp / self.s_bar
                out = self.c_h * (-g1 * sp ** (-g1 - 1.0) * lin - sp ** (-g1) / self.s_bar)
                out = np.where(s >= self.s_bar, 0.0, out)
            else:
                h = self.c_h * (1.0 + sp) ** (g1 - self.gamma2) * sp ** (-g1)
                out = h * ((g1 - self.gamma2) / (1.0 + sp) - g1 / sp)
        out = np.where(s > 0, out, 0.0)
        return out if out.ndim else float(out)

    def truncated(self, n, s):
        """h_n(s) = T_n(h(s)) for s >= 0 and min(n, h(0)) for s < 0."""
        s = np.asarray(s, dtype=float)
        h0 = min(n, self(0.0))
        out = np.where(s < 0, h0, np.minimum(self(np.maximum(s, 0.0)), n))
        return out if out.ndim else float(out)

    def truncated_derivative(self, n, s):
        s = np.asarray(s, dtype=float)
        active = (s > 0) & (self(np.maximum(s, 0.0)) < n)
        out = np.where(active, self.derivative(s), 0.0)
        return out if out.ndim else float(out)

    def envelope_constants(self):
        """(c1, s1, c2, s2) such that h(s) <= c1 s^-gamma1 on (0, s1] and h(s) <= c2 s^-gamma2 on [s2, inf)."""
        a = self.gamma1 - self.gamma2
        c1 = self.c_h * max(1.0, (1.0 + self.s1) ** a)
        # s^gamma2 h(s) = c_h ((1+s)/s)^a, monotone in s
        c2 = self.c_h * max(1.0, ((1.0 + self.s2) / self.s2) ** a)
        return c1, self.s1, c2, self.s2


def h_eval(model, s):
    return model(s)


def h_truncated(model, n, s):
    if n < 1:
        raise InvalidParameter("truncation level n must be >= 1")
    return model.truncated(n, s)


@dataclass(frozen=True)
class ComposedH:
    """h composed with Phi^{-1}: the right-hand side nonlinearity of the transformed problem."""

    base: HModel
    theta: float

    @property
    def is_zero_variant(self):
        return self.base.is_zero_variant

    @property
    def sup(self):
        return self.base.sup

    def __call__(self, v):
        v = np.asarray(v, dtype=float)
        out = self.base(phi_inverse(self.theta, np.maximum(v, 0.0)))
        out = np.where(v <= 0, self.base(0.0), out)
        return out if out.ndim else float(out)

    def derivative(self, v):
        v = np.asarray(v, dtype=float)
        vp = np.maximum(v, 0.0)
        u = phi_inverse(self.theta, vp)
        with np.errstate(invalid="ignore", over="ignore"):
            out = self.base.derivative(u) * (1.0 + u) ** self.theta
        out = np.where((v > 0) & np.isfinite(out), out, 0.0)
        return out if out.ndim else float(out)

    def truncated(self, n, v):
        v = np.asarray(v, dtype=float)
        out = np.where(v < 0, min(n, self.base(0.0)), np.minimum(self(np.maximum(v, 0.0)), n))
        return out if out.ndim else float(out)

    def truncated_derivative(self, n, v):
        v = np.asarray(v, dtype=float)
        active = (v > 0) & (self(np.maximum(v, 0.0)) < n)
        out = np.where(active, self.derivative(v), 0.0)
        return out if out.ndim else float(out)
