"""Closed-form solutions used as oracles."""

from dataclasses import dataclass

import numpy as np

from .discretization import ProblemSpec, SourceSpec
from .errors import InvalidParameter
from .exponents import radial_exponent_alpha
from .scalar import HModel


@dataclass(frozen=True)
class ExactRadialSolution:
    """u(x) = |x|^alpha - 1 solving
    -div(grad u / (1+u)^theta) = C |x|^-(N-eps) (1+u)^-gamma2 on the unit ball."""

    dim_N: float
    theta: float
    gamma2: float
    epsilon: float
    alpha: float
    amplitude: float

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        with np.errstate(divide="ignore"):
            return r ** self.alpha - 1.0

    def gradient(self, r):
        r = np.asarray(r, dtype=float)
        with np.errstate(divide="ignore"):
            return self.alpha * r ** (self.alpha - 1.0)

    def flux(self, r):
        """r^(N-1) u'(r) (1+u)^(-theta)."""
        r = np.asarray(r, dtype=float)
        return self.alpha * r ** (self.dim_N - 2.0 + self.alpha * (1.0 - self.theta))

    def superlevel_measure(self, k):
        """|{u >= k}| on the unit ball."""
        from .discretization import sphere_area
        k = np.asarray(k, dtype=float)
        return sphere_area(self.dim_N) / self.dim_N * (1.0 + k) ** (self.dim_N / self.alpha)

    def problem(self, r_in=0.0):
        return ProblemSpec(
            dim_N=self.dim_N, p=2.0, theta=self.theta,
            h=HModel(gamma1=0.0, gamma2=self.gamma2, c_h=1.0),
            source=SourceSpec(amplitude=self.amplitude, sigma=self.dim_N - self.epsilon),
            r_in=r_in)


def exact_radial_solution(N, theta, gamma2, epsilon):
    if N < 3:
        raise InvalidParameter("the radial example needs N >= 3")
    if not epsilon > 0:
        raise InvalidParameter("epsilon must be positive")
    alpha = radial_exponent_alpha(N, theta, gamma2, epsilon)
    if alpha > 0:
        raise InvalidParameter("alpha > 0 gives a negative profile r^alpha - 1")
    amplitude = -alpha * (N - 2.0 + alpha * (1.0 - theta))
    if amplitude < 0:
        raise InvalidParameter(f"parameters give a negative source amplitude ({amplitude})")
    return ExactRadialSolution(N, theta, gamma2, epsilon, alpha, amplitude)


@dataclass(frozen=True)
class ManufacturedSolution:
    dim_N: float

    def __call__(self, r):
        return 1.0 - np.asarray(r, dtype=float) ** 2

    @property
    def source_value(self):
        return 2.0 * self.dim_N

    def problem(self, r_in=0.0):
        return ProblemSpec(dim_N=self.dim_N, p=2.0, theta=0.0, h=HModel(),
                           source=SourceSpec(amplitude=self.source_value, sigma=0.0), r_in=r_in)


def manufactured_solution(N, p=2.0):
    """-Delta(1 - r^2) = 2N with h = 1, theta = 0."""
    if p != 2:
        raise InvalidParameter("the manufactured oracle is for p = 2")
    return ManufacturedSolution(N)
