"""Material law, annulus geometry and pointwise kinematics in (rho, phi) coordinates."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .basis import FieldJet, QuadratureRule, SpectralField, eval_field_on_rule

H_SCALE = 2.0 ** -0.25


def _positive(t, name="t"):
    # complex input is allowed for complex-step differentiation; the check applies to the real part
    t = np.asarray(t)
    if not np.iscomplexobj(t):
        t = t.astype(float)
    if np.any(np.real(t) <= 0):
        raise ValueError(f"{name} must be positive")
    return t


def h_default(t):
    """Volumetric energy 2^(-1/4) ((t - 1)^2 / 2 + 1 / t)."""
    t = _positive(t)
    return H_SCALE * (0.5 * (t - 1.0) ** 2 + 1.0 / t)


def h_default_prime(t):
    t = _positive(t)
    return H_SCALE * ((t - 1.0) - 1.0 / t**2)


def h_default_second(t):
    t = _positive(t)
    return H_SCALE * (1.0 + 2.0 / t**3)


@dataclass(frozen=True)
class MaterialModel:
    """Stored energy W = kappa |grad u|^p + h(det grad u), split as g(F) + h(D).

    ``h_second`` is optional and only used by the radial reference solver;
    the 2-D solver never needs it.
    """

    p: float = 1.5
    kappa: float = 2.0 / 3.0
    h: Callable = field(default=h_default, compare=False)
    h_prime: Callable = field(default=h_default_prime, compare=False)
    h_second: Optional[Callable] = field(default=h_default_second, compare=False)
    tag: str = "default"

    def __post_init__(self):
        if not 1.0 < self.p < 2.0:
            raise ValueError(f"growth exponent p must lie in (1, 2), got {self.p!r}")
        if self.kappa <= 0:
            raise ValueError(f"kappa must be positive, got {self.kappa!r}")

    def g(self, t):
        """g(t) = kappa (2t)^(p/2), so that g(|F|^2 / 2) = kappa |F|^p."""
        t = _positive(t)
        return self.kappa * (2.0 * t) ** (0.5 * self.p)

    def g_prime(self, t):
        t = _positive(t)
        return self.kappa * self.p * (2.0 * t) ** (0.5 * self.p - 1.0)

    def g_second(self, t):
        t = _positive(t)
        return self.kappa * self.p * (self.p - 2.0) * (2.0 * t) ** (0.5 * self.p - 2.0)

    def as_dict(self) -> dict:
        return {"tag": self.tag, "p": self.p, "kappa": self.kappa}


def default_material() -> MaterialModel:
    return MaterialModel()


def g_eval(mat: MaterialModel, t):
    return mat.g(t)


def g_prime(mat: MaterialModel, t):
    return mat.g_prime(t)


@dataclass(frozen=True)
class AnnulusDomain:
    """Reference annulus eps < |x| < gamma."""

    eps: float
    gamma: float = 1.0

    def __post_init__(self):
        if not (0.0 < self.eps < self.gamma <= 1.0):
            raise ValueError(f"need 0 < eps < gamma <= 1, got eps={self.eps!r}, gamma={self.gamma!r}")

    @property
    def rho_r(self) -> float:
        """d rho / d r."""
        return 2.0 / (self.gamma - self.eps)

    def r(self, rho):
        return 0.5 * (self.gamma + self.eps) + 0.5 * (self.gamma - self.eps) * np.asarray(rho, dtype=float)

    def rho(self, r):
        return (np.asarray(r, dtype=float) - 0.5 * (self.gamma + self.eps)) * self.rho_r


def rho_to_r(domain: AnnulusDomain, rho):
    return domain.r(rho)


@dataclass(frozen=True)
class BoundaryStretch:
    """Outer boundary map u0(x) = (lambda1 x1, lambda2 x2) on |x| = gamma."""

    lambda1: float
    lambda2: float

    def __post_init__(self):
        if self.lambda1 <= 0 or self.lambda2 <= 0:
            raise ValueError("stretches must be positive")

    @property
    def symmetric(self) -> bool:
        return self.lambda1 == self.lambda2

    @property
    def mean(self) -> float:
        return float(np.sqrt(self.lambda1 * self.lambda2))

    def polar(self, phi, gamma: float):
        """(P0, Q0) of the boundary map at angles ``phi``.

        Q0 = Theta - phi is taken on the branch continuous with 0 at phi = 0.
        """
        phi = np.asarray(phi, dtype=float)
        c, s = self.lambda1 * np.cos(phi), self.lambda2 * np.sin(phi)
        P0 = gamma * np.hypot(c, s)
        # atan2 of the map relative to the angle itself stays in (-pi/2, pi/2)
        Q0 = np.arctan2(s * np.cos(phi) - c * np.sin(phi), c * np.cos(phi) + s * np.sin(phi))
        return P0, Q0


def kinematics(jet: FieldJet, domain: AnnulusDomain, rho):
    """Determinant D and half squared Frobenius norm F of grad u.

    ``rho`` must broadcast against the jet arrays.
    """
    r = domain.r(rho)
    if np.any(r <= 0):
        raise ValueError("radius must be positive")
    rr = domain.rho_r
    Qp1 = jet.Q_phi + 1.0
    D = (rr / r) * jet.P * (jet.P_rho * Qp1 - jet.P_phi * jet.Q_rho)
    F = 0.5 * rr**2 * (jet.P_rho**2 + jet.P**2 * jet.Q_rho**2) + (jet.P_phi**2 + jet.P**2 * Qp1**2) / (2.0 * r**2)
    return D, F


def h2_diagnostics(field: SpectralField, domain: AnnulusDomain, rule: QuadratureRule):
    """Extrema of D and 2 r^2 F over the quadrature grid."""
    jet = eval_field_on_rule(field, rule)
    rho = rule.chebyshev_nodes[:, None]
    D, F = kinematics(jet, domain, rho)
    scaled = 2.0 * domain.r(rho) ** 2 * F
    return float(D.min()), float(D.max()), float(scaled.min()), float(scaled.max())
