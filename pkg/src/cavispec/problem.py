"""Problem configuration, seeding and the end-to-end solve."""

from __future__ import annotations

import dataclasses
import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from numpy.polynomial import legendre

from .assembly import BoundaryData, Discretization, make_discretization, pack
from .basis import QuadratureRule, SpectralField, eval_field_grid, interpolate_function
from .model import AnnulusDomain, BoundaryStretch, MaterialModel, kinematics
from .oracle import incompressible_exact
from .solver import SolveReport, SolverConfig, solve

log = logging.getLogger(__name__)

SEED_MODES = ("auto", "incompressible", "affine", "radial")


class ConfigError(ValueError):
    """Invalid problem configuration; ``field`` names the offending key."""

    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


@dataclass(frozen=True)
class ProblemConfig:
    eps: float
    gamma: float = 1.0
    lambda1: float = 2.0
    lambda2: float = 2.0
    N: int = 16
    M: int = 32
    Nq: Optional[int] = None
    Mq: Optional[int] = None
    material: dict = field(default_factory=lambda: {"tag": "default", "p": 1.5, "kappa": 2.0 / 3.0})
    solver: dict = field(default_factory=dict)
    seed_mode: str = "auto"

    def __post_init__(self):
        if not isinstance(self.N, int) or self.N < 2 or self.N % 2:
            raise ConfigError("N", f"must be an even integer >= 2, got {self.N!r}")
        if not isinstance(self.M, int) or self.M < 1:
            raise ConfigError("M", f"must be an integer >= 1, got {self.M!r}")
        if not self.eps > 0:
            raise ConfigError("eps", f"must be positive, got {self.eps!r}")
        if not self.gamma <= 1.0:
            raise ConfigError("gamma", f"must not exceed 1, got {self.gamma!r}")
        if not self.eps < self.gamma:
            raise ConfigError("eps", f"must be smaller than gamma ({self.gamma!r}), got {self.eps!r}")
        for name in ("lambda1", "lambda2"):
            if not getattr(self, name) > 1.0:
                raise ConfigError(name, f"must exceed 1, got {getattr(self, name)!r}")
        if self.Nq is not None and self.Nq < 1:
            raise ConfigError("Nq", "must be positive")
        if self.Mq is not None and self.Mq < 0:
            raise ConfigError("Mq", "must be non-negative")
        if self.seed_mode not in SEED_MODES:
            raise ConfigError("seed_mode", f"must be one of {SEED_MODES}")
        try:
            self.build_material()
        except (TypeError, ValueError) as exc:
            raise ConfigError("material", str(exc)) from None
        try:
            self.solver_config()
        except (TypeError, ValueError) as exc:
            raise ConfigError("solver", str(exc)) from None

    @property
    def quad_N(self) -> int:
        return self.Nq if self.Nq is not None else 2 * self.N

    @property
    def quad_M(self) -> int:
        return self.Mq if self.Mq is not None else 8 * self.M

    @property
    def domain(self) -> AnnulusDomain:
        return AnnulusDomain(self.eps, self.gamma)

    @property
    def stretch(self) -> BoundaryStretch:
        return BoundaryStretch(self.lambda1, self.lambda2)

    def build_material(self) -> MaterialModel:
        params = {k: v for k, v in self.material.items() if k in ("p", "kappa")}
        tag = self.material.get("tag", "default")
        if tag != "default":
            raise ValueError(f"unknown material tag {tag!r}")
        return MaterialModel(tag=tag, **params)

    def solver_config(self) -> SolverConfig:
        return SolverConfig(**self.solver)

    def replace(self, **changes) -> "ProblemConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        """Fully resolved configuration, defaults expanded."""
        out = dataclasses.asdict(self)
        out["Nq"], out["Mq"] = self.quad_N, self.quad_M
        out["material"] = self.build_material().as_dict()
        out["solver"] = dataclasses.asdict(self.solver_config())
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "ProblemConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(sorted(unknown)[0], "unknown configuration key")
        if "eps" not in data:
            raise ConfigError("eps", "required")
        kwargs = dict(data)
        for key in ("N", "M", "Nq", "Mq"):
            value = kwargs.get(key)
            if isinstance(value, float) and value.is_integer():
                kwargs[key] = int(value)
        return cls(**kwargs)


def boundary_data(config: ProblemConfig) -> BoundaryData:
    return BoundaryData.from_stretch(config.stretch, config.N, config.gamma)


def build_discretization(config: ProblemConfig) -> Discretization:
    return make_discretization(config.N, config.M, config.domain, config.build_material(),
                               boundary_data(config), Nq=config.quad_N, Mq=config.quad_M)


def fine_rule(config: ProblemConfig) -> QuadratureRule:
    return QuadratureRule.build(2 * config.quad_N, 2 * config.quad_M + 1)


def min_det_on_rule(field_: SpectralField, domain: AnnulusDomain, rule: QuadratureRule) -> float:
    jet = eval_field_grid(field_, rule.chebyshev_nodes, rule.fourier_nodes)
    D, _ = kinematics(jet, domain, rule.chebyshev_nodes[:, None])
    return float(D.min())


def _shaped_seed(config: ProblemConfig, profile):
    """Sampler P = s(r) P0(phi) / (lam gamma), Q = Q0(phi) for a radial profile s.

    For an affine boundary map the factor P0^2 (1 + Q0') equals lam^2, so D
    is that of the radial profile; for lambda1 = lambda2 it is the plain
    radial map with Q = 0.
    """
    domain, gamma = config.domain, config.gamma
    lam = config.stretch.mean

    def func(R, PHI):
        P0, Q0 = config.stretch.polar(PHI, gamma)
        return profile(R) * P0 / (lam * gamma), Q0 + np.zeros_like(R)

    return func


def radial_seed_profile(config: ProblemConfig):
    """Radial profile s(rho) from a two-mode solve of the symmetric problem at lam = sqrt(lambda1 lambda2).

    Returns ``None`` if that solve does not converge.
    """
    lam = config.stretch.mean
    radial = config.replace(lambda1=lam, lambda2=lam, N=2, Nq=None, Mq=config.quad_M, seed_mode="incompressible")
    sol = solve_problem(radial)
    if not sol.report.success:
        log.warning("radial seed solve ended with status %r", sol.report.status)
        return None
    fld = sol.field
    return lambda R: eval_field_grid(fld, R[:, 0], np.zeros(1)).P


def initial_guess(config: ProblemConfig, disc: Optional[Discretization] = None) -> np.ndarray:
    """Admissible starting vector for the solver.

    Seeds, all interpolated and reduced to free coefficients:

    * ``incompressible``: the profile s(r) = sqrt(lam^2 gamma^2 + r^2 - gamma^2),
      lam = sqrt(lambda1 lambda2), shaped by the boundary map (see
      :func:`_shaped_seed`);
    * ``affine``: s(r) = lam r, i.e. the boundary map extended linearly;
    * ``radial``: s from a converged two-mode solve of the symmetric problem;
    * ``auto``: ``incompressible`` for symmetric stretches, ``radial`` otherwise.

    If the chosen seed is not orientation preserving on the quadrature grid
    the next one in the order incompressible, affine is tried.
    """
    disc = disc or build_discretization(config)
    domain, gamma = config.domain, config.gamma
    lam = config.stretch.mean
    mode = config.seed_mode
    if mode == "auto":
        mode = "incompressible" if config.stretch.symmetric else "radial"
    profiles = {
        "incompressible": lambda R: incompressible_exact(domain.r(R), lam, gamma),
        "affine": lambda R: lam * domain.r(R),
    }
    order = [mode] + [m for m in ("incompressible", "affine") if m != mode]
    for candidate in order:
        profile = radial_seed_profile(config) if candidate == "radial" else profiles[candidate]
        if profile is None:
            continue
        y = pack(interpolate_function(_shaped_seed(config, profile), config.N, config.M))
        if disc.min_det(y) > 0:
            if candidate != mode:
                log.warning("%s seed unavailable or inadmissible; using %s seed", mode, candidate)
            return y
    raise ValueError("no admissible seed for this configuration")


def accurate_energy(field_: SpectralField, domain: AnnulusDomain, material: MaterialModel,
                    panels: int = 48, points: int = 24, n_phi: Optional[int] = None) -> float:
    """Energy of a spectral field by high-order quadrature.

    Composite Gauss-Legendre in r on panels graded geometrically toward the
    cavity, periodic trapezoid in phi. Used to report the elastic energy of a
    converged field independently of the solve's own quadrature.
    """
    n_phi = n_phi or 8 * field_.N
    edges = np.geomspace(domain.eps, domain.gamma, panels + 1)
    x, w = legendre.leggauss(points)
    half = 0.5 * np.diff(edges)
    r = (0.5 * (edges[1:] + edges[:-1])[:, None] + half[:, None] * x[None, :]).ravel()
    wr = (half[:, None] * w[None, :]).ravel()
    rho = np.clip(domain.rho(r), -1.0, 1.0)
    phi = 2.0 * np.pi * np.arange(n_phi) / n_phi
    jet = eval_field_grid(field_, rho, phi)
    D, F = kinematics(jet, domain, rho[:, None])
    if np.any(D <= 0):
        return float("inf")
    density = material.g(F) + material.h(D)
    return float((2.0 * np.pi / n_phi) * np.sum(density * (r * wr)[:, None]))


@dataclass
class Solution:
    config: ProblemConfig
    field: SpectralField
    report: SolveReport
    energy: float

    @property
    def y(self) -> np.ndarray:
        return self.report.y


def solve_problem(config: ProblemConfig, y0=None) -> Solution:
    """Seed (or warm start from ``y0``), run the solver, post-process the energy."""
    disc = build_discretization(config)
    if y0 is None:
        y0 = initial_guess(config, disc)
    rule = fine_rule(config)
    domain = config.domain
    report = solve(disc, y0, config.solver_config(),
                   fine_check=lambda y: min_det_on_rule(disc.field(y), domain, rule))
    fld = disc.field(report.y)
    return Solution(config=config, field=fld, report=report,
                    energy=accurate_energy(fld, domain, config.build_material()))
