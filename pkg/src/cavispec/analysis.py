"""Cavity geometry, convergence-model regression and stretch sweeps."""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np
from scipy.optimize import least_squares

from .basis import SpectralField, chebyshev_table, eval_field_grid, interpolate_function
from .model import AnnulusDomain
from .oracle import incompressible_exact
from .problem import build_discretization, initial_guess, solve_problem

log = logging.getLogger(__name__)

MIN_CAVITY_SAMPLES = 256


@dataclass(frozen=True)
class CavityMetrics:
    """Extent of the deformed cavity boundary |u|(rho = -1, phi).

    ``radius`` is the value at phi = 0, which is the cavity radius for
    radially symmetric fields.
    """

    semi_major: float
    semi_minor: float
    radius: float

    def as_dict(self) -> dict:
        return {"semi_major": self.semi_major, "semi_minor": self.semi_minor, "radius": self.radius}


def cavity_metrics(field_: SpectralField, n_samples: int = MIN_CAVITY_SAMPLES) -> CavityMetrics:
    """Semi-axes as the extrema of P over ``n_samples`` equispaced angles on the cavity."""
    if n_samples < MIN_CAVITY_SAMPLES:
        raise ValueError(f"need at least {MIN_CAVITY_SAMPLES} angular samples, got {n_samples}")
    phi = 2.0 * np.pi * np.arange(n_samples) / n_samples
    P = eval_field_grid(field_, np.array([-1.0]), phi).P[0]
    return CavityMetrics(float(P.max()), float(P.min()), float(P[0]))


def min_interpolant_slope(eps: float, gamma: float, lam: float, M: int, n_rho: int = 20001) -> float:
    """Minimum over rho of d/d rho of the degree-M interpolant of the incompressible profile.

    The interpolant is independent of N for a radial profile, so a two-mode
    angular grid is used. The minimum is taken over a uniform rho grid that
    includes both endpoints.
    """
    domain = AnnulusDomain(eps, gamma)
    fld = interpolate_function(
        lambda R, PHI: (incompressible_exact(domain.r(R), lam, gamma), np.zeros_like(R)), 2, M)
    rho = np.linspace(-1.0, 1.0, n_rho)
    _, dT = chebyshev_table(M, rho)
    return float((fld.alpha[0] @ dT).min())


# --- convergence-model regression -----------------------------------------------------------

@dataclass(frozen=True)
class ConvergenceSample:
    N: int
    M: int
    q: float

    def __post_init__(self):
        if self.N < 2 or self.N % 2:
            raise ValueError(f"N must be even and >= 2, got {self.N}")
        if self.M < 1:
            raise ValueError(f"M must be >= 1, got {self.M}")


@dataclass(frozen=True)
class RegressedModel:
    """Fit of q(N, M) = q_inf + c1 N^-nu1 + c2 M^-nu2.

    In the M-only model c1 = 0 and nu1 is NaN. ``degenerate`` marks constant data.
    """

    q_inf: float
    c1: float
    c2: float
    nu1: float
    nu2: float
    residual_norm: float
    model: str = "full"
    degenerate: bool = False

    def predict(self, N, M):
        N = np.asarray(N, dtype=float)
        M = np.asarray(M, dtype=float)
        out = self.q_inf + self.c2 * M ** (-self.nu2)
        if self.model == "full":
            out = out + self.c1 * N ** (-self.nu1)
        return out

    def as_dict(self) -> dict:
        return {
            "q_inf": self.q_inf, "c1": self.c1, "c2": self.c2, "nu1": self.nu1, "nu2": self.nu2,
            "residual_norm": self.residual_norm, "model": self.model, "degenerate": self.degenerate,
        }


class UnderdeterminedFit(ValueError):
    pass


NU1_GRID = np.arange(1, 31, dtype=float)
NU2_GRID = np.arange(1, 13, dtype=float)


def _linear_fit(columns, q):
    A = np.column_stack(columns)
    coef, *_ = np.linalg.lstsq(A, q, rcond=None)
    return coef, float(np.linalg.norm(A @ coef - q))


def fit_convergence(samples: Sequence[ConvergenceSample], model: Optional[str] = None) -> RegressedModel:
    """Least-squares fit of the algebraic convergence model.

    ``model`` is ``"full"`` (needs >= 5 samples, >= 2 distinct N, >= 3 distinct M)
    or ``"M"`` (q_inf + c2 M^-nu2, needs >= 3 distinct M); by default the full
    model is used when the data support it. Exponents are first scanned on an
    integer grid with the linear coefficients solved exactly, and the best
    start is refined by nonlinear least squares.
    """
    samples = list(samples)
    N = np.array([s.N for s in samples], dtype=float)
    M = np.array([s.M for s in samples], dtype=float)
    q = np.array([s.q for s in samples], dtype=float)
    n_N, n_M = np.unique(N).size, np.unique(M).size
    full_ok = len(samples) >= 5 and n_N >= 2 and n_M >= 3
    if model is None:
        model = "full" if full_ok else "M"
    if model == "full" and not full_ok:
        raise UnderdeterminedFit("full model needs >= 5 samples with >= 2 distinct N and >= 3 distinct M")
    if model == "M" and n_M < 3:
        raise UnderdeterminedFit("M-only model needs >= 3 distinct M")
    if model not in ("full", "M"):
        raise ValueError(f"unknown model {model!r}")
    nan = float("nan")
    if np.ptp(q) <= 1e-14 * max(1.0, abs(q[0])):
        return RegressedModel(float(q.mean()), 0.0, 0.0, nan if model == "M" else 0.0, 0.0, 0.0,
                              model=model, degenerate=True)

    # work relative to the spread of the data so tolerances are scale free
    shift, scale = q.mean(), np.ptp(q)
    qs = (q - shift) / scale
    one = np.ones_like(q)

    if model == "full":
        best = None
        for nu1, nu2 in itertools.product(NU1_GRID, NU2_GRID):
            coef, res = _linear_fit([one, N ** -nu1, M ** -nu2], qs)
            if best is None or res < best[0]:
                best = (res, coef, nu1, nu2)
        _, (a, c1, c2), nu1, nu2 = best
        x0 = np.array([a, c1 * 2.0 ** -nu1, c2 * 2.0 ** -nu2, nu1, nu2])

        def resid(x):
            # coefficients stored at the reference resolution 2 keep the problem well scaled
            return x[0] + x[1] * (N / 2.0) ** -x[3] + x[2] * (M / 2.0) ** -x[4] - qs
    else:
        best = None
        for nu2 in np.arange(0.25, 30.25, 0.25):
            coef, res = _linear_fit([one, M ** -nu2], qs)
            if best is None or res < best[0]:
                best = (res, coef, nu2)
        _, (a, c2), nu2 = best
        x0 = np.array([a, c2 * 2.0 ** -nu2, nu2])

        def resid(x):
            return x[0] + x[1] * (M / 2.0) ** -x[2] - qs

    lower = np.full(x0.size, -np.inf)
    lower[-1] = 1e-3
    if model == "full":
        lower[3] = 1e-3
    x0[lower > -np.inf] = np.maximum(x0[lower > -np.inf], 2e-3)
    sol = least_squares(resid, x0, bounds=(lower, np.inf), xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=20000)
    x = sol.x if np.linalg.norm(sol.fun) <= np.linalg.norm(resid(x0)) else x0
    res_norm = float(np.linalg.norm(resid(x)) * scale)
    if model == "full":
        a, b1, b2, nu1, nu2 = x
        c1, c2 = b1 * 2.0 ** nu1 * scale, b2 * 2.0 ** nu2 * scale
    else:
        a, b2, nu2 = x
        c1, nu1, c2 = 0.0, nan, b2 * 2.0 ** nu2 * scale
    return RegressedModel(float(a * scale + shift), float(c1), float(c2), float(nu1), float(nu2), res_norm,
                          model=model)


# --- stretch sweeps ---------------------------------------------------------------------------

@dataclass
class SweepRow:
    lambda1: float
    lambda2: float
    status: str
    energy: float
    metrics: Optional[CavityMetrics]
    residual_norm: float
    y: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def ok(self) -> bool:
        return self.status == "converged"

    def as_dict(self) -> dict:
        out = {"lambda1": self.lambda1, "lambda2": self.lambda2, "status": self.status,
               "energy": self.energy, "residual_norm": self.residual_norm}
        out.update(self.metrics.as_dict() if self.metrics else
                   {"semi_major": float("nan"), "semi_minor": float("nan"), "radius": float("nan")})
        return out


@dataclass
class SweepResult:
    rows: list

    def column(self, name: str) -> np.ndarray:
        return np.array([row.as_dict()[name] for row in self.rows], dtype=float)

    def strictly_increasing(self, name: str) -> bool:
        values = self.column(name)
        return bool(np.all([r.ok for r in self.rows]) and np.all(np.diff(values) > 0))

    def monotonicity(self) -> dict:
        return {name: self.strictly_increasing(name) for name in ("semi_major", "semi_minor", "radius", "energy")}


def sweep_lambda(template, lambdas: Iterable, ratio: Optional[float] = None, warm_start: bool = True) -> SweepResult:
    """Solve along ascending stretches, warm-starting each point from the previous solution.

    ``template`` is a :class:`cavispec.problem.ProblemConfig`. With ``ratio``
    unset the sweep is symmetric (lambda1 = lambda2 = lambda); otherwise
    lambda1 = lambda and lambda2 = lambda / ratio. The warm start adds the
    change of the seed between consecutive stretches to the previous solution,
    so the new boundary data enter smoothly rather than through the j = 0
    coefficients alone. Failed points are kept as rows with their status.
    """
    lambdas = [float(v) for v in lambdas]
    if any(b <= a for a, b in zip(lambdas, lambdas[1:])):
        raise ValueError("stretch values must be strictly ascending")
    rows = []
    prev_y = prev_seed = None
    for lam in lambdas:
        l1, l2 = (lam, lam) if ratio is None else (lam, lam / ratio)
        cfg = template.replace(lambda1=l1, lambda2=l2)
        try:
            seed = initial_guess(cfg)
            y0 = seed
            if warm_start and prev_y is not None:
                candidate = prev_y + (seed - prev_seed)
                if build_discretization(cfg).min_det(candidate) > 0:
                    y0 = candidate
            sol = solve_problem(cfg, y0=y0)
        except ValueError as exc:
            log.warning("sweep point lambda1=%g failed: %s", l1, exc)
            rows.append(SweepRow(l1, l2, "failed", float("nan"), None, float("nan")))
            prev_y = None
            continue
        rep = sol.report
        rows.append(SweepRow(l1, l2, rep.status, sol.energy, cavity_metrics(sol.field), rep.fnorm, rep.y))
        if rep.success:
            prev_y, prev_seed = rep.y, seed
        else:
            prev_y = None
    return SweepResult(rows)
