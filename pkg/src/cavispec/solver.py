"""Gradient descent followed by damped Broyden iterations, with a tolerance cascade.

The objective is anything exposing

* ``energy(y)`` -> float, or a non-float sentinel when inadmissible,
* ``residual(y)`` -> ndarray (the energy gradient),
* ``min_det(y)`` -> float, the smallest determinant on the check grid,
* ``jacobian(y)`` -> ndarray, used once per quasi-Newton phase.

:class:`cavispec.assembly.Discretization` provides these; tests plug in small
surrogates.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.linalg

log = logging.getLogger(__name__)

GRADIENT = "gradient"
REGULARIZED = "regularized"
QUASI_NEWTON = "quasi-newton"


@dataclass(frozen=True)
class SolverConfig:
    tol_start: float = 1e-1
    tol_final: float = 1e-10
    tol_shrink: float = 10.0
    step_grow: float = 4.0
    step_shrink: float = 2.0
    step_min: float = 1e-16
    max_outer_iterations: int = 10**6
    broyden_skip: float = 1e-14
    # accepted steepest-descent steps per gradient phase; None = unlimited
    gradient_budget: Optional[int] = 500
    # what to do when the budget is spent: continue descent along regularized
    # Newton directions (True) or hand over to quasi-Newton directly (False)
    regularized_descent: bool = True
    mu_start: float = 1e-3
    mu_grow: float = 4.0
    mu_shrink: float = 8.0
    mu_max: float = 1e20

    def __post_init__(self):
        if not self.tol_final < self.tol_start:
            raise ValueError("tol_final must be smaller than tol_start")
        for name in ("tol_shrink", "step_grow", "step_shrink"):
            if getattr(self, name) <= 1:
                raise ValueError(f"{name} must exceed 1")
        if self.step_min <= 0 or self.max_outer_iterations < 1:
            raise ValueError("step_min and max_outer_iterations must be positive")
        if self.gradient_budget is not None and self.gradient_budget < 0:
            raise ValueError("gradient_budget must be non-negative")
        if self.mu_start <= 0 or self.mu_grow <= 1 or self.mu_shrink <= 1 or self.mu_max <= self.mu_start:
            raise ValueError("invalid regularization schedule")


@dataclass
class Trial:
    """One evaluated trial point, accepted or not."""

    iteration: int
    phase: str
    t: float
    energy: float
    fnorm: float
    min_det: float
    tol: float
    accepted: bool


@dataclass
class SolverState:
    y: np.ndarray
    f: np.ndarray
    energy: float
    tol: float
    phase: str = GRADIENT
    t: float = 1.0
    B: Optional[np.ndarray] = None
    iterations: int = 0
    gradient_steps: int = 0
    newton_steps: int = 0
    regularized_steps: int = 0
    restarts: int = 0
    broyden_skips: int = 0
    history: list = field(default_factory=list)

    @property
    def fnorm(self) -> float:
        return float(np.linalg.norm(self.f))


@dataclass
class SolveReport:
    y: np.ndarray
    fnorm: float
    energy: float
    min_det: float
    status: str
    gradient_steps: int
    newton_steps: int
    regularized_steps: int
    restarts: int
    broyden_skips: int
    iterations: int
    wall_time: float
    final_tol: float
    history: list = field(repr=False, default_factory=list)
    min_det_fine: Optional[float] = None

    @property
    def success(self) -> bool:
        return self.status == "converged"

    def to_dict(self) -> dict:
        return {
            "status": self.status,
            "success": self.success,
            "residual_norm": self.fnorm,
            "energy": self.energy,
            "min_D": self.min_det,
            "min_D_fine": self.min_det_fine,
            "gradient_steps": self.gradient_steps,
            "newton_steps": self.newton_steps,
            "regularized_steps": self.regularized_steps,
            "restarts": self.restarts,
            "broyden_skips": self.broyden_skips,
            "iterations": self.iterations,
            "final_tol": self.final_tol,
            "wall_time": self.wall_time,
        }


class IterationLimit(RuntimeError):
    pass


def _as_energy(value) -> float:
    return value if isinstance(value, float) else float("inf")


def _tick(state: SolverState, config: SolverConfig):
    if state.iterations >= config.max_outer_iterations:
        raise IterationLimit
    state.iterations += 1


def gradient_phase(objective, state: SolverState, config: SolverConfig = SolverConfig()) -> str:
    """Backtracking gradient descent until |f| < state.tol.

    Returns ``"ok"`` when the tolerance is met, ``"budget"`` after
    ``config.gradient_budget`` accepted steps, and ``"stall"`` when the trial
    step fell below ``step_min``; ``state`` is updated in place.
    """
    state.phase = GRADIENT
    t_prev = 1.0
    accepted = 0
    while True:
        if state.fnorm < state.tol:
            return "ok"
        if config.gradient_budget is not None and accepted >= config.gradient_budget:
            if config.regularized_descent and regularized_descent(objective, state, config) == "ok":
                return "ok"
            return "budget"
        t = config.step_grow * t_prev
        while True:
            if t < config.step_min:
                return "stall"
            _tick(state, config)
            y_new = state.y - t * state.f
            E_new = _as_energy(objective.energy(y_new))
            min_det = objective.min_det(y_new)
            accept = min_det > 0 and E_new < state.energy
            f_new = objective.residual(y_new) if accept else None
            state.history.append(Trial(state.iterations, GRADIENT, t, E_new,
                                       float(np.linalg.norm(f_new)) if accept else float("nan"),
                                       min_det, state.tol, accept))
            if accept:
                break
            t /= config.step_shrink
        state.y, state.f, state.energy = y_new, f_new, E_new
        state.gradient_steps += 1
        accepted += 1
        state.t = t_prev = t


def regularized_descent(objective, state: SolverState, config: SolverConfig = SolverConfig()) -> str:
    """Energy descent along d = (H + mu diag|H|)^-1 f, H the symmetrized Jacobian.

    Continues a gradient phase whose steepest-descent budget is spent. A trial
    y - d is accepted under the same rule as a gradient step (E decreases and
    D > 0); mu shrinks after an acceptance and grows after a rejection.
    Returns ``"ok"`` once |f| < state.tol, ``"stall"`` when mu exceeds mu_max.
    """
    state.phase = REGULARIZED
    mu = config.mu_start
    while True:
        if state.fnorm < state.tol:
            return "ok"
        J = objective.jacobian(state.y)
        H = 0.5 * (J + J.T)
        scale = np.diag(np.abs(np.diag(H)) + np.finfo(float).tiny)
        while True:
            if mu > config.mu_max:
                return "stall"
            _tick(state, config)
            try:
                d = scipy.linalg.solve(H + mu * scale, state.f, assume_a="sym")
            except (np.linalg.LinAlgError, ValueError):
                d = None
            accept = False
            E_new = min_det = float("nan")
            f_new = None
            if d is not None and np.all(np.isfinite(d)):
                y_new = state.y - d
                min_det = objective.min_det(y_new)
                if min_det > 0:
                    E_new = _as_energy(objective.energy(y_new))
                    accept = E_new < state.energy
                if accept:
                    f_new = objective.residual(y_new)
            state.history.append(Trial(state.iterations, REGULARIZED, 1.0 / mu, E_new,
                                       float(np.linalg.norm(f_new)) if accept else float("nan"),
                                       min_det, state.tol, accept))
            if accept:
                break
            mu *= config.mu_grow
        state.y, state.f, state.energy = y_new, f_new, E_new
        state.regularized_steps += 1
        mu /= config.mu_shrink


def _inverse_jacobian(J: np.ndarray) -> np.ndarray:
    n = J.shape[0]
    try:
        lu = scipy.linalg.lu_factor(J, check_finite=True)
        if np.min(np.abs(np.diag(lu[0]))) == 0.0:
            raise np.linalg.LinAlgError("singular")
        B = scipy.linalg.lu_solve(lu, np.eye(n))
        if np.all(np.isfinite(B)):
            return B
    except (np.linalg.LinAlgError, ValueError, scipy.linalg.LinAlgWarning):
        pass
    shift = 1e-10 * np.trace(J) / n
    log.warning("singular Jacobian; retrying with Tikhonov shift %.3e", shift)
    return np.linalg.inv(J + shift * np.eye(n))


def broyden_update(B: np.ndarray, s: np.ndarray, z: np.ndarray, skip: float = 1e-14):
    """Rank-one update B + (s - B z) s^T B / (s^T B z) of an inverse Jacobian.

    Returns ``None`` when the denominator is negligible.
    """
    Bz = B @ z
    sB = s @ B
    denom = float(s @ Bz)
    if abs(denom) <= skip * np.linalg.norm(s) * np.linalg.norm(Bz):
        return None
    return B + np.outer(s - Bz, sB) / denom


def quasi_newton_phase(objective, state: SolverState, config: SolverConfig = SolverConfig()) -> str:
    """Damped Broyden iterations from the current state.

    Returns ``"converged"`` when |f| < tol_final, or ``"stall"`` when damping
    failed (the caller then tightens the tolerance and restarts descent).
    """
    state.phase = QUASI_NEWTON
    state.B = _inverse_jacobian(objective.jacobian(state.y))
    t_prev = 1.0
    while True:
        fnorm = state.fnorm
        if fnorm < config.tol_final:
            return "converged"
        direction = state.B @ state.f
        t = config.step_grow * t_prev
        while True:
            if t < config.step_min:
                return "stall"
            _tick(state, config)
            y_new = state.y - t * direction
            min_det = objective.min_det(y_new)
            accept = False
            f_new = None
            if min_det > 0:
                f_new = objective.residual(y_new)
                accept = float(np.linalg.norm(f_new)) < fnorm
            E_new = _as_energy(objective.energy(y_new)) if accept else float("nan")
            state.history.append(Trial(state.iterations, QUASI_NEWTON, t, E_new,
                                       float(np.linalg.norm(f_new)) if f_new is not None else float("nan"),
                                       min_det, state.tol, accept))
            if accept:
                break
            t /= config.step_shrink
        s = y_new - state.y
        z = f_new - state.f
        updated = broyden_update(state.B, s, z, config.broyden_skip)
        if updated is None:
            state.broyden_skips += 1
            log.info("Broyden skip at iteration %d", state.iterations)
        else:
            state.B = updated
        state.y, state.f, state.energy = y_new, f_new, E_new
        state.newton_steps += 1
        state.t = t_prev = t


def solve(objective, y0, config: SolverConfig = SolverConfig(), fine_check=None) -> SolveReport:
    """Run the full cascade from the admissible starting vector ``y0``.

    ``fine_check(y)``, if given, returns min D on a finer diagnostic grid for
    the report.
    """
    start = time.perf_counter()
    y0 = np.array(y0, dtype=float)
    E0 = objective.energy(y0)
    if not isinstance(E0, float) or objective.min_det(y0) <= 0:
        raise ValueError("initial guess is not orientation preserving")
    state = SolverState(y=y0, f=objective.residual(y0), energy=E0, tol=config.tol_start)
    status = "failed"
    try:
        while True:
            # relative slack: repeated division by 10 does not land exactly on 1e-10
            if state.tol < config.tol_final * (1.0 - 1e-9):
                status = "tolerance exhausted"
                break
            outcome = gradient_phase(objective, state, config)
            if outcome == "stall":
                status = "gradient stall"
                break
            if outcome == "budget":
                log.info("gradient budget spent at |f|=%.3e (TOL=%.1e)", state.fnorm, state.tol)
            outcome = quasi_newton_phase(objective, state, config)
            if outcome == "converged":
                status = "converged"
                break
            state.restarts += 1
            state.tol = config.tol_start / config.tol_shrink**state.restarts
            log.info("quasi-Newton stall; restarting descent with TOL=%.1e", state.tol)
    except IterationLimit:
        status = "iteration limit"
    # guarantee the report's energy/residual describe the returned y
    E_final = _as_energy(objective.energy(state.y))
    report = SolveReport(
        y=state.y,
        fnorm=state.fnorm,
        energy=E_final,
        min_det=objective.min_det(state.y),
        status=status,
        gradient_steps=state.gradient_steps,
        newton_steps=state.newton_steps,
        regularized_steps=state.regularized_steps,
        restarts=state.restarts,
        broyden_skips=state.broyden_skips,
        iterations=state.iterations,
        wall_time=time.perf_counter() - start,
        final_tol=state.tol,
        history=state.history,
        min_det_fine=fine_check(state.y) if fine_check is not None else None,
    )
    log.info("solve finished: %s, |f|=%.3e, E=%.12f, %d gradient + %d regularized + %d quasi-Newton steps",
             status, report.fnorm, report.energy, report.gradient_steps, report.regularized_steps,
             report.newton_steps)
    return report
