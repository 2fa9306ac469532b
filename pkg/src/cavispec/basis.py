"""Chebyshev and Fourier primitives on the computational rectangle (-1, 1) x (0, 2pi).

Fields are truncated Fourier-Chebyshev series

    P(rho, phi) = sum_j ( sum_{k=0}^{N/2} alpha[k, j] cos(k phi)
                          + sum_{k=1}^{N/2-1} beta[k-1, j] sin(k phi) ) T_j(rho)

and likewise for Q with (xi, eta). Row ``i`` of ``beta``/``eta`` holds the
sine mode ``k = i + 1``.

Two grids live here and must not be mixed up: quadrature uses the
Chebyshev-Gauss interior points cos((2m+1) pi / (2M'+2)), while interpolation
uses the Chebyshev extrema cos(m pi / M).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

DOMAIN_SLACK = 1e-12


def _check_domain(x):
    x = np.asarray(x, dtype=float)
    if np.any(np.abs(x) > 1.0 + DOMAIN_SLACK):
        raise ValueError(f"Chebyshev argument outside [-1, 1]: max |x| = {np.max(np.abs(x))!r}")
    return x


def chebyshev_table(degree: int, x, derivative: bool = True):
    """Values (and first derivatives) of T_0..T_degree at the points ``x``.

    Uses the three-term recurrence for T and the second-kind recurrence
    T_j' = j U_{j-1}, which stays finite at x = +-1.

    Returns
    -------
    T : ndarray, shape (degree + 1, len(x))
    dT : ndarray, same shape, only when ``derivative`` is true
    """
    if degree < 0:
        raise ValueError("degree must be non-negative")
    x = _check_domain(np.atleast_1d(x))
    T = np.empty((degree + 1, x.size))
    T[0] = 1.0
    if degree >= 1:
        T[1] = x
    for j in range(1, degree):
        T[j + 1] = 2.0 * x * T[j] - T[j - 1]
    if not derivative:
        return T
    # U[j] holds U_{j} for j = 0..degree-1
    dT = np.zeros_like(T)
    if degree >= 1:
        U = np.empty((degree, x.size))
        U[0] = 1.0
        if degree >= 2:
            U[1] = 2.0 * x
        for j in range(1, degree - 1):
            U[j + 1] = 2.0 * x * U[j] - U[j - 1]
        dT[1:] = np.arange(1, degree + 1)[:, None] * U
    return T, dT


def chebyshev_eval(j: int, x: float, derivative: bool = False):
    """T_j(x), or the pair (T_j(x), T_j'(x)) when ``derivative`` is true."""
    T, dT = chebyshev_table(j, np.array([x], dtype=float))
    if derivative:
        return float(T[j, 0]), float(dT[j, 0])
    return float(T[j, 0])


def gauss_chebyshev_rule(Mq: int):
    """Chebyshev-Gauss nodes (decreasing) and weights for the weight (1 - x^2)^(-1/2).

    Exact for polynomials of degree <= 2 Mq + 1.
    """
    if Mq < 0:
        raise ValueError("Mq must be non-negative")
    m = np.arange(Mq + 1)
    nodes = np.cos((2 * m + 1) * np.pi / (2 * Mq + 2))
    weights = np.full(Mq + 1, np.pi / (Mq + 1))
    return nodes, weights


def fourier_rule(Nq: int):
    """Equispaced periodic trapezoid nodes 2 pi n / Nq with weights 2 pi / Nq."""
    if Nq < 1:
        raise ValueError("Nq must be positive")
    nodes = 2.0 * np.pi * np.arange(Nq) / Nq
    weights = np.full(Nq, 2.0 * np.pi / Nq)
    return nodes, weights


@dataclass(frozen=True)
class QuadratureRule:
    """Tensor-product Gauss-Chebyshev x Fourier rule."""

    chebyshev_nodes: np.ndarray
    chebyshev_weights: np.ndarray
    fourier_nodes: np.ndarray
    fourier_weights: np.ndarray

    @classmethod
    def build(cls, Nq: int, Mq: int) -> "QuadratureRule":
        rho, wc = gauss_chebyshev_rule(Mq)
        phi, wf = fourier_rule(Nq)
        return cls(rho, wc, phi, wf)

    @property
    def Nq(self) -> int:
        return self.fourier_nodes.size

    @property
    def Mq(self) -> int:
        return self.chebyshev_nodes.size - 1


def _mode_counts(N: int):
    if N < 2 or N % 2:
        raise ValueError(f"N must be an even integer >= 2, got {N!r}")
    return N // 2 + 1, N // 2 - 1


@dataclass(frozen=True)
class SpectralField:
    """Coefficients of a truncated Fourier-Chebyshev pair (P, Q).

    ``alpha``, ``xi`` have shape (N/2 + 1, M + 1); ``beta``, ``eta`` have
    shape (N/2 - 1, M + 1).
    """

    N: int
    M: int
    alpha: np.ndarray
    beta: np.ndarray
    xi: np.ndarray
    eta: np.ndarray

    def __post_init__(self):
        n_cos, n_sin = _mode_counts(self.N)
        if self.M < 1:
            raise ValueError(f"M must be >= 1, got {self.M!r}")
        for name, rows in (("alpha", n_cos), ("beta", n_sin), ("xi", n_cos), ("eta", n_sin)):
            arr = np.array(getattr(self, name), dtype=float)
            if arr.shape != (rows, self.M + 1):
                raise ValueError(f"{name} has shape {arr.shape}, expected {(rows, self.M + 1)}")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @classmethod
    def zeros(cls, N: int, M: int) -> "SpectralField":
        n_cos, n_sin = _mode_counts(N)
        z = np.zeros
        return cls(N, M, z((n_cos, M + 1)), z((n_sin, M + 1)), z((n_cos, M + 1)), z((n_sin, M + 1)))

    def replace(self, **arrays) -> "SpectralField":
        parts = {k: getattr(self, k) for k in ("alpha", "beta", "xi", "eta")}
        parts.update(arrays)
        return SpectralField(self.N, self.M, **parts)


@dataclass(frozen=True)
class FieldJet:
    """Pointwise values of P, Q and their first partials (scalars or arrays)."""

    P: np.ndarray
    Q: np.ndarray
    P_rho: np.ndarray
    P_phi: np.ndarray
    Q_rho: np.ndarray
    Q_phi: np.ndarray


def fourier_tables(N: int, phi):
    """cos/sin mode tables and their phi-derivatives at the angles ``phi``.

    Returns ``C, dC, S, dS`` with C[k] = cos(k phi) for k = 0..N/2 and
    S[k-1] = sin(k phi) for k = 1..N/2-1.
    """
    phi = np.atleast_1d(np.asarray(phi, dtype=float))
    kc = np.arange(N // 2 + 1)[:, None]
    ks = np.arange(1, N // 2)[:, None]
    C = np.cos(kc * phi)
    S = np.sin(ks * phi)
    dC = -kc * np.sin(kc * phi)
    dS = ks * np.cos(ks * phi)
    return C, dC, S, dS


def eval_field_grid(field: SpectralField, rho, phi) -> FieldJet:
    """Evaluate a field on the tensor grid ``rho x phi``.

    Every array in the returned jet has shape (len(rho), len(phi)).
    """
    T, dT = chebyshev_table(field.M, rho)
    C, dC, S, dS = fourier_tables(field.N, phi)
    # angular synthesis first: (M+1, n_phi)
    Pa = field.alpha.T @ C + field.beta.T @ S
    Pa_phi = field.alpha.T @ dC + field.beta.T @ dS
    Qa = field.xi.T @ C + field.eta.T @ S
    Qa_phi = field.xi.T @ dC + field.eta.T @ dS
    return FieldJet(
        P=T.T @ Pa,
        Q=T.T @ Qa,
        P_rho=dT.T @ Pa,
        P_phi=T.T @ Pa_phi,
        Q_rho=dT.T @ Qa,
        Q_phi=T.T @ Qa_phi,
    )


def eval_field_on_rule(field: SpectralField, rule: QuadratureRule) -> FieldJet:
    return eval_field_grid(field, rule.chebyshev_nodes, rule.fourier_nodes)


def eval_field(field: SpectralField, rho: float, phi: float) -> FieldJet:
    """Evaluate P, Q and their first partials at a single point."""
    jet = eval_field_grid(field, np.array([rho], dtype=float), np.array([phi], dtype=float))
    return FieldJet(*(float(getattr(jet, name)[0, 0]) for name in FieldJet.__dataclass_fields__))


def interpolation_grid(N: int, M: int):
    """Chebyshev extrema cos(m pi / M), m = 0..M, and angles 2 pi n / N."""
    return np.cos(np.pi * np.arange(M + 1) / M), 2.0 * np.pi * np.arange(N) / N


def boundary_fourier_coeffs(P0_samples, Q0_samples, N: int):
    """Discrete Fourier coefficients of boundary samples taken at phi_n = 2 pi n / N.

    Returns ``(a, b, c, d)``: cosine coefficients ``a`` (k = 0..N/2) and sine
    coefficients ``b`` (k = 1..N/2-1) of the P samples, and ``c``, ``d`` for Q.
    The truncated series reproduces the samples exactly at the nodes.
    """
    a, b = _dft_real(np.asarray(P0_samples, dtype=float), N)
    c, d = _dft_real(np.asarray(Q0_samples, dtype=float), N)
    return a, b, c, d


def _dft_real(samples, N: int):
    """Real DFT along the last axis, normalised so the series interpolates."""
    if samples.shape[-1] != N:
        raise ValueError(f"expected {N} angular samples, got {samples.shape[-1]}")
    _mode_counts(N)
    F = np.fft.rfft(samples, axis=-1) / N
    cos_part = 2.0 * F.real
    cos_part[..., 0] *= 0.5
    cos_part[..., N // 2] *= 0.5
    sin_part = -2.0 * F.imag[..., 1 : N // 2]
    return cos_part, sin_part


def _chebyshev_from_extrema(values):
    """Chebyshev coefficients of the interpolant through values at cos(m pi / M).

    ``values`` has the extrema index on axis 0.
    """
    M = values.shape[0] - 1
    m = np.arange(M + 1)
    # DCT-I as an explicit (M+1)x(M+1) matrix; sizes here are small
    basis = np.cos(np.pi * np.outer(m, m) / M)
    halve = np.ones(M + 1)
    halve[[0, -1]] = 0.5
    coeffs = (2.0 / M) * (basis * halve[None, :]) @ values
    coeffs[[0, -1]] *= 0.5
    return coeffs


def interpolate(P_samples, Q_samples, N: int, M: int) -> SpectralField:
    """Interpolate samples on the Chebyshev-extrema x Fourier grid.

    ``P_samples`` and ``Q_samples`` have shape (M + 1, N), with row ``m`` at
    rho_m = cos(m pi / M) and column ``n`` at phi_n = 2 pi n / N.
    """
    P_samples = np.asarray(P_samples, dtype=float)
    Q_samples = np.asarray(Q_samples, dtype=float)
    if M < 1:
        raise ValueError("M must be >= 1")
    for name, arr in (("P_samples", P_samples), ("Q_samples", Q_samples)):
        if arr.shape != (M + 1, N):
            raise ValueError(f"{name} has shape {arr.shape}, expected {(M + 1, N)}")
    Pc, Ps = _dft_real(P_samples, N)
    Qc, Qs = _dft_real(Q_samples, N)
    return SpectralField(
        N,
        M,
        alpha=_chebyshev_from_extrema(Pc).T,
        beta=_chebyshev_from_extrema(Ps).T,
        xi=_chebyshev_from_extrema(Qc).T,
        eta=_chebyshev_from_extrema(Qs).T,
    )


def sample_on_interpolation_grid(field: SpectralField):
    """Values of (P, Q) on the grid used by :func:`interpolate`."""
    rho, phi = interpolation_grid(field.N, field.M)
    jet = eval_field_grid(field, rho, phi)
    return jet.P, jet.Q


def interpolate_function(func, N: int, M: int) -> SpectralField:
    """Interpolate ``func(rho, phi) -> (P, Q)`` evaluated on the interpolation grid."""
    rho, phi = interpolation_grid(N, M)
    R, PHI = np.meshgrid(rho, phi, indexing="ij")
    P, Q = func(R, PHI)
    return interpolate(np.broadcast_to(P, R.shape), np.broadcast_to(Q, R.shape), N, M)
