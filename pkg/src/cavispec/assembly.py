"""Discrete energy, residual and unknown-vector packing.

The unknowns are the Chebyshev coefficients with j >= 1. The j = 0
coefficients are eliminated with the Dirichlet data on rho = 1: since
T_j(1) = 1, setting alpha[k, 0] = a_k - sum_{j>=1} alpha[k, j] pins
P(1, phi_n) to the boundary samples. Perturbing a free coefficient then moves
the field by cos(k phi) (T_j(rho) - 1), which is exactly the test basis, so the
residual is the gradient of the quadrature energy with respect to ``y``.

Packing order of ``y``: alpha block, beta block, xi block, eta block; inside a
block the mode index k is major and j = 1..M is minor.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .basis import (
    FieldJet,
    QuadratureRule,
    SpectralField,
    boundary_fourier_coeffs,
    chebyshev_table,
    fourier_tables,
)
from .model import AnnulusDomain, BoundaryStretch, MaterialModel, kinematics


def n_unknowns(N: int, M: int) -> int:
    return 2 * N * M


@dataclass(frozen=True)
class BoundaryData:
    """Discrete Fourier coefficients of P0(1, phi) (a, b) and Q0(1, phi) (c, d)."""

    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    d: np.ndarray

    @property
    def N(self) -> int:
        return 2 * (self.a.size - 1)

    @classmethod
    def from_samples(cls, P0_samples, Q0_samples, N: int) -> "BoundaryData":
        return cls(*boundary_fourier_coeffs(P0_samples, Q0_samples, N))

    @classmethod
    def from_stretch(cls, stretch: BoundaryStretch, N: int, gamma: float) -> "BoundaryData":
        phi = 2.0 * np.pi * np.arange(N) / N
        P0, Q0 = stretch.polar(phi, gamma)
        return cls.from_samples(P0, Q0, N)

    def resynthesize(self, phi):
        C, _, S, _ = fourier_tables(self.N, phi)
        return self.a @ C + self.b @ S, self.c @ C + self.d @ S


def _block_sizes(N: int, M: int):
    return (N // 2 + 1) * M, (N // 2 - 1) * M


def pack(field: SpectralField) -> np.ndarray:
    """Free coefficients (j >= 1) of a field in packing order."""
    return np.concatenate([arr[:, 1:].ravel() for arr in (field.alpha, field.beta, field.xi, field.eta)])


def assemble_field(y, bc: BoundaryData, M: Optional[int] = None) -> SpectralField:
    """Rebuild the full coefficient set from free unknowns and boundary data."""
    y = np.asarray(y, dtype=float)
    N = bc.N
    if M is None:
        if y.size % (2 * N):
            raise ValueError(f"unknown vector of length {y.size} does not match N={N}")
        M = y.size // (2 * N)
    if y.size != n_unknowns(N, M):
        raise ValueError(f"unknown vector has length {y.size}, expected {n_unknowns(N, M)}")
    nc, ns = _block_sizes(N, M)
    splits = np.cumsum([nc, ns, nc])
    blocks = np.split(y, splits)
    full = []
    for free, rhs in zip(blocks, (bc.a, bc.b, bc.c, bc.d)):
        free = free.reshape(-1, M)
        col0 = rhs - free.sum(axis=1)
        full.append(np.column_stack([col0, free]))
    return SpectralField(N, M, *full)


@dataclass(frozen=True)
class Inadmissible:
    """Returned instead of an energy when D <= 0 at some quadrature node.

    ``node`` is (m', n'), the radial and angular quadrature indices.
    """

    node: tuple
    D: float

    def __float__(self):
        return float("inf")


class Discretization:
    """Precomputed tables for one (N, M, N', M') discretization of one problem."""

    def __init__(self, N: int, M: int, domain: AnnulusDomain, material: MaterialModel,
                 bc: BoundaryData, rule: QuadratureRule):
        if bc.N != N:
            raise ValueError(f"boundary data built for N={bc.N}, discretization has N={N}")
        self.N, self.M = N, M
        self.domain, self.material, self.bc, self.rule = domain, material, bc, rule
        rho = rule.chebyshev_nodes
        self.T, self.dT = chebyshev_table(M, rho)
        self.C, self.dC, self.S, self.dS = fourier_tables(N, rule.fourier_nodes)
        self.r = domain.r(rho)[:, None]
        # sqrt(1 - rho^2) undoes the Chebyshev weight so the rule integrates d rho d phi
        self.weights = (np.sqrt(1.0 - rho**2) * rule.chebyshev_weights)[:, None] * rule.fourier_weights[None, :]
        self.Tm1 = self.T[1:] - 1.0
        self.dTf = self.dT[1:]
        self._cache_key = None
        self._cache = None

    @property
    def size(self) -> int:
        return n_unknowns(self.N, self.M)

    def field(self, y) -> SpectralField:
        return assemble_field(y, self.bc, self.M)

    def _jet(self, fld: SpectralField):
        T, dT = self.T, self.dT
        C, dC, S, dS = self.C, self.dC, self.S, self.dS
        Pa = fld.alpha.T @ C + fld.beta.T @ S
        Qa = fld.xi.T @ C + fld.eta.T @ S
        return (
            T.T @ Pa,
            T.T @ Qa,
            dT.T @ Pa,
            T.T @ (fld.alpha.T @ dC + fld.beta.T @ dS),
            dT.T @ Qa,
            T.T @ (fld.xi.T @ dC + fld.eta.T @ dS),
        )

    def _state(self, y):
        y = np.asarray(y, dtype=float)
        key = y.tobytes()
        if key == self._cache_key:
            return self._cache
        jet = FieldJet(*self._jet(self.field(y)))
        D, F = kinematics(jet, self.domain, self.rule.chebyshev_nodes[:, None])
        self._cache_key, self._cache = key, (jet, D, F)
        return self._cache

    def determinants(self, y) -> np.ndarray:
        """D on the quadrature grid, shape (M' + 1, N')."""
        return self._state(y)[1]

    def min_det(self, y) -> float:
        return float(self.determinants(y).min())

    def energy(self, y):
        """Quadrature energy, or :class:`Inadmissible` if some D <= 0."""
        jet, D, F = self._state(y)
        if not np.all(D > 0):
            idx = np.unravel_index(np.argmin(D), D.shape)
            return Inadmissible(node=(int(idx[0]), int(idx[1])), D=float(D[idx]))
        mat = self.material
        density = (mat.g(F) + mat.h(D)) * self.r / self.domain.rho_r
        return float(np.sum(density * self.weights))

    def residual(self, y) -> np.ndarray:
        """Discrete Euler-Lagrange residual, ordered like the unknowns.

        Raises ``ValueError`` at inadmissible states; callers that need a
        soft signal check :meth:`energy` or :meth:`min_det` first.
        """
        jet, D, F = self._state(y)
        if not np.all(D > 0):
            raise ValueError("residual requested at an inadmissible state (D <= 0)")
        return self._residual_from_jet(jet, D, F)

    def _residual_from_jet(self, jet: FieldJet, D, F) -> np.ndarray:
        """Project the pointwise partial derivatives onto the test basis (real or complex jets)."""
        mat = self.material
        P, Pr, Pf, Qr, Qf1 = jet.P, jet.P_rho, jet.P_phi, jet.Q_rho, jet.Q_phi + 1.0
        gp = mat.g_prime(F)
        hp = mat.h_prime(D)
        rrr = self.r * self.domain.rho_r
        w = self.weights
        # partials of (g(F) + h(D)) r / rho_r with respect to P, P_rho, P_phi, Q_rho, Q_phi
        A_P = w * (gp * (rrr * P * Qr**2 + P * Qf1**2 / rrr) + hp * (Pr * Qf1 - Pf * Qr))
        A_Pr = w * (gp * rrr * Pr + hp * P * Qf1)
        A_Pf = w * (gp * Pf / rrr - hp * P * Qr)
        B_Qr = w * P * (gp * rrr * P * Qr - hp * Pf)
        B_Qf = w * P * (gp * P * Qf1 / rrr + hp * Pr)

        Tm1, dTf = self.Tm1, self.dTf
        C, dC, S, dS = self.C, self.dC, self.S, self.dS

        def project(trig, dtrig, d_rho, d_phi):
            # sum over nodes of d_rho * B_rho + d_phi * B_phi for every test function B
            return trig @ (d_rho.T @ dTf.T) + dtrig @ (d_phi.T @ Tm1.T)

        AP_T = A_P.T @ Tm1.T
        r_alpha = C @ AP_T + project(C, dC, A_Pr, A_Pf)
        r_beta = S @ AP_T + project(S, dS, A_Pr, A_Pf)
        r_xi = project(C, dC, B_Qr, B_Qf)
        r_eta = project(S, dS, B_Qr, B_Qf)
        return np.concatenate([r_alpha.ravel(), r_beta.ravel(), r_xi.ravel(), r_eta.ravel()])

    def _unknown_jet(self, index: int):
        """Jet of the test function attached to one unknown: trig(k phi) (T_j(rho) - 1).

        Returns (block, value, d_rho, d_phi) with ``block`` 0 for P and 1 for Q.
        """
        N, M = self.N, self.M
        nc, ns = _block_sizes(N, M)
        sizes = [nc, ns, nc, ns]
        block = 0
        while index >= sizes[block]:
            index -= sizes[block]
            block += 1
        k, j = divmod(index, M)
        # rows of the sine tables already start at mode 1
        trig, dtrig = (self.C[k], self.dC[k]) if block in (0, 2) else (self.S[k], self.dS[k])
        Tj, dTj = self.Tm1[j][:, None], self.dTf[j][:, None]
        return block // 2, Tj * trig[None, :], dTj * trig[None, :], Tj * dtrig[None, :]

    def _admissible_offset(self, y, j, step):
        """Shift of unknown j keeping D > 0: ``step``, else ``-step``, else halved."""
        for _ in range(40):
            for candidate in (step, -step):
                yj = y.copy()
                yj[j] += candidate
                if self.min_det(yj) > 0:
                    return candidate, yj
            step *= 0.5
        raise ValueError(f"no admissible finite-difference step for unknown {j}")

    def jacobian_fd(self, y, residual=None) -> np.ndarray:
        """Forward-difference Jacobian of :meth:`residual` with steps max(1e-7, 1e-7 |y_j|).

        Near the admissibility boundary a perturbed state can have D <= 0;
        the step is then flipped, and halved if both directions fail.
        """
        y = np.array(y, dtype=float)
        f0 = self.residual(y) if residual is None else residual
        J = np.empty((f0.size, y.size))
        for j in range(y.size):
            step, yj = self._admissible_offset(y, j, max(1e-7, 1e-7 * abs(y[j])))
            J[:, j] = (self.residual(yj) - f0) / step
        self._state(y)
        return J

    @property
    def fd_step(self) -> float:
        # D reacts to a coefficient change h roughly like h M^2 / eps near the cavity
        return float(np.clip(1e-2 * self.domain.eps / self.M**2, 1e-12, 1e-7))

    def jacobian_central(self, y, step: Optional[float] = None) -> np.ndarray:
        """Central-difference Jacobian with a step scaled to the cavity size.

        Falls back to a one-sided difference for columns where one of the
        two perturbed states is inadmissible.
        """
        y = np.array(y, dtype=float)
        h = self.fd_step if step is None else step
        J = np.empty((y.size, y.size))
        f0 = None
        for j in range(y.size):
            yp, ym = y.copy(), y.copy()
            yp[j] += h
            ym[j] -= h
            if self.min_det(yp) > 0 and self.min_det(ym) > 0:
                J[:, j] = (self.residual(yp) - self.residual(ym)) / (2.0 * h)
                continue
            if f0 is None:
                f0 = self.residual(y)
            hj, yj = self._admissible_offset(y, j, h)
            J[:, j] = (self.residual(yj) - f0) / hj
        self._state(y)
        return J

    def jacobian_complex_step(self, y, step: float = 1e-30) -> np.ndarray:
        """Jacobian of :meth:`residual` by complex-step differentiation.

        Column j is Im f(y + i h e_j) / h. There is no subtractive
        cancellation, so the columns are accurate to rounding even where the
        residual is extremely stiff (small cavities); real finite differences
        lose the soft directions there. The material functions must accept
        complex arguments.
        """
        jet, D, F = self._state(y)
        if not np.all(D > 0):
            raise ValueError("Jacobian requested at an inadmissible state (D <= 0)")
        n = self.size
        J = np.empty((n, n))
        fields = ("P", "P_rho", "P_phi"), ("Q", "Q_rho", "Q_phi")
        for col in range(n):
            which, val, d_rho, d_phi = self._unknown_jet(col)
            parts = {name: getattr(jet, name).astype(complex) for name in FieldJet.__dataclass_fields__}
            for name, delta in zip(fields[which], (val, d_rho, d_phi)):
                parts[name] = parts[name] + 1j * step * delta
            cjet = FieldJet(**parts)
            cD, cF = kinematics(cjet, self.domain, self.rule.chebyshev_nodes[:, None])
            J[:, col] = self._residual_from_jet(cjet, cD, cF).imag / step
        return J

    def jacobian(self, y) -> np.ndarray:
        """Jacobian used by the solver: complex step, central differences if the material is real-only."""
        try:
            return self.jacobian_complex_step(y)
        except TypeError:
            return self.jacobian_central(y)


def make_discretization(N: int, M: int, domain: AnnulusDomain, material: MaterialModel,
                        bc: BoundaryData, Nq: Optional[int] = None, Mq: Optional[int] = None,
                        rule: Optional[QuadratureRule] = None) -> Discretization:
    """Discretization with the default quadrature N' = 2N, M' = 8M unless overridden."""
    if rule is None:
        rule = QuadratureRule.build(Nq or 2 * N, Mq or 8 * M)
    return Discretization(N, M, domain, material, bc, rule)


def discrete_energy(y, bc: BoundaryData, mat: MaterialModel, domain: AnnulusDomain, rule: QuadratureRule):
    y = np.asarray(y, dtype=float)
    M = y.size // (2 * bc.N)
    return Discretization(bc.N, M, domain, mat, bc, rule).energy(y)


def residual(y, bc: BoundaryData, mat: MaterialModel, domain: AnnulusDomain, rule: QuadratureRule):
    y = np.asarray(y, dtype=float)
    M = y.size // (2 * bc.N)
    return Discretization(bc.N, M, domain, mat, bc, rule).residual(y)


def jacobian_fd(y, bc: BoundaryData, mat: MaterialModel, domain: AnnulusDomain, rule: QuadratureRule):
    y = np.asarray(y, dtype=float)
    M = y.size // (2 * bc.N)
    return Discretization(bc.N, M, domain, mat, bc, rule).jacobian_fd(y)
