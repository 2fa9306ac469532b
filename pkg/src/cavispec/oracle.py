"""Reference solutions for the radially symmetric problem.

``radial_reference`` minimizes the reduced energy

    E[s] = 2 pi int_eps^gamma [ g((s'^2 + s^2 / r^2) / 2) + h(s s' / r) ] r dr

over profiles with s(gamma) = lambda gamma and a free inner end (traction-free
cavity). It shares nothing with the 2-D solver: the profile is a continuous
piecewise polynomial of high degree on elements that are uniform in t = log r
(geometric grading in r), and the minimizer is found by Newton's method with an
exact Hessian.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from numpy.polynomial import legendre
from scipy import sparse
from scipy.sparse.linalg import spsolve

from .model import MaterialModel

log = logging.getLogger(__name__)

DEFAULT_DEGREE = 8


class OracleError(RuntimeError):
    """The radial reference solve failed to converge."""


def incompressible_exact(r, lam: float, gamma: float = 1.0):
    """Incompressible radial cavitation map R(r) = sqrt((lam gamma)^2 + r^2 - gamma^2)."""
    arg = (lam * gamma) ** 2 + np.asarray(r, dtype=float) ** 2 - gamma**2
    if np.any(arg <= 0):
        raise ValueError("incompressible profile undefined: lam * gamma must exceed the reference radius")
    return np.sqrt(arg)


@dataclass(frozen=True)
class RadialProfile:
    r_grid: np.ndarray
    s_values: np.ndarray
    energy: float
    cavity_radius: float
    residual_norm: float
    n_grid: int
    iterations: int
    residual_rms: float = float("nan")

    def summary(self) -> dict:
        return {
            "energy": self.energy,
            "cavity_radius": self.cavity_radius,
            "n_grid": self.n_grid,
            "residual_norm": self.residual_norm,
            "residual_rms": self.residual_rms,
            "newton_iterations": self.iterations,
        }


def _lobatto_nodes(k: int):
    """Gauss-Lobatto-Legendre points on [-1, 1] (k + 1 of them)."""
    inner = legendre.Legendre.basis(k).deriv().roots()
    return np.concatenate([[-1.0], np.sort(inner.real), [1.0]])


def _lagrange_tables(nodes, x):
    """Values and derivatives of the Lagrange basis on ``nodes`` at points ``x``."""
    n = nodes.size
    V = np.empty((x.size, n))
    dV = np.empty((x.size, n))
    for i in range(n):
        others = np.delete(nodes, i)
        denom = np.prod(nodes[i] - others)
        diffs = x[:, None] - others[None, :]
        V[:, i] = np.prod(diffs, axis=1) / denom
        # product rule, sum over the dropped factor
        acc = np.zeros(x.size)
        for m in range(others.size):
            acc += np.prod(np.delete(diffs, m, axis=1), axis=1)
        dV[:, i] = acc / denom
    return V, dV


class _RadialFEM:
    """Radial profile s^2 = a + r^2 w(t), t = log r, w continuous piecewise polynomial.

    With this split D = w + w_t / 2 and s^2 carry no cancellation near the
    cavity, where s is nearly constant in r. Unknowns are the nodal values of
    w followed by the scalar ``a``; the outer condition s(gamma) = lam gamma
    eliminates the last nodal value of w.
    """

    def __init__(self, eps, gamma, lam, mat: MaterialModel, n_elem, degree, n_quad):
        self.mat = mat
        self.k = degree
        self.n_elem = n_elem
        self.lam, self.gamma, self.eps = lam, gamma, eps
        t_edges = np.linspace(np.log(eps), np.log(gamma), n_elem + 1)
        ref = _lobatto_nodes(degree)
        xq, wq = legendre.leggauss(n_quad)
        self.V, dV = _lagrange_tables(ref, xq)
        half = 0.5 * np.diff(t_edges)
        mid = 0.5 * (t_edges[1:] + t_edges[:-1])
        self.r2 = np.exp(2.0 * (mid[:, None] + half[:, None] * xq[None, :]))  # (n_elem, n_quad)
        self.wq = 2.0 * np.pi * half[:, None] * wq[None, :]
        self.dV = dV[None, :, :] / half[:, None, None]
        nodes_t = mid[:, None] + half[:, None] * ref[None, :]
        self.n_nodes = n_elem * degree + 1
        self.conn = np.arange(n_elem)[:, None] * degree + np.arange(degree + 1)[None, :]
        self.r_nodes = np.exp(np.concatenate([nodes_t[:, :-1].ravel(), [t_edges[-1]]]))
        self.target = (lam * gamma) ** 2

    def full(self, x):
        """Nodal w (length n_nodes) and a from the free vector [w_0..w_{n-2}, a]."""
        a = x[-1]
        w = np.append(x[:-1], (self.target - a) / self.gamma**2)
        return w, a

    def initial(self):
        # incompressible profile: w = 1, a = (lam gamma)^2 - gamma^2
        x = np.ones(self.n_nodes)
        x[-1] = self.target - self.gamma**2
        return x

    def _local(self, x):
        w, a = self.full(x)
        we = w[self.conn]
        wv = we @ self.V.T
        wt = np.einsum("eqi,ei->eq", self.dV, we)
        q = a + self.r2 * wv
        D = wv + 0.5 * wt
        return q, D

    def profile(self, x):
        w, a = self.full(x)
        return np.sqrt(a + self.r_nodes**2 * w)

    def admissible(self, x) -> bool:
        q, D = self._local(x)
        return bool(np.all(q > 0) and np.all(D > 0))

    def _F(self, q, D):
        return 0.5 * self.r2 * D**2 / q + 0.5 * q / self.r2

    def energy(self, x) -> float:
        q, D = self._local(x)
        if np.any(D <= 0) or np.any(q <= 0):
            return np.inf
        dens = (self.mat.g(self._F(q, D)) + self.mat.h(D)) * self.r2
        return float(np.sum(dens * self.wq))

    def _h2(self, D):
        if self.mat.h_second is not None:
            return self.mat.h_second(D)
        step = 1e-6 * D
        return (self.mat.h_prime(D + step) - self.mat.h_prime(D - step)) / (2.0 * step)

    def grad_hess(self, x):
        """Gradient and sparse Hessian with respect to the free vector."""
        mat = self.mat
        q, D = self._local(x)
        r2 = self.r2
        F = self._F(q, D)
        gp, gpp = mat.g_prime(F), mat.g_second(F)
        hp, hpp = mat.h_prime(D), self._h2(D)
        F_q = -0.5 * r2 * D**2 / q**2 + 0.5 / r2
        F_D = r2 * D / q
        F_qq = r2 * D**2 / q**3
        F_qD = -r2 * D / q**2
        F_DD = r2 / q
        w = self.wq * r2
        L_q = w * gp * F_q
        L_D = w * (gp * F_D + hp)
        L_qq = w * (gpp * F_q**2 + gp * F_qq)
        L_qD = w * (gpp * F_q * F_D + gp * F_qD)
        L_DD = w * (gpp * F_D**2 + gp * F_DD + hpp)
        # derivatives of q and D at quadrature points with respect to local w values and a
        n_e, n_q = q.shape
        k1 = self.k + 1
        dq = np.empty((n_e, n_q, k1 + 1))
        dq[:, :, :k1] = r2[:, :, None] * self.V[None, :, :]
        dq[:, :, k1] = 1.0
        dD = np.zeros((n_e, n_q, k1 + 1))
        dD[:, :, :k1] = self.V[None, :, :] + 0.5 * self.dV
        ge = np.einsum("eq,eqi->ei", L_q, dq) + np.einsum("eq,eqi->ei", L_D, dD)
        He = (
            np.einsum("eq,eqi,eqj->eij", L_qq, dq, dq)
            + np.einsum("eq,eqi,eqj->eij", L_qD, dq, dD)
            + np.einsum("eq,eqi,eqj->eij", L_qD, dD, dq)
            + np.einsum("eq,eqi,eqj->eij", L_DD, dD, dD)
        )
        n = self.n_nodes
        # full unknowns [w_0..w_{n-1}, a]
        idx = np.column_stack([self.conn, np.full(n_e, n)])
        g_full = np.bincount(idx.ravel(), weights=ge.ravel(), minlength=n + 1)
        rows = np.broadcast_to(idx[:, :, None], He.shape).ravel()
        cols = np.broadcast_to(idx[:, None, :], He.shape).ravel()
        H_full = sparse.csc_matrix((He.ravel(), (rows, cols)), shape=(n + 1, n + 1))
        # chain through w_{n-1} = (target - a) / gamma^2
        zr = np.append(np.arange(n - 1), [n - 1, n])
        zc = np.append(np.arange(n - 1), [n - 1, n - 1])
        zv = np.append(np.ones(n - 1), [-1.0 / self.gamma**2, 1.0])
        Z = sparse.csc_matrix((zv, (zr, zc)), shape=(n + 1, n))
        return Z.T @ g_full, (Z.T @ H_full @ Z).tocsc()


def radial_reference(eps: float, gamma: float, lam: float, mat: MaterialModel, n_grid: int = 2049,
                     degree: int = DEFAULT_DEGREE, tol: float = 1e-11, accept_tol: float = 1e-6,
                     max_iter: int = 100) -> RadialProfile:
    """High-accuracy radial equilibrium for the stretch s(gamma) = lam * gamma.

    Newton stops when the gradient norm drops below ``tol`` or when the
    energy no longer decreases (roundoff floor); the latter counts as
    converged only if the gradient norm is below ``accept_tol``. The
    profile records the Euclidean gradient norm and its root mean square
    over the unknowns.
    ``n_grid`` is rounded up to a whole number of degree-``degree`` elements.
    """
    if n_grid < 1000:
        raise ValueError("n_grid must be at least 1000")
    if lam <= 1.0:
        raise ValueError("lam must exceed 1")
    n_elem = -(-(n_grid - 1) // degree)
    fem = _RadialFEM(eps, gamma, lam, mat, n_elem, degree, n_quad=degree + 6)
    x = fem.initial()
    if not fem.admissible(x):
        raise OracleError("incompressible starting profile is inadmissible")
    E = fem.energy(x)
    gnorm = np.inf
    grad = np.full(1, np.inf)
    it = 0
    for it in range(1, max_iter + 1):
        grad, H = fem.grad_hess(x)
        gnorm = float(np.linalg.norm(grad))
        if gnorm < tol:
            break
        step = spsolve(H, -grad)
        slope = float(grad @ step)
        if not np.all(np.isfinite(step)) or slope >= 0:
            step, slope = -grad, -gnorm**2
        t = 1.0
        while t >= 1e-4:
            trial = x + t * step
            E_trial = fem.energy(trial)
            if E_trial <= E + 1e-4 * t * slope:
                break
            t *= 0.5
        else:
            # no decrease left to find: roundoff floor
            if gnorm < accept_tol:
                break
            raise OracleError(f"line search stalled at Newton iteration {it} (|grad| = {gnorm:.3e})")
        x, E = trial, E_trial
    else:
        raise OracleError(f"no convergence after {max_iter} Newton iterations (|grad| = {gnorm:.3e})")
    s = fem.profile(x)
    log.debug("radial reference eps=%g lam=%g: E=%.12f after %d Newton steps", eps, lam, E, it)
    return RadialProfile(
        r_grid=fem.r_nodes,
        s_values=s,
        energy=E,
        cavity_radius=float(s[0]),
        residual_norm=gnorm,
        n_grid=fem.n_nodes,
        iterations=it,
        residual_rms=gnorm / np.sqrt(grad.size),
    )
