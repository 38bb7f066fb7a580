"""Independent reference solvers for the interpolating regime.

These certify implicit regularization from the outside: a dual Newton solver
for the divergence projection onto {w : Xw = y}, the closed-form minimum-
Euclidean-norm interpolant, and a brute-force grid oracle for tiny null
spaces.  None of them touch the iteration machinery.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

from .errors import NumericsError
from .potentials import Potential


@dataclass
class ProjectionResult:
    w_star: np.ndarray
    multipliers: np.ndarray
    residual_inf: float
    kkt_residual_inf: float
    iterations: int
    converged: bool

    def to_dict(self) -> dict:
        return {
            "w_star": self.w_star.tolist(),
            "multipliers": self.multipliers.tolist(),
            "residual_inf": self.residual_inf,
            "kkt_residual_inf": self.kkt_residual_inf,
            "iterations": self.iterations,
            "converged": self.converged,
        }

    def to_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)


def _check_system(X, y):
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float).reshape(-1)
    n, m = X.shape
    if y.shape != (n,):
        raise ValueError("X and y disagree on the number of equations")
    if np.linalg.matrix_rank(X) < n:
        raise ValueError("X must have full row rank")
    return X, y


def bregman_project(
    potential: Potential,
    X,
    y,
    w0,
    *,
    tol: float = 1e-10,
    max_iter: int = 50,
    max_backtracks: int = 30,
) -> ProjectionResult:
    """Minimize the divergence from w0 over the affine set {w : Xw = y}.

    Stationarity gives grad(w) = grad(w0) + X^T lam; the dual root problem
    g(lam) = X inverse_grad(grad(w0) + X^T lam) - y = 0 is solved by damped
    Newton with Jacobian X H(w)^{-1} X^T.  g is monotone (the Jacobian is
    positive definite by strict convexity), so damping is expected to reach
    the root; failures are flagged, never silent.
    """
    X, y = _check_system(X, y)
    n, m = X.shape
    theta0 = potential.grad(potential.check_domain(w0))

    def primal(lam):
        return potential.inverse_grad(theta0 + X.T @ lam)

    lam = np.zeros(n)
    w = primal(lam)
    g = X @ w - y
    gnorm = float(np.abs(g).max())
    iterations = 0
    converged = gnorm <= tol
    while not converged and iterations < max_iter:
        J = X @ potential.hessian_solve(w, X.T)
        try:
            step = np.linalg.solve(J, -g)
        except np.linalg.LinAlgError as exc:
            raise NumericsError(f"dual Newton Jacobian is singular: {exc}") from exc
        t = 1.0
        improved = False
        for _ in range(max_backtracks):
            lam_new = lam + t * step
            w_new = primal(lam_new)
            if np.all(np.isfinite(w_new)) and potential.in_domain(w_new):
                g_new = X @ w_new - y
                gnorm_new = float(np.abs(g_new).max())
                if np.isfinite(gnorm_new) and gnorm_new < gnorm:
                    lam, w, g, gnorm = lam_new, w_new, g_new, gnorm_new
                    improved = True
                    break
            t *= 0.5
        iterations += 1
        if not improved:
            break
        converged = gnorm <= tol
    kkt = float(np.abs(potential.grad(w) - theta0 - X.T @ lam).max())
    return ProjectionResult(
        w_star=w,
        multipliers=lam,
        residual_inf=gnorm,
        kkt_residual_inf=kkt,
        iterations=iterations,
        converged=converged,
    )


def min_l2_solution(X, y) -> np.ndarray:
    """X^T (X X^T)^{-1} y, the minimum-Euclidean-norm interpolant."""
    X, y = _check_system(X, y)
    return X.T @ np.linalg.solve(X @ X.T, y)


def brute_force_project(
    potential: Potential,
    X,
    y,
    w0,
    *,
    grid_points: int = 41,
    span: float | None = None,
) -> np.ndarray:
    """Grid-plus-refine oracle for the divergence projection, null space <= 2.

    The solution set is parameterized as w_p + N t; a coarse grid over t is
    scanned and the best cell is polished with a derivative-free local
    minimizer.  Only meant for cross-checking the dual Newton solver on tiny
    instances.
    """
    X, y = _check_system(X, y)
    n, m = X.shape
    if m - n > 2:
        raise ValueError("brute force oracle only handles null spaces of dimension <= 2")
    w0 = potential.check_domain(w0)
    w_p = min_l2_solution(X, y)
    _, _, Vh = np.linalg.svd(X, full_matrices=True)
    N = Vh[n:].T  # (m, m-n), orthonormal null-space basis
    k = m - n

    def objective(t):
        w = w_p + N @ t
        if not potential.in_domain(w):
            return np.inf
        return potential.bregman(w, w0)

    if k == 0:
        return w_p
    center = N.T @ (w0 - w_p)
    radius = span if span is not None else 4.0 * (1.0 + float(np.linalg.norm(w0 - w_p)))
    axes = [np.linspace(c - radius, c + radius, grid_points) for c in center]
    best_t, best_val = center, objective(center)
    grids = np.meshgrid(*axes, indexing="ij")
    flat = np.stack([g.reshape(-1) for g in grids], axis=1)
    for t in flat:
        val = objective(t)
        if val < best_val:
            best_val, best_t = val, t
    if not np.isfinite(best_val):
        raise NumericsError("no in-domain point found on the search grid")
    res = minimize(
        objective,
        best_t,
        method="Nelder-Mead",
        options={"xatol": 1e-12, "fatol": 1e-14, "maxiter": 4000, "maxfev": 8000},
    )
    t_star = res.x if np.isfinite(res.fun) and res.fun <= best_val else best_t
    return w_p + N @ t_star
