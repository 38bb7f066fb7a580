"""Mirror potentials and their Bregman machinery.

Every potential is strictly convex and differentiable on its domain and
exposes value / grad (the mirror map) / inverse_grad / hessian plus the
induced Bregman divergence.  ``alpha`` is the Euclidean strong-convexity
constant where one is known; ``alpha_is_global`` is False when the constant
is only trusted near the unit ball and certification has to fall back to
Hessian sampling.
"""

from __future__ import annotations

import numpy as np

from .errors import DomainError, NumericsError

# Entries of a NegativeEntropy iterate below this are treated as having left
# the open positive orthant (a hard error, never a clamp).
ENTROPY_FLOOR = 1e-300


def _as_vector(w) -> np.ndarray:
    w = np.asarray(w, dtype=float)
    if w.ndim != 1:
        raise ValueError(f"expected a 1-d parameter vector, got shape {w.shape}")
    return w


class Potential:
    """Base class; subclasses fill in the scalar field machinery."""

    kind: str = ""
    alpha: float = 0.0
    alpha_is_global: bool = False

    def value(self, w) -> float:
        raise NotImplementedError

    def grad(self, w) -> np.ndarray:
        raise NotImplementedError

    def inverse_grad(self, theta) -> np.ndarray:
        raise NotImplementedError

    def hessian(self, w) -> np.ndarray:
        raise NotImplementedError

    def hessian_solve(self, w, b) -> np.ndarray:
        """Solve hessian(w) @ z = b (b may be a matrix of columns)."""
        return np.linalg.solve(self.hessian(w), b)

    def bregman(self, w, wp) -> float:
        """D(w, wp) = value(w) - value(wp) - grad(wp)^T (w - wp), always >= 0."""
        w = self.check_domain(w)
        wp = self.check_domain(wp)
        return float(self.value(w) - self.value(wp) - self.grad(wp) @ (w - wp))

    def in_domain(self, w) -> bool:
        try:
            self.check_domain(w)
        except DomainError:
            return False
        return True

    def check_domain(self, w) -> np.ndarray:
        """Return w as an array, raising DomainError if it is out of domain."""
        return _as_vector(w)

    def minimizer(self, m: int) -> np.ndarray:
        """argmin of the potential over its domain ('potential-minimizer init')."""
        return np.zeros(m)

    def sample_domain(self, rng: np.random.Generator, m: int, scale: float = 3.0) -> np.ndarray:
        """A random in-domain point inside the certification box [-scale, scale]^m."""
        return rng.uniform(-scale, scale, size=m)

    def spec(self) -> dict:
        return {"kind": self.kind}

    def __repr__(self):  # pragma: no cover - debugging aid
        params = {k: v for k, v in self.spec().items() if k != "kind"}
        inner = ", ".join(f"{k}={v}" for k, v in params.items())
        return f"{type(self).__name__}({inner})"


class SquaredL2(Potential):
    """value(w) = ||w||^2 / 2; the mirror map is the identity (plain SGD geometry)."""

    kind = "squared_l2"
    alpha = 1.0
    alpha_is_global = True

    def value(self, w):
        w = _as_vector(w)
        return 0.5 * float(w @ w)

    def grad(self, w):
        return _as_vector(w).copy()

    def inverse_grad(self, theta):
        return _as_vector(theta).copy()

    def hessian(self, w):
        w = _as_vector(w)
        return np.eye(w.size)

    def hessian_solve(self, w, b):
        return np.asarray(b, dtype=float).copy()

    def bregman(self, w, wp):
        d = _as_vector(w) - _as_vector(wp)
        return 0.5 * float(d @ d)


class QuadraticQ(Potential):
    """value(w) = w^T Q w / 2 for a symmetric positive-definite Q."""

    kind = "quadratic_q"
    alpha_is_global = True

    def __init__(self, Q):
        Q = np.asarray(Q, dtype=float)
        if Q.ndim != 2 or Q.shape[0] != Q.shape[1]:
            raise ValueError("Q must be a square matrix")
        if not np.allclose(Q, Q.T, rtol=0, atol=1e-12 * max(1.0, np.abs(Q).max())):
            raise ValueError("Q must be symmetric")
        eigvals = np.linalg.eigvalsh(Q)
        if eigvals[0] <= 0:
            raise ValueError("Q must be positive definite")
        self.Q = 0.5 * (Q + Q.T)
        self.alpha = float(eigvals[0])
        self._chol = np.linalg.cholesky(self.Q)

    def value(self, w):
        w = _as_vector(w)
        return 0.5 * float(w @ self.Q @ w)

    def grad(self, w):
        return self.Q @ _as_vector(w)

    def inverse_grad(self, theta):
        theta = _as_vector(theta)
        z = np.linalg.solve(self._chol, theta)
        return np.linalg.solve(self._chol.T, z)

    def hessian(self, w):
        return self.Q.copy()

    def hessian_solve(self, w, b):
        z = np.linalg.solve(self._chol, np.asarray(b, dtype=float))
        return np.linalg.solve(self._chol.T, z)

    def bregman(self, w, wp):
        d = _as_vector(w) - _as_vector(wp)
        return 0.5 * float(d @ self.Q @ d)

    def spec(self):
        return {"kind": self.kind, "Q": self.Q.reshape(-1).tolist()}


class NegativeEntropy(Potential):
    """value(w) = sum_j w_j log w_j on the open positive orthant.

    The induced divergence is the unnormalized relative entropy and the
    mirror update is multiplicative (exponentiated-gradient geometry).
    """

    kind = "negative_entropy"
    alpha = 0.0

    def check_domain(self, w):
        w = _as_vector(w)
        if w.size and (not np.all(np.isfinite(w)) or np.min(w) < ENTROPY_FLOOR):
            raise DomainError(
                "NegativeEntropy requires strictly positive entries "
                f"(min entry {np.min(w) if w.size else 'n/a'})"
            )
        return w

    def value(self, w):
        w = self.check_domain(w)
        return float(np.sum(w * np.log(w)))

    def grad(self, w):
        w = self.check_domain(w)
        return 1.0 + np.log(w)

    def inverse_grad(self, theta):
        return np.exp(_as_vector(theta) - 1.0)

    def hessian(self, w):
        w = self.check_domain(w)
        return np.diag(1.0 / w)

    def hessian_solve(self, w, b):
        w = self.check_domain(w)
        b = np.asarray(b, dtype=float)
        return b * w if b.ndim == 1 else b * w[:, None]

    def bregman(self, w, wp):
        w = self.check_domain(w)
        wp = self.check_domain(wp)
        # sum of per-coordinate nonnegative terms; avoids the cancellation of
        # the generic value/grad composition
        return float(np.sum(w * np.log(w / wp) - w + wp))

    def minimizer(self, m):
        return np.full(m, np.exp(-1.0))

    def sample_domain(self, rng, m, scale=3.0):
        return rng.uniform(0.0, scale, size=m) + 1e-3


class QNormComponentwise(Potential):
    """value(w) = sum_j |w_j|^q / q for q in (1, 2].

    Separable, with a closed-form inverse mirror map; the default geometry
    for the sparse-recovery experiment.
    """

    kind = "qnorm_componentwise"
    alpha = 0.0

    def __init__(self, q: float):
        if not 1.0 < q <= 2.0:
            raise ValueError("q must lie in (1, 2]")
        self.q = float(q)

    def value(self, w):
        w = _as_vector(w)
        return float(np.sum(np.abs(w) ** self.q) / self.q)

    def grad(self, w):
        w = _as_vector(w)
        return np.sign(w) * np.abs(w) ** (self.q - 1.0)

    def inverse_grad(self, theta):
        theta = _as_vector(theta)
        return np.sign(theta) * np.abs(theta) ** (1.0 / (self.q - 1.0))

    def hessian(self, w):
        w = _as_vector(w)
        with np.errstate(divide="ignore"):
            diag = (self.q - 1.0) * np.abs(w) ** (self.q - 2.0)
        return np.diag(diag)

    def hessian_solve(self, w, b):
        w = _as_vector(w)
        b = np.asarray(b, dtype=float)
        inv = np.abs(w) ** (2.0 - self.q) / (self.q - 1.0)
        return b * inv if b.ndim == 1 else b * inv[:, None]

    def bregman(self, w, wp):
        w = _as_vector(w)
        wp = _as_vector(wp)
        q = self.q
        terms = (
            np.abs(w) ** q / q
            - np.abs(wp) ** q / q
            - np.sign(wp) * np.abs(wp) ** (q - 1.0) * (w - wp)
        )
        return float(np.sum(terms))

    def spec(self):
        return {"kind": self.kind, "q": self.q}


class QNormSquared(Potential):
    """value(w) = ||w||_q^2 / 2 for q in (1, 2] (the p-norm-algorithm family).

    alpha = q - 1 is exposed but flagged local (trusted near the unit ball);
    global certification falls back to Hessian sampling.
    """

    kind = "qnorm_squared"
    alpha_is_global = False

    def __init__(self, q: float):
        if not 1.0 < q <= 2.0:
            raise ValueError("q must lie in (1, 2]")
        self.q = float(q)
        self.p = q / (q - 1.0)  # conjugate exponent, 1/p + 1/q = 1
        self.alpha = q - 1.0

    def _qnorm(self, w):
        return float(np.sum(np.abs(w) ** self.q) ** (1.0 / self.q))

    def value(self, w):
        w = _as_vector(w)
        return 0.5 * self._qnorm(w) ** 2

    def grad(self, w):
        w = _as_vector(w)
        s = self._qnorm(w)
        if s == 0.0:
            return np.zeros_like(w)
        return s ** (2.0 - self.q) * np.sign(w) * np.abs(w) ** (self.q - 1.0)

    def inverse_grad(self, theta):
        theta = _as_vector(theta)
        s = float(np.sum(np.abs(theta) ** self.p) ** (1.0 / self.p))
        if s == 0.0:
            return np.zeros_like(theta)
        # gradient of the conjugate ||theta||_p^2 / 2, then a damped Newton
        # polish when the closed form has lost precision near sparse vectors
        w = s ** (2.0 - self.p) * np.sign(theta) * np.abs(theta) ** (self.p - 1.0)
        resid = self.grad(w) - theta
        tol = 1e-12 * max(1.0, float(np.abs(theta).max()))
        for _ in range(3):
            err = float(np.abs(resid).max())
            if err <= tol:
                break
            step = self.hessian_solve(w, resid)
            t = 1.0
            for _ in range(30):
                w_new = w - t * step
                resid_new = self.grad(w_new) - theta
                if np.all(np.isfinite(resid_new)) and float(np.abs(resid_new).max()) < err:
                    w, resid = w_new, resid_new
                    break
                t *= 0.5
            else:
                raise NumericsError("inverse mirror map refinement did not improve")
        return w

    def hessian(self, w):
        w = _as_vector(w)
        q = self.q
        s = self._qnorm(w)
        if s == 0.0:
            raise NumericsError("Hessian of the squared q-norm is singular at 0")
        u = np.sign(w) * np.abs(w) ** (q - 1.0)
        with np.errstate(divide="ignore"):
            diag = s ** (2.0 - q) * (q - 1.0) * np.abs(w) ** (q - 2.0)
        return (2.0 - q) * s ** (2.0 - 2.0 * q) * np.outer(u, u) + np.diag(diag)

    def hessian_solve(self, w, b):
        # diagonal + rank-one structure, inverted by Sherman-Morrison
        w = _as_vector(w)
        b = np.asarray(b, dtype=float)
        q = self.q
        s = self._qnorm(w)
        if s == 0.0:
            raise NumericsError("Hessian of the squared q-norm is singular at 0")
        u = np.sign(w) * np.abs(w) ** (q - 1.0)
        dinv = np.abs(w) ** (2.0 - q) / ((q - 1.0) * s ** (2.0 - q))
        beta = (2.0 - q) * s ** (2.0 - 2.0 * q)
        if beta == 0.0:  # q == 2 reduces to the diagonal case
            return b * dinv if b.ndim == 1 else b * dinv[:, None]
        du = dinv * u
        denom = 1.0 + beta * float(u @ du)
        if b.ndim == 1:
            return b * dinv - du * (beta * float(du @ b) / denom)
        return b * dinv[:, None] - np.outer(du, (beta / denom) * (du @ b))

    def spec(self):
        return {"kind": self.kind, "q": self.q}


def make_potential(kind: str, *, q: float | None = None, Q=None) -> Potential:
    """Instantiate a potential from its serialized (kind + parameters) form."""
    if kind == "squared_l2":
        return SquaredL2()
    if kind == "quadratic_q":
        if Q is None:
            raise ValueError("quadratic_q requires Q")
        Q = np.asarray(Q, dtype=float)
        if Q.ndim == 1:
            n = int(round(Q.size ** 0.5))
            if n * n != Q.size:
                raise ValueError("flattened Q must have square length")
            Q = Q.reshape(n, n)
        return QuadraticQ(Q)
    if kind == "negative_entropy":
        return NegativeEntropy()
    if kind == "qnorm_componentwise":
        if q is None:
            raise ValueError("qnorm_componentwise requires q")
        return QNormComponentwise(q)
    if kind == "qnorm_squared":
        if q is None:
            raise ValueError("qnorm_squared requires q")
        return QNormSquared(q)
    raise ValueError(f"unknown potential kind {kind!r}")
