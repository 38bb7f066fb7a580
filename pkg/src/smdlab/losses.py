"""Residual losses l(z) and the per-sample loss machinery they induce.

Every cataloged loss is nonnegative and differentiable with l(0) = l'(0) = 0.
The per-sample loss of a model prediction is l(y - f(x, w)); its
Bregman-style expansion is computed by :func:`loss_bregman` and is *not*
guaranteed nonnegative for nonlinear models.
"""

from __future__ import annotations

import math

import numpy as np


class Loss:
    kind: str = ""
    convex: bool = True
    quasiconvex: bool = True

    def value(self, z: float) -> float:
        raise NotImplementedError

    def deriv(self, z: float) -> float:
        raise NotImplementedError

    def second_deriv(self, z: float) -> float:
        """Pointwise l''(z), used only by sampled curvature certificates."""
        raise NotImplementedError

    def spec(self) -> dict:
        return {"kind": self.kind}

    def __repr__(self):  # pragma: no cover - debugging aid
        return f"{type(self).__name__}()"


class SquareLoss(Loss):
    """l(z) = z^2 / 2."""

    kind = "square"

    def value(self, z):
        return 0.5 * z * z

    def deriv(self, z):
        return z

    def second_deriv(self, z):
        return 1.0


class HuberLoss(Loss):
    """Quadratic inside |z| <= delta, linear growth outside."""

    kind = "huber"

    def __init__(self, delta: float = 1.0):
        if delta <= 0:
            raise ValueError("delta must be positive")
        self.delta = float(delta)

    def value(self, z):
        a = abs(z)
        if a <= self.delta:
            return 0.5 * z * z
        return self.delta * (a - 0.5 * self.delta)

    def deriv(self, z):
        return min(max(z, -self.delta), self.delta)

    def second_deriv(self, z):
        # kink at |z| = delta; the piecewise value is enough for sampling
        return 1.0 if abs(z) < self.delta else 0.0

    def spec(self):
        return {"kind": self.kind, "delta": self.delta}


class QuarticLoss(Loss):
    """l(z) = z^4 / 4; its derivative z^3 makes the residual-adaptive step rule nontrivial."""

    kind = "quartic"

    def value(self, z):
        return 0.25 * z ** 4

    def deriv(self, z):
        return z ** 3

    def second_deriv(self, z):
        return 3.0 * z * z


class LogCoshLoss(Loss):
    """l(z) = log cosh z, evaluated in the overflow-safe form |z| + log1p(e^{-2|z|}) - log 2."""

    kind = "logcosh"

    def value(self, z):
        a = abs(z)
        return a + math.log1p(math.exp(-2.0 * a)) - math.log(2.0)

    def deriv(self, z):
        return math.tanh(z)

    def second_deriv(self, z):
        t = math.tanh(z)
        return 1.0 - t * t


def make_loss(kind: str, *, delta: float | None = None) -> Loss:
    if kind == "square":
        return SquareLoss()
    if kind == "huber":
        return HuberLoss(delta if delta is not None else 1.0)
    if kind == "quartic":
        return QuarticLoss()
    if kind == "logcosh":
        return LogCoshLoss()
    raise ValueError(f"unknown loss kind {kind!r}")


def sample_loss(loss: Loss, model, x, y: float, w) -> float:
    """l(y - f(x, w))."""
    return loss.value(y - model.predict(x, w))


def sample_loss_grad(loss: Loss, model, x, y: float, w) -> np.ndarray:
    """Gradient in w of l(y - f(x, w)), i.e. -l'(residual) * grad_w f."""
    e = y - model.predict(x, w)
    return -loss.deriv(e) * model.param_gradient(x, w)


def loss_bregman(loss: Loss, model, x, y: float, w, wp) -> float:
    """Bregman-style expansion of the per-sample loss around wp.

    L(w) - L(wp) - grad L(wp)^T (w - wp).  Nonnegative whenever the composed
    per-sample loss is convex (always for linear models with convex l), but
    possibly negative for nonlinear models.
    """
    w = np.asarray(w, dtype=float)
    wp = np.asarray(wp, dtype=float)
    e_p = y - model.predict(x, wp)
    lw = loss.value(y - model.predict(x, w))
    lwp = loss.value(e_p)
    grad_wp = -loss.deriv(e_p) * model.param_gradient(x, wp)
    return float(lw - lwp - grad_wp @ (w - wp))


def sample_loss_hessian(loss: Loss, model, x, y: float, w) -> np.ndarray:
    """Hessian in w of l(y - f(x, w)): l''(e) g g^T - l'(e) H_f."""
    e = y - model.predict(x, w)
    g = model.param_gradient(x, w)
    H = loss.second_deriv(e) * np.outer(g, g)
    lp = loss.deriv(e)
    if lp != 0.0:
        H -= lp * model.param_hessian(x, w)
    return H
