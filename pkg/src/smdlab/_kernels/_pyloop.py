"""Pure-Python twin of the compiled step-loop kernel.

Runs the mirror-descent recursion for linear models with componentwise
potentials.  Kept semantically in lockstep with ``_fastloop.pyx`` (same
update formulas and termination logic); selected at import time when the
compiled extension is unavailable.
"""

from __future__ import annotations

import math

import numpy as np

POT_SQUARED_L2 = 0
POT_NEGATIVE_ENTROPY = 1
POT_QNORM_COMPONENTWISE = 2
POT_QNORM_SQUARED = 3

LOSS_SQUARE = 0
LOSS_HUBER = 1
LOSS_QUARTIC = 2
LOSS_LOGCOSH = 3

SCHED_CONSTANT = 0
SCHED_SEQUENCE = 1
SCHED_ADAPTIVE = 2

TERM_MAX_STEPS = 0
TERM_RESIDUAL_TOL = 1
TERM_DOMAIN = 2
TERM_NONFINITE = 3

ENTROPY_FLOOR = 1e-300

COMPILED = False


def _loss_deriv(loss_kind: int, delta: float, z: float) -> float:
    if loss_kind == LOSS_SQUARE:
        return z
    if loss_kind == LOSS_HUBER:
        return min(max(z, -delta), delta)
    if loss_kind == LOSS_QUARTIC:
        return z * z * z
    return math.tanh(z)


def _grad(pot_kind: int, q: float, w: np.ndarray) -> np.ndarray:
    if pot_kind == POT_SQUARED_L2:
        return w.copy()
    if pot_kind == POT_NEGATIVE_ENTROPY:
        return 1.0 + np.log(w)
    if pot_kind == POT_QNORM_COMPONENTWISE:
        return np.sign(w) * np.abs(w) ** (q - 1.0)
    s = float(np.sum(np.abs(w) ** q) ** (1.0 / q))
    if s == 0.0:
        return np.zeros_like(w)
    return s ** (2.0 - q) * np.sign(w) * np.abs(w) ** (q - 1.0)


def _inverse(pot_kind: int, q: float, theta: np.ndarray) -> np.ndarray:
    if pot_kind == POT_SQUARED_L2:
        return theta.copy()
    if pot_kind == POT_NEGATIVE_ENTROPY:
        return np.exp(theta - 1.0)
    if pot_kind == POT_QNORM_COMPONENTWISE:
        return np.sign(theta) * np.abs(theta) ** (1.0 / (q - 1.0))
    p = q / (q - 1.0)
    s = float(np.sum(np.abs(theta) ** p) ** (1.0 / p))
    if s == 0.0:
        return np.zeros_like(theta)
    return s ** (2.0 - p) * np.sign(theta) * np.abs(theta) ** (p - 1.0)


def run_linear(
    X,
    y,
    w0,
    order,
    pot_kind,
    pot_q,
    loss_kind,
    loss_delta,
    sched_kind,
    eta_const,
    eta_seq,
    adapt_c,
    adapt_alpha,
    residual_tol,
    snapshot_every,
    max_steps,
):
    """Run the loop; returns (snap_w, snap_steps, eta, e, steps_taken, term_code)."""
    X = np.ascontiguousarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n, m = X.shape
    w = np.asarray(w0, dtype=float).copy()

    xnorm2 = np.einsum("ij,ij->i", X, X)
    eta_out = np.zeros(max_steps)
    e_out = np.zeros(max_steps)
    n_snaps = max_steps // snapshot_every + 2
    snap_w = np.zeros((n_snaps, m))
    snap_steps = np.zeros(n_snaps, dtype=np.int64)
    snap_w[0] = w
    snap_count = 1

    term = TERM_MAX_STEPS
    steps = 0
    for step in range(1, max_steps + 1):
        idx = int(order[step - 1])
        x = X[idx]
        e = y[idx] - float(x @ w)
        lp = _loss_deriv(loss_kind, loss_delta, e)

        if sched_kind == SCHED_CONSTANT:
            eta = eta_const
        elif sched_kind == SCHED_SEQUENCE:
            eta = float(eta_seq[step - 1])
        else:
            # residual-adaptive rule; zero-gradient steps are no-ops, so any
            # finite eta is valid there and the square-loss value is recorded
            if lp == 0.0:
                eta = adapt_c * adapt_alpha / xnorm2[idx]
            else:
                eta = adapt_c * adapt_alpha * abs(e) / (xnorm2[idx] * abs(lp))

        theta = _grad(pot_kind, pot_q, w)
        theta += (eta * lp) * x
        w = _inverse(pot_kind, pot_q, theta)

        if not np.all(np.isfinite(w)):
            term = TERM_NONFINITE
            break
        if pot_kind == POT_NEGATIVE_ENTROPY and float(np.min(w)) < ENTROPY_FLOOR:
            term = TERM_DOMAIN
            break

        eta_out[step - 1] = eta
        e_out[step - 1] = e
        steps = step

        if step % snapshot_every == 0:
            snap_w[snap_count] = w
            snap_steps[snap_count] = step
            snap_count += 1

        if residual_tol > 0.0 and step % n == 0:
            if float(np.max(np.abs(y - X @ w))) <= residual_tol:
                term = TERM_RESIDUAL_TOL
                break

    # on domain / non-finite failure w holds the bad iterate; leave it out
    if steps > 0 and term in (TERM_MAX_STEPS, TERM_RESIDUAL_TOL) and snap_steps[snap_count - 1] != steps:
        snap_w[snap_count] = w
        snap_steps[snap_count] = steps
        snap_count += 1

    return (
        snap_w[:snap_count].copy(),
        snap_steps[:snap_count].copy(),
        eta_out[:steps].copy(),
        e_out[:steps].copy(),
        steps,
        term,
    )
