# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled step-loop kernel for linear models with componentwise potentials.

Semantics mirror ``_pyloop.py`` exactly; only the inner loop is C.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, fabs, isfinite, log, pow, tanh

cnp.import_array()

COMPILED = True

DEF POT_SQUARED_L2 = 0
DEF POT_NEGATIVE_ENTROPY = 1
DEF POT_QNORM_COMPONENTWISE = 2
DEF POT_QNORM_SQUARED = 3

DEF LOSS_SQUARE = 0
DEF LOSS_HUBER = 1
DEF LOSS_QUARTIC = 2
DEF LOSS_LOGCOSH = 3

DEF SCHED_CONSTANT = 0
DEF SCHED_SEQUENCE = 1
DEF SCHED_ADAPTIVE = 2

DEF TERM_MAX_STEPS = 0
DEF TERM_RESIDUAL_TOL = 1
DEF TERM_DOMAIN = 2
DEF TERM_NONFINITE = 3

DEF ENTROPY_FLOOR = 1e-300


cdef inline double _sign(double v) nogil:
    if v > 0.0:
        return 1.0
    if v < 0.0:
        return -1.0
    return 0.0


cdef inline double _loss_deriv(int loss_kind, double delta, double z) nogil:
    if loss_kind == LOSS_SQUARE:
        return z
    if loss_kind == LOSS_HUBER:
        if z > delta:
            return delta
        if z < -delta:
            return -delta
        return z
    if loss_kind == LOSS_QUARTIC:
        return z * z * z
    return tanh(z)


cdef int _grad(int pot_kind, double q, double[::1] w, double[::1] theta) nogil:
    cdef Py_ssize_t j, m = w.shape[0]
    cdef double s = 0.0, c
    if pot_kind == POT_SQUARED_L2:
        for j in range(m):
            theta[j] = w[j]
    elif pot_kind == POT_NEGATIVE_ENTROPY:
        for j in range(m):
            theta[j] = 1.0 + log(w[j])
    elif pot_kind == POT_QNORM_COMPONENTWISE:
        for j in range(m):
            theta[j] = _sign(w[j]) * pow(fabs(w[j]), q - 1.0)
    else:
        for j in range(m):
            s += pow(fabs(w[j]), q)
        s = pow(s, 1.0 / q)
        if s == 0.0:
            for j in range(m):
                theta[j] = 0.0
        else:
            c = pow(s, 2.0 - q)
            for j in range(m):
                theta[j] = c * _sign(w[j]) * pow(fabs(w[j]), q - 1.0)
    return 0


cdef int _inverse(int pot_kind, double q, double[::1] theta, double[::1] w) nogil:
    cdef Py_ssize_t j, m = theta.shape[0]
    cdef double s = 0.0, c, p
    if pot_kind == POT_SQUARED_L2:
        for j in range(m):
            w[j] = theta[j]
    elif pot_kind == POT_NEGATIVE_ENTROPY:
        for j in range(m):
            w[j] = exp(theta[j] - 1.0)
    elif pot_kind == POT_QNORM_COMPONENTWISE:
        for j in range(m):
            w[j] = _sign(theta[j]) * pow(fabs(theta[j]), 1.0 / (q - 1.0))
    else:
        p = q / (q - 1.0)
        for j in range(m):
            s += pow(fabs(theta[j]), p)
        s = pow(s, 1.0 / p)
        if s == 0.0:
            for j in range(m):
                w[j] = 0.0
        else:
            c = pow(s, 2.0 - p)
            for j in range(m):
                w[j] = c * _sign(theta[j]) * pow(fabs(theta[j]), p - 1.0)
    return 0


def run_linear(
    X,
    y,
    w0,
    order,
    int pot_kind,
    double pot_q,
    int loss_kind,
    double loss_delta,
    int sched_kind,
    double eta_const,
    eta_seq,
    double adapt_c,
    double adapt_alpha,
    double residual_tol,
    long snapshot_every,
    long max_steps,
):
    """Run the loop; returns (snap_w, snap_steps, eta, e, steps_taken, term_code)."""
    cdef double[:, ::1] X_v = np.ascontiguousarray(X, dtype=np.float64)
    cdef double[::1] y_v = np.ascontiguousarray(y, dtype=np.float64)
    cdef long[::1] order_v = np.ascontiguousarray(order, dtype=np.int64)
    cdef Py_ssize_t n = X_v.shape[0], m = X_v.shape[1]

    w_arr = np.array(w0, dtype=np.float64)
    cdef double[::1] w = w_arr
    theta_arr = np.zeros(m)
    cdef double[::1] theta = theta_arr

    xnorm2_arr = np.einsum("ij,ij->i", np.asarray(X, dtype=np.float64), np.asarray(X, dtype=np.float64))
    cdef double[::1] xnorm2 = np.ascontiguousarray(xnorm2_arr)

    eta_seq_arr = np.zeros(1) if eta_seq is None else np.ascontiguousarray(eta_seq, dtype=np.float64)
    cdef double[::1] eta_seq_v = eta_seq_arr

    eta_out_arr = np.zeros(max_steps)
    e_out_arr = np.zeros(max_steps)
    cdef double[::1] eta_out = eta_out_arr
    cdef double[::1] e_out = e_out_arr

    cdef long n_snaps = max_steps // snapshot_every + 2
    snap_w_arr = np.zeros((n_snaps, m))
    snap_steps_arr = np.zeros(n_snaps, dtype=np.int64)
    cdef double[:, ::1] snap_w = snap_w_arr
    cdef long[::1] snap_steps = snap_steps_arr

    cdef Py_ssize_t j, idx
    cdef long step, steps = 0, snap_count = 1
    cdef int term = TERM_MAX_STEPS
    cdef bint ok
    cdef double e, lp, eta, dot, r, rmax

    for j in range(m):
        snap_w[0, j] = w[j]

    for step in range(1, max_steps + 1):
        idx = order_v[step - 1]
        dot = 0.0
        for j in range(m):
            dot += X_v[idx, j] * w[j]
        e = y_v[idx] - dot
        lp = _loss_deriv(loss_kind, loss_delta, e)

        if sched_kind == SCHED_CONSTANT:
            eta = eta_const
        elif sched_kind == SCHED_SEQUENCE:
            eta = eta_seq_v[step - 1]
        else:
            if lp == 0.0:
                eta = adapt_c * adapt_alpha / xnorm2[idx]
            else:
                eta = adapt_c * adapt_alpha * fabs(e) / (xnorm2[idx] * fabs(lp))

        _grad(pot_kind, pot_q, w, theta)
        for j in range(m):
            theta[j] += (eta * lp) * X_v[idx, j]
        _inverse(pot_kind, pot_q, theta, w)

        ok = True
        for j in range(m):
            if not isfinite(w[j]):
                ok = False
                break
        if not ok:
            term = TERM_NONFINITE
            break
        if pot_kind == POT_NEGATIVE_ENTROPY:
            for j in range(m):
                if w[j] < ENTROPY_FLOOR:
                    ok = False
                    break
            if not ok:
                term = TERM_DOMAIN
                break

        eta_out[step - 1] = eta
        e_out[step - 1] = e
        steps = step

        if step % snapshot_every == 0:
            for j in range(m):
                snap_w[snap_count, j] = w[j]
            snap_steps[snap_count] = step
            snap_count += 1

        if residual_tol > 0.0 and step % n == 0:
            rmax = 0.0
            for idx in range(n):
                dot = 0.0
                for j in range(m):
                    dot += X_v[idx, j] * w[j]
                r = fabs(y_v[idx] - dot)
                if r > rmax:
                    rmax = r
            if rmax <= residual_tol:
                term = TERM_RESIDUAL_TOL
                break

    # on domain / non-finite failure w holds the bad iterate; leave it out
    if steps > 0 and (term == TERM_MAX_STEPS or term == TERM_RESIDUAL_TOL) and snap_steps[snap_count - 1] != steps:
        for j in range(m):
            snap_w[snap_count, j] = w[j]
        snap_steps[snap_count] = steps
        snap_count += 1

    return (
        snap_w_arr[:snap_count].copy(),
        snap_steps_arr[:snap_count].copy(),
        eta_out_arr[:steps].copy(),
        e_out_arr[:steps].copy(),
        int(steps),
        int(term),
    )
