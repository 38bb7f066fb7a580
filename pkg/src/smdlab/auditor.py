"""Machine-precision audits of the mirror-descent conservation identity.

Per step, for any reference pair (w, v) consistent with the labels,

    D(w, w_{i-1}) + eta_i l(v_i)
        = D(w, w_i) + E_i + eta_i DL_i(w, w_{i-1}),

with E_i = D(w_i, w_{i-1}) - eta_i DL_i(w_i, w_{i-1}) + eta_i L_i(w_i).
Summing telescopes the D(w, .) terms.  The worst-case gain certificate and
the ratio-one adversary are built on the same ledger.  All sums use exact
(fsum) accumulation so the telescoped and per-step views agree to rounding.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .engine import RunTrace, StepSizeCertificate
from .errors import NumericsError, PreconditionError
from .losses import Loss, loss_bregman
from .models import Model
from .potentials import Potential

CONSISTENCY_RTOL = 1e-10
RATIO_SLACK = 1e-10


def step_labels(trace: RunTrace, labels=None) -> np.ndarray:
    """Per-step labels: the dataset's by default, or an explicit override."""
    if labels is None:
        return trace.dataset.labels[trace.sample_indices]
    labels = np.asarray(labels, dtype=float)
    if labels.shape != (trace.num_steps,):
        raise ValueError(f"labels must have one entry per step, got {labels.shape}")
    return labels


def consistent_noise(trace: RunTrace, w_ref, labels=None) -> np.ndarray:
    """The unique per-step noise making (w_ref, v) consistent with the labels."""
    w_ref = np.asarray(w_ref, dtype=float)
    y = step_labels(trace, labels)
    ds = trace.dataset
    preds = {}
    out = np.empty(trace.num_steps)
    for i in range(trace.num_steps):
        idx = int(trace.sample_indices[i])
        if idx not in preds:
            preds[idx] = trace.model.predict(ds.inputs[idx], w_ref)
        out[i] = y[i] - preds[idx]
    return out


def _check_consistency(trace: RunTrace, w_ref, v_ref, labels) -> np.ndarray:
    y = step_labels(trace, labels)
    v_ref = np.asarray(v_ref, dtype=float).reshape(-1)
    if v_ref.shape != (trace.num_steps,):
        raise ValueError("v_ref must have one entry per step")
    ds = trace.dataset
    scale = max(1.0, float(np.abs(y).max()) if y.size else 0.0)
    for i in range(trace.num_steps):
        idx = int(trace.sample_indices[i])
        pred = trace.model.predict(ds.inputs[idx], np.asarray(w_ref, dtype=float))
        dev = abs(y[i] - pred - v_ref[i])
        if dev > CONSISTENCY_RTOL * scale:
            raise PreconditionError(
                f"(w_ref, v_ref) inconsistent at step {i + 1}: |y - f - v| = {dev:.3e}"
            )
    return y


@dataclass
class IdentityReport:
    """Per-step and telescoped residuals of the conservation identity."""

    per_step_residuals: np.ndarray
    per_step_diffs: np.ndarray
    telescoped_residual: float
    telescoped_diff: float
    excess: np.ndarray  # E_i ledger
    min_excess: float
    loss_bregman_ref: np.ndarray  # DL_i(w_ref, w_{i-1}) ledger
    min_loss_bregman_ref: float
    lhs_total: float
    rhs_total: float
    w_ref: np.ndarray
    v_ref: np.ndarray
    num_steps: int

    @property
    def max_step_residual(self) -> float:
        return float(self.per_step_residuals.max()) if self.num_steps else 0.0

    def to_dict(self) -> dict:
        return {
            "num_steps": self.num_steps,
            "max_step_residual": self.max_step_residual,
            "telescoped_residual": self.telescoped_residual,
            "telescoped_diff": self.telescoped_diff,
            "min_excess": self.min_excess,
            "min_loss_bregman_ref": self.min_loss_bregman_ref,
            "lhs_total": self.lhs_total,
            "rhs_total": self.rhs_total,
            "per_step_residuals": self.per_step_residuals.tolist(),
            "excess": self.excess.tolist(),
            "w_ref": self.w_ref.tolist(),
            "v_ref": self.v_ref.tolist(),
        }

    def to_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)


def _audit_terms(potential, loss, model, trace, w_ref, v_ref, labels):
    """Shared per-step term ledger for the identity and the ratio."""
    if not trace.is_full:
        raise ValueError("audits need a fully recorded trace (snapshot_every=1)")
    y = _check_consistency(trace, w_ref, v_ref, labels)
    w_ref = np.asarray(w_ref, dtype=float)
    T = trace.num_steps
    ds = trace.dataset
    d_ref = np.array([potential.bregman(w_ref, trace.snapshots[i]) for i in range(T + 1)])
    excess = np.empty(T)
    dl_ref = np.empty(T)
    l_v = np.empty(T)
    for i in range(T):
        idx = int(trace.sample_indices[i])
        x = ds.inputs[idx]
        eta = trace.eta[i]
        w_prev, w_curr = trace.snapshots[i], trace.snapshots[i + 1]
        d_step = potential.bregman(w_curr, w_prev)
        dl_step = loss_bregman(loss, model, x, y[i], w_curr, w_prev)
        loss_curr = loss.value(y[i] - model.predict(x, w_curr))
        excess[i] = math.fsum((d_step, -eta * dl_step, eta * loss_curr))
        dl_ref[i] = loss_bregman(loss, model, x, y[i], w_ref, w_prev)
        l_v[i] = loss.value(v_ref[i])
    return y, d_ref, excess, dl_ref, l_v


def step_identity_residual(
    potential: Potential,
    loss: Loss,
    model: Model,
    trace: RunTrace,
    i: int,
    w_ref,
    v_ref_i: float,
) -> float:
    """Relative residual of the per-step identity at step i (1-based)."""
    if not 1 <= i <= trace.num_steps:
        raise ValueError(f"step index {i} outside 1..{trace.num_steps}")
    if not trace.is_full:
        raise ValueError("audits need a fully recorded trace (snapshot_every=1)")
    w_ref = np.asarray(w_ref, dtype=float)
    ds = trace.dataset
    idx = int(trace.sample_indices[i - 1])
    x = ds.inputs[idx]
    y = float(ds.labels[idx])
    pred_ref = model.predict(x, w_ref)
    scale = max(1.0, abs(y))
    if abs(y - pred_ref - v_ref_i) > CONSISTENCY_RTOL * scale:
        raise PreconditionError(
            f"(w_ref, v_ref_i) inconsistent at step {i}: |y - f - v| = {abs(y - pred_ref - v_ref_i):.3e}"
        )
    eta = trace.eta[i - 1]
    w_prev, w_curr = trace.snapshots[i - 1], trace.snapshots[i]
    d_prev = potential.bregman(w_ref, w_prev)
    d_curr = potential.bregman(w_ref, w_curr)
    d_step = potential.bregman(w_curr, w_prev)
    dl_step = loss_bregman(loss, model, x, y, w_curr, w_prev)
    loss_curr = loss.value(y - model.predict(x, w_curr))
    excess = math.fsum((d_step, -eta * dl_step, eta * loss_curr))
    dl_ref = loss_bregman(loss, model, x, y, w_ref, w_prev)
    lhs = d_prev + eta * loss.value(v_ref_i)
    diff = math.fsum((d_prev, eta * loss.value(v_ref_i), -d_curr, -excess, -eta * dl_ref))
    return abs(diff) / max(1.0, abs(lhs))


def telescoped_identity(
    potential: Potential,
    loss: Loss,
    model: Model,
    trace: RunTrace,
    w_ref,
    v_ref,
    labels=None,
) -> IdentityReport:
    """Audit every step and the telescoped total; exact for true mirror iterates."""
    y, d_ref, excess, dl_ref, l_v = _audit_terms(
        potential, loss, model, trace, w_ref, v_ref, labels
    )
    T = trace.num_steps
    eta = trace.eta
    diffs = np.array(
        [
            math.fsum((d_ref[i], eta[i] * l_v[i], -d_ref[i + 1], -excess[i], -eta[i] * dl_ref[i]))
            for i in range(T)
        ]
    )
    lhs_steps = d_ref[:T] + eta * l_v
    residuals = np.abs(diffs) / np.maximum(1.0, np.abs(lhs_steps)) if T else np.zeros(0)
    lhs_total = math.fsum([d_ref[0]] + [eta[i] * l_v[i] for i in range(T)])
    rhs_total = math.fsum([d_ref[T]] + [excess[i] for i in range(T)] + [eta[i] * dl_ref[i] for i in range(T)])
    tel_diff = math.fsum(
        [d_ref[0]]
        + [eta[i] * l_v[i] for i in range(T)]
        + [-d_ref[T]]
        + [-excess[i] for i in range(T)]
        + [-eta[i] * dl_ref[i] for i in range(T)]
    )
    tel_residual = abs(tel_diff) / max(1.0, abs(lhs_total))
    return IdentityReport(
        per_step_residuals=residuals,
        per_step_diffs=diffs,
        telescoped_residual=tel_residual,
        telescoped_diff=tel_diff,
        excess=excess,
        min_excess=float(excess.min()) if T else 0.0,
        loss_bregman_ref=dl_ref,
        min_loss_bregman_ref=float(dl_ref.min()) if T else 0.0,
        lhs_total=lhs_total,
        rhs_total=rhs_total,
        w_ref=np.asarray(w_ref, dtype=float),
        v_ref=np.asarray(v_ref, dtype=float),
        num_steps=T,
    )


@dataclass
class MinimaxCertificate:
    """The worst-case gain ratio for one reference pair, with its verdict."""

    ratio: float
    numerator: float
    denominator: float
    d_final: float
    sum_eta_loss_bregman: float
    d_init: float
    sum_eta_noise_loss: float
    verdict: str  # certified | uncertified | violated
    certificate: dict | None
    adversary: str
    witness: dict | None

    def to_dict(self) -> dict:
        out = {
            "ratio": self.ratio,
            "numerator": self.numerator,
            "denominator": self.denominator,
            "d_final": self.d_final,
            "sum_eta_loss_bregman": self.sum_eta_loss_bregman,
            "d_init": self.d_init,
            "sum_eta_noise_loss": self.sum_eta_noise_loss,
            "verdict": self.verdict,
            "certificate": self.certificate,
            "adversary": self.adversary,
        }
        if self.witness is not None:
            out["witness"] = {
                k: (v.tolist() if isinstance(v, np.ndarray) else v)
                for k, v in self.witness.items()
            }
        return out

    def to_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)


def minimax_ratio(
    potential: Potential,
    loss: Loss,
    model: Model,
    trace: RunTrace,
    w_ref,
    v_ref,
    *,
    labels=None,
    certificate: StepSizeCertificate | None = None,
    adversary: str = "",
) -> MinimaxCertificate:
    """Worst-case gain: (final divergence + loss divergences) over (initial divergence + noise losses)."""
    y, d_ref, _, dl_ref, l_v = _audit_terms(potential, loss, model, trace, w_ref, v_ref, labels)
    T = trace.num_steps
    eta = trace.eta
    sum_eta_dl = math.fsum(eta[i] * dl_ref[i] for i in range(T))
    sum_eta_lv = math.fsum(eta[i] * l_v[i] for i in range(T))
    num = math.fsum((d_ref[T] if T else d_ref[0], sum_eta_dl))
    den = math.fsum((d_ref[0], sum_eta_lv))
    if den <= 0.0:
        raise ValueError(
            "degenerate reference pair: zero uncertainty energy (w_ref = w_0 and all v = 0)"
        )
    ratio = num / den
    witness = None
    if ratio > 1.0 + RATIO_SLACK:
        verdict = "violated"
        witness = {"w_ref": np.asarray(w_ref, dtype=float), "ratio": ratio}
    elif certificate is not None and certificate.accepted:
        verdict = "certified"
    else:
        verdict = "uncertified"
    return MinimaxCertificate(
        ratio=ratio,
        numerator=num,
        denominator=den,
        d_final=float(d_ref[T] if T else d_ref[0]),
        sum_eta_loss_bregman=sum_eta_dl,
        d_init=float(d_ref[0]),
        sum_eta_noise_loss=sum_eta_lv,
        verdict=verdict,
        certificate=None if certificate is None else certificate.to_dict(),
        adversary=adversary,
        witness=witness,
    )


@dataclass
class Adversary:
    """A reference pair that pins the gain ratio at one.

    The noise choice zeroes the estimator's innovation on its own labels
    (y_i = f_i(w_{i-1})), and w_hat is chosen on the hyperplane where the
    initial and final divergences agree.
    """

    w_hat: np.ndarray
    v_hat: np.ndarray
    labels: np.ndarray
    branch: str  # "hyperplane" | "perturbation"


def _positive_hyperplane_point(a: np.ndarray, b: float, scale: float) -> np.ndarray:
    """A strictly positive solution of a @ w = b, when one exists."""
    m = a.size
    pos = np.flatnonzero(a > 0)
    neg = np.flatnonzero(a < 0)
    if b != 0.0:
        if b > 0 and pos.size:
            j = int(pos[np.argmax(a[pos])])
        elif b < 0 and neg.size:
            j = int(neg[np.argmin(a[neg])])
        else:
            raise NumericsError("hyperplane does not meet the positive orthant")
        delta = max(scale, 1e-12)
        for _ in range(200):
            w = np.full(m, delta)
            wj = (b - delta * (float(a.sum()) - a[j])) / a[j]
            if wj > 0:
                w[j] = wj
                return w
            delta *= 0.5
        raise NumericsError("failed to place the adversary inside the positive orthant")
    if not (pos.size and neg.size):
        raise NumericsError("hyperplane does not meet the positive orthant")
    jp = int(pos[np.argmax(a[pos])])
    jn = int(neg[np.argmin(a[neg])])
    delta = max(scale, 1e-12)
    w = np.full(m, delta)
    rest = -delta * (float(a.sum()) - a[jp] - a[jn])
    r = (abs(rest) + (1.0 + scale) * abs(a[jp])) / abs(a[jn])
    w[jn] = r
    w[jp] = (rest - a[jn] * r) / a[jp]
    return w


def construct_adversary(
    potential: Potential, loss: Loss, model: Model, trace: RunTrace
) -> Adversary:
    """Build (w_hat, v_hat, labels) achieving ratio exactly one on this trace."""
    if not trace.is_full:
        raise ValueError("adversary construction needs a fully recorded trace")
    w0, wT = trace.snapshots[0], trace.snapshots[-1]
    theta0, thetaT = trace.duals[0], trace.duals[-1]
    a = thetaT - theta0
    norm_a = float(np.linalg.norm(a))
    if norm_a <= 1e-12:
        w_hat = w0.copy()
        w_hat[0] += 1e-3
        branch = "perturbation"
    else:
        b = float(
            math.fsum(
                (-potential.value(wT), potential.value(w0), float(thetaT @ wT), -float(theta0 @ w0))
            )
        )
        w_hat = a * (b / (norm_a * norm_a))
        branch = "hyperplane"
        if not potential.in_domain(w_hat):
            # move along the solution set of the hyperplane equation to an
            # interior point; the divergence equality is invariant on that set
            scale = 1e-3 * max(float(np.abs(w0).max()), float(np.abs(wT).max()), 1.0)
            w_hat = _positive_hyperplane_point(a, b, scale)
            branch = "hyperplane_interior"
    ds = trace.dataset
    T = trace.num_steps
    v_hat = np.empty(T)
    labels = np.empty(T)
    pred_hat = {}
    for i in range(T):
        idx = int(trace.sample_indices[i])
        if idx not in pred_hat:
            pred_hat[idx] = model.predict(ds.inputs[idx], w_hat)
        f_prev = model.predict(ds.inputs[idx], trace.snapshots[i])
        v_hat[i] = f_prev - pred_hat[idx]
        labels[i] = f_prev
    return Adversary(w_hat=w_hat, v_hat=v_hat, labels=labels, branch=branch)


def adversary_ratio(
    potential: Potential,
    loss: Loss,
    model: Model,
    trace: RunTrace,
    *,
    certificate: StepSizeCertificate | None = None,
) -> MinimaxCertificate:
    """Evaluate the gain ratio at the constructed adversary (should be 1)."""
    adv = construct_adversary(potential, loss, model, trace)
    return minimax_ratio(
        potential,
        loss,
        model,
        trace,
        adv.w_hat,
        adv.v_hat,
        labels=adv.labels,
        certificate=certificate,
        adversary=adv.branch,
    )


def sgd_square_identity(trace: RunTrace, w_ref, v_ref) -> dict:
    """Cross-check the closed-form square-loss ledger against the abstract one.

    For the identity-map potential with square loss on a linear model the
    telescoped identity specializes to

        ||w-w_0||^2/2 + sum eta_i v_i^2/2
            = ||w-w_T||^2/2 + sum eta_i (1 - eta_i ||x_i||^2) e_i^2 / 2
              + sum eta_i e_{p,i}^2 / 2,

    with e_p = e - v.  Both sides are computed directly from the recorded
    scalars and compared against the abstract totals.
    """
    if trace.potential.kind != "squared_l2" or trace.loss.kind != "square" \
            or trace.model.kind != "linear":
        raise ValueError("specialization applies to linear models with square loss under squared_l2")
    w_ref = np.asarray(w_ref, dtype=float)
    v_ref = np.asarray(v_ref, dtype=float).reshape(-1)
    T = trace.num_steps
    ds = trace.dataset
    eta = trace.eta
    e = trace.innovations
    e_p = e - v_ref
    xnorm2 = np.einsum("ij,ij->i", ds.inputs, ds.inputs)[trace.sample_indices]
    d0 = 0.5 * float(np.sum((w_ref - trace.snapshots[0]) ** 2))
    dT = 0.5 * float(np.sum((w_ref - trace.snapshots[-1]) ** 2))
    lhs_direct = math.fsum([d0] + [0.5 * eta[i] * v_ref[i] ** 2 for i in range(T)])
    rhs_direct = math.fsum(
        [dT]
        + [0.5 * eta[i] * (1.0 - eta[i] * xnorm2[i]) * e[i] ** 2 for i in range(T)]
        + [0.5 * eta[i] * e_p[i] ** 2 for i in range(T)]
    )
    report = telescoped_identity(
        trace.potential, trace.loss, trace.model, trace, w_ref, v_ref
    )
    return {
        "lhs_direct": lhs_direct,
        "rhs_direct": rhs_direct,
        "lhs_abstract": report.lhs_total,
        "rhs_abstract": report.rhs_total,
        "lhs_rel_diff": abs(lhs_direct - report.lhs_total) / max(1.0, abs(report.lhs_total)),
        "rhs_rel_diff": abs(rhs_direct - report.rhs_total) / max(1.0, abs(report.rhs_total)),
        "report": report,
    }
