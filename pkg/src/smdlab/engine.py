"""The mirror-descent iteration: single steps, full runs, step-size certificates.

A run is strictly sequential.  The hot linear-model loop is dispatched to a
kernel (compiled extension when built, pure-Python twin otherwise); every
other configuration goes through the generic object-based loop.  All paths
share the same recording and termination semantics.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .errors import DomainError, NumericsError
from .losses import Loss, sample_loss_grad, sample_loss_hessian
from .models import Dataset, LinearModel, Model
from .potentials import Potential

ORDERS = ("cyclic", "shuffled", "random")


@dataclass(frozen=True)
class ConstantStep:
    """Fixed step size."""

    eta: float

    def __post_init__(self):
        if self.eta <= 0:
            raise ValueError("step size must be positive")

    kind = "constant"


@dataclass(frozen=True)
class SequenceStep:
    """Explicit per-step sizes eta_1..eta_T."""

    etas: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "etas", np.asarray(self.etas, dtype=float))
        if self.etas.ndim != 1 or self.etas.size == 0 or np.any(self.etas <= 0):
            raise ValueError("step sizes must be a nonempty positive sequence")

    kind = "sequence"


@dataclass(frozen=True)
class AdaptiveStep:
    """Residual-adaptive rule: eta_i = c * alpha * |e| / (||g||^2 |l'(e)|).

    ``alpha`` defaults to the potential's strong-convexity constant.  The
    rule keeps the post-step residual on the same side of zero, which is
    what drives convergence for quasiconvex losses; zero-gradient steps are
    no-ops and record the finite square-loss value of the bound.
    """

    c: float = 1.0
    alpha: float | None = None

    def __post_init__(self):
        if not 0 < self.c <= 1:
            raise ValueError("safety factor must lie in (0, 1]")
        if self.alpha is not None and self.alpha <= 0:
            raise ValueError("alpha must be positive when given")

    kind = "adaptive"

    def resolve_alpha(self, potential: Potential) -> float:
        if self.alpha is not None:
            return self.alpha
        if potential.alpha > 0:
            return potential.alpha
        raise ValueError(
            "adaptive schedule needs a positive alpha; the potential reports none, "
            "pass alpha= explicitly"
        )


Schedule = ConstantStep | SequenceStep | AdaptiveStep


def adaptive_step_bound(alpha: float, loss: Loss, x, y: float, w_prev) -> float:
    """Largest admissible step for the residual-adaptive rule at one sample.

    alpha * |e| / (||x||^2 |l'(e)|) for a linear prediction; +inf on a zero
    residual (the step is a no-op there anyway).
    """
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    x = np.asarray(x, dtype=float)
    e = float(y - x @ np.asarray(w_prev, dtype=float))
    lp = loss.deriv(e)
    if e == 0.0 or lp == 0.0:
        return math.inf
    return alpha * abs(e) / (float(x @ x) * abs(lp))


def _mirror_step(potential: Potential, w: np.ndarray, eta: float, lp: float, grad_f: np.ndarray):
    if lp == 0.0:
        return np.array(w, dtype=float, copy=True)
    grad_l = -lp * grad_f
    theta = potential.grad(w) - eta * grad_l
    return potential.inverse_grad(theta)


def smd_step(potential: Potential, loss: Loss, model: Model, sample, w_prev, eta: float):
    """One mirror-descent update on a single (x, y) sample.

    w_next = inverse_grad(grad(w_prev) - eta * grad L(w_prev)); reduces to the
    plain additive update for the squared-l2 potential.
    """
    if eta <= 0:
        raise ValueError("step size must be positive")
    x, y = sample
    w_prev = potential.check_domain(w_prev)
    e = y - model.predict(x, w_prev)
    lp = loss.deriv(e)
    w_next = _mirror_step(potential, w_prev, eta, lp, model.param_gradient(x, w_prev))
    if not np.all(np.isfinite(w_next)):
        raise NumericsError("mirror update produced non-finite parameters")
    return potential.check_domain(w_next)


@dataclass
class RunTrace:
    """Recorded trajectory of one run.

    ``snapshots`` holds iterates at ``snapshot_steps`` (stride 1 for audited
    runs); the per-step scalars are always complete.  ``identity_residuals``
    stays None until an audit fills it in.
    """

    snapshots: np.ndarray
    snapshot_steps: np.ndarray
    duals: np.ndarray
    eta: np.ndarray
    innovations: np.ndarray
    sample_indices: np.ndarray
    num_steps: int
    termination: str
    potential: Potential
    loss: Loss
    model: Model
    dataset: Dataset
    order: str
    seed: int | None
    residual_tol: float | None
    kernel_used: str
    max_residual: np.ndarray = None
    train_loss: np.ndarray = None
    rel_error: np.ndarray = None
    identity_residuals: np.ndarray = None
    extra: dict = field(default_factory=dict)

    @property
    def w0(self) -> np.ndarray:
        return self.snapshots[0]

    @property
    def w_final(self) -> np.ndarray:
        return self.snapshots[-1]

    @property
    def is_full(self) -> bool:
        return self.snapshots.shape[0] == self.num_steps + 1 and bool(
            np.array_equal(self.snapshot_steps, np.arange(self.num_steps + 1))
        )

    def iterate(self, i: int) -> np.ndarray:
        """w_i for a fully recorded trace."""
        if not self.is_full:
            raise ValueError("trace was recorded with a snapshot stride > 1")
        return self.snapshots[i]

    def prediction_errors(self) -> np.ndarray | None:
        """Per-step errors against the noiseless model output, when the truth is known."""
        ds = self.dataset
        if ds.noise is not None:
            v = ds.noise
        elif ds.w_true is not None:
            v = np.array(
                [ds.labels[i] - self.model.predict(ds.inputs[i], ds.w_true) for i in range(ds.n)]
            )
        else:
            return None
        return self.innovations - v[self.sample_indices]

    def step_noise(self) -> np.ndarray | None:
        ds = self.dataset
        if ds.noise is None:
            return None
        return ds.noise[self.sample_indices]


def default_init(potential: Potential, m: int) -> np.ndarray:
    """Zero vector, or a uniform interior point for the positive orthant."""
    if potential.kind == "negative_entropy":
        return np.full(m, 1.0 / m)
    return np.zeros(m)


def _build_order(order: str, n: int, max_steps: int, seed: int | None) -> np.ndarray:
    if order == "cyclic":
        return np.arange(max_steps, dtype=np.int64) % n
    if seed is None:
        raise ValueError(f"order {order!r} requires a seed")
    rng = np.random.default_rng(seed)
    if order == "shuffled":
        passes = max_steps // n + 1
        perms = [rng.permutation(n) for _ in range(passes)]
        return np.concatenate(perms)[:max_steps].astype(np.int64)
    if order == "random":
        return rng.integers(0, n, size=max_steps, dtype=np.int64)
    raise ValueError(f"unknown order {order!r}; expected one of {ORDERS}")


def _kernel_eligible(potential, loss, model, schedule) -> bool:
    return (
        isinstance(model, LinearModel)
        and potential.kind in _kernels.POT_IDS
        and loss.kind in _kernels.LOSS_IDS
        and schedule.kind in _kernels.SCHED_IDS
    )


def _run_kernel(kernel_name, potential, loss, model, dataset, schedule, w0, order_arr,
                residual_tol, snapshot_every, max_steps):
    kernel = _kernels.get_kernel(kernel_name)
    eta_const, eta_seq, c, alpha = 0.0, None, 0.0, 0.0
    if schedule.kind == "constant":
        eta_const = schedule.eta
    elif schedule.kind == "sequence":
        eta_seq = schedule.etas
    else:
        c = schedule.c
        alpha = schedule.resolve_alpha(potential)
    snap_w, snap_steps, eta, e, steps, term = kernel.run_linear(
        dataset.inputs,
        dataset.labels,
        w0,
        order_arr,
        _kernels.POT_IDS[potential.kind],
        getattr(potential, "q", 0.0),
        _kernels.LOSS_IDS[loss.kind],
        getattr(loss, "delta", 0.0),
        _kernels.SCHED_IDS[schedule.kind],
        eta_const,
        eta_seq,
        c,
        alpha,
        0.0 if residual_tol is None else residual_tol,
        snapshot_every,
        max_steps,
    )
    term_name = _kernels.TERM_NAMES[term]
    if term_name == "domain_error":
        raise DomainError(f"step {steps + 1}: iterate left the potential domain")
    if term_name == "nonfinite":
        raise NumericsError(f"step {steps + 1}: iterate became non-finite")
    return snap_w, snap_steps, eta, e, steps, term_name


def _run_generic(potential, loss, model, dataset, schedule, w0, order_arr,
                 residual_tol, snapshot_every, max_steps):
    n = dataset.n
    X, y = dataset.inputs, dataset.labels
    w = np.array(w0, dtype=float)
    alpha = schedule.resolve_alpha(potential) if schedule.kind == "adaptive" else 0.0

    eta_out = np.zeros(max_steps)
    e_out = np.zeros(max_steps)
    snaps = [w.copy()]
    snap_steps = [0]
    term = "max_steps"
    steps = 0
    for step in range(1, max_steps + 1):
        idx = int(order_arr[step - 1])
        x = X[idx]
        e = y[idx] - model.predict(x, w)
        lp = loss.deriv(e)
        grad_f = model.param_gradient(x, w)

        if schedule.kind == "constant":
            eta = schedule.eta
        elif schedule.kind == "sequence":
            eta = float(schedule.etas[step - 1])
        else:
            g2 = float(grad_f @ grad_f)
            if g2 == 0.0:
                eta = schedule.c * alpha
            elif lp == 0.0:
                eta = schedule.c * alpha / g2
            else:
                eta = schedule.c * alpha * abs(e) / (g2 * abs(lp))

        w_next = _mirror_step(potential, w, eta, lp, grad_f)
        if not np.all(np.isfinite(w_next)):
            raise NumericsError(f"step {step}: iterate became non-finite")
        try:
            w = potential.check_domain(w_next)
        except DomainError as exc:
            raise DomainError(f"step {step}: {exc}") from exc

        eta_out[step - 1] = eta
        e_out[step - 1] = e
        steps = step

        if step % snapshot_every == 0:
            snaps.append(w.copy())
            snap_steps.append(step)
        if residual_tol is not None and residual_tol > 0 and step % n == 0:
            r = max(abs(y[i] - model.predict(X[i], w)) for i in range(n))
            if r <= residual_tol:
                term = "residual_tol"
                break

    if steps > 0 and snap_steps[-1] != steps:
        snaps.append(w.copy())
        snap_steps.append(steps)
    return (
        np.array(snaps),
        np.array(snap_steps, dtype=np.int64),
        eta_out[:steps].copy(),
        e_out[:steps].copy(),
        steps,
        term,
    )


def _snapshot_metrics(model, loss, dataset, snapshots):
    n = dataset.n
    R = snapshots.shape[0]
    if isinstance(model, LinearModel):
        residuals = dataset.labels[None, :] - snapshots @ dataset.inputs.T
    else:
        residuals = np.empty((R, n))
        for r in range(R):
            for i in range(n):
                residuals[r, i] = dataset.labels[i] - model.predict(dataset.inputs[i], snapshots[r])
    max_residual = np.abs(residuals).max(axis=1) if n else np.zeros(R)
    train_loss = np.array([math.fsum(loss.value(z) for z in row) for row in residuals])
    rel_error = None
    if dataset.w_true is not None and dataset.w_true.shape == (snapshots.shape[1],):
        scale = max(float(np.linalg.norm(dataset.w_true)), 1e-300)
        rel_error = np.linalg.norm(snapshots - dataset.w_true[None, :], axis=1) / scale
    return max_residual, train_loss, rel_error


def run(
    potential: Potential,
    loss: Loss,
    model: Model,
    dataset: Dataset,
    schedule: Schedule,
    *,
    w0=None,
    order: str = "cyclic",
    seed: int | None = None,
    max_steps: int = 1000,
    residual_tol: float | None = 1e-9,
    snapshot_every: int = 1,
    kernel: str = "auto",
) -> RunTrace:
    """Run the recursion until max_steps or a full interpolating pass.

    ``kernel`` is one of auto / compiled / python / generic; the first three
    use the step-loop kernels when the configuration is linear-model with a
    componentwise potential, the last forces the object-based loop.
    """
    if max_steps < 0:
        raise ValueError("max_steps must be nonnegative")
    if snapshot_every < 1:
        raise ValueError("snapshot_every must be >= 1")
    if schedule.kind == "sequence" and schedule.etas.size < max_steps:
        raise ValueError("sequence schedule shorter than max_steps")
    m = model.param_dim
    if dataset.n == 0:
        raise ValueError("dataset is empty")
    if dataset.d != model.input_dim:
        raise ValueError("dataset input dimension does not match the model")
    w0 = default_init(potential, m) if w0 is None else np.asarray(w0, dtype=float)
    w0 = potential.check_domain(w0)
    if w0.shape != (m,):
        raise ValueError(f"w0 must have shape ({m},)")

    order_arr = _build_order(order, dataset.n, max_steps, seed)
    use_kernel = kernel != "generic" and _kernel_eligible(potential, loss, model, schedule)
    if kernel in ("compiled", "python") and not use_kernel:
        raise ValueError("requested kernel cannot run this configuration; use kernel='generic'")

    if max_steps == 0:
        snap_w = np.array([w0])
        snap_steps = np.zeros(1, dtype=np.int64)
        eta = np.zeros(0)
        e = np.zeros(0)
        steps, term = 0, "max_steps"
        kernel_used = "none"
    elif use_kernel:
        kernel_used = kernel if kernel in ("compiled", "python") else _kernels.default_kernel_name()
        snap_w, snap_steps, eta, e, steps, term = _run_kernel(
            kernel_used, potential, loss, model, dataset, schedule, w0, order_arr,
            residual_tol, snapshot_every, max_steps,
        )
    else:
        kernel_used = "generic"
        snap_w, snap_steps, eta, e, steps, term = _run_generic(
            potential, loss, model, dataset, schedule, w0, order_arr,
            residual_tol, snapshot_every, max_steps,
        )

    duals = np.array([potential.grad(snap_w[r]) for r in range(snap_w.shape[0])])
    max_residual, train_loss, rel_error = _snapshot_metrics(model, loss, dataset, snap_w)
    return RunTrace(
        snapshots=snap_w,
        snapshot_steps=snap_steps,
        duals=duals,
        eta=eta,
        innovations=e,
        sample_indices=order_arr[:steps].copy(),
        num_steps=steps,
        termination=term,
        potential=potential,
        loss=loss,
        model=model,
        dataset=dataset,
        order=order,
        seed=seed,
        residual_tol=residual_tol,
        kernel_used=kernel_used,
        max_residual=max_residual,
        train_loss=train_loss,
        rel_error=rel_error,
    )


def dual_consistency_max_dev(trace: RunTrace) -> float:
    """Max per-coordinate deviation of grad(w_i) from grad(w_{i-1}) - eta_i grad L_i."""
    if not trace.is_full:
        raise ValueError("dual consistency needs a fully recorded trace")
    worst = 0.0
    ds = trace.dataset
    for i in range(1, trace.num_steps + 1):
        w_prev = trace.snapshots[i - 1]
        idx = int(trace.sample_indices[i - 1])
        g = sample_loss_grad(trace.loss, trace.model, ds.inputs[idx], ds.labels[idx], w_prev)
        rhs = trace.duals[i - 1] - trace.eta[i - 1] * g
        dev = float(np.abs(trace.duals[i] - rhs).max())
        worst = max(worst, dev)
    return worst


@dataclass
class StepSizeCertificate:
    """Outcome of a convexity check for the shifted potential at a step size."""

    status: str  # closed_form | sampled | rejected
    eta: float
    bound: float | None = None
    margin: float | None = None
    witness: dict | None = None
    points_checked: int = 0

    @property
    def accepted(self) -> bool:
        return self.status != "rejected"

    def to_dict(self) -> dict:
        witness = None
        if self.witness is not None:
            witness = {
                k: (v.tolist() if isinstance(v, np.ndarray) else v)
                for k, v in self.witness.items()
            }
        return {
            "status": self.status,
            "eta": self.eta,
            "bound": self.bound,
            "margin": self.margin,
            "witness": witness,
            "points_checked": self.points_checked,
        }


def certify_step_size(
    potential: Potential,
    loss: Loss,
    model: Model,
    dataset: Dataset,
    eta: float,
    *,
    num_points: int = 64,
    box: float = 3.0,
    seed: int = 0,
    trace: RunTrace | None = None,
    eig_tol: float = 1e-9,
) -> StepSizeCertificate:
    """Certify that the potential minus eta times each per-sample loss is convex.

    Closed form for linear models with square loss under a potential with a
    known global strong-convexity constant; otherwise the smallest eigenvalue
    of the shifted Hessian is sampled on the box intersected with the domain,
    plus all trace iterates retroactively.  Rejection carries a witness.
    """
    if eta <= 0:
        return StepSizeCertificate(
            status="rejected", eta=eta, witness={"reason": "step size must be positive"}
        )
    closed_form_ok = (
        isinstance(model, LinearModel)
        and loss.kind == "square"
        and potential.alpha > 0
        and potential.alpha_is_global
    )
    xnorm2 = np.einsum("ij,ij->i", dataset.inputs, dataset.inputs)
    if closed_form_ok:
        bound = potential.alpha / float(xnorm2.max())
        if eta <= bound:
            return StepSizeCertificate(status="closed_form", eta=eta, bound=bound,
                                       margin=bound - eta)
        worst = int(np.argmax(xnorm2))
        w_point = default_init(potential, model.param_dim)
        H = potential.hessian(w_point) - eta * sample_loss_hessian(
            loss, model, dataset.inputs[worst], dataset.labels[worst], w_point
        )
        min_eig = float(np.linalg.eigvalsh(H)[0])
        return StepSizeCertificate(
            status="rejected", eta=eta, bound=bound,
            witness={"sample_index": worst, "min_eig": min_eig, "point": w_point},
        )

    rng = np.random.default_rng(seed)
    m = model.param_dim
    points = [potential.sample_domain(rng, m, box) for _ in range(num_points)]
    if trace is not None:
        points.extend(np.array(s) for s in trace.snapshots)
    min_eig = math.inf
    witness = None
    for w_point in points:
        Hpsi = potential.hessian(w_point)
        for i in range(dataset.n):
            H = Hpsi - eta * sample_loss_hessian(
                loss, model, dataset.inputs[i], dataset.labels[i], w_point
            )
            lam = float(np.linalg.eigvalsh(H)[0])
            if lam < min_eig:
                min_eig = lam
                witness = {"point": w_point, "sample_index": i, "min_eig": lam}
    if min_eig >= -eig_tol:
        return StepSizeCertificate(
            status="sampled", eta=eta, margin=min_eig, points_checked=len(points)
        )
    return StepSizeCertificate(
        status="rejected", eta=eta, margin=min_eig, witness=witness,
        points_checked=len(points),
    )
