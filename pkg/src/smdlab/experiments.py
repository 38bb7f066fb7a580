"""Scenario runners: data generators, the reproducible experiment suite, fuzzing.

Every scenario consumes an :class:`ExperimentConfig`, derives all randomness
from recorded seeds, and returns a JSON-serializable report; artifact files
(trace.csv / identity.csv / report.json / manifest.json) are written when an
output directory is given.
"""

from __future__ import annotations

import math
import time
from pathlib import Path

import numpy as np
from scipy.optimize import minimize

from . import io
from .auditor import (
    adversary_ratio,
    consistent_noise,
    minimax_ratio,
    telescoped_identity,
)
from .config import ConfigError, ExperimentConfig
from .engine import (
    AdaptiveStep,
    ConstantStep,
    SequenceStep,
    certify_step_size,
    default_init,
    run,
)
from .losses import make_loss
from .models import Dataset, LinearModel, RandomFeatureModel, make_model, validate_dataset
from .oracles import bregman_project, min_l2_solution
from .potentials import make_potential

SCENARIOS = (
    "run_once",
    "cs_demo",
    "overparam_linear",
    "implicit_reg_sweep",
    "nonlinear_local",
    "identity_fuzz",
    "minimax_audit",
)

POTENTIAL_CYCLE = ("squared_l2", "quadratic_q", "negative_entropy", "qnorm_componentwise", "qnorm_squared")
LOSS_CYCLE = ("square", "huber", "quartic", "logcosh")
MODEL_CYCLE = ("linear", "random_feature", "shallow_smooth")
SCHEDULE_CYCLE = ("constant", "sequence", "adaptive")


# ---------------------------------------------------------------------------
# data generators

def generate_gaussian_linear(
    n: int, m: int, seed: int, *, noise_std: float = 0.0, positive_truth: bool = False
) -> Dataset:
    """Standard-normal design with a planted parameter vector."""
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, m))
    if positive_truth:
        w_true = rng.uniform(0.5, 1.5, size=m)
    else:
        w_true = rng.standard_normal(m)
    v = rng.normal(0.0, noise_std, size=n) if noise_std > 0 else np.zeros(n)
    y = X @ w_true + v
    return Dataset(
        inputs=X, labels=y, w_true=w_true, noise=v, seed=seed, generator="gaussian_linear"
    )


def generate_cs_instance(n: int, m: int, k: int, seed: int) -> Dataset:
    """Under-determined Gaussian system with a k-sparse planted solution."""
    if not (0 <= k <= m):
        raise ValueError("sparsity k must satisfy 0 <= k <= m")
    if not n < m:
        raise ValueError("the instance must be under-determined (n < m)")
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, m))
    w_true = np.zeros(m)
    if k > 0:
        support = rng.choice(m, size=k, replace=False)
        signs = rng.choice([-1.0, 1.0], size=k)
        w_true[support] = signs * rng.uniform(0.5, 1.5, size=k)
    y = X @ w_true
    return Dataset(
        inputs=X,
        labels=y,
        w_true=w_true,
        noise=np.zeros(n),
        seed=seed,
        generator="cs_sparse",
        extra={"k": k},
    )


def generate_random_feature_dataset(
    n: int, m: int, num_features: int, seed: int, *, w_scale: float = 1.0
) -> tuple[Dataset, RandomFeatureModel]:
    """Per-sample feature matrices (the inputs) with a planted parameter vector.

    Feature entries are scaled by 1/sqrt(m) so pre-activations stay O(1)
    as the parameter count grows.
    """
    rng = np.random.default_rng(seed)
    model = RandomFeatureModel(num_features, m, seed=seed)
    X = rng.standard_normal((n, num_features * m)) / np.sqrt(m)
    w_true = w_scale * rng.standard_normal(m)
    y = np.array([model.predict(X[i], w_true) for i in range(n)])
    ds = Dataset(
        inputs=X,
        labels=y,
        w_true=w_true,
        noise=np.zeros(n),
        seed=seed,
        generator="random_feature",
    )
    return ds, model


# ---------------------------------------------------------------------------
# config materialization

def default_config(scenario: str) -> ExperimentConfig:
    if scenario not in SCENARIOS:
        raise ConfigError(f"unknown scenario {scenario!r}; expected one of {SCENARIOS}")
    cfg = ExperimentConfig()
    cfg.set("experiment", "scenario", scenario)
    cfg.set("experiment", "seed", 0)
    cfg.set("experiment", "out", "out")
    if scenario in ("run_once", "minimax_audit", "overparam_linear"):
        cfg.set("data", "generator", "gaussian_linear")
        cfg.set("data", "n", 5)
        cfg.set("data", "m", 12)
        cfg.set("data", "noise_std", 0.1 if scenario == "minimax_audit" else 0.0)
        cfg.set("potential", "kind", "squared_l2")
        cfg.set("loss", "kind", "square")
        cfg.set("model", "kind", "linear")
        cfg.set("schedule", "kind", "constant")
        cfg.set("schedule", "eta", 0.0)  # 0 means: derive a certified value
        cfg.set("run", "order", "cyclic")
        cfg.set("run", "max_steps", 2000 if scenario != "minimax_audit" else 400)
        cfg.set("run", "residual_tol", 1e-9)
        cfg.set("run", "init", "zero")
    elif scenario == "cs_demo":
        cfg.set("data", "generator", "cs_sparse")
        cfg.set("data", "n", 50)
        cfg.set("data", "m", 100)
        cfg.set("data", "k", 10)
        cfg.set("potential", "kind", "qnorm_componentwise")
        cfg.set("potential", "q", 1.1)
        cfg.set("loss", "kind", "square")
        cfg.set("model", "kind", "linear")
        cfg.set("schedule", "kind", "constant")
        cfg.set("schedule", "eta", 0.001)
        cfg.set("run", "order", "cyclic")
        cfg.set("run", "max_steps", 200000)
        cfg.set("run", "residual_tol", 1e-10)
        cfg.set("run", "snapshot_every", 500)
        cfg.set("run", "init", "near_zero")
        cfg.set("experiment", "num_seeds", 10)
        cfg.set("experiment", "support_threshold", 1e-3)
        cfg.set("experiment", "rel_error_tol", 1e-2)
        cfg.set("experiment", "time_budget_s", 60.0)
    elif scenario == "implicit_reg_sweep":
        cfg.set("data", "generator", "gaussian_linear")
        cfg.set("data", "n", 10)
        cfg.set("data", "m", 30)
        cfg.set("data", "positive_truth", True)
        cfg.set("loss", "kind", "square")
        cfg.set("model", "kind", "linear")
        cfg.set("run", "max_steps", 400000)
        cfg.set("run", "residual_tol", 1e-9)
        cfg.set("experiment", "tol_l2", 1e-6)
        cfg.set("experiment", "tol_general", 1e-4)
    elif scenario == "nonlinear_local":
        cfg.set("data", "generator", "random_feature")
        cfg.set("data", "n", 10)
        cfg.set("data", "m", 200)
        cfg.set("data", "num_features", 4)
        cfg.set("model", "kind", "random_feature")
        cfg.set("potential", "kind", "squared_l2")
        cfg.set("loss", "kind", "square")
        cfg.set("schedule", "kind", "constant")
        cfg.set("schedule", "eta", 0.0)
        cfg.set("run", "max_steps", 100000)
        cfg.set("run", "residual_tol", 1e-9)
        cfg.set("experiment", "num_seeds", 10)
        cfg.set("experiment", "m_grid", [20, 50, 100, 200])
    elif scenario == "identity_fuzz":
        cfg.set("experiment", "trials", 100)
        cfg.set("experiment", "steps", 200)
        cfg.set("experiment", "minimax_pairs", 20)
        cfg.set("experiment", "residual_tol", 1e-9)
    return cfg


def build_dataset(cfg: ExperimentConfig):
    data = cfg["data"]
    gen = data.get("generator", "gaussian_linear")
    seed = int(data.get("seed", cfg.get("experiment", "seed", 0)))
    if gen == "gaussian_linear":
        ds = generate_gaussian_linear(
            int(data["n"]),
            int(data["m"]),
            seed,
            noise_std=float(data.get("noise_std", 0.0)),
            positive_truth=bool(data.get("positive_truth", False)),
        )
        return ds, None
    if gen == "cs_sparse":
        return generate_cs_instance(int(data["n"]), int(data["m"]), int(data["k"]), seed), None
    if gen == "random_feature":
        ds, model = generate_random_feature_dataset(
            int(data["n"]), int(data["m"]), int(data.get("num_features", 4)), seed
        )
        return ds, model
    if gen == "csv":
        return Dataset.from_csv(data["path"]), None
    raise ConfigError(f"unknown data generator {gen!r}")


def build_potential(cfg: ExperimentConfig):
    pot = cfg["potential"]
    kind = pot.get("kind", "squared_l2")
    return make_potential(kind, q=pot.get("q"), Q=pot.get("Q"))


def build_loss(cfg: ExperimentConfig):
    loss = cfg["loss"]
    return make_loss(loss.get("kind", "square"), delta=loss.get("delta"))


def build_model(cfg: ExperimentConfig, dataset: Dataset, generated_model=None):
    model_cfg = cfg["model"]
    kind = model_cfg.get("kind", "linear")
    if generated_model is not None:
        return generated_model
    if kind == "linear":
        return make_model("linear", dim=dataset.d)
    if kind == "random_feature":
        return make_model(
            "random_feature",
            num_features=int(model_cfg["num_features"]),
            param_dim=int(model_cfg["param_dim"]),
            seed=int(model_cfg.get("seed", 0)),
        )
    if kind == "shallow_smooth":
        return make_model(
            "shallow_smooth",
            hidden=int(model_cfg["hidden"]),
            input_dim=int(model_cfg["input_dim"]),
        )
    raise ConfigError(f"unknown model kind {kind!r}")


def build_schedule(cfg: ExperimentConfig, *, derived_eta: float | None = None):
    sched = cfg["schedule"]
    kind = sched.get("kind", "constant")
    if kind == "constant":
        eta = float(sched.get("eta", 0.0))
        if eta <= 0.0:
            if derived_eta is None:
                raise ConfigError("schedule.eta must be positive (or derivable)")
            eta = derived_eta
        return ConstantStep(eta)
    if kind == "sequence":
        return SequenceStep(np.asarray(sched["etas"], dtype=float))
    if kind == "adaptive":
        alpha = sched.get("alpha")
        return AdaptiveStep(c=float(sched.get("c", 0.5)), alpha=None if alpha is None else float(alpha))
    raise ConfigError(f"unknown schedule kind {kind!r}")


def resolve_init(name, potential, m: int, seed: int) -> np.ndarray:
    if isinstance(name, (list, np.ndarray)):
        return np.asarray(name, dtype=float)
    if name in (None, "default"):
        return default_init(potential, m)
    if name == "zero":
        return np.zeros(m)
    if name == "minimizer":
        return potential.minimizer(m)
    if name == "near_zero":
        rng = np.random.default_rng(seed)
        return 1e-6 * rng.choice([-1.0, 1.0], size=m)
    if name == "random":
        rng = np.random.default_rng(seed)
        if potential.kind == "negative_entropy":
            return rng.uniform(0.2, 2.0, size=m)
        return rng.standard_normal(m)
    raise ConfigError(f"unknown init {name!r}")


def certified_constant_eta(potential, dataset, *, factor: float = 0.5) -> float:
    """factor * alpha / max ||x_i||^2 (the closed-form certified range)."""
    alpha = potential.alpha if potential.alpha > 0 else 1.0
    xnorm2 = np.einsum("ij,ij->i", dataset.inputs, dataset.inputs)
    return factor * alpha / float(xnorm2.max())


def materialize(cfg: ExperimentConfig):
    """Build (potential, loss, model, dataset, schedule, run_kwargs, w0) from a config."""
    dataset, generated_model = build_dataset(cfg)
    potential = build_potential(cfg)
    loss = build_loss(cfg)
    model = build_model(cfg, dataset, generated_model)
    validate_dataset(model, dataset)
    derived = None
    if isinstance(model, LinearModel):
        derived = certified_constant_eta(potential, dataset)
    schedule = build_schedule(cfg, derived_eta=derived)
    run_cfg = cfg["run"]
    seed = int(cfg.get("experiment", "seed", 0))
    w0 = resolve_init(run_cfg.get("init", "default"), potential, model.param_dim,
                      int(run_cfg.get("init_seed", seed + 1)))
    run_kwargs = {
        "order": run_cfg.get("order", "cyclic"),
        "seed": int(run_cfg.get("order_seed", seed)),
        "max_steps": int(run_cfg.get("max_steps", 1000)),
        "residual_tol": run_cfg.get("residual_tol", 1e-9),
        "snapshot_every": int(run_cfg.get("snapshot_every", 1)),
        "kernel": run_cfg.get("kernel", "auto"),
    }
    return potential, loss, model, dataset, schedule, run_kwargs, w0


# ---------------------------------------------------------------------------
# single-run scenarios

def _write_run_artifacts(out, cfg, trace, report_payload, *, identity_report=None):
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    config_hash = cfg.hash()
    io.write_trace_csv(trace, out / "trace.csv", config_hash=config_hash)
    if identity_report is not None:
        io.write_identity_csv(identity_report, trace, out / "identity.csv",
                              config_hash=config_hash)
    io.write_manifest(
        out / "manifest.json",
        config_hash=config_hash,
        config_text=cfg.to_text(),
        seeds={
            "experiment": cfg.get("experiment", "seed", 0),
            "data": cfg.get("data", "seed", cfg.get("experiment", "seed", 0)),
            "order": cfg.get("run", "order_seed", cfg.get("experiment", "seed", 0)),
        },
        trace=trace,
    )
    report_payload = dict(report_payload)
    report_payload["config_hash"] = config_hash
    io.write_json(report_payload, out / "report.json")
    return out


def run_once(cfg: ExperimentConfig, out=None):
    """The `run` subcommand: one configured run plus its trace artifacts."""
    potential, loss, model, dataset, schedule, run_kwargs, w0 = materialize(cfg)
    trace = run(potential, loss, model, dataset, schedule, w0=w0, **run_kwargs)
    report = {
        "scenario": "run_once",
        "termination": trace.termination,
        "num_steps": trace.num_steps,
        "kernel_used": trace.kernel_used,
        "final_max_residual": float(trace.max_residual[-1]),
        "final_train_loss": float(trace.train_loss[-1]),
        "failures": [],
    }
    if trace.rel_error is not None:
        report["final_rel_error"] = float(trace.rel_error[-1])
    if out:
        _write_run_artifacts(out, cfg, trace, report)
    return trace, report


def run_audit(cfg: ExperimentConfig, out=None, *, residual_tol: float = 1e-9):
    """Run, then audit the conservation identity along the whole trace."""
    potential, loss, model, dataset, schedule, run_kwargs, w0 = materialize(cfg)
    run_kwargs["snapshot_every"] = 1
    trace = run(potential, loss, model, dataset, schedule, w0=w0, **run_kwargs)
    seed = int(cfg.get("experiment", "seed", 0))
    rng = np.random.default_rng(seed + 101)
    w_ref = resolve_init("random", potential, model.param_dim, seed + 101) \
        if potential.kind == "negative_entropy" else rng.standard_normal(model.param_dim)
    v_ref = consistent_noise(trace, w_ref)
    report_obj = telescoped_identity(potential, loss, model, trace, w_ref, v_ref)
    trace.identity_residuals = report_obj.per_step_residuals
    certificate = certify_step_size(
        potential, loss, model, dataset,
        trace.eta.max() if trace.num_steps else 1.0, trace=trace,
    )
    failures = []
    if report_obj.max_step_residual > residual_tol:
        failures.append({
            "check": "step_identity",
            "value": report_obj.max_step_residual,
            "tolerance": residual_tol,
        })
    if report_obj.telescoped_residual > residual_tol:
        failures.append({
            "check": "telescoped_identity",
            "value": report_obj.telescoped_residual,
            "tolerance": residual_tol,
        })
    report = {
        "scenario": "minimax_audit",
        "termination": trace.termination,
        "num_steps": trace.num_steps,
        "max_step_residual": report_obj.max_step_residual,
        "telescoped_residual": report_obj.telescoped_residual,
        "min_excess": report_obj.min_excess,
        "certificate": certificate.to_dict(),
        "failures": failures,
    }
    if out:
        _write_run_artifacts(out, cfg, trace, report, identity_report=report_obj)
    return trace, report_obj, report


def run_adversary(cfg: ExperimentConfig, out=None):
    """Run, then evaluate the gain ratio at the constructed adversary."""
    potential, loss, model, dataset, schedule, run_kwargs, w0 = materialize(cfg)
    run_kwargs["snapshot_every"] = 1
    trace = run(potential, loss, model, dataset, schedule, w0=w0, **run_kwargs)
    certificate = certify_step_size(
        potential, loss, model, dataset,
        trace.eta.max() if trace.num_steps else 1.0, trace=trace,
    )
    cert = adversary_ratio(potential, loss, model, trace, certificate=certificate)
    failures = []
    if abs(cert.ratio - 1.0) > 1e-8:
        failures.append({"check": "adversary_ratio", "value": cert.ratio, "tolerance": 1e-8})
    report = {
        "scenario": "adversary",
        "ratio": cert.ratio,
        "verdict": cert.verdict,
        "adversary_branch": cert.adversary,
        "num_steps": trace.num_steps,
        "failures": failures,
    }
    if out:
        _write_run_artifacts(out, cfg, trace, report)
        cert.to_json(Path(out) / "minimax.json")
    return trace, cert, report


def run_project(cfg: ExperimentConfig, out=None):
    """Oracle projection of the configured init onto the interpolation set."""
    potential, loss, model, dataset, schedule, run_kwargs, w0 = materialize(cfg)
    if not isinstance(model, LinearModel):
        raise ConfigError("projection oracle applies to linear interpolation sets")
    result = bregman_project(potential, dataset.inputs, dataset.labels, w0)
    failures = []
    if not result.converged:
        failures.append({"check": "projection_converged", "value": result.residual_inf})
    report = {
        "scenario": "project",
        "converged": result.converged,
        "iterations": result.iterations,
        "residual_inf": result.residual_inf,
        "kkt_residual_inf": result.kkt_residual_inf,
        "failures": failures,
    }
    if out:
        out = Path(out)
        out.mkdir(parents=True, exist_ok=True)
        result.to_json(out / "projection.json")
        report["config_hash"] = cfg.hash()
        io.write_json(report, out / "report.json")
        io.write_manifest(
            out / "manifest.json",
            config_hash=cfg.hash(),
            config_text=cfg.to_text(),
            seeds={"experiment": cfg.get("experiment", "seed", 0)},
        )
    return result, report


# ---------------------------------------------------------------------------
# sparse-recovery demo

def _support(w, threshold: float) -> np.ndarray:
    return np.abs(np.asarray(w)) > threshold


def run_cs_demo(cfg: ExperimentConfig, out=None):
    """The under-determined sparse-recovery experiment across seeds."""
    data = cfg["data"]
    n, m, k = int(data["n"]), int(data["m"]), int(data["k"])
    num_seeds = int(cfg.get("experiment", "num_seeds", 10))
    base_seed = int(cfg.get("experiment", "seed", 0))
    threshold = float(cfg.get("experiment", "support_threshold", 1e-3))
    rel_tol = float(cfg.get("experiment", "rel_error_tol", 1e-2))
    budget = float(cfg.get("experiment", "time_budget_s", 60.0))
    potential = build_potential(cfg)
    loss = build_loss(cfg)
    schedule = build_schedule(cfg)
    run_cfg = cfg["run"]

    per_seed = []
    for i in range(num_seeds):
        seed = base_seed + i
        ds = generate_cs_instance(n, m, k, seed)
        model = LinearModel(m)
        w0 = resolve_init(run_cfg.get("init", "near_zero"), potential, m, seed + 7919)
        t0 = time.perf_counter()
        trace = run(
            potential, loss, model, ds, schedule,
            w0=w0,
            order=run_cfg.get("order", "cyclic"),
            seed=seed,
            max_steps=int(run_cfg.get("max_steps", 200000)),
            residual_tol=run_cfg.get("residual_tol", 1e-10),
            snapshot_every=int(run_cfg.get("snapshot_every", 500)),
            kernel=run_cfg.get("kernel", "auto"),
        )
        wall = time.perf_counter() - t0
        w_final = trace.w_final
        true_support = _support(ds.w_true, 0.0)
        support_exact = bool(np.array_equal(_support(w_final, threshold), true_support))
        scale = max(float(np.linalg.norm(ds.w_true)), 1e-300)
        rel_error = float(np.linalg.norm(w_final - ds.w_true) / scale)
        recovery_step = None
        for r, step in enumerate(trace.snapshot_steps):
            ok_support = np.array_equal(_support(trace.snapshots[r], threshold), true_support)
            if ok_support and trace.rel_error[r] <= rel_tol:
                recovery_step = int(step)
                break
        success = support_exact and rel_error <= rel_tol and wall <= budget
        entry = {
            "seed": seed,
            "num_steps": trace.num_steps,
            "termination": trace.termination,
            "kernel_used": trace.kernel_used,
            "rel_error": rel_error,
            "support_exact": support_exact,
            "recovery_step": recovery_step,
            "wall_time_s": wall,
            "success": success,
        }
        per_seed.append(entry)
        if out:
            seed_cfg = cfg.copy()
            seed_cfg.set("experiment", "seed", seed)
            _write_run_artifacts(Path(out) / f"seed_{seed:03d}", seed_cfg, trace, entry)

    num_success = sum(1 for e in per_seed if e["success"])
    report = {
        "scenario": "cs_demo",
        "n": n,
        "m": m,
        "k": k,
        "eta": cfg.get("schedule", "eta"),
        "q": cfg.get("potential", "q"),
        "support_threshold": threshold,
        "rel_error_tol": rel_tol,
        "iteration_ceiling": int(run_cfg.get("max_steps", 200000)),
        "iteration_ceiling_note": "recovery typically lands well before the ceiling; "
                                  "the ceiling is deliberate slack",
        "num_seeds": num_seeds,
        "num_success": num_success,
        "per_seed": per_seed,
        "failures": []
        if num_success >= min(9, num_seeds)
        else [{"check": "cs_recovery", "value": num_success, "required": min(9, num_seeds)}],
    }
    if out:
        out = Path(out)
        out.mkdir(parents=True, exist_ok=True)
        report["config_hash"] = cfg.hash()
        io.write_json(report, out / "report.json")
        io.write_manifest(out / "manifest.json", config_hash=cfg.hash(),
                          config_text=cfg.to_text(),
                          seeds={"base": base_seed, "num_seeds": num_seeds})
    return report


# ---------------------------------------------------------------------------
# implicit-regularization sweep

def run_implicit_reg_sweep(cfg: ExperimentConfig, out=None):
    """Converged runs across potentials/inits against the projection oracles."""
    data = cfg["data"]
    n, m = int(data["n"]), int(data["m"])
    seed = int(cfg.get("experiment", "seed", 0))
    tol_l2 = float(cfg.get("experiment", "tol_l2", 1e-6))
    tol_general = float(cfg.get("experiment", "tol_general", 1e-4))
    max_steps = int(cfg.get("run", "max_steps", 400000))
    ds = generate_gaussian_linear(n, m, seed, positive_truth=True)
    model = LinearModel(m)
    rows = []

    def add_row(name, potential, schedule, w0, oracle_w, tol, certification):
        trace = run(
            potential, SquareLossSingleton, model, ds, schedule,
            w0=w0, max_steps=max_steps, residual_tol=1e-9,
            snapshot_every=max(1, max_steps // 200),
        )
        converged = trace.termination == "residual_tol"
        scale = max(float(np.linalg.norm(oracle_w)), 1e-300)
        rel = float(np.linalg.norm(trace.w_final - oracle_w) / scale)
        rows.append(
            {
                "potential": name,
                "init": "explicit",
                "converged": converged,
                "num_steps": trace.num_steps,
                "rel_error_vs_oracle": rel,
                "tolerance": tol,
                "certification": certification,
                "pass": bool(converged and rel <= tol),
            }
        )

    SquareLossSingleton = make_loss("square")

    # identity-map geometry from zero: the oracle is the pseudoinverse solution
    pot = make_potential("squared_l2")
    add_row(
        "squared_l2",
        pot,
        ConstantStep(certified_constant_eta(pot, ds)),
        np.zeros(m),
        min_l2_solution(ds.inputs, ds.labels),
        tol_l2,
        "closed_form",
    )

    # squared q-norm from a random start, residual-adaptive steps
    pot = make_potential("qnorm_squared", q=1.5)
    w0 = np.random.default_rng(seed + 11).standard_normal(m)
    proj = bregman_project(pot, ds.inputs, ds.labels, w0)
    add_row(
        "qnorm_squared(q=1.5)",
        pot,
        AdaptiveStep(c=0.5),
        w0,
        proj.w_star,
        tol_general,
        "adaptive_rule",
    )

    # componentwise q-norm from a near-zero start
    pot = make_potential("qnorm_componentwise", q=1.5)
    w0 = resolve_init("near_zero", pot, m, seed + 13)
    proj = bregman_project(pot, ds.inputs, ds.labels, w0)
    add_row(
        "qnorm_componentwise(q=1.5)",
        pot,
        ConstantStep(certified_constant_eta(pot, ds, factor=0.25)),
        w0,
        proj.w_star,
        tol_general,
        "sampled",
    )

    # entropy from the potential minimizer: the limit is the min-potential interpolant
    pot = make_potential("negative_entropy")
    w0 = pot.minimizer(m)
    proj = bregman_project(pot, ds.inputs, ds.labels, w0)
    add_row(
        "negative_entropy",
        pot,
        ConstantStep(certified_constant_eta(pot, ds, factor=0.15)),
        w0,
        proj.w_star,
        tol_general,
        "sampled",
    )

    report = {
        "scenario": "implicit_reg_sweep",
        "n": n,
        "m": m,
        "rows": rows,
        "failures": [
            {"check": "sweep_cell", "potential": r["potential"], "value": r["rel_error_vs_oracle"]}
            for r in rows
            if not r["pass"]
        ],
    }
    if out:
        out = Path(out)
        out.mkdir(parents=True, exist_ok=True)
        report["config_hash"] = cfg.hash()
        io.write_json(report, out / "report.json")
        io.write_manifest(out / "manifest.json", config_hash=cfg.hash(),
                          config_text=cfg.to_text(), seeds={"experiment": seed})
    return report


# ---------------------------------------------------------------------------
# highly over-parameterized nonlinear exploration

def penalized_interpolant(potential, model, dataset, w0, *, rho_ladder=(1e2, 1e4, 1e6, 1e8)):
    """Approximate divergence projection onto a nonlinear interpolation set.

    Minimizes D(w, w0) + rho * sum residual^2 for increasing rho with warm
    starts (labeled approximate: this is a penalty method, not a certificate).
    """
    theta0 = potential.grad(w0)
    n = dataset.n

    def objective(w, rho):
        resid = np.array(
            [dataset.labels[i] - model.predict(dataset.inputs[i], w) for i in range(n)]
        )
        val = potential.bregman(w, w0) + rho * float(resid @ resid)
        grad = potential.grad(w) - theta0
        for i in range(n):
            grad -= 2.0 * rho * resid[i] * model.param_gradient(dataset.inputs[i], w)
        return val, grad

    w = np.array(w0, dtype=float)
    for rho in rho_ladder:
        res = minimize(objective, w, args=(rho,), jac=True, method="L-BFGS-B",
                       options={"maxiter": 2000, "ftol": 1e-14, "gtol": 1e-12})
        w = res.x
    return w


def run_nonlinear_local(cfg: ExperimentConfig, out=None):
    """Contraction toward the projected point, and the distance-to-set scaling table."""
    data = cfg["data"]
    n = int(data["n"])
    m = int(data["m"])
    num_features = int(data.get("num_features", 4))
    num_seeds = int(cfg.get("experiment", "num_seeds", 10))
    base_seed = int(cfg.get("experiment", "seed", 0))
    m_grid = [int(v) for v in cfg.get("experiment", "m_grid", [2 * n, 5 * n, 10 * n, 20 * n])]
    max_steps = int(cfg.get("run", "max_steps", 100000))
    potential = build_potential(cfg)
    loss = build_loss(cfg)

    contraction = []
    for i in range(num_seeds):
        seed = base_seed + 1000 + i
        ds, model = generate_random_feature_dataset(n, m, num_features, seed, w_scale=0.5)
        rng = np.random.default_rng(seed + 1)
        w0 = 0.5 * rng.standard_normal(m)
        w_star = penalized_interpolant(potential, model, ds, w0)
        eta = float(cfg.get("schedule", "eta", 0.0))
        if eta <= 0:
            g2 = max(
                float(np.sum(model.param_gradient(ds.inputs[j], w0) ** 2)) for j in range(n)
            )
            eta = 0.5 / max(g2, 1e-12)
        trace = run(
            potential, loss, model, ds, ConstantStep(eta),
            w0=w0, max_steps=max_steps, residual_tol=1e-9,
            snapshot_every=max(1, max_steps // 100),
        )
        denom = float(np.linalg.norm(w0 - w_star))
        ratio = float(np.linalg.norm(trace.w_final - w_star)) / max(denom, 1e-300)
        contraction.append(
            {
                "seed": seed,
                "converged": trace.termination == "residual_tol",
                "contraction_ratio": ratio,
                "initial_distance": denom,
                "num_steps": trace.num_steps,
            }
        )

    scaling = []
    for m_val in m_grid:
        dist2 = []
        for i in range(num_seeds):
            seed = base_seed + 2000 + i
            ds, model = generate_random_feature_dataset(n, m_val, num_features, seed, w_scale=0.5)
            rng = np.random.default_rng(seed + 1)
            w0 = 0.5 * rng.standard_normal(m_val)
            w_star = penalized_interpolant(potential, model, ds, w0)
            dist2.append(float(np.sum((w_star - w0) ** 2)))
        scaling.append({"m": m_val, "median_dist2": float(np.median(dist2))})
    medians = [row["median_dist2"] for row in scaling]
    monotone = all(medians[i + 1] < medians[i] for i in range(len(medians) - 1))

    num_contracted = sum(1 for c in contraction if c["contraction_ratio"] < 1.0)
    report = {
        "scenario": "nonlinear_local",
        "note": "projection is penalty-approximated; criteria are qualitative",
        "n": n,
        "m": m,
        "contraction": contraction,
        "num_contracted": num_contracted,
        "num_seeds": num_seeds,
        "scaling": scaling,
        "scaling_monotone": monotone,
        "failures": [],
    }
    if num_contracted < min(8, num_seeds):
        report["failures"].append(
            {"check": "contraction", "value": num_contracted, "required": min(8, num_seeds)}
        )
    if not monotone:
        report["failures"].append({"check": "scaling_monotone", "value": medians})
    if out:
        out = Path(out)
        out.mkdir(parents=True, exist_ok=True)
        report["config_hash"] = cfg.hash()
        io.write_json(report, out / "report.json")
        io.write_manifest(out / "manifest.json", config_hash=cfg.hash(),
                          config_text=cfg.to_text(), seeds={"base": base_seed})
    return report


# ---------------------------------------------------------------------------
# identity fuzzing

def _fuzz_trial_spec(trial: int, master_seed: int):
    rng = np.random.default_rng([master_seed, trial])
    pot_kind = POTENTIAL_CYCLE[trial % len(POTENTIAL_CYCLE)]
    loss_kind = LOSS_CYCLE[trial % len(LOSS_CYCLE)]
    model_kind = MODEL_CYCLE[trial % len(MODEL_CYCLE)]
    sched_kind = SCHEDULE_CYCLE[(trial // 3) % len(SCHEDULE_CYCLE)]
    n = int(rng.integers(3, 7))
    if model_kind == "linear":
        m = int(rng.integers(n + 2, 13))
        model = make_model("linear", dim=m)
    elif model_kind == "random_feature":
        m = int(rng.integers(6, 11))
        model = make_model("random_feature", num_features=3, param_dim=m,
                           seed=int(rng.integers(0, 2**31)))
    else:
        d = int(rng.integers(2, 5))
        model = make_model("shallow_smooth", hidden=2, input_dim=d)
        m = model.param_dim

    if pot_kind == "quadratic_q":
        A = rng.standard_normal((m, m)) / np.sqrt(m)
        potential = make_potential("quadratic_q", Q=A @ A.T + np.eye(m))
    elif pot_kind in ("qnorm_componentwise", "qnorm_squared"):
        potential = make_potential(pot_kind, q=float(rng.uniform(1.2, 2.0)))
    else:
        potential = make_potential(pot_kind)

    if loss_kind == "huber":
        loss = make_loss("huber", delta=float(rng.uniform(0.5, 2.0)))
    else:
        loss = make_loss(loss_kind)

    # data scaled so all model kinds see O(1) labels
    X = rng.standard_normal((n, model.input_dim))
    if model_kind == "linear":
        X /= np.sqrt(m)
    w_gen = rng.standard_normal(model.param_dim) * 0.8
    v = 0.3 * rng.standard_normal(n)
    y = np.array([model.predict(X[i], w_gen) for i in range(n)]) + v
    dataset = Dataset(inputs=X, labels=y, seed=trial, generator="fuzz")
    return rng, potential, loss, model, dataset, sched_kind


def run_identity_fuzz(cfg: ExperimentConfig, out=None):
    """Randomized identity / minimax audits over the whole catalog."""
    trials = int(cfg.get("experiment", "trials", 100))
    steps = int(cfg.get("experiment", "steps", 200))
    pairs = int(cfg.get("experiment", "minimax_pairs", 20))
    master_seed = int(cfg.get("experiment", "seed", 0))
    residual_tol = float(cfg.get("experiment", "residual_tol", 1e-9))

    results = []
    failures = []
    for trial in range(trials):
        rng, potential, loss, model, dataset, sched_kind = _fuzz_trial_spec(trial, master_seed)
        w0 = default_init(potential, model.param_dim)
        g2 = max(
            float(np.sum(model.param_gradient(dataset.inputs[i], w0) ** 2))
            for i in range(dataset.n)
        )
        base_eta = 0.25 * max(potential.alpha, 0.2) / max(g2, 1e-9)
        if sched_kind == "constant":
            schedule = ConstantStep(base_eta)
        elif sched_kind == "sequence":
            schedule = SequenceStep(base_eta * rng.uniform(0.5, 1.5, size=steps))
        else:
            alpha = potential.alpha if potential.alpha > 0 else 0.5
            schedule = AdaptiveStep(c=float(rng.uniform(0.3, 0.8)), alpha=alpha)

        trace = run(
            potential, loss, model, dataset, schedule,
            w0=w0, max_steps=steps, residual_tol=None, snapshot_every=1,
        )
        eta_max = float(trace.eta.max())
        certificate = certify_step_size(
            potential, loss, model, dataset, eta_max, num_points=16,
            seed=master_seed + trial, trace=trace,
        )

        if potential.kind == "negative_entropy":
            w_ref = rng.uniform(0.2, 2.0, size=model.param_dim)
        else:
            w_ref = rng.standard_normal(model.param_dim)
        v_ref = consistent_noise(trace, w_ref)
        report = telescoped_identity(potential, loss, model, trace, w_ref, v_ref)

        entry = {
            "trial": trial,
            "potential": potential.kind,
            "loss": loss.kind,
            "model": model.kind,
            "schedule": sched_kind,
            "eta_max": eta_max,
            "certified": certificate.accepted,
            "certificate_status": certificate.status,
            "max_step_residual": report.max_step_residual,
            "telescoped_residual": report.telescoped_residual,
            "min_excess": report.min_excess,
        }
        if report.max_step_residual > residual_tol or report.telescoped_residual > residual_tol:
            failures.append({"check": "identity", "trial": trial,
                             "value": max(report.max_step_residual, report.telescoped_residual)})

        if certificate.accepted:
            if report.min_excess < -1e-12:
                failures.append({"check": "excess_nonnegative", "trial": trial,
                                 "value": report.min_excess})
            max_ratio = -math.inf
            for _ in range(pairs):
                if potential.kind == "negative_entropy":
                    w_pair = rng.uniform(0.2, 2.0, size=model.param_dim)
                else:
                    w_pair = rng.standard_normal(model.param_dim)
                v_pair = consistent_noise(trace, w_pair)
                cert = minimax_ratio(potential, loss, model, trace, w_pair, v_pair,
                                     certificate=certificate)
                max_ratio = max(max_ratio, cert.ratio)
                if cert.verdict == "violated":
                    failures.append({"check": "minimax_ratio", "trial": trial,
                                     "value": cert.ratio})
            entry["max_minimax_ratio"] = max_ratio
            adv = adversary_ratio(potential, loss, model, trace, certificate=certificate)
            entry["adversary_ratio"] = adv.ratio
            if abs(adv.ratio - 1.0) > 1e-8:
                failures.append({"check": "adversary_ratio", "trial": trial,
                                 "value": adv.ratio})
        results.append(entry)

    certified = sum(1 for r in results if r["certified"])
    report = {
        "scenario": "identity_fuzz",
        "trials": trials,
        "steps": steps,
        "num_certified": certified,
        "max_step_residual": max(r["max_step_residual"] for r in results),
        "max_telescoped_residual": max(r["telescoped_residual"] for r in results),
        "results": results,
        "failures": failures,
    }
    if out:
        out = Path(out)
        out.mkdir(parents=True, exist_ok=True)
        report["config_hash"] = cfg.hash()
        io.write_json(report, out / "report.json")
        io.write_manifest(out / "manifest.json", config_hash=cfg.hash(),
                          config_text=cfg.to_text(), seeds={"master": master_seed})
    return report
