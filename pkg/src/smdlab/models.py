"""Prediction models f(x, w), their parameter gradients, and datasets.

The data model throughout is y_i = f(x_i, w) + v_i with scalar labels.  The
nonlinear catalog is tanh-based so that every model is smooth (the local
convergence arguments need differentiability).
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


class Model:
    kind: str = ""
    param_dim: int = 0
    input_dim: int = 0

    def predict(self, x, w) -> float:
        raise NotImplementedError

    def param_gradient(self, x, w) -> np.ndarray:
        raise NotImplementedError

    def param_hessian(self, x, w) -> np.ndarray:
        """Hessian in w of f(x, w); zero for linear models."""
        raise NotImplementedError

    def _check(self, x, w):
        x = np.asarray(x, dtype=float)
        w = np.asarray(w, dtype=float)
        if x.shape != (self.input_dim,):
            raise ValueError(f"expected input of shape ({self.input_dim},), got {x.shape}")
        if w.shape != (self.param_dim,):
            raise ValueError(f"expected parameters of shape ({self.param_dim},), got {w.shape}")
        return x, w

    def spec(self) -> dict:
        return {"kind": self.kind, "param_dim": self.param_dim}


class LinearModel(Model):
    """f(x, w) = x^T w."""

    kind = "linear"

    def __init__(self, dim: int):
        self.param_dim = int(dim)
        self.input_dim = int(dim)

    def predict(self, x, w):
        x, w = self._check(x, w)
        return float(x @ w)

    def param_gradient(self, x, w):
        x, w = self._check(x, w)
        return x.copy()

    def param_hessian(self, x, w):
        return np.zeros((self.param_dim, self.param_dim))


class RandomFeatureModel(Model):
    """f(x, w) = a^T tanh(B w) where B is the input x reshaped to (k, m).

    The mixing vector a is fixed at construction; each sample carries its own
    feature matrix, so the input dimension is k*m.
    """

    kind = "random_feature"

    def __init__(self, num_features: int, param_dim: int, seed: int = 0):
        self.num_features = int(num_features)
        self.param_dim = int(param_dim)
        self.input_dim = self.num_features * self.param_dim
        rng = np.random.default_rng(seed)
        self.a = rng.standard_normal(self.num_features) / np.sqrt(self.num_features)
        self.seed = int(seed)

    def _features(self, x):
        return x.reshape(self.num_features, self.param_dim)

    def predict(self, x, w):
        x, w = self._check(x, w)
        return float(self.a @ np.tanh(self._features(x) @ w))

    def param_gradient(self, x, w):
        x, w = self._check(x, w)
        B = self._features(x)
        z = B @ w
        sech2 = 1.0 / np.cosh(z) ** 2
        return B.T @ (self.a * sech2)

    def param_hessian(self, x, w):
        x, w = self._check(x, w)
        B = self._features(x)
        z = B @ w
        t = np.tanh(z)
        coef = self.a * (-2.0) * t * (1.0 - t * t)  # a_k * (tanh)''(z_k)
        return (B.T * coef) @ B

    def spec(self):
        return {
            "kind": self.kind,
            "param_dim": self.param_dim,
            "num_features": self.num_features,
            "seed": self.seed,
        }


class ShallowSmoothModel(Model):
    """f(x, w) = sum_j c_j tanh(x^T u_j) with w = concat(c, vec(U))."""

    kind = "shallow_smooth"

    def __init__(self, hidden: int, input_dim: int):
        self.hidden = int(hidden)
        self.input_dim = int(input_dim)
        self.param_dim = self.hidden + self.hidden * self.input_dim

    def _split(self, w):
        c = w[: self.hidden]
        U = w[self.hidden :].reshape(self.hidden, self.input_dim)
        return c, U

    def predict(self, x, w):
        x, w = self._check(x, w)
        c, U = self._split(w)
        return float(c @ np.tanh(U @ x))

    def param_gradient(self, x, w):
        x, w = self._check(x, w)
        c, U = self._split(w)
        z = U @ x
        t = np.tanh(z)
        sech2 = 1.0 - t * t
        grad_c = t
        grad_U = (c * sech2)[:, None] * x[None, :]
        return np.concatenate([grad_c, grad_U.reshape(-1)])

    def param_hessian(self, x, w):
        x, w = self._check(x, w)
        c, U = self._split(w)
        h, d = self.hidden, self.input_dim
        z = U @ x
        t = np.tanh(z)
        sech2 = 1.0 - t * t
        H = np.zeros((self.param_dim, self.param_dim))
        for j in range(h):
            rows = slice(h + j * d, h + (j + 1) * d)
            # d2f / dc_j du_j and the symmetric block
            H[j, rows] = sech2[j] * x
            H[rows, j] = sech2[j] * x
            # d2f / du_j du_j^T
            H[rows, rows] = c[j] * (-2.0) * t[j] * sech2[j] * np.outer(x, x)
        return H

    def spec(self):
        return {
            "kind": self.kind,
            "param_dim": self.param_dim,
            "hidden": self.hidden,
            "input_dim": self.input_dim,
        }


def make_model(kind: str, **kwargs) -> Model:
    if kind == "linear":
        return LinearModel(kwargs["dim"])
    if kind == "random_feature":
        return RandomFeatureModel(
            kwargs["num_features"], kwargs["param_dim"], kwargs.get("seed", 0)
        )
    if kind == "shallow_smooth":
        return ShallowSmoothModel(kwargs["hidden"], kwargs["input_dim"])
    raise ValueError(f"unknown model kind {kind!r}")


@dataclass
class Dataset:
    """Inputs, scalar labels, and the optional generating ground truth."""

    inputs: np.ndarray  # (n, d)
    labels: np.ndarray  # (n,)
    w_true: np.ndarray | None = None
    noise: np.ndarray | None = None
    seed: int | None = None
    generator: str = ""
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        self.inputs = np.atleast_2d(np.asarray(self.inputs, dtype=float))
        self.labels = np.asarray(self.labels, dtype=float).reshape(-1)
        if self.inputs.shape[0] != self.labels.shape[0]:
            raise ValueError("inputs and labels disagree on the number of samples")
        if self.w_true is not None:
            self.w_true = np.asarray(self.w_true, dtype=float)
        if self.noise is not None:
            self.noise = np.asarray(self.noise, dtype=float).reshape(-1)
            if self.noise.shape != self.labels.shape:
                raise ValueError("noise record must have one entry per sample")

    @property
    def n(self) -> int:
        return self.labels.shape[0]

    @property
    def d(self) -> int:
        return self.inputs.shape[1]

    def to_csv(self, path):
        """One row per sample (x entries then y), plus a JSON sidecar."""
        path = Path(path)
        with path.open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow([f"x{j}" for j in range(self.d)] + ["y"])
            for i in range(self.n):
                writer.writerow([repr(v) for v in self.inputs[i]] + [repr(self.labels[i])])
        sidecar = {
            "seed": self.seed,
            "generator": self.generator,
            "w_true": None if self.w_true is None else self.w_true.tolist(),
            "noise": None if self.noise is None else self.noise.tolist(),
            "extra": self.extra,
        }
        path.with_suffix(path.suffix + ".json").write_text(
            json.dumps(sidecar, indent=2, sort_keys=True)
        )

    @classmethod
    def from_csv(cls, path) -> "Dataset":
        path = Path(path)
        with path.open(newline="") as fh:
            rows = list(csv.reader(fh))
        header, data = rows[0], rows[1:]
        if not header or header[-1] != "y":
            raise ValueError(f"{path}: expected a trailing 'y' column")
        values = np.array([[float(v) for v in row] for row in data]) if data else np.zeros((0, len(header)))
        inputs = values[:, :-1]
        labels = values[:, -1] if data else np.zeros(0)
        sidecar_path = path.with_suffix(path.suffix + ".json")
        kwargs = {}
        if sidecar_path.exists():
            sidecar = json.loads(sidecar_path.read_text())
            kwargs = {
                "seed": sidecar.get("seed"),
                "generator": sidecar.get("generator", ""),
                "w_true": sidecar.get("w_true"),
                "noise": sidecar.get("noise"),
                "extra": sidecar.get("extra", {}),
            }
            if kwargs["w_true"] is not None:
                kwargs["w_true"] = np.asarray(kwargs["w_true"], dtype=float)
            if kwargs["noise"] is not None:
                kwargs["noise"] = np.asarray(kwargs["noise"], dtype=float)
        return cls(inputs=inputs, labels=labels, **kwargs)


def membership_residual(model: Model, dataset: Dataset, w) -> np.ndarray:
    """Residuals y_i - f(x_i, w); w interpolates iff their max magnitude is ~0."""
    w = np.asarray(w, dtype=float)
    return np.array(
        [dataset.labels[i] - model.predict(dataset.inputs[i], w) for i in range(dataset.n)]
    )


def validate_dataset(model: Model, dataset: Dataset, atol: float = 1e-12) -> None:
    """Check y_i = f(x_i, w_true) + v_i when both records are present."""
    if dataset.w_true is None or dataset.noise is None:
        return
    for i in range(dataset.n):
        lhs = dataset.labels[i]
        rhs = model.predict(dataset.inputs[i], dataset.w_true) + dataset.noise[i]
        if abs(lhs - rhs) > atol:
            raise ValueError(
                f"sample {i}: label {lhs!r} != model(w_true) + noise {rhs!r} (atol={atol})"
            )
