"""Run-artifact serialization: trace.csv, identity.csv, manifest.json, report.json.

Numeric cells use repr (shortest round-trip), so re-running a config writes
bit-identical numeric columns.  Every file sits next to a manifest carrying
the config hash and seeds; CSVs additionally embed the hash in a leading
comment line (readers skip lines starting with '#').
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .engine import RunTrace

TRACE_COLUMNS = (
    "step",
    "sample_index",
    "eta",
    "innovation",
    "prediction_error",
    "max_residual",
    "train_loss",
    "rel_error",
    "identity_residual",
)


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    v = float(value)
    if np.isnan(v):
        return ""
    return repr(v)


def write_trace_csv(trace: RunTrace, path, *, config_hash: str = "") -> None:
    """One row per recorded snapshot step (per step for fully recorded traces)."""
    path = Path(path)
    e_p = trace.prediction_errors()
    ident = trace.identity_residuals
    rel = trace.rel_error
    rows = []
    for r, step in enumerate(trace.snapshot_steps):
        step = int(step)
        if step == 0:
            sample, eta, e, ep_v, ires = None, None, None, None, None
        else:
            sample = int(trace.sample_indices[step - 1])
            eta = trace.eta[step - 1]
            e = trace.innovations[step - 1]
            ep_v = None if e_p is None else e_p[step - 1]
            ires = None if ident is None else ident[step - 1]
        rows.append(
            (
                step,
                sample,
                eta,
                e,
                ep_v,
                trace.max_residual[r],
                trace.train_loss[r],
                None if rel is None else rel[r],
                ires,
            )
        )
    with path.open("w") as fh:
        if config_hash:
            fh.write(f"# config_hash={config_hash}\n")
        fh.write(",".join(TRACE_COLUMNS) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def read_csv(path) -> dict:
    """Read one of our CSVs into {column: list-of-float-or-None}; '#' lines skipped."""
    path = Path(path)
    lines = [ln for ln in path.read_text().splitlines() if ln and not ln.startswith("#")]
    header = lines[0].split(",")
    out = {h: [] for h in header}
    for line in lines[1:]:
        for h, cell in zip(header, line.split(",")):
            out[h].append(float(cell) if cell else None)
    return out


def write_identity_csv(report, trace: RunTrace, path, *, config_hash: str = "") -> None:
    path = Path(path)
    with path.open("w") as fh:
        if config_hash:
            fh.write(f"# config_hash={config_hash}\n")
        fh.write("step,sample_index,eta,step_residual,excess,loss_bregman_ref\n")
        for i in range(report.num_steps):
            cells = (
                str(i + 1),
                str(int(trace.sample_indices[i])),
                _fmt(trace.eta[i]),
                _fmt(report.per_step_residuals[i]),
                _fmt(report.excess[i]),
                _fmt(report.loss_bregman_ref[i]),
            )
            fh.write(",".join(cells) + "\n")


def _jsonable(value):
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, (np.floating, np.integer)):
        return value.item()
    if isinstance(value, dict):
        return {k: _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    return value


def write_json(payload: dict, path) -> None:
    Path(path).write_text(json.dumps(_jsonable(payload), indent=2, sort_keys=True) + "\n")


def write_manifest(path, *, config_hash: str, config_text: str, seeds: dict,
                   trace: RunTrace | None = None, extra: dict | None = None) -> None:
    payload = {
        "config_hash": config_hash,
        "config_text": config_text,
        "seeds": seeds,
    }
    if trace is not None:
        payload.update(
            {
                "termination": trace.termination,
                "num_steps": trace.num_steps,
                "kernel_used": trace.kernel_used,
                "final_w": trace.w_final,
            }
        )
    if extra:
        payload.update(extra)
    write_json(payload, path)
