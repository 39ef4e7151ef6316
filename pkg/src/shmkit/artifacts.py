"""On-disk artifact formats and the fingerprint chain between them.

Every stage writes deterministic files: floats are serialized with their
shortest round-trip representation, JSON keys are sorted, and no timestamps
enter primary artifacts.  Downstream stages store the SHA-256 of their
upstream files so a mismatched basis/model/ensemble is refused at load
time.

Formats:

* basis.json      {k, p, rows, cols, v_r (row-major), singular_values,
                   norm_min, norm_max}
* dataset.json + frames.csv   one directory per dataset; the CSV holds
                   phase, 12 gauge columns and rows*cols field columns
* model.json      {architecture, theta, log_var, seed, training, basis_fingerprint}
* ensemble.bin    little-endian header (magic, version, M, D) + M*D float32,
                   with a JSON diagnostics sidecar
"""

from __future__ import annotations

import csv
import hashlib
import json
import struct
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .errors import DataError
from .fields import PcaBasis
from .network import BnnParams, NetArchitecture
from .synthetic import GaugeLayout, NoiseConfig, SpecimenSpec, SyntheticDataset

ENSEMBLE_MAGIC = b"SHME"
ENSEMBLE_VERSION = 1


def write_json(path, obj, pretty=False):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    text = json.dumps(obj, sort_keys=True, indent=2 if pretty else None,
                      separators=None if pretty else (",", ":"))
    path.write_text(text + "\n")


def read_json(path):
    path = Path(path)
    if not path.exists():
        raise DataError(f"missing file: {path}")
    return json.loads(path.read_text())


def file_fingerprint(path):
    """SHA-256 hex digest of a file's bytes."""
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def save_basis(basis, path):
    write_json(path, {
        "k": basis.k,
        "p": basis.p,
        "rows": basis.rows,
        "cols": basis.cols,
        "v_r": [float(v) for v in basis.v_r.reshape(-1)],
        "singular_values": [float(s) for s in basis.singular_values],
        "norm_min": [float(v) for v in basis.norm_min],
        "norm_max": [float(v) for v in basis.norm_max],
    })


def load_basis(path):
    doc = read_json(path)
    try:
        return PcaBasis(
            k=doc["k"],
            p=doc["p"],
            rows=doc["rows"],
            cols=doc["cols"],
            v_r=np.array(doc["v_r"], dtype=float).reshape(doc["p"], doc["k"]),
            singular_values=np.array(doc["singular_values"], dtype=float),
            norm_min=np.array(doc["norm_min"], dtype=float),
            norm_max=np.array(doc["norm_max"], dtype=float),
        )
    except (KeyError, ValueError) as e:
        raise DataError(f"invalid basis file {path}: {e}") from e


def save_dataset(ds, directory, role):
    """Write dataset.json + frames.csv into ``directory``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    meta = {
        "dataset_id": ds.dataset_id,
        "label": ds.spec.label,
        "role": role,
        "seed": ds.seed,
        "n_frames": ds.n_frames,
        "samples_per_cycle": ds.samples_per_cycle,
        "rest_fraction": ds.rest_fraction,
        "spec": asdict(ds.spec),
        "noise": asdict(ds.noise),
        "layout": [[float(r), float(c)] for r, c in ds.layout.positions],
    }
    write_json(directory / "dataset.json", meta, pretty=True)
    p = ds.fields.shape[1]
    header = ["phase"] + [f"g{i:02d}" for i in range(12)] + [f"c{i:03d}" for i in range(p)]
    with open(directory / "frames.csv", "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(header)
        for i in range(ds.n_frames):
            row = [repr(float(ds.phases[i]))]
            row += [repr(float(v)) for v in ds.gauges[i]]
            row += [repr(float(v)) for v in ds.fields[i]]
            writer.writerow(row)


def load_dataset(directory):
    """Read a dataset directory back into a :class:`SyntheticDataset`."""
    directory = Path(directory)
    meta = read_json(directory / "dataset.json")
    frames = directory / "frames.csv"
    if not frames.exists():
        raise DataError(f"missing file: {frames}")
    data = np.loadtxt(frames, delimiter=",", skiprows=1, ndmin=2)
    spec_doc = dict(meta["spec"])
    spec_doc["outer_pins"] = tuple(spec_doc["outer_pins"])
    spec_doc["inner_pins"] = tuple(spec_doc["inner_pins"])
    spec = SpecimenSpec(**spec_doc)
    expected = 1 + 12 + spec.rows * spec.cols
    if data.shape[1] != expected:
        raise DataError(f"{frames}: expected {expected} columns, found {data.shape[1]}")
    ds = SyntheticDataset(
        spec=spec,
        layout=GaugeLayout(np.array(meta["layout"], dtype=float)),
        noise=NoiseConfig(**meta["noise"]),
        seed=meta["seed"],
        phases=data[:, 0],
        gauges=data[:, 1:13],
        fields=data[:, 13:],
        samples_per_cycle=meta["samples_per_cycle"],
        rest_fraction=meta["rest_fraction"],
        dataset_id=meta["dataset_id"],
    )
    return ds, meta


def save_model(path, arch, params, *, seed, training, basis_fingerprint):
    write_json(path, {
        "architecture": {
            "input_dim": arch.input_dim,
            "hidden": list(arch.hidden),
            "output_dim": arch.output_dim,
            "activation": "tanh",
        },
        "theta": [float(v) for v in params.theta],
        "log_var": [float(v) for v in params.log_var],
        "sigma_hat": [float(v) for v in np.exp(0.5 * params.log_var)],
        "seed": seed,
        "training": training,
        "basis_fingerprint": basis_fingerprint,
    })


def load_model(path):
    doc = read_json(path)
    try:
        arch = NetArchitecture(
            input_dim=doc["architecture"]["input_dim"],
            hidden=tuple(doc["architecture"]["hidden"]),
            output_dim=doc["architecture"]["output_dim"],
        )
        params = BnnParams(
            theta=np.array(doc["theta"], dtype=float),
            log_var=np.array(doc["log_var"], dtype=float),
        )
    except (KeyError, ValueError) as e:
        raise DataError(f"invalid model file {path}: {e}") from e
    if params.theta.size != arch.n_params:
        raise DataError(f"{path}: theta has {params.theta.size} entries, "
                        f"architecture needs {arch.n_params}")
    return arch, params, doc


def save_ensemble(path, ensemble, sidecar):
    """Binary sample matrix plus a JSON diagnostics sidecar at <path>.json."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    samples = np.ascontiguousarray(ensemble.samples, dtype="<f4")
    m, d = samples.shape
    with open(path, "wb") as f:
        f.write(ENSEMBLE_MAGIC)
        f.write(struct.pack("<III", ENSEMBLE_VERSION, m, d))
        f.write(samples.tobytes())
    write_json(path.with_suffix(path.suffix + ".json"), {
        "n_samples": m,
        "dim": d,
        "accept_rate": ensemble.accept_rate,
        "burn_in_accept_rate": None if np.isnan(ensemble.burn_in_accept_rate)
                               else ensemble.burn_in_accept_rate,
        "step_size_final": ensemble.step_size_final,
        "divergences": ensemble.divergences,
        "seed": ensemble.seed,
        "energy": {
            "first": float(ensemble.energy_trace[0]),
            "last": float(ensemble.energy_trace[-1]),
            "min": float(ensemble.energy_trace.min()),
            "max": float(ensemble.energy_trace.max()),
            "mean": float(ensemble.energy_trace.mean()),
        },
        **sidecar,
    }, pretty=True)


def load_ensemble(path):
    """Returns (samples float32 (M, D), sidecar dict)."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"missing file: {path}")
    with open(path, "rb") as f:
        magic = f.read(4)
        if magic != ENSEMBLE_MAGIC:
            raise DataError(f"{path}: not an ensemble file")
        version, m, d = struct.unpack("<III", f.read(12))
        if version != ENSEMBLE_VERSION:
            raise DataError(f"{path}: unsupported version {version}")
        data = np.frombuffer(f.read(m * d * 4), dtype="<f4")
    if data.size != m * d:
        raise DataError(f"{path}: truncated sample block")
    sidecar = read_json(path.with_suffix(path.suffix + ".json"))
    return data.reshape(m, d), sidecar


def write_field_csv(path, grid):
    """One CSV row per grid row; plain numbers, no header."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    grid = np.asarray(grid, dtype=float)
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        for row in grid:
            writer.writerow([repr(float(v)) for v in row])


def write_loss_csv(path, train_loss, val_loss):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["epoch", "train_loss", "val_loss"])
        for i, tl in enumerate(train_loss):
            vl = repr(float(val_loss[i])) if i < len(val_loss) else ""
            writer.writerow([i, repr(float(tl)), vl])
