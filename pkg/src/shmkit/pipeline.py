"""End-to-end pipeline stages built on the library modules.

Each stage reads and writes artifacts under one output directory:

    data/<label>_<role>/   synthetic datasets (one per specimen and role)
    basis.json             reconstruction basis + cev_report.json sidecar
    model.json             pre-trained network + loss_curve.csv
    ensemble.bin(+.json)   posterior samples + diagnostics
    metrics.json           held-out evaluation + fields/*.csv
    study/                 data-size study outputs
    monitor/               static field + stream summary

Stages are deterministic for a fixed config: re-running produces
byte-identical primary artifacts.  Every config constant lives in the
dataclasses below, nowhere else.
"""

from __future__ import annotations

import json
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import artifacts
from .errors import ConfigError, DataError, NumericError
from .fields import (PcaBasis, cev, fit_pca, minmax_normalize, project,
                     reconstruct, smallest_k_for_cev)
from .hmc import HmcConfig, sample_posterior
from .network import (LikelihoodScales, NetArchitecture, PriorSpec,
                      make_potential, pretrain)
from .synthetic import (GaugeLayout, NoiseConfig, SpecimenSpec,
                        generate_dataset)
from .uncertainty import (EnsemblePredictor, aleatoric_field,
                          bicubic_upsample, epistemic_field, evaluate,
                          to_physical)


@dataclass(frozen=True)
class DataConfig:
    """Synthetic benchmark: one healthy plus seven cracked specimens."""

    crack_lengths_mm: tuple = (0.0, 1.0, 3.0, 5.0, 7.0, 9.0, 12.0, 15.0)
    # each specimen carries its crack at a different row of the grid
    crack_rows: tuple = (7.0, 5.5, 8.5, 6.0, 9.0, 5.0, 7.5, 6.5)
    train_frames: int = 1000
    test_frames: int = 200
    samples_per_cycle: int = 100
    rest_fraction: float = 0.15  # dwell at zero load between cycles
    base_seed: int = 7
    rows: int = 14
    cols: int = 12
    width_mm: float = 25.0
    # pins sit outside the imaged window so every grid row carries signal
    outer_pins: tuple = (-0.25, 1.25)
    inner_pins: tuple = (0.4, 0.6)
    max_displacement_mm: float = 20.0
    strain_per_mm: float = 60.0
    gauge_rows: tuple = (2.5, 6.0, 10.5)
    gauge_cols: tuple = (1.0, 4.0, 7.0, 10.0)
    noise: NoiseConfig = field(default_factory=NoiseConfig)

    def labels(self):
        return [f"c{int(round(L)):02d}" for L in self.crack_lengths_mm]

    def specimen(self, idx):
        lengths = self.crack_lengths_mm
        return SpecimenSpec(
            label=self.labels()[idx],
            crack_length_mm=lengths[idx],
            crack_row=self.crack_rows[idx % len(self.crack_rows)],
            width_mm=self.width_mm,
            rows=self.rows,
            cols=self.cols,
            outer_pins=tuple(self.outer_pins),
            inner_pins=tuple(self.inner_pins),
            max_displacement_mm=self.max_displacement_mm,
            strain_per_mm=self.strain_per_mm,
            variation_seed=101 + idx,
        )

    def layout(self):
        pos = [[r, c] for r in self.gauge_rows for c in self.gauge_cols]
        return GaugeLayout(np.array(pos, dtype=float))


@dataclass(frozen=True)
class PcaConfig:
    k: int = 8
    cev_threshold: float = 0.95
    specimens: tuple | None = None  # None = pooled fit over all specimens


@dataclass(frozen=True)
class PretrainConfig:
    lr: float = 0.001
    epochs: int = 300
    batch_size: int = 64
    val_fraction: float = 0.2
    seed: int = 11
    hidden: tuple = (100, 100, 100)


@dataclass(frozen=True)
class HmcSection:
    step_size_init: float = 1e-4
    target_accept: float = 0.6
    burn_in: int = 100
    n_samples: int = 1000
    leapfrog_steps: int = 20
    jitter: float = 0.2
    thinning: int = 1
    seed: int = 13
    prior_std: float = 0.5
    calibration_d: float = 20.0
    divergence_threshold: float = 1000.0

    def kernel_config(self, n_samples=None, burn_in=None):
        return HmcConfig(
            step_size_init=self.step_size_init,
            target_accept=self.target_accept,
            burn_in=self.burn_in if burn_in is None else burn_in,
            n_samples=self.n_samples if n_samples is None else n_samples,
            leapfrog_steps=self.leapfrog_steps,
            jitter=self.jitter,
            thinning=self.thinning,
            seed=self.seed,
            divergence_threshold=self.divergence_threshold,
        )


@dataclass(frozen=True)
class UqConfig:
    field_mode: str = "linear-abs"  # or "variance"
    upsample_factor: int = 4
    physical_units: bool = False
    inline_fields: bool = False  # emit full fields on every monitor line


@dataclass(frozen=True)
class StudyConfig:
    sizes: tuple = (300, 500, 700, 900)  # training frames per specimen
    test_specimen: str = "c12"
    # reduced sampler settings keep the four extra chains desk-scale
    hmc_n_samples: int = 150
    hmc_burn_in: int = 50


@dataclass(frozen=True)
class PipelineConfig:
    out_dir: str = "runs/default"
    data: DataConfig = field(default_factory=DataConfig)
    pca: PcaConfig = field(default_factory=PcaConfig)
    pretrain: PretrainConfig = field(default_factory=PretrainConfig)
    hmc: HmcSection = field(default_factory=HmcSection)
    uq: UqConfig = field(default_factory=UqConfig)
    study: StudyConfig = field(default_factory=StudyConfig)

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, doc):
        sections = {
            "data": DataConfig, "pca": PcaConfig, "pretrain": PretrainConfig,
            "hmc": HmcSection, "uq": UqConfig, "study": StudyConfig,
        }
        kwargs = {}
        for key, value in doc.items():
            if key == "out_dir":
                kwargs[key] = value
            elif key in sections:
                klass = sections[key]
                known = klass.__dataclass_fields__
                bad = set(value) - set(known)
                if bad:
                    raise ConfigError(f"unknown keys in [{key}]: {sorted(bad)}")
                value = dict(value)
                for name, val in value.items():
                    if isinstance(val, list):
                        value[name] = tuple(val)
                if key == "data" and "noise" in value:
                    value["noise"] = NoiseConfig(**dict(value["noise"]))
                try:
                    kwargs[key] = klass(**value)
                except (TypeError, ValueError) as e:
                    raise ConfigError(f"invalid [{key}] section: {e}") from e
            else:
                raise ConfigError(f"unknown config key: {key}")
        return cls(**kwargs)


def load_config(path=None, out_dir=None):
    cfg = PipelineConfig()
    if path is not None:
        try:
            doc = json.loads(Path(path).read_text())
        except FileNotFoundError as e:
            raise ConfigError(f"config file not found: {path}") from e
        except json.JSONDecodeError as e:
            raise ConfigError(f"config is not valid JSON: {e}") from e
        cfg = PipelineConfig.from_dict(doc)
    if out_dir is not None:
        cfg = replace(cfg, out_dir=str(out_dir))
    return cfg


class Paths:
    def __init__(self, out_dir):
        self.out = Path(out_dir)
        self.data = self.out / "data"
        self.manifest = self.data / "manifest.json"
        self.basis = self.out / "basis.json"
        self.cev_report = self.out / "cev_report.json"
        self.model = self.out / "model.json"
        self.loss_curve = self.out / "loss_curve.csv"
        self.ensemble = self.out / "ensemble.bin"
        self.metrics = self.out / "metrics.json"
        self.fields = self.out / "fields"
        self.study = self.out / "study"
        self.monitor = self.out / "monitor"

    def dataset_dir(self, label, role):
        return self.data / f"{label}_{role}"


# ---------------------------------------------------------------- gen-data

def run_gen_data(cfg):
    """Generate train and test datasets for every specimen."""
    if cfg.data.train_frames < 1 or cfg.data.test_frames < 1:
        raise ConfigError("train_frames and test_frames must be >= 1")
    paths = Paths(cfg.out_dir)
    layout = cfg.data.layout()
    entries = []
    for idx, length in enumerate(cfg.data.crack_lengths_mm):
        label = cfg.data.labels()[idx]
        spec = cfg.data.specimen(idx)
        sets = {}
        for role, n_frames, offset in (
            ("train", cfg.data.train_frames, 0),
            ("test", cfg.data.test_frames, 500),
        ):
            seed = cfg.data.base_seed + 1000 * idx + offset
            ds = generate_dataset(spec, n_frames, cfg.data.noise, seed,
                                  layout, cfg.data.samples_per_cycle,
                                  cfg.data.rest_fraction)
            directory = paths.dataset_dir(label, role)
            artifacts.save_dataset(ds, directory, role)
            sets[role] = {"dir": directory.name, "dataset_id": ds.dataset_id,
                          "n_frames": n_frames, "seed": seed}
        entries.append({"label": label, "crack_length_mm": float(length), **sets})
    manifest = {"specimens": entries}
    artifacts.write_json(paths.manifest, manifest, pretty=True)
    return manifest


def _load_manifest(paths):
    if not paths.manifest.exists():
        raise DataError(f"missing manifest {paths.manifest}; run gen-data first")
    return artifacts.read_json(paths.manifest)


def _load_sets(paths, manifest, role, labels=None):
    out = []
    for entry in manifest["specimens"]:
        if labels is not None and entry["label"] not in labels:
            continue
        ds, meta = artifacts.load_dataset(paths.data / entry[role]["dir"])
        out.append((entry["label"], ds, meta))
    if not out:
        raise DataError(f"no {role} datasets selected")
    return out


# ----------------------------------------------------------------- fit-pca

def run_fit_pca(cfg):
    """Pooled basis fit over the training specimens, plus a CEV report."""
    paths = Paths(cfg.out_dir)
    manifest = _load_manifest(paths)
    labels = cfg.pca.specimens
    sets = _load_sets(paths, manifest, "train", labels)
    raw = np.vstack([ds.fields for _, ds, _ in sets])
    if raw.shape[0] < cfg.pca.k:
        raise ConfigError(f"{raw.shape[0]} samples cannot support k={cfg.pca.k}")
    xn, lo, hi = minmax_normalize(raw)
    rows, cols = sets[0][1].spec.rows, sets[0][1].spec.cols
    basis = fit_pca(xn, cfg.pca.k, rows=rows, cols=cols, norm_min=lo, norm_max=hi)
    curve = [cev(basis, i) for i in range(1, basis.singular_values.size + 1)]
    report = {
        "cev_curve": curve,
        "cev_threshold": cfg.pca.cev_threshold,
        "k_selected": smallest_k_for_cev(basis.singular_values, cfg.pca.cev_threshold),
        "k_used": cfg.pca.k,
        "n_samples": int(raw.shape[0]),
        "dataset_ids": [ds.dataset_id for _, ds, _ in sets],
    }
    artifacts.save_basis(basis, paths.basis)
    artifacts.write_json(paths.cev_report, report, pretty=True)
    return report


# ---------------------------------------------------------------- pretrain

def _normalize_gauges(gauges, lo, hi):
    span = np.where(hi - lo == 0, 1.0, hi - lo)
    return (gauges - lo) / span


def _assemble_training(cfg, paths, basis, size=None):
    """Pooled (inputs_raw, targets, ids) over the training datasets."""
    manifest = _load_manifest(paths)
    sets = _load_sets(paths, manifest, "train", cfg.pca.specimens)
    gauges, targets, ids = [], [], []
    for _, ds, _ in sets:
        if size is not None and len(ds.fields) < size:
            raise DataError(f"dataset {ds.dataset_id} has {len(ds.fields)} frames, "
                            f"need {size}")
        fields_ = ds.fields if size is None else ds.fields[:size]
        g = ds.gauges if size is None else ds.gauges[:size]
        xn = _normalize_gauges(fields_, basis.norm_min, basis.norm_max)
        targets.append(project(xn, basis))
        gauges.append(g)
        ids.append(ds.dataset_id)
    return np.vstack(gauges), np.vstack(targets), ids


def run_pretrain(cfg):
    """Adam pre-training; writes model.json and the loss curve CSV."""
    paths = Paths(cfg.out_dir)
    basis = artifacts.load_basis(paths.basis)
    gauges_raw, targets, ids = _assemble_training(cfg, paths, basis)
    if paths.cev_report.exists():
        report = artifacts.read_json(paths.cev_report)
        if sorted(report.get("dataset_ids", [])) != sorted(ids):
            raise DataError("basis was fit on different datasets than configured "
                            "(dataset fingerprint mismatch); re-run fit-pca")
    lo = gauges_raw.min(axis=0)
    hi = gauges_raw.max(axis=0)
    inputs = _normalize_gauges(gauges_raw, lo, hi)
    arch = NetArchitecture(input_dim=inputs.shape[1],
                           hidden=cfg.pretrain.hidden,
                           output_dim=basis.k)
    result = pretrain(
        arch, inputs, targets, basis.eigenvalues,
        lr=cfg.pretrain.lr, epochs=cfg.pretrain.epochs,
        batch_size=cfg.pretrain.batch_size,
        val_fraction=cfg.pretrain.val_fraction, seed=cfg.pretrain.seed)
    training = {
        "lr": cfg.pretrain.lr,
        "epochs": cfg.pretrain.epochs,
        "batch_size": cfg.pretrain.batch_size,
        "val_fraction": cfg.pretrain.val_fraction,
        "input_min": [float(v) for v in lo],
        "input_max": [float(v) for v in hi],
        "clamp_events": result.clamp_events,
        "n_samples": int(inputs.shape[0]),
        "dataset_ids": ids,
    }
    artifacts.save_model(paths.model, arch, result.params,
                         seed=cfg.pretrain.seed, training=training,
                         basis_fingerprint=artifacts.file_fingerprint(paths.basis))
    artifacts.write_loss_csv(paths.loss_curve, result.train_loss, result.val_loss)
    return result


def _load_model_checked(paths):
    arch, params, doc = artifacts.load_model(paths.model)
    basis = artifacts.load_basis(paths.basis)
    actual = artifacts.file_fingerprint(paths.basis)
    if doc["basis_fingerprint"] != actual:
        raise DataError("model.json was trained against a different basis.json "
                        f"({doc['basis_fingerprint'][:12]} != {actual[:12]})")
    return arch, params, doc, basis


def _training_subset(doc, inputs, targets):
    """Recover the exact pre-training train split for the potential."""
    n = inputs.shape[0]
    rng = np.random.default_rng([doc["seed"], 1])
    perm = rng.permutation(n)
    n_val = int(round(doc["training"]["val_fraction"] * n))
    idx = perm[n_val:]
    return inputs[idx], targets[idx]


# ------------------------------------------------------------------ sample

def run_sample(cfg):
    """Posterior sampling from the pre-trained point; writes ensemble.bin."""
    paths = Paths(cfg.out_dir)
    arch, params, doc, basis = _load_model_checked(paths)
    gauges_raw, targets, ids = _assemble_training(cfg, paths, basis)
    if sorted(ids) != sorted(doc["training"]["dataset_ids"]):
        raise DataError("model was trained on different datasets than configured")
    lo = np.array(doc["training"]["input_min"])
    hi = np.array(doc["training"]["input_max"])
    inputs = _normalize_gauges(gauges_raw, lo, hi)
    x, z = _training_subset(doc, inputs, targets)
    scales = LikelihoodScales.from_sigma_hat(np.array(doc["sigma_hat"]),
                                             d=cfg.hmc.calibration_d)
    prior = PriorSpec(mean=params.theta, std=cfg.hmc.prior_std)
    potential = make_potential(arch, x, z, scales, prior)
    ensemble = sample_posterior(params.theta, potential, cfg.hmc.kernel_config())
    artifacts.save_ensemble(paths.ensemble, ensemble, {
        "model_fingerprint": artifacts.file_fingerprint(paths.model),
        "basis_fingerprint": doc["basis_fingerprint"],
        "step_size_init": cfg.hmc.step_size_init,
        "target_accept": cfg.hmc.target_accept,
        "burn_in": cfg.hmc.burn_in,
        "leapfrog_steps": cfg.hmc.leapfrog_steps,
        "jitter": cfg.hmc.jitter,
        "thinning": cfg.hmc.thinning,
        "calibration_d": cfg.hmc.calibration_d,
        "prior_std": cfg.hmc.prior_std,
    })
    return ensemble


def _load_chain(paths):
    """Load basis, model and ensemble, verifying the fingerprint chain."""
    arch, params, doc, basis = _load_model_checked(paths)
    samples, sidecar = artifacts.load_ensemble(paths.ensemble)
    model_fp = artifacts.file_fingerprint(paths.model)
    if sidecar["model_fingerprint"] != model_fp:
        raise DataError("ensemble.bin was sampled from a different model.json")
    if sidecar["basis_fingerprint"] != doc["basis_fingerprint"]:
        raise DataError("ensemble.bin was sampled against a different basis.json")
    return arch, params, doc, basis, samples, sidecar


# -------------------------------------------------------------------- eval

def run_eval(cfg, on_train=False):
    """Held-out metrics per specimen; writes metrics.json and error grids."""
    paths = Paths(cfg.out_dir)
    arch, params, doc, basis, samples, _ = _load_chain(paths)
    manifest = _load_manifest(paths)
    role = "train" if on_train else "test"
    sets = _load_sets(paths, manifest, role, cfg.pca.specimens)
    train_ids = set(doc["training"]["dataset_ids"])
    if not on_train:
        overlap = [ds.dataset_id for _, ds, _ in sets if ds.dataset_id in train_ids]
        if overlap:
            raise DataError(f"test datasets overlap the training set: {overlap}")
    lo = np.array(doc["training"]["input_min"])
    hi = np.array(doc["training"]["input_max"])
    predictor = EnsemblePredictor(arch, samples)
    per_specimen = {}
    for label, ds, _ in sets:
        inputs = _normalize_gauges(ds.gauges, lo, hi)
        fields_norm = _normalize_gauges(ds.fields, basis.norm_min, basis.norm_max)
        z_true = project(fields_norm, basis)
        z_mean, z_std = predictor.predict(inputs)
        fields_pred = reconstruct(z_mean, basis)
        metrics = evaluate(z_true, z_mean, z_std,
                           fields_true=fields_norm, fields_pred=fields_pred,
                           grid_shape=(basis.rows, basis.cols))
        artifacts.write_field_csv(paths.fields / f"err_{label}.csv", metrics.error_grid)
        artifacts.write_field_csv(paths.fields / f"zmean_{label}.csv", z_mean)
        per_specimen[label] = {
            "dataset_id": ds.dataset_id,
            "n_frames": ds.n_frames,
            "mae": [float(v) for v in metrics.mae],
            "rmse": [float(v) for v in metrics.rmse],
            "r2": metrics.r2,
            "coverage95": [float(v) for v in metrics.coverage95],
        }
    r2_matrix = [v["r2"] for v in per_specimen.values()]
    min_r2 = []
    for j in range(basis.k):
        col = [row[j] for row in r2_matrix if row[j] is not None]
        min_r2.append(min(col) if col else None)
    pooled = [r for row in r2_matrix for r in row if r is not None]
    summary = {
        "role": role,
        "min_r2_per_mode": min_r2,
        "mean_r2": float(np.mean(pooled)) if pooled else None,
    }
    out = {"specimens": per_specimen, "summary": summary}
    artifacts.write_json(paths.metrics, out, pretty=True)
    return out


# ----------------------------------------------------------------- monitor

def _uncertainty_csv(paths, name, ufield, factor):
    artifacts.write_field_csv(paths.monitor / f"{name}.csv", ufield.grid)
    if factor > 1:
        up = bicubic_upsample(ufield.grid, factor)
        artifacts.write_field_csv(paths.monitor / f"{name}_x{factor}.csv", up)


def run_monitor(cfg, source, sink, errsink, replay=None):
    """Stream frames through the trained chain; returns the latency summary.

    Input is line-delimited JSON ``{"t": ..., "gauges": [12 floats]}`` (or a
    recorded dataset directory via ``replay``).  Malformed lines are skipped
    with a warning.  One output line is emitted per input frame, in order.
    """
    paths = Paths(cfg.out_dir)
    arch, params, doc, basis, samples, _ = _load_chain(paths)
    lo = np.array(doc["training"]["input_min"])
    hi = np.array(doc["training"]["input_max"])
    predictor = EnsemblePredictor(arch, samples)
    sigma_hat = np.array(doc["sigma_hat"])
    static = aleatoric_field(sigma_hat, basis, cfg.uq.field_mode)
    if cfg.uq.physical_units:
        static = to_physical(static, basis)
    _uncertainty_csv(paths, "aleatoric", static, cfg.uq.upsample_factor)

    if replay is not None:
        ds, _ = artifacts.load_dataset(replay)
        lines = (json.dumps({"t": i, "gauges": [float(v) for v in g]})
                 for i, g in enumerate(ds.gauges))
    else:
        lines = source

    latencies = []
    n_bad = 0
    for line in lines:
        t0 = time.perf_counter()
        line = line.strip()
        if not line:
            continue
        try:
            frame = json.loads(line)
            gauges = np.asarray(frame["gauges"], dtype=float)
            stamp = frame["t"]
            if gauges.shape != (arch.input_dim,) or not np.all(np.isfinite(gauges)):
                raise ValueError("bad gauge vector")
        except (ValueError, KeyError, TypeError) as e:
            n_bad += 1
            errsink.write(f"warning: skipping malformed frame: {e}\n")
            continue
        x = _normalize_gauges(gauges, lo, hi)
        z_mean, z_std = predictor.predict(x)
        record = {
            "t": stamp,
            "z_mean": [float(v) for v in z_mean],
            "z_std": [float(v) for v in z_std],
        }
        if cfg.uq.inline_fields:
            mean_field = reconstruct(z_mean, basis, denorm=cfg.uq.physical_units)
            epi = epistemic_field(z_std, basis, cfg.uq.field_mode)
            if cfg.uq.physical_units:
                epi = to_physical(epi, basis)
            record["mean_field"] = [float(v) for v in mean_field]
            record["epistemic_field"] = [float(v) for v in epi.grid.reshape(-1)]
        latency_ms = (time.perf_counter() - t0) * 1e3
        record["latency_ms"] = latency_ms
        sink.write(json.dumps(record) + "\n")
        latencies.append(latency_ms)
    summary = {
        "frames": len(latencies),
        "skipped": n_bad,
        "latency_ms": {
            "mean": float(np.mean(latencies)) if latencies else None,
            "p95": float(np.percentile(latencies, 95)) if latencies else None,
        },
    }
    artifacts.write_json(paths.monitor / "summary.json", summary, pretty=True)
    errsink.write(f"monitor: {summary['frames']} frames, "
                  f"mean {summary['latency_ms']['mean']} ms, "
                  f"p95 {summary['latency_ms']['p95']} ms\n")
    return summary


# ----------------------------------------------------------- datasize study

def _histogram(grid, bins=20):
    counts, edges = np.histogram(grid.reshape(-1), bins=bins)
    return {"counts": [int(c) for c in counts],
            "edges": [float(e) for e in edges]}


def run_study(cfg):
    """Re-run basis fit, pre-training and sampling per training-set size.

    For each size the first ``size`` frames of every specimen's training
    sequence are pooled.  Reports the per-size mode noise scales and the
    aleatoric/epistemic fields for one fixed test input (the maximum-load
    frame of the study specimen's held-out sequence).
    """
    paths = Paths(cfg.out_dir)
    manifest = _load_manifest(paths)
    test_sets = _load_sets(paths, manifest, "test", [cfg.study.test_specimen])
    _, test_ds, _ = test_sets[0]
    test_frame = int(np.argmax(test_ds.phases))
    results = []
    for size in cfg.study.sizes:
        try:
            results.append(_study_one_size(cfg, paths, size, test_ds, test_frame))
        except (DataError, NumericError) as e:
            raise type(e)(f"study size {size}: {e}") from e
    summary = {
        "sizes": list(cfg.study.sizes),
        "test_specimen": cfg.study.test_specimen,
        "test_frame_index": test_frame,
        "field_mode": cfg.uq.field_mode,
        "results": results,
    }
    artifacts.write_json(paths.study / "summary.json", summary, pretty=True)
    return summary


def _study_one_size(cfg, paths, size, test_ds, test_frame):
    manifest = _load_manifest(paths)
    sets = _load_sets(paths, manifest, "train", cfg.pca.specimens)
    raws, gauges = [], []
    for _, ds, _ in sets:
        if len(ds.fields) < size:
            raise DataError(f"dataset {ds.dataset_id} has only {len(ds.fields)} frames")
        raws.append(ds.fields[:size])
        gauges.append(ds.gauges[:size])
    raw = np.vstack(raws)
    gauges_raw = np.vstack(gauges)
    xn, lo_f, hi_f = minmax_normalize(raw)
    rows, cols = sets[0][1].spec.rows, sets[0][1].spec.cols
    basis = fit_pca(xn, cfg.pca.k, rows=rows, cols=cols, norm_min=lo_f, norm_max=hi_f)
    targets = project(xn, basis)
    lo = gauges_raw.min(axis=0)
    hi = gauges_raw.max(axis=0)
    inputs = _normalize_gauges(gauges_raw, lo, hi)
    arch = NetArchitecture(input_dim=inputs.shape[1],
                           hidden=cfg.pretrain.hidden, output_dim=basis.k)
    result = pretrain(arch, inputs, targets, basis.eigenvalues,
                      lr=cfg.pretrain.lr, epochs=cfg.pretrain.epochs,
                      batch_size=cfg.pretrain.batch_size,
                      val_fraction=cfg.pretrain.val_fraction,
                      seed=cfg.pretrain.seed)
    n = inputs.shape[0]
    rng = np.random.default_rng([cfg.pretrain.seed, 1])
    perm = rng.permutation(n)
    n_val = int(round(cfg.pretrain.val_fraction * n))
    idx = perm[n_val:]
    scales = LikelihoodScales.from_sigma_hat(result.sigma_hat, d=cfg.hmc.calibration_d)
    prior = PriorSpec(mean=result.params.theta, std=cfg.hmc.prior_std)
    potential = make_potential(arch, inputs[idx], targets[idx], scales, prior)
    kernel = cfg.hmc.kernel_config(n_samples=cfg.study.hmc_n_samples,
                                   burn_in=cfg.study.hmc_burn_in)
    ensemble = sample_posterior(result.params.theta, potential, kernel)
    predictor = EnsemblePredictor(arch, ensemble.samples)
    x_test = _normalize_gauges(test_ds.gauges[test_frame], lo, hi)
    _, z_std = predictor.predict(x_test)
    alea = aleatoric_field(result.sigma_hat, basis, cfg.uq.field_mode)
    epi = epistemic_field(z_std, basis, cfg.uq.field_mode)
    artifacts.write_field_csv(paths.study / f"aleatoric_{size}.csv", alea.grid)
    artifacts.write_field_csv(paths.study / f"epistemic_{size}.csv", epi.grid)
    return {
        "size": int(size),
        "n_pooled": int(n),
        "sigma_hat": [float(v) for v in result.sigma_hat],
        "accept_rate": ensemble.accept_rate,
        "aleatoric_median": float(np.median(alea.grid)),
        "epistemic_median": float(np.median(epi.grid)),
        "aleatoric_hist": _histogram(alea.grid),
        "epistemic_hist": _histogram(epi.grid),
    }
