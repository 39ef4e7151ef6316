"""Synthetic four-point-bending benchmark with edge cracks and gauges.

Stands in for a physical test rig: a plate under cyclic four-point bending
carries an edge crack whose tip amplifies the surface strain as 1/sqrt(r).
Full-field frames on the grid play the role of optical measurements, and a
small set of gauge positions is sampled from the same surface.  Measurement
pathologies are injected on purpose: heteroscedastic field noise that grows
near the crack tip, and occasional suppressed-strain patches at the
upper-left corner of the grid.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, asdict

import numpy as np


@dataclass(frozen=True)
class SpecimenSpec:
    """Geometry and loading of one specimen."""

    label: str = "c00"
    crack_length_mm: float = 0.0  # 0 = healthy
    crack_row: float = 7.0  # grid row of the crack line
    width_mm: float = 25.0  # physical width spanned by the column axis
    rows: int = 14
    cols: int = 12
    outer_pins: tuple = (-0.25, 1.25)  # normalized span coordinates
    inner_pins: tuple = (0.4, 0.6)
    max_displacement_mm: float = 20.0
    strain_per_mm: float = 60.0  # peak microstrain per mm of displacement
    variation_seed: int = 0  # seeds this specimen's stiffness variation field

    def __post_init__(self):
        if not 0.0 <= self.crack_length_mm < self.width_mm:
            raise ValueError("crack length must lie in [0, specimen width)")
        o0, o1 = self.outer_pins
        i0, i1 = self.inner_pins
        if not (o0 < i0 < i1 < o1):
            raise ValueError("inner pins must lie strictly between outer pins")
        if self.rows < 2 or self.cols < 2:
            raise ValueError("grid must be at least 2x2")

    @property
    def peak_strain(self):
        return self.max_displacement_mm * self.strain_per_mm

    @property
    def crack_tip(self):
        """(row, col) of the crack tip; crack grows from the right edge."""
        depth_cells = (self.crack_length_mm / self.width_mm) * (self.cols - 1)
        return (self.crack_row, (self.cols - 1) - depth_cells)


@dataclass(frozen=True)
class GaugeLayout:
    """Grid coordinates (row, col) of the 12 gauges."""

    positions: np.ndarray

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=float)
        if pos.shape != (12, 2):
            raise ValueError(f"expected 12 (row, col) positions, got {pos.shape}")
        if len({(r, c) for r, c in map(tuple, pos)}) != 12:
            raise ValueError("gauge positions must be pairwise distinct")
        object.__setattr__(self, "positions", pos)

    def validate_grid(self, rows, cols):
        pos = self.positions
        if (pos < 0).any() or (pos[:, 0] > rows - 1).any() or (pos[:, 1] > cols - 1).any():
            raise ValueError("gauge position outside the grid")


def default_gauge_layout():
    # 3x4 sub-lattice kept clear of the cracked right edge; the middle row
    # sits one row off the crack line so no gauge lands on the singularity.
    rows = [2.5, 6.0, 10.5]
    cols = [1.0, 4.0, 7.0, 10.0]
    return GaugeLayout(np.array([[r, c] for r in rows for c in cols]))


@dataclass(frozen=True)
class NoiseConfig:
    """Noise, crack-amplification and outlier settings."""

    field_noise: float = 0.004  # std as a fraction of peak strain
    gauge_noise: float = 0.002
    crack_noise_gain: float = 1.0  # c in std = base*(1 + c*(amp-1))
    amp_coeff: float = 1.6  # A in factor = 1 + A*sqrt(L)/sqrt(r)
    r_min: float = 0.75  # cells; caps the singularity at the tip
    specimen_variation: float = 0.25  # stiffness variation field amplitude
    # the strain shape drifts slightly through the load cycle (support
    # compliance, contact evolution); each harmonic carries its own smooth
    # per-specimen pattern so the cycle traces a high-rank trajectory
    load_harmonics: int = 4
    harmonic_amplitude: float = 0.25
    harmonic_decay: float = 1.0
    # the grid corner at (0, 0) is unreliable: extra noise plus occasional
    # suppressed-strain patches
    corner_noise_gain: float = 2.0
    corner_noise_size: int = 3
    outlier_prob: float = 0.04
    outlier_scale: float = 0.6  # multiplies the corner patch
    outlier_size: int = 2  # patch is outlier_size x outlier_size at (0, 0)

    def __post_init__(self):
        if not 0.0 <= self.outlier_prob <= 1.0:
            raise ValueError("outlier_prob must be in [0, 1]")
        if self.r_min <= 0:
            raise ValueError("r_min must be positive")


@dataclass
class SyntheticDataset:
    """Frames of paired gauge readings and full-field strain."""

    spec: SpecimenSpec
    layout: GaugeLayout
    noise: NoiseConfig
    seed: int
    phases: np.ndarray  # (n,)
    gauges: np.ndarray  # (n, 12)
    fields: np.ndarray  # (n, rows*cols) row-major
    samples_per_cycle: int = 100
    rest_fraction: float = 0.15
    dataset_id: str = ""

    def __post_init__(self):
        if not self.dataset_id:
            self.dataset_id = dataset_fingerprint(
                self.spec, self.noise, self.seed, len(self.phases),
                self.samples_per_cycle, self.rest_fraction)

    @property
    def n_frames(self):
        return len(self.phases)


def dataset_fingerprint(spec, noise, seed, n_frames, samples_per_cycle, rest_fraction):
    payload = json.dumps(
        {"spec": asdict(spec), "noise": asdict(noise), "seed": seed,
         "n_frames": n_frames, "samples_per_cycle": samples_per_cycle,
         "rest_fraction": rest_fraction},
        sort_keys=True,
    )
    return hashlib.sha256(payload.encode()).hexdigest()[:16]


def bending_strain(x, phase, spec):
    """Surface strain at normalized span coordinate(s) x under four-point bending.

    The bending moment ramps linearly from each outer pin to the nearer
    inner pin and is constant between the inner pins, so the strain profile
    is the same trapezoid scaled by phase * peak amplitude.
    """
    x = np.asarray(x, dtype=float)
    o0, o1 = spec.outer_pins
    i0, i1 = spec.inner_pins
    left = (x - o0) / (i0 - o0)
    right = (o1 - x) / (o1 - i1)
    profile = np.clip(np.minimum(left, right), 0.0, 1.0)
    return phase * spec.peak_strain * profile


def crack_amplification(row, col, spec, noise=None):
    """Multiplicative strain factor >= 1 from the crack-tip singularity.

    factor = 1 + A*sqrt(L)/sqrt(max(r, r_min)) * (1 + cos(theta))/2 where r
    and theta are polar coordinates around the tip, theta = 0 ahead of the
    crack.  Healthy specimens return 1 everywhere.
    """
    noise = noise or NoiseConfig()
    row = np.asarray(row, dtype=float)
    col = np.asarray(col, dtype=float)
    if spec.crack_length_mm <= 0:
        return np.ones(np.broadcast(row, col).shape)
    tip_r, tip_c = spec.crack_tip
    dr = row - tip_r
    dc = col - tip_c
    r = np.sqrt(dr**2 + dc**2)
    # crack grows toward col 0, so "ahead" points to decreasing col
    cos_theta = np.divide(-dc, r, out=np.ones_like(r), where=r > 0)
    angular = 0.5 * (1.0 + cos_theta)
    boost = noise.amp_coeff * np.sqrt(spec.crack_length_mm) / np.sqrt(np.maximum(r, noise.r_min))
    return 1.0 + boost * angular


def _smooth_random_field(rows, cols, seed, amplitude, floor=0.2):
    """1 + amplitude * (low-order seeded cosine expansion), clipped positive."""
    if amplitude == 0.0:
        return np.ones((rows, cols))
    rng = np.random.default_rng(seed)
    rr = np.arange(rows) / (rows - 1)
    cc = np.arange(cols) / (cols - 1)
    t = np.zeros((rows, cols))
    for a in range(3):
        for b in range(3):
            if a == 0 and b == 0:
                continue
            coef = rng.normal() / (1.0 + a + b)
            t += coef * np.outer(np.cos(np.pi * a * rr), np.cos(np.pi * b * cc))
    return np.maximum(1.0 + amplitude * t, floor)


def variation_field(spec, noise=None):
    """Smooth per-specimen stiffness multiplier, constant over the test.

    Emulates plate-to-plate manufacturing variability; amplitude 0 returns
    exactly ones.
    """
    noise = noise or NoiseConfig()
    return _smooth_random_field(spec.rows, spec.cols, [spec.variation_seed, 1],
                                noise.specimen_variation)


def load_shape(phase, m):
    """m-th load-shape time function; all vanish at zero load."""
    phase = np.asarray(phase, dtype=float)
    return phase * np.cos(m * np.pi * phase)


def clean_components(spec, noise=None):
    """Per-harmonic patterns plus the crack-opening grid of one specimen.

    Returns ``(patterns, opening)``: the noiseless frame at loading
    fraction ``phase`` is

        (sum_m load_shape(phase, m) * patterns[m]) * (1 + opening * phase)

    where ``patterns[0]`` is the four-point-bending profile scaled by the
    specimen's stiffness variation, higher harmonics carry smooth seeded
    modulations of it, and the crack amplification acts progressively as
    the crack opens with load.
    """
    noise = noise or NoiseConfig()
    rows, cols = spec.rows, spec.cols
    x = np.arange(rows) / (rows - 1)
    profile = bending_strain(x, 1.0, spec)
    base = np.repeat(profile[:, None], cols, axis=1) * variation_field(spec, noise)
    patterns = [base]
    for m in range(1, noise.load_harmonics + 1):
        amp = noise.harmonic_amplitude * noise.harmonic_decay ** (m - 1)
        mod = _smooth_random_field(rows, cols, [spec.variation_seed, 10 + m], 1.0,
                                   floor=-3.0) - 1.0
        patterns.append(base * amp * mod)
    if spec.crack_length_mm > 0:
        rr, cc = np.meshgrid(np.arange(rows), np.arange(cols), indexing="ij")
        opening = crack_amplification(rr, cc, spec, noise) - 1.0
    else:
        opening = np.zeros((rows, cols))
    return patterns, opening


def clean_field(phase, spec, noise=None):
    """Noiseless strain field for one loading phase, as an (rows, cols) grid."""
    patterns, opening = clean_components(spec, noise)
    grid = sum(load_shape(phase, m) * p for m, p in enumerate(patterns))
    return grid * (1.0 + opening * phase)


def sample_gauges(field, layout):
    """Bilinear samples of a field grid at each gauge position."""
    grid = field.values if hasattr(field, "values") else np.asarray(field, dtype=float)
    rows, cols = grid.shape
    layout.validate_grid(rows, cols)
    out = np.empty(len(layout.positions))
    for i, (r, c) in enumerate(layout.positions):
        r0 = min(int(np.floor(r)), rows - 2)
        c0 = min(int(np.floor(c)), cols - 2)
        fr = r - r0
        fc = c - c0
        out[i] = (
            grid[r0, c0] * (1 - fr) * (1 - fc)
            + grid[r0 + 1, c0] * fr * (1 - fc)
            + grid[r0, c0 + 1] * (1 - fr) * fc
            + grid[r0 + 1, c0 + 1] * fr * fc
        )
    return out


def loading_phase(t, samples_per_cycle, rest_fraction=0.0):
    """Displacement-controlled cycling: phase(t) = (1 - cos(2 pi t / T)) / 2.

    ``rest_fraction`` > 0 clips the bottom of the cosine and rescales so the
    specimen dwells at zero load between cycles (and still peaks at exactly
    1), as quasi-static rigs do between strokes.
    """
    raw = 0.5 * (1.0 - np.cos(2.0 * np.pi * np.asarray(t, dtype=float) / samples_per_cycle))
    if rest_fraction <= 0.0:
        return raw
    if not rest_fraction < 1.0:
        raise ValueError("rest_fraction must lie in [0, 1)")
    return np.clip((raw - rest_fraction) / (1.0 - rest_fraction), 0.0, 1.0)


def generate_dataset(spec, n_frames, noise=None, seed=0, layout=None,
                     samples_per_cycle=100, rest_fraction=0.15):
    """Deterministic synthetic dataset for one specimen.

    Each frame uses its own counter-derived RNG stream so frame i is
    reproducible independently of how many frames are generated.
    """
    if n_frames < 1:
        raise ValueError("n_frames must be >= 1")
    noise = noise or NoiseConfig()
    layout = layout or default_gauge_layout()
    layout.validate_grid(spec.rows, spec.cols)
    rows, cols = spec.rows, spec.cols
    p = rows * cols

    rr, cc = np.meshgrid(np.arange(rows), np.arange(cols), indexing="ij")
    amp = crack_amplification(rr, cc, spec, noise) if spec.crack_length_mm > 0 else np.ones((rows, cols))
    noise_std = noise.field_noise * spec.peak_strain * (1.0 + noise.crack_noise_gain * (amp - 1.0))
    cs = noise.corner_noise_size
    noise_std[:cs, :cs] *= noise.corner_noise_gain
    gauge_std = noise.gauge_noise * spec.peak_strain

    phases = loading_phase(np.arange(n_frames), samples_per_cycle, rest_fraction)
    fields = np.empty((n_frames, p))
    gauges = np.empty((n_frames, 12))
    patterns, opening = clean_components(spec, noise)
    sz = noise.outlier_size
    for i in range(n_frames):
        rng = np.random.default_rng([seed, i])
        ph = phases[i]
        clean = sum(load_shape(ph, m) * pat for m, pat in enumerate(patterns))
        clean = clean * (1.0 + opening * ph)
        grid = clean + rng.normal(0.0, 1.0, size=(rows, cols)) * noise_std
        if noise.outlier_prob > 0 and rng.random() < noise.outlier_prob:
            grid[:sz, :sz] *= noise.outlier_scale
        fields[i] = grid.reshape(-1)
        gauges[i] = sample_gauges(clean, layout) + rng.normal(0.0, 1.0, size=12) * gauge_std
    return SyntheticDataset(spec=spec, layout=layout, noise=noise, seed=seed,
                            phases=phases, gauges=gauges, fields=fields,
                            samples_per_cycle=samples_per_cycle,
                            rest_fraction=rest_fraction)
