"""Synthetic fetal-like stack generator with controllable artifacts.

The anatomy is a nested-ellipsoid tissue model (CSF shell, GM ring, WM core
inside a maternal-tissue background) elongated through-plane so that clean
stacks have highly consistent slices.  A deterministic smooth texture keeps
every tissue's variance nonzero (region SNR stays defined on noise-free
stacks).  Artifacts are applied in a fixed order with a per-stack seed:

1. per-slice in-plane translation (inter-slice motion), mask/labels follow;
2. random slice intensity drops (x0.2);
3. smooth multiplicative bias field exp(amplitude * g), g a fixed cubic
   polynomial of unit range;
4. additive Gaussian noise;
5. through-plane FOV crop.

Because the random draws per artifact are fixed for a given seed, sweeping a
single knob upward produces nested/scaled artifact realisations, which makes
detector IQMs move monotonically along the sweep.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from stackqc.io.nifti import LabelMap, Mask, Volume

TISSUE_INTENSITY = {"BG": 100.0, "CSF": 500.0, "GM": 250.0, "WM": 330.0}

# score = clamp(4 - sum(weight * severity), 0, 4); severities per knob below
QUALITY_WEIGHTS = {
    "motion": 1.1,   # severity = motion_shift_std in mm
    "drop": 5.0,     # severity = slice_drop_prob
    "bias": 2.0,     # severity = bias_amplitude
    "noise": 1.0,    # severity = noise_std / 25
    "fov": 8.0,      # severity = fov_crop_fraction
}


@dataclass(frozen=True)
class ScannerProfile:
    """Acquisition preset: geometry, noise floor and vendor intensity scale."""

    profile_id: str
    inplane_spacing: float
    slice_thickness: float
    grid_xy: int
    n_slices: int
    noise_floor: float
    intensity_scale: float


DEFAULT_PROFILE = ScannerProfile("default", 1.0, 3.0, 64, 14, 0.0, 1.0)

SCANNER_PROFILES = [
    ScannerProfile("p0", 1.12, 3.3, 64, 14, 2.0, 1.00),
    ScannerProfile("p1", 0.55, 3.0, 72, 16, 6.0, 1.35),
    ScannerProfile("p2", 1.10, 3.3, 60, 14, 3.0, 0.80),
    ScannerProfile("p3", 0.80, 3.5, 68, 12, 4.0, 1.15),
    ScannerProfile("p4", 0.68, 3.5, 70, 15, 5.0, 0.90),
    ScannerProfile("p5", 1.00, 4.0, 56, 12, 2.5, 1.20),
    ScannerProfile("p6", 0.72, 3.0, 66, 16, 4.5, 1.05),
    ScannerProfile("p7", 0.90, 4.4, 62, 13, 3.5, 0.70),
]


@dataclass
class PhantomSpec:
    """Generation parameters for one stack."""

    seed: int = 0
    profile: ScannerProfile = field(default_factory=lambda: DEFAULT_PROFILE)
    motion_shift_std: float = 0.0   # mm
    slice_drop_prob: float = 0.0
    bias_amplitude: float = 0.0
    noise_std: float = 0.0
    fov_crop_fraction: float = 0.0
    brain_scale: float = 1.0        # subject size jitter

    def __post_init__(self):
        if not 0.0 <= self.slice_drop_prob <= 1.0:
            raise ValueError("slice_drop_prob must be in [0, 1]")
        if not 0.0 <= self.fov_crop_fraction < 0.5:
            raise ValueError("fov_crop_fraction must be in [0, 0.5)")
        for knob in (self.motion_shift_std, self.bias_amplitude, self.noise_std):
            if knob < 0:
                raise ValueError("artifact knobs must be >= 0")


@dataclass
class GroundTruthQuality:
    score: float
    severities: dict[str, float]


def quality_from_knobs(spec: PhantomSpec) -> GroundTruthQuality:
    severities = {
        "motion": spec.motion_shift_std,
        "drop": spec.slice_drop_prob,
        "bias": spec.bias_amplitude,
        "noise": spec.noise_std / 25.0,
        "fov": spec.fov_crop_fraction,
    }
    penalty = sum(QUALITY_WEIGHTS[name] * value for name, value in severities.items())
    return GroundTruthQuality(score=float(np.clip(4.0 - penalty, 0.0, 4.0)), severities=severities)


def _anatomy(spec: PhantomSpec):
    prof = spec.profile
    n, nz = prof.grid_xy, prof.n_slices
    sp = (prof.inplane_spacing, prof.inplane_spacing, prof.slice_thickness)
    xs = (np.arange(n) - (n - 1) / 2) * sp[0]
    ys = (np.arange(n) - (n - 1) / 2) * sp[1]
    zs = (np.arange(nz) - (nz - 1) / 2) * sp[2]
    xg, yg, zg = np.meshgrid(xs, ys, zs, indexing="ij")

    fov_xy = n * sp[0]
    rx = 0.33 * fov_xy * spec.brain_scale
    # strongly elongated through-plane: cross-sections are near-identical, so
    # clean stacks have highly correlated slices (artifacts break that)
    rz = 25.0 * (nz * sp[2] / 2.0)
    d = np.sqrt((xg / rx) ** 2 + (yg / rx) ** 2 + (zg / rz) ** 2)

    labels = np.zeros((n, n, nz), dtype=np.int32)
    labels[d <= 1.0] = 1            # CSF shell
    labels[d <= 0.82] = 2           # GM ring
    labels[d <= 0.58] = 3           # WM core
    mask = d <= 1.0

    intensity = np.full((n, n, nz), TISSUE_INTENSITY["BG"])
    intensity[labels == 1] = TISSUE_INTENSITY["CSF"]
    intensity[labels == 2] = TISSUE_INTENSITY["GM"]
    intensity[labels == 3] = TISSUE_INTENSITY["WM"]
    # deterministic smooth texture: keeps within-tissue variance nonzero
    texture = (
        1.0
        + 0.05 * np.sin(xg * 0.55) * np.cos(yg * 0.41)
        + 0.03 * np.sin(zg * 0.23 + 1.0)
    )
    intensity = intensity * texture * prof.intensity_scale
    return intensity, mask, labels, sp


def _shift_slice(plane: np.ndarray, dx: int, dy: int, fill):
    out = np.full_like(plane, fill)
    nx, ny = plane.shape
    sx0, sx1 = max(0, dx), min(nx, nx + dx)
    tx0, tx1 = max(0, -dx), min(nx, nx - dx)
    sy0, sy1 = max(0, dy), min(ny, ny + dy)
    ty0, ty1 = max(0, -dy), min(ny, ny - dy)
    out[sx0:sx1, sy0:sy1] = plane[tx0:tx1, ty0:ty1]
    return out


def _bias_polynomial(shape) -> np.ndarray:
    """Fixed cubic of exactly unit range over the grid, centered on zero."""
    nx, ny, nz = shape
    x = np.linspace(-1, 1, nx)[:, None, None]
    y = np.linspace(-1, 1, ny)[None, :, None]
    z = np.linspace(-1, 1, nz)[None, None, :]
    g = x + 0.6 * y * z + 0.3 * x * y * z + 0.4 * z * z
    g = (g - g.min()) / (g.max() - g.min())
    return g - 0.5


def gen_stack(spec: PhantomSpec) -> tuple[Volume, Mask, LabelMap, GroundTruthQuality]:
    """Generate one stack; fully deterministic for a given parameter set."""
    rng = np.random.default_rng(np.random.SeedSequence(spec.seed))
    intensity, mask, labels, sp = _anatomy(spec)
    n_slices = intensity.shape[2]

    # fixed draws per artifact: sweeping one knob scales one realisation
    shift_draws = rng.normal(size=(n_slices, 2))
    drop_draws = rng.random(n_slices)
    drop_phases = rng.uniform(0.0, 2.0 * np.pi, size=(n_slices, 2))
    noise_draws = rng.normal(size=intensity.shape)

    if spec.motion_shift_std > 0:
        bg_fill = TISSUE_INTENSITY["BG"] * spec.profile.intensity_scale
        for k in range(n_slices):
            dx = int(round(shift_draws[k, 0] * spec.motion_shift_std / sp[0]))
            dy = int(round(shift_draws[k, 1] * spec.motion_shift_std / sp[1]))
            if dx == 0 and dy == 0:
                continue
            intensity[:, :, k] = _shift_slice(intensity[:, :, k], dx, dy, bg_fill)
            mask[:, :, k] = _shift_slice(mask[:, :, k], dx, dy, False)
            labels[:, :, k] = _shift_slice(labels[:, :, k], dx, dy, 0)

    if spec.slice_drop_prob > 0:
        # a signal void attenuates the anatomy and replaces it with
        # slice-specific banding (a pure per-slice rescale would be invisible
        # to correlation losses)
        n = intensity.shape[0]
        xs_idx = np.arange(n)[:, None] * sp[0]
        ys_idx = np.arange(intensity.shape[1])[None, :] * sp[1]
        for k in np.nonzero(drop_draws < spec.slice_drop_prob)[0]:
            plane = intensity[:, :, k]
            ripple = np.sin(xs_idx / 4.0 + drop_phases[k, 0]) * np.cos(
                ys_idx / 4.0 + drop_phases[k, 1]
            )
            intensity[:, :, k] = 0.2 * plane + 0.3 * float(plane.mean()) * ripple

    if spec.bias_amplitude > 0:
        intensity = intensity * np.exp(spec.bias_amplitude * _bias_polynomial(intensity.shape))

    total_noise = np.hypot(spec.noise_std, spec.profile.noise_floor)
    if total_noise > 0:
        intensity = intensity + total_noise * noise_draws * spec.profile.intensity_scale

    if spec.fov_crop_fraction > 0:
        n_drop = int(round(spec.fov_crop_fraction * n_slices))
        if n_drop:
            intensity = intensity[:, :, :-n_drop]
            mask = mask[:, :, :-n_drop]
            labels = labels[:, :, :-n_drop]

    affine = np.diag([sp[0], sp[1], sp[2], 1.0])
    affine[:3, 3] = (
        -(intensity.shape[0] - 1) / 2 * sp[0],
        -(intensity.shape[1] - 1) / 2 * sp[1],
        -(intensity.shape[2] - 1) / 2 * sp[2],
    )
    vol = Volume(data=intensity, spacing=sp, affine=affine)
    return vol, Mask(mask), LabelMap(labels), quality_from_knobs(spec)


def jagged_smooth_pair(seed: int = 0) -> tuple[Mask, Mask]:
    """A smooth ellipsoid mask and its boundary-roughened twin.

    The jagged variant adds single-voxel checkerboard bumps on a thin surface
    shell, the pattern the mask-sharpness filters are meant to punish.
    """
    spec = PhantomSpec(seed=seed)
    _, smooth, _, _ = gen_stack(spec)
    prof = spec.profile
    n, nz = prof.grid_xy, prof.n_slices
    sp = (prof.inplane_spacing, prof.inplane_spacing, prof.slice_thickness)
    xs = (np.arange(n) - (n - 1) / 2) * sp[0]
    zs = (np.arange(nz) - (nz - 1) / 2) * sp[2]
    xg, yg, zg = np.meshgrid(xs, xs, zs, indexing="ij")
    rx = 0.33 * n * sp[0]
    rz = 25.0 * (nz * sp[2] / 2.0)
    d = np.sqrt((xg / rx) ** 2 + (yg / rx) ** 2 + (zg / rz) ** 2)
    ix, iy, iz = np.meshgrid(np.arange(n), np.arange(n), np.arange(nz), indexing="ij")
    parity = (ix + iy + iz) % 2 == 0
    shell = (d > 1.0) & (d <= 1.12)
    jagged = Mask(smooth.data | (parity & shell))
    return smooth, jagged
