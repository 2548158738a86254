"""Photon-transport Monte Carlo oracle for the semi-infinite scattering medium.

Photon packets launch at a fiber tip, propagate with exponential free-path
sampling at mu_t = mu_a + mu_s, scatter via Henyey-Greenstein, deposit the
fraction mu_a/mu_t of their weight at every interaction, undergo
probabilistic Fresnel reflection at the z = 0 interface, and terminate by
Russian roulette.  The voxel estimator is deposited energy / (mu_a * voxel
volume * photons launched).

Photons are processed in fixed-size batches with counter-derived seeds;
per-batch grids are merged in batch order, so results are bit-identical for
a fixed (seed, batch size) regardless of worker count.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .boundary import fresnel_reflectance_cos
from .errors import ConfigurationError, NumericError
from .geometry import OpticalMedium

__all__ = [
    "VoxelGrid",
    "McConfig",
    "McTallies",
    "FluenceField",
    "AxialLine",
    "ComparisonResult",
    "simulate",
    "axial_profile",
    "compare_to_model",
    "sample_henyey_greenstein",
    "sample_free_path",
]

DEFAULT_BATCH_SIZE = 65536


@dataclass(frozen=True)
class VoxelGrid:
    """Axis-aligned voxel lattice; isotropic spacing, z >= 0 only."""

    origin: tuple[float, float, float] = (-25.0, -25.0, 0.0)
    spacing: float = 0.2
    dims: tuple[int, int, int] = (250, 250, 200)

    def __post_init__(self):
        if self.spacing <= 0:
            raise ConfigurationError("voxel spacing must be positive")
        if any(d < 1 for d in self.dims):
            raise ConfigurationError("grid dims must be >= 1")
        if self.origin[2] < 0:
            raise ConfigurationError("grid must cover z >= 0 only")

    @property
    def voxel_volume(self) -> float:
        return self.spacing**3

    def z_centers(self) -> np.ndarray:
        return self.origin[2] + (np.arange(self.dims[2]) + 0.5) * self.spacing

    def axis_centers(self, axis: int) -> np.ndarray:
        return self.origin[axis] + (np.arange(self.dims[axis]) + 0.5) * self.spacing


@dataclass(frozen=True)
class McConfig:
    """Simulation setup: medium coefficients, source, grid, termination."""

    photons: int
    mu_a: float
    mu_s: float
    g: float = 0.9
    n_medium: float = 1.33
    source_mm: tuple[float, float, float] = (0.0, 5.70, 0.0)
    tilt_deg: float = 35.0
    grid: VoxelGrid = field(default_factory=VoxelGrid)
    seed: int = 0
    roulette_threshold: float = 1e-4
    roulette_survival: float = 0.1
    n_ambient: float = 1.0
    n_transducer: float = 1.49
    transducer_half_x: float = 15.0
    transducer_half_y: float = 10.0
    domain_half_x: float = 25.0
    domain_half_y: float = 25.0
    domain_depth: float = 50.0
    n_incident: float | None = None
    batch_size: int = DEFAULT_BATCH_SIZE

    def __post_init__(self):
        if self.photons < 1:
            raise ConfigurationError("photons must be >= 1")
        if self.mu_a <= 0:
            raise ConfigurationError(
                "mu_a must be positive: the deposition estimator divides by mu_a "
                "(pathlength estimation is out of scope)"
            )
        if self.mu_s < 0:
            raise ConfigurationError("mu_s must be nonnegative")
        if not -1.0 < self.g < 1.0:
            raise ConfigurationError("anisotropy g must lie in (-1, 1)")
        if not 0.0 < self.roulette_survival < 1.0:
            raise ConfigurationError("roulette survival must lie in (0, 1)")
        if self.roulette_threshold <= 0:
            raise ConfigurationError("roulette threshold must be positive")
        if not 0.0 <= self.tilt_deg < 90.0:
            raise ConfigurationError("tilt_deg must satisfy 0 <= tilt < 90")
        if self.batch_size < 1:
            raise ConfigurationError("batch_size must be >= 1")

    @classmethod
    def from_medium(cls, medium: OpticalMedium, wavelength_index: int = 0, **kwargs) -> "McConfig":
        """Build a config from an OpticalMedium at one analysis wavelength."""
        return cls(
            mu_a=float(medium.mu_a[wavelength_index]),
            mu_s=float(medium.mu_s[wavelength_index]),
            g=medium.g,
            n_medium=medium.n,
            **kwargs,
        )

    def initial_direction(self) -> np.ndarray:
        """Unit launch direction, tilted toward the image plane.

        If ``n_incident`` is set and differs from the medium index, the
        tilt refracts at entry via Snell's law.
        """
        theta = np.radians(self.tilt_deg)
        if self.n_incident is not None and self.n_incident != self.n_medium:
            sin_in = self.n_incident / self.n_medium * np.sin(theta)
            if sin_in >= 1.0:
                raise ConfigurationError("entry refraction is total: beam cannot enter medium")
            theta = np.arcsin(sin_in)
        lateral = -np.sign(self.source_mm[1])
        return np.array([0.0, lateral * np.sin(theta), np.cos(theta)])


@dataclass
class McTallies:
    """Weight ledger; conservation holds exactly up to float addition order."""

    launched: float = 0.0
    absorbed: float = 0.0
    escaped_boundary: float = 0.0
    escaped_domain: float = 0.0
    roulette_killed: float = 0.0
    roulette_gain: float = 0.0
    internal_reflections: int = 0

    def merge(self, other: "McTallies") -> None:
        self.launched += other.launched
        self.absorbed += other.absorbed
        self.escaped_boundary += other.escaped_boundary
        self.escaped_domain += other.escaped_domain
        self.roulette_killed += other.roulette_killed
        self.roulette_gain += other.roulette_gain
        self.internal_reflections += other.internal_reflections

    @property
    def escaped(self) -> float:
        return self.escaped_boundary + self.escaped_domain

    @property
    def balance(self) -> float:
        """absorbed + escaped + killed - gain - launched; ~0 for an unbiased run."""
        return (
            self.absorbed
            + self.escaped
            + self.roulette_killed
            - self.roulette_gain
            - self.launched
        )


@dataclass
class FluenceField:
    """Voxelized fluence estimate (per launched photon), values >= 0."""

    grid: VoxelGrid
    values: np.ndarray  # (nx, ny, nz)
    photons: int
    seed: int
    tallies: McTallies | None = None

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.shape != tuple(self.grid.dims):
            raise ValueError("values shape must match grid dims")
        self.values = values


def sample_henyey_greenstein(g: float, rng: np.random.Generator, n: int) -> np.ndarray:
    """Sample ``n`` deflection cosines from the Henyey-Greenstein phase function."""
    xi = rng.random(n)
    if g == 0.0:
        return 2.0 * xi - 1.0
    tmp = (1.0 - g * g) / (1.0 - g + 2.0 * g * xi)
    return np.clip((1.0 + g * g - tmp * tmp) / (2.0 * g), -1.0, 1.0)


def sample_free_path(mu_t: float, rng: np.random.Generator, n: int) -> np.ndarray:
    """Sample ``n`` free paths from the exponential distribution with rate mu_t."""
    return -np.log(rng.random(n)) / mu_t


def _scatter_directions(u: np.ndarray, cos_theta: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Rotate direction vectors ``u`` (m, 3) by deflection cosines + uniform azimuth."""
    m = u.shape[0]
    sin_theta = np.sqrt(1.0 - cos_theta * cos_theta)
    phi = 2.0 * np.pi * rng.random(m)
    cp, sp = np.cos(phi), np.sin(phi)
    ux, uy, uz = u[:, 0], u[:, 1], u[:, 2]
    near_pole = np.abs(uz) > 1.0 - 1e-12
    den = np.sqrt(np.maximum(1.0 - uz * uz, 1e-300))
    nux = sin_theta * (ux * uz * cp - uy * sp) / den + ux * cos_theta
    nuy = sin_theta * (uy * uz * cp + ux * sp) / den + uy * cos_theta
    nuz = -sin_theta * cp * den + uz * cos_theta
    nux = np.where(near_pole, sin_theta * cp, nux)
    nuy = np.where(near_pole, sin_theta * sp, nuy)
    nuz = np.where(near_pole, np.sign(uz) * cos_theta, nuz)
    out = np.stack([nux, nuy, nuz], axis=1)
    out /= np.linalg.norm(out, axis=1, keepdims=True)
    return out


def _run_batch(config: McConfig, n_photons: int, seed_seq: np.random.SeedSequence):
    """Trace one batch; returns (flat deposition grid, tallies)."""
    rng = np.random.default_rng(seed_seq)
    mu_t = config.mu_a + config.mu_s
    dep_frac = config.mu_a / mu_t
    nx, ny, nz = config.grid.dims
    ox, oy, oz = config.grid.origin
    sp = config.grid.spacing
    grid_flat = np.zeros(nx * ny * nz)
    tallies = McTallies(launched=float(n_photons))

    pos = np.tile(np.asarray(config.source_mm, dtype=float), (n_photons, 1))
    u = np.tile(config.initial_direction(), (n_photons, 1))
    w = np.ones(n_photons)
    n_rel_trans = config.n_medium / config.n_transducer
    n_rel_amb = config.n_medium / config.n_ambient

    while pos.shape[0]:
        n_alive = pos.shape[0]
        step = sample_free_path(mu_t, rng, n_alive)
        new_pos = pos + step[:, None] * u
        live = np.ones(n_alive, dtype=bool)

        crossing = new_pos[:, 2] < 0.0
        if crossing.any():
            ic = np.nonzero(crossing)[0]
            t_hit = -pos[ic, 2] / u[ic, 2]
            hit = pos[ic] + t_hit[:, None] * u[ic]
            cos_i = -u[ic, 2]
            in_footprint = (np.abs(hit[:, 0]) <= config.transducer_half_x) & (
                np.abs(hit[:, 1]) <= config.transducer_half_y
            )
            refl_prob = np.empty(ic.size)
            refl_prob[in_footprint] = fresnel_reflectance_cos(cos_i[in_footprint], n_rel_trans)
            refl_prob[~in_footprint] = fresnel_reflectance_cos(cos_i[~in_footprint], n_rel_amb)
            reflected = rng.random(ic.size) < refl_prob
            escaped = ic[~reflected]
            tallies.escaped_boundary += w[escaped].sum()
            live[escaped] = False
            ir = ic[reflected]
            tallies.internal_reflections += int(ir.size)
            u[ir, 2] = -u[ir, 2]
            remaining = step[ir] - t_hit[reflected]
            new_pos[ir] = hit[reflected] + remaining[:, None] * u[ir]

        out = (
            (np.abs(new_pos[:, 0]) > config.domain_half_x)
            | (np.abs(new_pos[:, 1]) > config.domain_half_y)
            | (new_pos[:, 2] > config.domain_depth)
        ) & live
        tallies.escaped_domain += w[out].sum()
        live &= ~out

        pos = new_pos[live]
        u = u[live]
        w = w[live]
        if not w.size:
            break

        # interaction: deposit, then scatter
        dw = w * dep_frac
        tallies.absorbed += dw.sum()
        ix = np.floor((pos[:, 0] - ox) / sp).astype(np.int64)
        iy = np.floor((pos[:, 1] - oy) / sp).astype(np.int64)
        iz = np.floor((pos[:, 2] - oz) / sp).astype(np.int64)
        in_grid = (ix >= 0) & (ix < nx) & (iy >= 0) & (iy < ny) & (iz >= 0) & (iz < nz)
        np.add.at(grid_flat, ix[in_grid] + nx * (iy[in_grid] + ny * iz[in_grid]), dw[in_grid])
        w = w - dw

        cos_theta = sample_henyey_greenstein(config.g, rng, w.size)
        u = _scatter_directions(u, cos_theta, rng)

        low = w < config.roulette_threshold
        if low.any():
            survives = rng.random(w.size) < config.roulette_survival
            boosted = low & survives & (w > 0.0)
            killed = low & ~boosted
            tallies.roulette_killed += w[killed].sum()
            tallies.roulette_gain += (w[boosted] / config.roulette_survival - w[boosted]).sum()
            w = np.where(boosted, w / config.roulette_survival, w)
            keep = ~killed
            pos, u, w = pos[keep], u[keep], w[keep]

    return grid_flat, tallies


def simulate(config: McConfig, threads: int = 1) -> FluenceField:
    """Run the full simulation and return the voxelized fluence estimate."""
    n_batches = (config.photons + config.batch_size - 1) // config.batch_size
    sizes = [
        min(config.batch_size, config.photons - b * config.batch_size) for b in range(n_batches)
    ]
    seeds = np.random.SeedSequence(config.seed).spawn(n_batches)

    total = np.zeros(int(np.prod(config.grid.dims)))
    tallies = McTallies()
    if threads <= 1 or n_batches == 1:
        results = (_run_batch(config, sizes[b], seeds[b]) for b in range(n_batches))
        for grid_flat, batch_tallies in results:
            total += grid_flat
            tallies.merge(batch_tallies)
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            futures = [
                pool.submit(_run_batch, config, sizes[b], seeds[b]) for b in range(n_batches)
            ]
            # merge strictly in batch order so results are worker-count independent
            for fut in futures:
                grid_flat, batch_tallies = fut.result()
                total += grid_flat
                tallies.merge(batch_tallies)

    nx, ny, nz = config.grid.dims
    values = total.reshape(nz, ny, nx).transpose(2, 1, 0)
    values /= config.mu_a * config.grid.voxel_volume * tallies.launched
    return FluenceField(
        grid=config.grid, values=values, photons=config.photons, seed=config.seed, tallies=tallies
    )


@dataclass(frozen=True)
class AxialLine:
    """Axial probe line (x, y, z) with lateral voxel averaging radius."""

    x_mm: float = 0.0
    y_mm: float = 0.0
    z_min_mm: float = 5.0
    z_max_mm: float = 25.0
    radius_mm: float = 0.5


def axial_profile(field: FluenceField, line: AxialLine) -> tuple[np.ndarray, np.ndarray]:
    """Extract fluence along a z line, averaging voxels within the lateral radius."""
    xs = field.grid.axis_centers(0)
    ys = field.grid.axis_centers(1)
    sel_x = np.abs(xs - line.x_mm) <= line.radius_mm
    sel_y = np.abs(ys - line.y_mm) <= line.radius_mm
    if not (sel_x.any() and sel_y.any()):
        ix = np.argmin(np.abs(xs - line.x_mm))
        iy = np.argmin(np.abs(ys - line.y_mm))
        sel_x = np.zeros_like(sel_x)
        sel_y = np.zeros_like(sel_y)
        sel_x[ix] = sel_y[iy] = True
    z = field.grid.z_centers()
    profile = field.values[np.ix_(sel_x, sel_y, np.arange(z.size))].mean(axis=(0, 1))
    sel_z = (z >= line.z_min_mm) & (z <= line.z_max_mm)
    return z[sel_z], profile[sel_z]


@dataclass
class ComparisonResult:
    """Per-depth relative difference of a field against a model curve."""

    z_mm: np.ndarray
    field_values: np.ndarray
    model_values: np.ndarray  # amplitude-matched
    rel_diff: np.ndarray
    scale: float

    @property
    def mean_abs_rel(self) -> float:
        return float(np.mean(np.abs(self.rel_diff)))

    @property
    def max_abs_rel(self) -> float:
        return float(np.max(np.abs(self.rel_diff)))


def compare_to_model(field: FluenceField, model_fn, line: AxialLine,
                     match_z_min: float | None = None) -> ComparisonResult:
    """Compare a fluence field to an analytic model along an axial line.

    ``model_fn`` maps a depth array (mm) to model fluence.  The model
    amplitude is least-squares matched to the field over the diffusive
    region (z beyond the model curve's own maximum, or ``match_z_min``),
    then per-depth relative differences are reported against the matched
    model.
    """
    z, mc = axial_profile(field, line)
    if z.size == 0:
        raise NumericError("axial line does not overlap the field grid")
    model = np.asarray(model_fn(z), dtype=float)
    if match_z_min is None:
        match_z_min = float(z[np.argmax(model)])
    sel = z >= match_z_min
    if not sel.any() or not np.any(model[sel] != 0.0):
        raise NumericError("empty or degenerate amplitude-match region")
    scale = float(np.dot(model[sel], mc[sel]) / np.dot(model[sel], model[sel]))
    matched = scale * model
    if np.any(matched == 0.0):
        raise NumericError("matched model vanishes on the comparison line")
    rel = (mc - matched) / matched
    return ComparisonResult(z_mm=z, field_values=mc, model_values=matched, rel_diff=rel,
                            scale=scale)
