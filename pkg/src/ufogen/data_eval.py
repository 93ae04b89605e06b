"""Toy 2-D datasets, sample-quality metrics, and discretized-density checks.

The flagship dataset is a 5x5 lattice of Gaussians on [-4, 4]^2 with spacing
2 and per-mode standard deviation 0.05, the classic mode-coverage benchmark:
a sample is "high quality" when it falls within 3 sigma of its nearest mode
center, and a mode counts as covered once it attracts max(1, n / 2500) such
samples, so outliers cannot cover a mode.

Grid densities support the convolution identity behind adversarial matching
of noisy marginals: corrupting two densities with the same Gaussian kernel
preserves exactly the information of whether they were equal, which the
Jensen-Shannon divergence of the smoothed pair detects.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import cdist
from scipy.special import rel_entr

from . import schedule as sched


@dataclass(frozen=True)
class ToySpec:
    """Toy dataset selector: mixture geometry and mode width."""

    kind: str = "grid25"
    sigma_mode: float = 0.05

    def __post_init__(self):
        if self.kind not in ("grid25", "checkerboard", "swissroll"):
            raise ValueError(f"unknown toy kind {self.kind!r}")
        if self.sigma_mode <= 0:
            raise ValueError(f"sigma_mode must be > 0, got {self.sigma_mode}")

    @property
    def centers(self) -> np.ndarray:
        """Mode centers; only the Gaussian-lattice kind has them."""
        if self.kind != "grid25":
            raise ValueError(f"{self.kind!r} has no mode centers")
        axis = np.arange(-4.0, 4.1, 2.0)
        xx, yy = np.meshgrid(axis, axis)
        return np.stack([xx.ravel(), yy.ravel()], axis=1)


@dataclass(frozen=True)
class EvalReport:
    """Sample-quality summary for one batch of generated points."""

    modes_covered: int
    high_quality_fraction: float
    mmd: float
    sample_count: int

    def csv_row(self) -> str:
        return (f"{self.modes_covered},{self.high_quality_fraction:.6f},"
                f"{self.mmd:.8f},{self.sample_count}")


def sample_toy(spec: ToySpec, n: int, rng: np.random.Generator) -> np.ndarray:
    """Draw ``n`` i.i.d. points from the chosen toy distribution."""
    if n < 1:
        raise ValueError(f"need n >= 1, got {n}")
    if spec.kind == "grid25":
        centers = spec.centers
        idx = rng.integers(0, len(centers), size=n)
        return centers[idx] + spec.sigma_mode * rng.standard_normal((n, 2))
    if spec.kind == "checkerboard":
        # dark squares of a 4x4 board on [-4, 4]^2
        i = rng.integers(0, 4, size=n)
        j_off = rng.integers(0, 2, size=n)
        j = 2 * j_off + (i % 2)
        u = rng.uniform(0.0, 2.0, size=(n, 2))
        return np.stack([-4.0 + 2.0 * i + u[:, 0], -4.0 + 2.0 * j + u[:, 1]], axis=1)
    # swissroll: spiral arm rescaled into the same viewport
    angle = 1.5 * math.pi * (1.0 + 2.0 * rng.uniform(0.0, 1.0, size=n))
    pts = np.stack([angle * np.cos(angle), angle * np.sin(angle)], axis=1) / (6.0 * math.pi / 4.0)
    return pts + spec.sigma_mode * rng.standard_normal((n, 2))


def make_toy(spec: ToySpec, n: int, seed: int) -> np.ndarray:
    """Seeded wrapper around :func:`sample_toy`."""
    return sample_toy(spec, n, np.random.default_rng(np.random.SeedSequence([seed, 0x544F59])))


def mode_metrics(samples: np.ndarray, spec: ToySpec) -> EvalReport:
    """Mode coverage and high-quality fraction against the lattice mixture.

    Each sample is assigned to its nearest mode center; it is high quality if
    it lies within 3 sigma of that center, and a mode is covered once it
    collects at least max(1, n / 2500) high-quality samples.
    """
    samples = np.asarray(samples, dtype=np.float64)
    if samples.ndim != 2 or samples.shape[1] != 2:
        raise ValueError(f"expected (n, 2) samples, got {samples.shape}")
    centers = spec.centers
    dists = cdist(samples, centers)
    nearest = np.argmin(dists, axis=1)
    d_min = dists[np.arange(len(samples)), nearest]
    hq = d_min <= 3.0 * spec.sigma_mode
    threshold = max(1.0, len(samples) / 2500.0)
    counts = np.bincount(nearest[hq], minlength=len(centers))
    return EvalReport(
        modes_covered=int(np.sum(counts >= threshold)),
        high_quality_fraction=float(np.mean(hq)),
        mmd=0.0,
        sample_count=len(samples),
    )


def median_pairwise_distance(points: np.ndarray, cap: int = 2000) -> float:
    """Median heuristic bandwidth; deterministically subsampled above ``cap``."""
    pts = np.asarray(points, dtype=np.float64)
    if len(pts) > cap:
        idx = np.linspace(0, len(pts) - 1, cap).astype(int)
        pts = pts[idx]
    d = cdist(pts, pts)
    return float(np.median(d[np.triu_indices(len(pts), k=1)]))


def mmd_rbf(a: np.ndarray, b: np.ndarray, bandwidth: float | None = None) -> float:
    """Unbiased squared maximum-mean-discrepancy estimate with an RBF kernel.

    Kernel k(x, y) = exp(-||x - y||^2 / (2 bw^2)); ``bandwidth=None`` uses the
    median pairwise distance of ``b``.  For equal sample sizes the paired
    U-statistic is used, which is exactly 0 for identical inputs; otherwise
    the general three-term unbiased form.  Symmetric in its arguments, and
    may be slightly negative by construction of unbiasedness.
    """
    x = np.asarray(a, dtype=np.float64)
    y = np.asarray(b, dtype=np.float64)
    if len(x) < 2 or len(y) < 2:
        raise ValueError("mmd_rbf needs at least 2 points on each side")
    bw = median_pairwise_distance(y) if bandwidth is None else float(bandwidth)
    if bw <= 0:
        raise ValueError(f"bandwidth must be > 0, got {bw}")

    def k(u, v):
        return np.exp(-cdist(u, v, "sqeuclidean") / (2.0 * bw * bw))

    kxx, kyy, kxy = k(x, x), k(y, y), k(x, y)
    m, n = len(x), len(y)
    if m == n:
        # paired U-statistic: off-diagonal mean of k_xx + k_yy - k_xy - k_yx
        off = ~np.eye(m, dtype=bool)
        return float(np.sum((kxx + kyy - kxy - kxy.T)[off]) / (m * (m - 1)))
    term_x = (kxx.sum() - np.trace(kxx)) / (m * (m - 1))
    term_y = (kyy.sum() - np.trace(kyy)) / (n * (n - 1))
    return float(term_x + term_y - 2.0 * kxy.mean())


def evaluate_samples(samples: np.ndarray, spec: ToySpec, seed: int = 0,
                     mmd_cap: int = 2000) -> EvalReport:
    """Full report: mode metrics plus MMD against a fresh reference draw."""
    base = mode_metrics(samples, spec)
    n = min(len(samples), mmd_cap)
    idx = np.linspace(0, len(samples) - 1, n).astype(int)
    reference = make_toy(spec, n, seed=seed ^ 0x5EED)
    value = mmd_rbf(np.asarray(samples)[idx], reference)
    return EvalReport(base.modes_covered, base.high_quality_fraction,
                      max(0.0, value), base.sample_count)


# ----------------------------------------------------------------------
# discretized densities
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class GridDensity:
    """Non-negative mass on a uniform 1-D or 2-D grid, summing to 1."""

    lo: float
    hi: float
    mass: np.ndarray = field(repr=False)

    def __post_init__(self):
        m = np.asarray(self.mass, dtype=np.float64)
        if m.ndim not in (1, 2):
            raise ValueError(f"grid must be 1-D or 2-D, got rank {m.ndim}")
        if np.any(m < 0):
            raise ValueError("density mass must be non-negative")
        if abs(m.sum() - 1.0) > 1e-9:
            raise ValueError(f"density mass sums to {m.sum()}, not 1")
        if not self.hi > self.lo:
            raise ValueError("need hi > lo")
        object.__setattr__(self, "mass", m)

    @property
    def cell_width(self) -> float:
        return (self.hi - self.lo) / self.mass.shape[0]

    def same_grid(self, other: "GridDensity") -> bool:
        return (self.mass.shape == other.mass.shape
                and self.lo == other.lo and self.hi == other.hi)


def density_from_mass(lo: float, hi: float, raw: np.ndarray) -> GridDensity:
    raw = np.asarray(raw, dtype=np.float64)
    total = raw.sum()
    if total <= 0:
        raise ValueError("cannot normalize zero mass")
    return GridDensity(lo, hi, raw / total)


def convolve_density(p: GridDensity, sigma: float) -> GridDensity:
    """Smooth a grid density with a Gaussian kernel of width ``sigma``.

    The kernel is truncated at 6 sigma and renormalized; the output is
    renormalized again so boundary truncation cannot leak mass.  2-D grids
    are smoothed separably along each axis.
    """
    if sigma <= 0:
        raise ValueError(f"sigma must be > 0, got {sigma}")
    h = p.cell_width
    radius = max(1, int(math.ceil(6.0 * sigma / h)))
    offsets = np.arange(-radius, radius + 1) * h
    kernel = np.exp(-0.5 * (offsets / sigma) ** 2)
    kernel /= kernel.sum()

    out = p.mass
    if out.ndim == 1:
        out = np.convolve(out, kernel, mode="same")
    else:
        out = np.apply_along_axis(lambda r: np.convolve(r, kernel, mode="same"), 1, out)
        out = np.apply_along_axis(lambda c: np.convolve(c, kernel, mode="same"), 0, out)
    return density_from_mass(p.lo, p.hi, out)


def jsd_grid(p: GridDensity, q: GridDensity) -> float:
    """Jensen-Shannon divergence between two densities on the same grid.

    Natural-log convention (range [0, ln 2]), with 0 log 0 taken as 0.
    """
    if not p.same_grid(q):
        raise ValueError("densities live on different grids")
    m = 0.5 * (p.mass + q.mass)
    return float(0.5 * rel_entr(p.mass, m).sum() + 0.5 * rel_entr(q.mass, m).sum())


def recon_equivalence_check(s: sched.NoiseSchedule, t: int, x0: np.ndarray,
                            x0_hat: np.ndarray, trials: int,
                            rng: np.random.Generator | None = None,
                            ) -> tuple[float, float, float]:
    """Monte-Carlo check that re-noised mismatch reduces to clean mismatch.

    Draws independent noise pairs, forms both points at step t-1 from ``x0``
    and ``x0_hat``, and compares the mean squared distance against the closed
    form alpha_bar_{t-1} ||x0 - x0_hat||^2 + 2 (1 - alpha_bar_{t-1}) d.

    Returns (mc_mean, analytic_value, z_score) where the z-score measures the
    discrepancy in standard errors of the Monte-Carlo mean.
    """
    s._check_t(t)
    if trials < 2:
        raise ValueError(f"need trials >= 2, got {trials}")
    if rng is None:
        rng = np.random.default_rng(np.random.SeedSequence([0x7265636F, t]))
    x0 = np.asarray(x0, dtype=np.float64).ravel()
    x0_hat = np.asarray(x0_hat, dtype=np.float64).ravel()
    d = x0.size
    ab = s.alpha_bar[t - 1]

    eps = rng.standard_normal((trials, d))
    eps_hat = rng.standard_normal((trials, d))
    diff = math.sqrt(ab) * (x0_hat - x0) + math.sqrt(1.0 - ab) * (eps_hat - eps)
    vals = np.sum(diff * diff, axis=1)
    mc_mean = float(vals.mean())
    analytic = float(ab * np.sum((x0_hat - x0) ** 2) + 2.0 * (1.0 - ab) * d)
    se = float(vals.std(ddof=1)) / math.sqrt(trials)
    z = 0.0 if se == 0.0 else (mc_mean - analytic) / se
    return mc_mean, analytic, z


# ----------------------------------------------------------------------
# plain-text sample files
# ----------------------------------------------------------------------

_HEADER_PREFIX = "# ufogen-toy v1"


def save_samples(path, samples: np.ndarray, kind: str, seed: int) -> None:
    """Write samples as tab-separated rows under a one-line header."""
    arr = np.asarray(samples, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise ValueError(f"expected (n, 2) samples, got {arr.shape}")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{_HEADER_PREFIX} kind={kind} seed={seed}\n")
        for x, y in arr:
            fh.write(f"{float(x)!r}\t{float(y)!r}\n")


def load_samples(path) -> tuple[np.ndarray, dict[str, str]]:
    """Read a sample file; returns (array, header fields)."""
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n")
        if not header.startswith(_HEADER_PREFIX):
            raise ValueError(f"not a toy sample file: bad header {header!r}")
        meta = dict(part.split("=", 1) for part in header[len(_HEADER_PREFIX):].split() if "=" in part)
        rows = [line.split("\t") for line in fh if line.strip()]
    if not rows:
        return np.zeros((0, 2)), meta
    return np.array(rows, dtype=np.float64), meta
