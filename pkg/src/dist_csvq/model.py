"""Correlated sparse sources, DCT sensing matrices, and noisy CS measurements.

Two length-N sources share a common random support of size K.  On the support
x_l = theta + z_l, where theta ~ N(0, rho/(1+rho)) is common to both terminals
and z_l ~ N(0, 1/(1+rho)) is terminal-private, so every nonzero entry has unit
variance and rho = var(theta)/var(z) controls how similar the sources are.
Terminal l observes y_l = phi_l @ x_l + w_l with i.i.d. Gaussian sensor noise.

All randomness flows through numpy Generators backed by the counter-based
Philox engine; `substream` derives independent reproducible streams from one
base seed.  Identical (config, seed) gives bit-identical draws for a fixed
numpy version (numpy reserves the right to revise distribution algorithms
across feature releases).
"""

import math
from dataclasses import dataclass

import numpy as np

DEFAULT_SAMPLE_COUNT = 300_000

# Substream tags. These are part of the reproducibility contract: serialized
# results depend on them, so treat them as frozen.
TRAIN_STREAM = 0
EVAL_STREAM = 1
INIT_STREAM = 2
DCS_STREAM = 3


def substream(seed, *key):
    """Independent, reproducible Generator for a (seed, key...) combination."""
    ss = np.random.SeedSequence(seed, spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))


@dataclass(frozen=True)
class SystemConfig:
    """All scalar parameters of one scenario.

    n, k, m : ambient dimension, sparsity, measurements per terminal (K < M < N)
    rho : correlation ratio var(theta)/var(z), strictly positive
    sigma_w_sq : per-terminal measurement noise variances (carried separately
        even though the experiments set them equal)
    r1, r2 : per-terminal quantization rates in bits/vector
    r_y : pre-quantization bits per measurement entry
    seed : base PRNG seed; training/eval/init streams are derived from it
    n_train, n_eval : Monte-Carlo sample counts
    """

    n: int
    k: int
    m: int
    rho: float
    sigma_w_sq: tuple = (0.0, 0.0)
    r1: int = 0
    r2: int = 0
    r_y: int = 3
    seed: int = 0
    n_train: int = DEFAULT_SAMPLE_COUNT
    n_eval: int = DEFAULT_SAMPLE_COUNT

    def __post_init__(self):
        for name in ("n", "k", "m", "r1", "r2", "r_y", "n_train", "n_eval", "seed"):
            v = getattr(self, name)
            if not isinstance(v, (int, np.integer)):
                raise ValueError(f"{name} must be an integer, got {v!r}")
        if not (0 < self.k < self.m < self.n):
            raise ValueError(
                f"requires K < M < N (strictly), got K={self.k}, M={self.m}, N={self.n}"
            )
        if not (self.rho > 0) or math.isinf(self.rho):
            raise ValueError(f"rho must be a positive finite real, got {self.rho}")
        sw = tuple(float(s) for s in self.sigma_w_sq)
        if len(sw) != 2 or any(s < 0 or math.isnan(s) for s in sw):
            raise ValueError(f"sigma_w_sq must be a pair of non-negative reals, got {self.sigma_w_sq}")
        object.__setattr__(self, "sigma_w_sq", sw)
        if self.r1 < 0 or self.r2 < 0:
            raise ValueError("quantization rates must be non-negative")
        if self.r_y < 1:
            raise ValueError("r_y must be a positive integer")
        if self.n_train < 1 or self.n_eval < 1:
            raise ValueError("sample counts must be positive")
        if not (0 <= self.seed < 2**64):
            raise ValueError("seed must fit in an unsigned 64-bit integer")

    @property
    def sigma_theta_sq(self):
        return self.rho / (1.0 + self.rho)

    @property
    def sigma_z_sq(self):
        return 1.0 / (1.0 + self.rho)

    @property
    def alpha(self):
        return self.m / self.n

    @property
    def r_total(self):
        return self.r1 + self.r2


@dataclass
class SourceRealization:
    """One draw of (support, theta, z1, z2, x1, x2); zero outside the support."""

    support: np.ndarray
    theta: np.ndarray
    z1: np.ndarray
    z2: np.ndarray
    x1: np.ndarray
    x2: np.ndarray


@dataclass
class BatchRealization:
    """Struct-of-arrays form of n independent realizations (rows are samples)."""

    support: np.ndarray  # (n, K) sorted indices
    theta: np.ndarray    # (n, N)
    z1: np.ndarray
    z2: np.ndarray
    x1: np.ndarray
    x2: np.ndarray

    def __len__(self):
        return self.x1.shape[0]


@dataclass
class SensingPair:
    """The two M x N sensing matrices, columns rescaled to unit norm."""

    phi1: np.ndarray
    phi2: np.ndarray

    @property
    def n(self):
        return self.phi1.shape[1]

    @property
    def m(self):
        return self.phi1.shape[0]


def dct_matrix(n):
    """Orthonormal type-II DCT matrix: c(r) cos(pi (2j+1) r / (2N)).

    c(0) = sqrt(1/N), c(r>0) = sqrt(2/N); rows and columns are orthonormal.
    """
    j = np.arange(n)
    r = np.arange(n)[:, None]
    t = np.cos(np.pi * (2 * j + 1) * r / (2.0 * n))
    t[0] *= math.sqrt(1.0 / n)
    t[1:] *= math.sqrt(2.0 / n)
    return t


def build_sensing_pair(n, m):
    """First M DCT rows for terminal 1, last M rows (bottom upwards) for
    terminal 2, then each column rescaled to unit Euclidean norm."""
    if m > n:
        raise ValueError(f"m must not exceed n, got m={m}, n={n}")
    if m < 1:
        raise ValueError("m must be positive")
    t = dct_matrix(n)
    phi1 = t[:m].copy()
    phi2 = t[::-1][:m].copy()
    for phi in (phi1, phi2):
        norms = np.linalg.norm(phi, axis=0)
        if np.any(norms == 0.0):
            raise ValueError("sensing matrix has a zero column; cannot normalize")
        phi /= norms
    return SensingPair(phi1=phi1, phi2=phi2)


def sample_batch(cfg, n_samples, rng):
    """Draw n_samples independent source realizations as stacked arrays.

    Draw order is fixed (support, theta, z1, z2) so results are reproducible
    for a given generator state.  Supports are uniform over all C(N, K)
    subsets: the first K entries of a uniformly random permutation.
    """
    n, k = cfg.n, cfg.k
    keys = rng.random((n_samples, n))
    support = np.sort(np.argpartition(keys, k - 1, axis=1)[:, :k], axis=1)

    st = math.sqrt(cfg.sigma_theta_sq)
    sz = math.sqrt(cfg.sigma_z_sq)
    theta_v = st * rng.standard_normal((n_samples, k))
    z1_v = sz * rng.standard_normal((n_samples, k))
    z2_v = sz * rng.standard_normal((n_samples, k))

    def scatter(values):
        full = np.zeros((n_samples, n))
        np.put_along_axis(full, support, values, axis=1)
        return full

    theta = scatter(theta_v)
    z1 = scatter(z1_v)
    z2 = scatter(z2_v)
    return BatchRealization(
        support=support, theta=theta, z1=z1, z2=z2, x1=theta + z1, x2=theta + z2
    )


def sample_realization(cfg, rng):
    """Draw a single SourceRealization (see sample_batch for the model)."""
    b = sample_batch(cfg, 1, rng)
    return SourceRealization(
        support=b.support[0],
        theta=b.theta[0],
        z1=b.z1[0],
        z2=b.z2[0],
        x1=b.x1[0],
        x2=b.x2[0],
    )


def measure(x, phi, sigma_w_sq, rng):
    """y = phi @ x + w with w ~ N(0, sigma_w_sq I)."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or phi.ndim != 2 or phi.shape[1] != x.shape[0]:
        raise ValueError(
            f"dimension mismatch: phi is {phi.shape}, x has length {x.shape}"
        )
    if sigma_w_sq < 0:
        raise ValueError("sigma_w_sq must be non-negative")
    y = phi @ x
    if sigma_w_sq > 0:
        y = y + math.sqrt(sigma_w_sq) * rng.standard_normal(phi.shape[0])
    return y


def measure_batch(x_rows, phi, sigma_w_sq, rng):
    """Row-wise `measure`: (n, N) sources -> (n, M) measurements."""
    if x_rows.ndim != 2 or x_rows.shape[1] != phi.shape[1]:
        raise ValueError(
            f"dimension mismatch: phi is {phi.shape}, batch is {x_rows.shape}"
        )
    if sigma_w_sq < 0:
        raise ValueError("sigma_w_sq must be non-negative")
    y = x_rows @ phi.T
    if sigma_w_sq > 0:
        y = y + math.sqrt(sigma_w_sq) * rng.standard_normal(y.shape)
    return y


def noise_variance_from_smnr(k, m, smnr_db):
    """Invert SMNR = K / (M sigma_w^2): sigma_w^2 = K / (M 10^(dB/10)).

    +inf dB maps to exactly 0 (noiseless).
    """
    if k <= 0 or m <= 0:
        raise ValueError("k and m must be positive")
    if math.isinf(smnr_db) and smnr_db > 0:
        return 0.0
    return k / (m * 10.0 ** (smnr_db / 10.0))
