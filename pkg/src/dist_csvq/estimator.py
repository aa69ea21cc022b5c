"""Exact Bayesian MMSE reconstruction of the correlated sparse pair.

Stack the two measurement vectors as y = [y1; y2] (length 2M).  Conditioned on
a support set S, the latent u = [theta_S; z1_S; z2_S] is Gaussian with diagonal
covariance E, and y = F u + w, so the per-support conditional mean of the
stacked sources is linear in y while the support itself carries a discrete
posterior.  The full estimator is the posterior-weighted mixture over all
C(N, K) supports, with every weight handled in the log domain.

The per-support weight is the support-dependent part of the Gaussian evidence

    log beta_S = 1/2 ( y' Ninv F G^-1 F' Ninv y  -  log det G ),
    G = E^-1 + F' Ninv F,

which drops the support-independent terms log det N, log det E and y' Ninv y
(E does not depend on S, so its determinant cancels in the normalization).
Note the F / F' placement: the inner solve is against the 3K x 3K matrix G,
the only ordering that is dimensionally consistent; it equals the Woodbury
expansion of the dense evidence log N(y; 0, F E F' + N), which the tests check
against an independent dense-Gaussian oracle.
"""

import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve, solve_triangular

from .model import DCS_STREAM, sample_batch, measure_batch, substream

# Noiseless operation leaves the Prop.-1 weights undefined; estimator math
# substitutes this variance while measurements stay exactly noiseless.  The
# induced bias is far below Monte-Carlo noise at desk scale.
NOISE_FLOOR = 1e-9

ESTIMATE_CHUNK = 32768


class NumericalError(RuntimeError):
    """A required factorization failed (singular or indefinite matrix)."""


@dataclass(frozen=True)
class GaussianParams:
    """Minimal parameter bundle the estimator needs (SystemConfig provides the
    same fields).  Unlike SystemConfig it allows degenerate shapes such as
    N = K = M = 1, useful for closed-form diagnostics."""

    n: int
    k: int
    m: int
    rho: float
    sigma_w_sq: tuple

    @property
    def sigma_theta_sq(self):
        return self.rho / (1.0 + self.rho)

    @property
    def sigma_z_sq(self):
        return 1.0 / (1.0 + self.rho)


def enumerate_supports(n, k):
    """All C(n, k) supports in lexicographic order, as an (C, k) int array.

    The order is a stable contract: posterior weights index into it.
    """
    if not (0 < k <= n):
        raise ValueError(f"need 0 < k <= n, got k={k}, n={n}")
    combos = list(itertools.combinations(range(n), k))
    return np.array(combos, dtype=np.intp)


def _effective_noise(cfg):
    s1, s2 = cfg.sigma_w_sq
    return (s1 if s1 > 0 else NOISE_FLOOR, s2 if s2 > 0 else NOISE_FLOOR)


def _selector(k):
    ident = np.eye(k)
    zero = np.zeros((k, k))
    return np.block([[ident, ident, zero], [ident, zero, ident]])


@dataclass
class SupportContext:
    """Prop.-1 block matrices for one support (y-independent, immutable)."""

    support: np.ndarray
    cross_cov: np.ndarray       # C = F E, 2M x 3K
    meas_cov: np.ndarray        # D = F E F' + N, 2M x 2M
    prior_cov: np.ndarray       # E, diagonal 3K x 3K
    stacked_sensing: np.ndarray  # F, 2M x 3K
    noise_cov: np.ndarray       # N, diagonal 2M x 2M
    selector: np.ndarray        # [[I, I, 0], [I, 0, I]], 2K x 3K
    n: int
    k: int
    m: int


def build_support_context(pair, support, cfg):
    """Assemble C, D, E, F, N and the selector for one candidate support."""
    support = np.asarray(support, dtype=np.intp)
    if support.ndim != 1 or support.size != cfg.k:
        raise ValueError(f"support must hold exactly K={cfg.k} indices")
    if np.any(support < 0) or np.any(support >= cfg.n) or np.unique(support).size != cfg.k:
        raise ValueError(f"invalid support {support} for N={cfg.n}")

    k, m = cfg.k, cfg.m
    p1 = pair.phi1[:, support]
    p2 = pair.phi2[:, support]
    zero = np.zeros((m, k))
    f = np.block([[p1, p1, zero], [p2, zero, p2]])

    st, sz = cfg.sigma_theta_sq, cfg.sigma_z_sq
    e_diag = np.concatenate([np.full(k, st), np.full(k, sz), np.full(k, sz)])
    s1, s2 = _effective_noise(cfg)
    n_diag = np.concatenate([np.full(m, s1), np.full(m, s2)])

    cross = f * e_diag  # C = F E (E diagonal)
    meas = (f * e_diag) @ f.T + np.diag(n_diag)
    return SupportContext(
        support=support,
        cross_cov=cross,
        meas_cov=meas,
        prior_cov=np.diag(e_diag),
        stacked_sensing=f,
        noise_cov=np.diag(n_diag),
        selector=_selector(k),
        n=cfg.n,
        k=k,
        m=m,
    )


def support_conditional_mean(ctx, y):
    """E[(x1, x2) | y, S]: selector C' D^-1 y scattered into the support
    coordinates of the stacked 2N output, zeros elsewhere."""
    y = np.asarray(y, dtype=float)
    try:
        cho = cho_factor(ctx.meas_cov, lower=True)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"measurement covariance not positive definite: {exc}") from exc
    u = ctx.selector @ (ctx.cross_cov.T @ cho_solve(cho, y))
    out = np.zeros(2 * ctx.n)
    out[ctx.support] = u[: ctx.k]
    out[ctx.n + ctx.support] = u[ctx.k:]
    return out


def log_support_weight(ctx, y):
    """log beta_S up to support-independent terms (see module docstring)."""
    y = np.asarray(y, dtype=float)
    n_inv = 1.0 / np.diag(ctx.noise_cov)
    f = ctx.stacked_sensing
    g = np.diag(1.0 / np.diag(ctx.prior_cov)) + f.T @ (f * n_inv[:, None])
    try:
        low = np.linalg.cholesky(g)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"weight matrix not positive definite: {exc}") from exc
    v = f.T @ (n_inv * y)
    t = solve_triangular(low, v, lower=True)
    logdet = 2.0 * np.log(np.diag(low)).sum()
    return 0.5 * (t @ t - logdet)


@dataclass
class PosteriorMixture:
    """Per-support log weights over the lexicographic support enumeration."""

    log_weights: np.ndarray
    supports: np.ndarray

    def normalized(self):
        """Probability vector via log-sum-exp (sums to 1)."""
        shifted = self.log_weights - self.log_weights.max()
        w = np.exp(shifted)
        return w / w.sum()


class MixtureEstimator:
    """Precomputed per-support factors for fast repeated mixture estimation.

    Contexts are y-independent, so the Cholesky work is done once per
    (sensing pair, config) and reused for every sample: per support we keep
    the 2K x 2M conditional-mean gain, the 3K x 2M half-quadratic factor of
    the log weight, and its constant -1/2 log det G.
    """

    def __init__(self, pair, cfg):
        self.pair = pair
        self.cfg = cfg
        self.n = cfg.n
        self.k = cfg.k
        self.m = cfg.m
        self.supports = enumerate_supports(cfg.n, cfg.k)
        c_count = len(self.supports)
        k2, m2, k3 = 2 * cfg.k, 2 * cfg.m, 3 * cfg.k

        self.gain = np.empty((c_count, k2, m2))
        self.half_quad = np.empty((c_count, k3, m2))
        self.log_const = np.empty(c_count)
        # target columns in the stacked 2N output, per support
        self.cols = np.empty((c_count, k2), dtype=np.intp)

        sel = _selector(cfg.k)
        st, sz = cfg.sigma_theta_sq, cfg.sigma_z_sq
        e_diag = np.concatenate([np.full(cfg.k, st), np.full(cfg.k, sz), np.full(cfg.k, sz)])
        s1, s2 = _effective_noise(cfg)
        n_diag = np.concatenate([np.full(cfg.m, s1), np.full(cfg.m, s2)])
        n_inv = 1.0 / n_diag
        zero = np.zeros((cfg.m, cfg.k))

        for si, support in enumerate(self.supports):
            p1 = pair.phi1[:, support]
            p2 = pair.phi2[:, support]
            f = np.block([[p1, p1, zero], [p2, zero, p2]])
            meas = (f * e_diag) @ f.T + np.diag(n_diag)
            try:
                cho = cho_factor(meas, lower=True)
                g = np.diag(1.0 / e_diag) + f.T @ (f * n_inv[:, None])
                low = np.linalg.cholesky(g)
            except np.linalg.LinAlgError as exc:
                raise NumericalError(
                    f"support {tuple(support)}: covariance factorization failed: {exc}"
                ) from exc
            self.gain[si] = sel @ cho_solve(cho, f * e_diag).T
            self.half_quad[si] = solve_triangular(low, (f * n_inv[:, None]).T, lower=True)
            self.log_const[si] = -np.log(np.diag(low)).sum()
            self.cols[si] = np.concatenate([support, cfg.n + support])

        self._support_keys = self.supports @ (
            (cfg.n ** np.arange(cfg.k - 1, -1, -1)).astype(np.int64)
        )

    # -- weights ----------------------------------------------------------

    def log_weights(self, y_rows):
        """Unnormalized log beta per support: (n, 2M) -> (n, C)."""
        y_rows = np.atleast_2d(y_rows)
        out = np.empty((y_rows.shape[0], len(self.supports)))
        for si in range(len(self.supports)):
            t = y_rows @ self.half_quad[si].T
            out[:, si] = 0.5 * np.einsum("ij,ij->i", t, t) + self.log_const[si]
        return out

    def posterior(self, y1, y2):
        y = np.concatenate([np.asarray(y1, float), np.asarray(y2, float)])
        return PosteriorMixture(log_weights=self.log_weights(y)[0], supports=self.supports)

    # -- estimates --------------------------------------------------------

    def estimate_rows(self, y_rows):
        """MMSE estimates of the stacked sources: (n, 2M) -> (n, 2N)."""
        y_rows = np.atleast_2d(y_rows)
        total = y_rows.shape[0]
        out = np.zeros((total, 2 * self.n))
        for start in range(0, total, ESTIMATE_CHUNK):
            chunk = y_rows[start:start + ESTIMATE_CHUNK]
            logw = self.log_weights(chunk)
            logw -= logw.max(axis=1, keepdims=True)
            w = np.exp(logw)
            w /= w.sum(axis=1, keepdims=True)
            dst = out[start:start + ESTIMATE_CHUNK]
            for si in range(len(self.supports)):
                dst[:, self.cols[si]] += (chunk @ self.gain[si].T) * w[:, si:si + 1]
        return out

    def support_indices(self, supports_rows):
        """Map sorted support rows to their positions in the enumeration."""
        keys = np.asarray(supports_rows, dtype=np.int64) @ (
            (self.n ** np.arange(self.k - 1, -1, -1)).astype(np.int64)
        )
        idx = np.searchsorted(self._support_keys, keys)
        if np.any(self._support_keys[idx] != keys):
            raise ValueError("a support row is not a valid K-subset of {0..N-1}")
        return idx

    def conditional_rows(self, y_rows, support_idx):
        """Per-support conditional means at given support indices (the oracle)."""
        y_rows = np.atleast_2d(y_rows)
        support_idx = np.asarray(support_idx)
        out = np.zeros((y_rows.shape[0], 2 * self.n))
        for si in np.unique(support_idx):
            sel = support_idx == si
            out[np.ix_(sel, self.cols[si])] = y_rows[sel] @ self.gain[si].T
        return out


def stack_measurements(y1, y2):
    y1 = np.atleast_2d(np.asarray(y1, float))
    y2 = np.atleast_2d(np.asarray(y2, float))
    return np.hstack([y1, y2])


def mmse_estimate(pair, cfg, y1, y2, mixture=None):
    """Closed-form MMSE estimate: posterior-weighted mixture of per-support
    linear estimates, log-sum-exp normalized.  Returns (x1_tilde, x2_tilde)."""
    mix = mixture if mixture is not None else MixtureEstimator(pair, cfg)
    est = mix.estimate_rows(stack_measurements(y1, y2))[0]
    return est[: cfg.n], est[cfg.n:]


def oracle_estimate(pair, cfg, y1, y2, support, mixture=None):
    """Per-support conditional mean at the a-priori known support."""
    mix = mixture if mixture is not None else MixtureEstimator(pair, cfg)
    idx = mix.support_indices(np.sort(np.asarray(support, dtype=np.intp))[None, :])
    est = mix.conditional_rows(stack_measurements(y1, y2), idx)[0]
    return est[: cfg.n], est[cfg.n:]


def estimate_dcs(pair, cfg, estimator, n_samples, rng=None, mixture=None):
    """Monte-Carlo CS reconstruction distortion (1/2K) E[|x1-e1|^2 + |x2-e2|^2].

    estimator: 'mmse', 'oracle', or a debug hook in {'truth', 'zero'}.
    Returns (distortion, standard error of the mean).
    """
    if n_samples < 1:
        raise ValueError("n_samples must be at least 1")
    if rng is None:
        rng = substream(cfg.seed, DCS_STREAM)
    need_mix = estimator in ("mmse", "oracle")
    mix = None
    if need_mix:
        mix = mixture if mixture is not None else MixtureEstimator(pair, cfg)

    total = 0
    acc = 0.0
    acc_sq = 0.0
    while total < n_samples:
        take = min(ESTIMATE_CHUNK, n_samples - total)
        batch = sample_batch(cfg, take, rng)
        y1 = measure_batch(batch.x1, pair.phi1, cfg.sigma_w_sq[0], rng)
        y2 = measure_batch(batch.x2, pair.phi2, cfg.sigma_w_sq[1], rng)
        x = np.hstack([batch.x1, batch.x2])
        if estimator == "mmse":
            est = mix.estimate_rows(np.hstack([y1, y2]))
        elif estimator == "oracle":
            est = mix.conditional_rows(
                np.hstack([y1, y2]), mix.support_indices(batch.support)
            )
        elif estimator == "truth":
            est = x
        elif estimator == "zero":
            est = np.zeros_like(x)
        else:
            raise ValueError(f"unknown estimator {estimator!r}")
        d = np.einsum("ij,ij->i", x - est, x - est) / (2.0 * cfg.k)
        acc += d.sum()
        acc_sq += (d * d).sum()
        total += take

    mean = acc / total
    var = max(acc_sq / total - mean * mean, 0.0)
    se = math.sqrt(var / total)
    return mean, se
