"""Distributed VQ design and runtime.

Each terminal's encoder is a lookup table over the pre-quantized cells of its
own measurement vector; the fusion-center decoder is a codebook indexed by the
index pair.  Training alternates exact empirical minimizers (first encoder,
decoder, second encoder, decoder), each step minimizing the same surrogate
cost: the mean squared distance between the per-sample MMSE estimates and the
decoded vectors.  Every recorded step of that surrogate is therefore
non-increasing to float precision.

The deployed codebook is refreshed once after convergence as the plain
conditional mean of the raw source samples per index pair; it agrees with the
surrogate codebook within Monte-Carlo noise (the estimates are conditionally
unbiased for the sources), which the tests assert.
"""

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .estimator import MixtureEstimator
from .model import (
    EVAL_STREAM,
    INIT_STREAM,
    TRAIN_STREAM,
    build_sensing_pair,
    measure_batch,
    sample_batch,
    substream,
)
from .sq import cell_space_size, cells_of_batch, train_measurement_codebooks

SWEEP_TOL = 1e-4
MAX_SWEEPS = 50
EVAL_CHUNK = 32768


@dataclass
class EncoderTable:
    """Cell -> transmission index map for one terminal."""

    terminal: int
    map: np.ndarray      # (n_cells,) values in [0, n_indices)
    n_indices: int


@dataclass
class DecoderCodebook:
    """Joint lookup table of stacked (x1, x2) codevectors.

    Flat layout: row i1 * n2 + i2.  Unoccupied pairs hold the zero vector
    (the global mean of the sources) and are flagged by a zero count.
    """

    vectors: np.ndarray  # (n1 * n2, 2N)
    counts: np.ndarray   # (n1 * n2,) training occupancy
    n1: int
    n2: int

    def vector(self, i1, i2):
        return self.vectors[i1 * self.n2 + i2]

    def is_occupied(self, i1, i2):
        return bool(self.counts[i1 * self.n2 + i2] > 0)

    @property
    def n_unoccupied(self):
        return int(np.count_nonzero(self.counts == 0))


@dataclass
class TrainingTables:
    """Empirical transition counts and conditional-estimate sums for one
    terminal's encoder update, keyed by (own cell, other terminal's index).

    Stored sparse: occupied (cell, index) pairs only.  est_sums packs the
    summed 2N-dim estimate vectors as columns index*dim + coordinate, so the
    conditional mean for an occupied pair is est_sums / pair count.
    """

    terminal: int
    n_cells: int
    n_other: int
    dim: int
    pair_counts: sp.csr_matrix   # (n_cells, n_other)
    est_sums: sp.csr_matrix      # (n_cells, n_other * dim)
    cell_counts: np.ndarray      # (n_cells,)

    def cond_prob(self):
        """Dense conditional probability rows P(other index | cell); empty
        cells are left as all-zero rows (flagged by cell_counts == 0)."""
        dense = np.asarray(self.pair_counts.todense(), dtype=float)
        occ = self.cell_counts > 0
        dense[occ] /= self.cell_counts[occ, None]
        return dense

    def cond_mean(self, cell, other_index):
        cnt = self.pair_counts[cell, other_index]
        if cnt == 0:
            raise ValueError(f"pair (cell={cell}, index={other_index}) has no samples")
        cols = np.arange(other_index * self.dim, (other_index + 1) * self.dim)
        return np.asarray(self.est_sums[cell, cols].todense()).ravel() / cnt


@dataclass
class TrainingSet:
    """Precomputed per-sample quantities shared by all update steps."""

    cfg: object
    pair: object
    x: np.ndarray        # (n, 2N) stacked raw sources
    est: np.ndarray      # (n, 2N) stacked MMSE estimates
    cells1: np.ndarray
    cells2: np.ndarray
    sq1: list
    sq2: list
    n_cells1: int
    n_cells2: int


@dataclass
class EvalResult:
    """Held-out distortions with standard errors of the mean."""

    d: float
    d_cs: float
    d_q: float
    se_d: float
    se_d_cs: float
    se_d_q: float
    d_term1: float
    d_term2: float
    decomp_residual: float
    se_decomp: float
    n_samples: int


@dataclass
class TrainedSystem:
    cfg: object
    pair: object
    sq1: list
    sq2: list
    enc1: EncoderTable
    enc2: EncoderTable
    dec: DecoderCodebook
    history: np.ndarray   # surrogate cost after every recorded update step
    converged: bool
    n_sweeps: int
    final_train_mse: float


def build_training_set(cfg, rng=None, mixture=None):
    """Generate the training samples, their MMSE estimates, the per-entry
    scalar codebooks, and the pre-quantized cell ids for both terminals."""
    if rng is None:
        rng = substream(cfg.seed, TRAIN_STREAM)
    pair = build_sensing_pair(cfg.n, cfg.m)
    batch = sample_batch(cfg, cfg.n_train, rng)
    y1 = measure_batch(batch.x1, pair.phi1, cfg.sigma_w_sq[0], rng)
    y2 = measure_batch(batch.x2, pair.phi2, cfg.sigma_w_sq[1], rng)
    mix = mixture if mixture is not None else MixtureEstimator(pair, cfg)
    est = mix.estimate_rows(np.hstack([y1, y2]))
    sq1 = train_measurement_codebooks(y1, cfg.r_y)
    sq2 = train_measurement_codebooks(y2, cfg.r_y)
    return TrainingSet(
        cfg=cfg,
        pair=pair,
        x=np.hstack([batch.x1, batch.x2]),
        est=est,
        cells1=cells_of_batch(sq1, y1),
        cells2=cells_of_batch(sq2, y2),
        sq1=sq1,
        sq2=sq2,
        n_cells1=cell_space_size(sq1),
        n_cells2=cell_space_size(sq2),
    )


def build_tables(ts, enc_other, terminal):
    """Empirical P(other index | own cell) and conditional-estimate sums.

    Conditional means are taken over the per-sample MMSE estimates rather
    than the raw sources: they share the same expectation per (cell, index)
    and carry less Monte-Carlo variance.
    """
    if terminal == 1:
        cells_own, cells_other, n_cells = ts.cells1, ts.cells2, ts.n_cells1
    elif terminal == 2:
        cells_own, cells_other, n_cells = ts.cells2, ts.cells1, ts.n_cells2
    else:
        raise ValueError("terminal must be 1 or 2")
    idx_other = enc_other.map[cells_other]
    n_other = enc_other.n_indices
    dim = ts.x.shape[1]
    n = cells_own.shape[0]

    ones = np.ones(n)
    pair_counts = sp.coo_matrix(
        (ones, (cells_own, idx_other)), shape=(n_cells, n_other)
    ).tocsr()  # duplicate entries are summed on conversion

    rows = np.repeat(cells_own, dim)
    cols = (idx_other[:, None] * dim + np.arange(dim)).ravel()
    est_sums = sp.coo_matrix(
        (ts.est.ravel(), (rows, cols)), shape=(n_cells, n_other * dim)
    ).tocsr()

    cell_counts = np.bincount(cells_own, minlength=n_cells)
    return TrainingTables(
        terminal=terminal,
        n_cells=n_cells,
        n_other=n_other,
        dim=dim,
        pair_counts=pair_counts,
        est_sums=est_sums,
        cell_counts=cell_counts,
    )


def _own_view(dec, terminal):
    """Codevectors arranged (own index, other index * dim) plus the matching
    squared-norm table (own index, other index)."""
    dim = dec.vectors.shape[1]
    cube = dec.vectors.reshape(dec.n1, dec.n2, dim)
    sq = np.einsum("abd,abd->ab", cube, cube)
    if terminal == 1:
        return cube.reshape(dec.n1, dec.n2 * dim), sq
    return cube.transpose(1, 0, 2).reshape(dec.n2, dec.n1 * dim), sq.T


def encoder_costs(tables, dec):
    """Per-cell encoding costs: for each own index i, the transition-weighted
    sum over the other index of |codevector|^2 - 2 <conditional mean, codevector>.

    Rows are scaled by the cell's sample count rather than normalized to
    probabilities; the argmin per cell is invariant to any positive row scale.
    """
    dmat, sq = _own_view(dec, tables.terminal)
    term1 = tables.pair_counts @ sq.T          # (n_cells, n_own)
    term2 = tables.est_sums @ dmat.T           # (n_cells, n_own)
    return term1 - 2.0 * term2


def _fill_empty_cells(idx, cell_counts):
    """Empty cells inherit the index of the nearest occupied cell in packed
    cell-id distance (ties toward the smaller id)."""
    occupied = np.flatnonzero(cell_counts > 0)
    if occupied.size == 0:
        raise ValueError("no occupied cells; training set is empty")
    empty = np.flatnonzero(cell_counts == 0)
    if empty.size == 0:
        return idx
    pos = np.searchsorted(occupied, empty)
    left = occupied[np.clip(pos - 1, 0, occupied.size - 1)]
    right = occupied[np.clip(pos, 0, occupied.size - 1)]
    pick_left = np.abs(empty - left) <= np.abs(right - empty)  # tie -> smaller id
    nearest = np.where(pick_left, left, right)
    idx[empty] = idx[nearest]
    return idx


def update_encoder(terminal, tables, dec, cfg):
    """Necessary-optimality encoder: each occupied cell takes the index that
    minimizes its encoding cost, ties toward the smaller index."""
    if tables.terminal != terminal:
        raise ValueError("tables were built for the other terminal")
    costs = encoder_costs(tables, dec)
    idx = np.argmin(costs, axis=1)  # first minimum = smallest index on ties
    idx = _fill_empty_cells(idx, tables.cell_counts)
    n_own = dec.n1 if terminal == 1 else dec.n2
    return EncoderTable(terminal=terminal, map=idx.astype(np.int64), n_indices=n_own)


def update_decoder(ts, enc1, enc2, reference="source"):
    """MSE-minimizing decoder given the encoders: the empirical conditional
    mean per index pair.

    reference='source' averages the raw source samples (the deployed,
    Monte-Carlo form of the conditional mean); reference='estimate' averages
    the per-sample MMSE estimates, the exact minimizer of the training
    surrogate used inside the alternate-iterate loop.
    """
    data = {"source": ts.x, "estimate": ts.est}[reference]
    n1, n2 = enc1.n_indices, enc2.n_indices
    joint = enc1.map[ts.cells1] * n2 + enc2.map[ts.cells2]
    counts = np.bincount(joint, minlength=n1 * n2)
    dim = data.shape[1]
    sums = np.empty((n1 * n2, dim))
    for d in range(dim):
        sums[:, d] = np.bincount(joint, weights=data[:, d], minlength=n1 * n2)
    vectors = np.zeros_like(sums)
    occ = counts > 0
    vectors[occ] = sums[occ] / counts[occ, None]
    return DecoderCodebook(vectors=vectors, counts=counts, n1=n1, n2=n2)


def training_cost(ts, enc1, enc2, dec, reference="estimate"):
    """Empirical (1/2K) mean |reference - decoded|^2 on the training set."""
    data = {"source": ts.x, "estimate": ts.est}[reference]
    joint = enc1.map[ts.cells1] * dec.n2 + enc2.map[ts.cells2]
    diff = data - dec.vectors[joint]
    return float(np.einsum("ij,ij->i", diff, diff).mean() / (2.0 * ts.cfg.k))


def train(cfg, verbose=False):
    """Alternate-iterate design: seeded random encoder init, one decoder
    update, then sweeps of (encoder 1, decoder, encoder 2, decoder) until the
    relative surrogate improvement over a full sweep drops below SWEEP_TOL or
    MAX_SWEEPS is reached (returning best-so-far with converged=False)."""
    ts = build_training_set(cfg)
    n1, n2 = 1 << cfg.r1, 1 << cfg.r2

    rng_init = substream(cfg.seed, INIT_STREAM)
    enc1 = EncoderTable(1, rng_init.integers(0, n1, size=ts.n_cells1), n1)
    enc2 = EncoderTable(2, rng_init.integers(0, n2, size=ts.n_cells2), n2)
    dec = update_decoder(ts, enc1, enc2, reference="estimate")
    history = [training_cost(ts, enc1, enc2, dec)]

    converged = False
    sweeps = 0
    prev_end = history[0]
    for sweeps in range(1, MAX_SWEEPS + 1):
        enc1 = update_encoder(1, build_tables(ts, enc2, 1), dec, cfg)
        history.append(training_cost(ts, enc1, enc2, dec))
        dec = update_decoder(ts, enc1, enc2, reference="estimate")
        history.append(training_cost(ts, enc1, enc2, dec))
        enc2 = update_encoder(2, build_tables(ts, enc1, 2), dec, cfg)
        history.append(training_cost(ts, enc1, enc2, dec))
        dec = update_decoder(ts, enc1, enc2, reference="estimate")
        history.append(training_cost(ts, enc1, enc2, dec))
        cur = history[-1]
        if verbose:
            print(f"[train] sweep {sweeps}: surrogate cost {cur:.6g}")
        if prev_end - cur < SWEEP_TOL * max(prev_end, 1e-300):
            converged = True
            break
        prev_end = cur

    final_dec = update_decoder(ts, enc1, enc2, reference="source")
    final_mse = training_cost(ts, enc1, enc2, final_dec, reference="source")
    if verbose and not converged:
        print(f"[train] not converged after {MAX_SWEEPS} sweeps; keeping best-so-far")
    return TrainedSystem(
        cfg=cfg,
        pair=ts.pair,
        sq1=ts.sq1,
        sq2=ts.sq2,
        enc1=enc1,
        enc2=enc2,
        dec=final_dec,
        history=np.asarray(history),
        converged=converged,
        n_sweeps=sweeps,
        final_train_mse=final_mse,
    )


def encode(sys, terminal, y):
    """Pre-quantize the measurement vector and look up its index."""
    if terminal == 1:
        cbs, enc = sys.sq1, sys.enc1
    elif terminal == 2:
        cbs, enc = sys.sq2, sys.enc2
    else:
        raise ValueError("terminal must be 1 or 2")
    cell = cells_of_batch(cbs, np.asarray(y, dtype=float)[None, :])[0]
    return int(enc.map[cell])


def decode(sys, i1, i2):
    """Split the stacked codevector for an index pair into (x1_hat, x2_hat)."""
    if not (0 <= i1 < sys.dec.n1 and 0 <= i2 < sys.dec.n2):
        raise ValueError(f"index pair ({i1}, {i2}) out of range")
    v = sys.dec.vector(i1, i2)
    return v[: sys.cfg.n].copy(), v[sys.cfg.n:].copy()


def evaluate_end_to_end(sys, n_eval=None, rng=None, use_estimator_as_decoder=False):
    """Held-out end-to-end D, CS reconstruction D_cs, and quantization D_q,
    each with its standard error, plus the per-sample decomposition residual
    d - d_cs - d_q (zero in expectation for the exact MMSE reference)."""
    cfg = sys.cfg
    if n_eval is None:
        n_eval = cfg.n_eval
    if rng is None:
        rng = substream(cfg.seed, EVAL_STREAM)
    mix = MixtureEstimator(sys.pair, cfg)

    sums = np.zeros(6)   # d, dcs, dq, d1, d2, delta
    sq_sums = np.zeros(6)
    total = 0
    while total < n_eval:
        take = min(EVAL_CHUNK, n_eval - total)
        batch = sample_batch(cfg, take, rng)
        y1 = measure_batch(batch.x1, sys.pair.phi1, cfg.sigma_w_sq[0], rng)
        y2 = measure_batch(batch.x2, sys.pair.phi2, cfg.sigma_w_sq[1], rng)
        x = np.hstack([batch.x1, batch.x2])
        est = mix.estimate_rows(np.hstack([y1, y2]))
        if use_estimator_as_decoder:
            xhat = est
        else:
            joint = (
                sys.enc1.map[cells_of_batch(sys.sq1, y1)] * sys.dec.n2
                + sys.enc2.map[cells_of_batch(sys.sq2, y2)]
            )
            xhat = sys.dec.vectors[joint]

        scale = 1.0 / (2.0 * cfg.k)
        ex = x - xhat
        d = np.einsum("ij,ij->i", ex, ex) * scale
        ec = x - est
        dcs = np.einsum("ij,ij->i", ec, ec) * scale
        eq = est - xhat
        dq = np.einsum("ij,ij->i", eq, eq) * scale
        e1 = ex[:, : cfg.n]
        e2 = ex[:, cfg.n:]
        d1 = np.einsum("ij,ij->i", e1, e1) / cfg.k
        d2 = np.einsum("ij,ij->i", e2, e2) / cfg.k
        delta = d - dcs - dq

        for i, arr in enumerate((d, dcs, dq, d1, d2, delta)):
            sums[i] += arr.sum()
            sq_sums[i] += (arr * arr).sum()
        total += take

    means = sums / total
    variances = np.maximum(sq_sums / total - means * means, 0.0)
    ses = np.sqrt(variances / total)
    return EvalResult(
        d=means[0],
        d_cs=means[1],
        d_q=means[2],
        se_d=ses[0],
        se_d_cs=ses[1],
        se_d_q=ses[2],
        d_term1=means[3],
        d_term2=means[4],
        decomp_residual=means[5],
        se_decomp=ses[5],
        n_samples=total,
    )
