"""LBG-trained scalar pre-quantization of measurement entries.

Each measurement entry gets its own codebook (the truncated-DCT sensing rows
give the entries different marginal variances), trained on that entry's
samples.  A measurement vector is then identified by the mixed-radix packing
of its per-entry level indices; encoder tables are defined over these cells.
"""

from dataclasses import dataclass

import numpy as np

DEFAULT_TOL = 1e-6
DEFAULT_MAX_ITER = 200

# Hard cap on the packed cell-space size; beyond this the dense encoder
# tables stop being desk-scale.
MAX_CELL_SPACE = 1 << 26


@dataclass
class ScalarCodebook:
    """Sorted reproduction levels and their nearest-neighbor boundaries."""

    levels: np.ndarray
    boundaries: np.ndarray

    def __post_init__(self):
        self.levels = np.asarray(self.levels, dtype=float)
        self.boundaries = np.asarray(self.boundaries, dtype=float)

    def __len__(self):
        return len(self.levels)


def _boundaries(levels):
    return 0.5 * (levels[:-1] + levels[1:])


def lbg_train(samples, l_levels, tol=DEFAULT_TOL, max_iter=DEFAULT_MAX_ITER):
    """Lloyd/LBG iterations: nearest-neighbor partition then centroid step,
    until the relative distortion drop falls below tol or max_iter is hit.

    Empty cells are resolved by splitting the most populous cell (lowest
    index on ties) at its median into two half-means; the per-iteration
    distortion stays non-increasing under this move.
    """
    samples = np.asarray(samples, dtype=float).ravel()
    if samples.size == 0:
        raise ValueError("cannot train a codebook on an empty sample set")
    if l_levels < 1:
        raise ValueError("l_levels must be at least 1")
    if l_levels == 1:
        lv = np.array([samples.mean()])
        return ScalarCodebook(levels=lv, boundaries=_boundaries(lv))

    # deterministic spread init: interior quantiles
    qs = (np.arange(l_levels) + 0.5) / l_levels
    levels = np.quantile(samples, qs)
    levels = _strictly_increasing(levels)

    prev = np.inf
    for _ in range(max_iter):
        idx = np.searchsorted(_boundaries(levels), samples, side="left")
        counts = np.bincount(idx, minlength=l_levels)
        sums = np.bincount(idx, weights=samples, minlength=l_levels)

        empty = np.flatnonzero(counts == 0)
        for e in empty:
            src = int(np.argmax(counts))  # most populous; argmax ties -> lowest index
            members = samples[idx == src]
            members.sort()
            half = members.size // 2
            lo, hi = members[:half], members[half:]
            if lo.size == 0 or hi.size == 0 or lo.mean() == hi.mean():
                continue  # cannot split further (too few distinct values)
            levels[src] = lo.mean()
            levels[e] = hi.mean()
            idx = np.searchsorted(_boundaries(np.sort(levels)), samples, side="left")
            order = np.argsort(levels, kind="stable")
            levels = levels[order]
            counts = np.bincount(idx, minlength=l_levels)
            sums = np.bincount(idx, weights=samples, minlength=l_levels)

        occupied = counts > 0
        levels[occupied] = sums[occupied] / counts[occupied]
        levels = _strictly_increasing(np.sort(levels))

        idx = np.searchsorted(_boundaries(levels), samples, side="left")
        distortion = np.mean((samples - levels[idx]) ** 2)
        assert distortion <= prev * (1.0 + 1e-12) + 1e-15, "LBG distortion increased"
        if prev - distortion < tol * max(prev, 1e-300):
            prev = distortion
            break
        prev = distortion

    return ScalarCodebook(levels=levels, boundaries=_boundaries(levels))


def _strictly_increasing(levels):
    # collapse exact duplicates (possible when there are fewer distinct
    # samples than levels) by nudging with the smallest representable step
    for i in range(1, len(levels)):
        if levels[i] <= levels[i - 1]:
            levels[i] = np.nextafter(levels[i - 1], np.inf)
    return levels


def quantize_entry(cb, v):
    """Index of the nearest level; ties on a boundary go to the lower index."""
    return int(np.searchsorted(cb.boundaries, v, side="left"))


def quantize_batch(cb, values):
    return np.searchsorted(cb.boundaries, values, side="left")


def cell_of(cbs, y):
    """Mixed-radix packing of per-entry level indices (entry 0 most
    significant); bijective with the index tuple."""
    y = np.asarray(y, dtype=float)
    if y.shape[0] != len(cbs):
        raise ValueError(f"expected {len(cbs)} entries, got {y.shape[0]}")
    cell = 0
    for cb, v in zip(cbs, y):
        cell = cell * len(cb) + quantize_entry(cb, v)
    return cell


def cells_of_batch(cbs, y_rows):
    """Vectorized cell_of over the rows of an (n, M) measurement array."""
    y_rows = np.asarray(y_rows, dtype=float)
    if y_rows.shape[1] != len(cbs):
        raise ValueError(f"expected {len(cbs)} entries, got {y_rows.shape[1]}")
    cells = np.zeros(y_rows.shape[0], dtype=np.int64)
    for j, cb in enumerate(cbs):
        cells = cells * len(cb) + quantize_batch(cb, y_rows[:, j])
    return cells


def unpack_cell(cbs, cell):
    """Inverse of cell_of: the per-entry index tuple."""
    out = []
    for cb in reversed(cbs):
        out.append(int(cell % len(cb)))
        cell //= len(cb)
    return tuple(reversed(out))


def cell_space_size(cbs):
    size = 1
    for cb in cbs:
        size *= len(cb)
    return size


def train_measurement_codebooks(y_rows, r_y, tol=DEFAULT_TOL, max_iter=DEFAULT_MAX_ITER):
    """One 2^r_y-level codebook per measurement entry, trained column-wise."""
    y_rows = np.asarray(y_rows, dtype=float)
    l_levels = 1 << r_y
    cbs = [lbg_train(y_rows[:, j], l_levels, tol, max_iter) for j in range(y_rows.shape[1])]
    if cell_space_size(cbs) > MAX_CELL_SPACE:
        raise ValueError(
            f"cell space 2^(r_y*M) = {cell_space_size(cbs)} exceeds the desk-scale cap"
        )
    return cbs
