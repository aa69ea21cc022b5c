"""Single-file serialization of trained systems (versioned npz archive).

The archive is self-describing: all config scalars, the sensing matrices,
the per-entry scalar codebook levels, both encoder tables, the decoder
codevectors with occupancy counts, and the training history.  Arrays round
trip bit-exactly.
"""

import numpy as np

from .dvq import DecoderCodebook, EncoderTable, TrainedSystem
from .model import SensingPair, SystemConfig
from .sq import ScalarCodebook, _boundaries

FORMAT_VERSION = 1


class SystemFileError(RuntimeError):
    """Unreadable, corrupted, or wrong-version system file."""


def save_system(sys, path):
    cfg = sys.cfg
    np.savez(
        path,
        format_version=np.array([FORMAT_VERSION], dtype=np.int64),
        cfg_ints=np.array(
            [cfg.n, cfg.k, cfg.m, cfg.r1, cfg.r2, cfg.r_y, cfg.n_train, cfg.n_eval],
            dtype=np.int64,
        ),
        cfg_seed=np.array([cfg.seed], dtype=np.uint64),
        cfg_reals=np.array([cfg.rho, cfg.sigma_w_sq[0], cfg.sigma_w_sq[1]]),
        phi1=sys.pair.phi1,
        phi2=sys.pair.phi2,
        sq1_levels=np.stack([cb.levels for cb in sys.sq1]),
        sq2_levels=np.stack([cb.levels for cb in sys.sq2]),
        enc1_map=sys.enc1.map,
        enc2_map=sys.enc2.map,
        dec_vectors=sys.dec.vectors,
        dec_counts=sys.dec.counts,
        dec_shape=np.array([sys.dec.n1, sys.dec.n2], dtype=np.int64),
        history=sys.history,
        converged=np.array([sys.converged], dtype=np.bool_),
        n_sweeps=np.array([sys.n_sweeps], dtype=np.int64),
        final_train_mse=np.array([sys.final_train_mse]),
    )


def load_system(path):
    try:
        with np.load(path) as data:
            if "format_version" not in data:
                raise SystemFileError(f"{path}: missing format version header")
            version = int(data["format_version"][0])
            if version != FORMAT_VERSION:
                raise SystemFileError(
                    f"{path}: format version {version} not supported "
                    f"(expected {FORMAT_VERSION})"
                )
            ints = data["cfg_ints"]
            reals = data["cfg_reals"]
            cfg = SystemConfig(
                n=int(ints[0]),
                k=int(ints[1]),
                m=int(ints[2]),
                rho=float(reals[0]),
                sigma_w_sq=(float(reals[1]), float(reals[2])),
                r1=int(ints[3]),
                r2=int(ints[4]),
                r_y=int(ints[5]),
                seed=int(data["cfg_seed"][0]),
                n_train=int(ints[6]),
                n_eval=int(ints[7]),
            )
            pair = SensingPair(phi1=data["phi1"], phi2=data["phi2"])
            sq1 = [_codebook(row) for row in data["sq1_levels"]]
            sq2 = [_codebook(row) for row in data["sq2_levels"]]
            n1, n2 = (int(v) for v in data["dec_shape"])
            return TrainedSystem(
                cfg=cfg,
                pair=pair,
                sq1=sq1,
                sq2=sq2,
                enc1=EncoderTable(1, data["enc1_map"], n1),
                enc2=EncoderTable(2, data["enc2_map"], n2),
                dec=DecoderCodebook(
                    vectors=data["dec_vectors"],
                    counts=data["dec_counts"],
                    n1=n1,
                    n2=n2,
                ),
                history=data["history"],
                converged=bool(data["converged"][0]),
                n_sweeps=int(data["n_sweeps"][0]),
                final_train_mse=float(data["final_train_mse"][0]),
            )
    except SystemFileError:
        raise
    except (OSError, ValueError, KeyError, EOFError) as exc:
        raise SystemFileError(f"{path}: not a readable system file ({exc})") from exc


def _codebook(levels):
    return ScalarCodebook(levels=levels, boundaries=_boundaries(levels))
