"""Monte Carlo BER engine over the full chain.

One trial: draw bits, modulate, draw a fading realization, add noise at the
requested SNR, detect, demap, count bit errors. Trials are independent
block-fading uses. Trial t of SNR point i consumes the dedicated stream
seeded by (master_seed, i, t), so results are bit-identical for any worker
count and any execution order; early stopping scans the per-trial error
counts in index order.

SNR convention: average receive SNR per resource with unit-energy symbols,
unit-variance fading and tight frames, i.e. noise_variance =
(K/M) 10^(-snr_db/10). For K = M this is the textbook per-symbol SNR.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .detectors import DetectorConfig, detect
from .frames import (
    Frame,
    generate_incoherent_tight_frame,
    generate_random_unit_norm_frame,
    make_tight,
    read_frame_file,
)
from .phy import (
    Constellation,
    demap,
    effective_matrix,
    get_constellation,
    modulate,
    sample_channel,
    transmit,
)

_SERIAL_BLOCK = 256
_PARALLEL_BLOCK_PER_WORKER = 64


@dataclass
class SimConfig:
    """Full description of one BER experiment.

    frame selects the spreading matrix source: "identity" (requires k = m),
    "random-tight", "incoherent", or "file:<path>". fresh_frame_per_trial
    redraws the frame inside every trial from the trial stream instead of
    holding one frame for the whole sweep.
    """

    m: int
    k: int
    mod: str = "qpsk"
    frame: str = "incoherent"
    detector: DetectorConfig = field(default_factory=DetectorConfig)
    snr_db: tuple = (0.0, 4.0, 8.0, 12.0, 16.0, 20.0)
    target_bit_errors: int = 400
    max_trials: int = 10 ** 6
    master_seed: int = 0
    fresh_frame_per_trial: bool = False
    frame_restarts: int = 8
    frame_iters: int = 100

    def __post_init__(self):
        if self.m < 1 or self.k < self.m:
            raise ValueError(f"need 1 <= m <= k, got m={self.m} k={self.k}")
        self.snr_db = tuple(float(s) for s in self.snr_db)
        if not self.snr_db:
            raise ValueError("snr_db list must be non-empty")
        if any(b <= a for a, b in zip(self.snr_db, self.snr_db[1:])):
            raise ValueError("snr_db values must be strictly increasing")
        if self.target_bit_errors < 1:
            raise ValueError("target_bit_errors must be >= 1")
        if self.max_trials < 1:
            raise ValueError("max_trials must be >= 1")
        get_constellation(self.mod)  # validate the name early
        if self.frame == "identity" and self.k != self.m:
            raise ValueError("identity frame requires k = m")


@dataclass
class BerPoint:
    """One estimated BER at one SNR."""

    snr_db: float
    trials: int
    bit_errors: int
    bits_total: int
    ber: float
    stopped_by: str  # "target_errors" or "max_trials"


@dataclass
class BerCurve:
    """Sweep result: the config it came from plus one point per SNR."""

    config: SimConfig
    points: list


def noise_variance_for(cfg: SimConfig, snr_db: float) -> float:
    return (cfg.k / cfg.m) * 10.0 ** (-snr_db / 10.0)


def rayleigh_bpsk_ber(snr_db: float) -> float:
    """Closed-form BPSK error rate over Rayleigh fading, ML detection."""
    g = 10.0 ** (snr_db / 10.0)
    return 0.5 * (1.0 - math.sqrt(g / (1.0 + g)))


def build_frame(cfg: SimConfig, seed: int | None = None) -> Frame:
    """Materialize cfg.frame; seed defaults to the master seed."""
    seed = cfg.master_seed if seed is None else seed
    src = cfg.frame
    if src == "identity":
        if cfg.k != cfg.m:
            raise ValueError("identity frame requires k = m")
        return Frame(cfg.m, cfg.k, np.eye(cfg.m, dtype=np.complex128),
                     tight=True)
    if src == "random-tight":
        return make_tight(generate_random_unit_norm_frame(cfg.m, cfg.k, seed))
    if src == "incoherent":
        f, _ = generate_incoherent_tight_frame(
            cfg.m, cfg.k, seed, cfg.frame_restarts, cfg.frame_iters)
        return f
    if src.startswith("file:"):
        f = read_frame_file(src[5:])
        if (f.m, f.k) != (cfg.m, cfg.k):
            raise ValueError(f"frame file is {f.m}x{f.k}, config wants "
                             f"{cfg.m}x{cfg.k}")
        return f
    raise ValueError(f"unknown frame source {src!r}")


def run_trial(
    cfg: SimConfig,
    snr_db: float,
    frame: Frame | None,
    rng: np.random.Generator,
    c: Constellation | None = None,
) -> int:
    """One end-to-end channel use; returns the bit-error count.

    Stream consumption order is fixed: fresh-frame seed (only when
    fresh_frame_per_trial), data bits, fading gains, noise.
    """
    c = c or get_constellation(cfg.mod)
    if cfg.fresh_frame_per_trial or frame is None:
        frame = build_frame(cfg, seed=int(rng.integers(2 ** 63)))
    nv = noise_variance_for(cfg, snr_db)
    bits = rng.integers(0, 2, cfg.k * c.bits_per_symbol)
    s = modulate(bits, c, cfg.k)
    h = sample_channel(cfg.m, rng)
    y = transmit(frame, h, s, nv, rng)
    a = effective_matrix(frame, h)
    result = detect(y, a, c, cfg.detector, noise_variance=nv)
    bits_hat = demap(result.decided, c)
    return int(np.sum(bits != bits_hat))


def _trial_range(cfg: SimConfig, snr_db: float, snr_index: int,
                 frame: Frame | None, start: int, stop: int) -> np.ndarray:
    c = get_constellation(cfg.mod)
    out = np.empty(stop - start, dtype=np.int64)
    for t in range(start, stop):
        rng = np.random.default_rng([cfg.master_seed, snr_index, t])
        out[t - start] = run_trial(cfg, snr_db, frame, rng, c)
    return out


def _trial_range_star(args) -> np.ndarray:
    return _trial_range(*args)


def run_ber_point(
    cfg: SimConfig,
    snr_db: float,
    frame: Frame | None = None,
    workers: int = 1,
) -> BerPoint:
    """Accumulate trials at one SNR until the error target or trial cap.

    Trial t always runs under stream (master_seed, snr_index, t) and the
    stopping scan walks trials in index order, so the returned point is
    identical for any workers value.
    """
    snr_index = cfg.snr_db.index(float(snr_db))
    if frame is None and not cfg.fresh_frame_per_trial:
        frame = build_frame(cfg)

    errors = 0
    trials = 0
    stopped_by = "max_trials"
    block = _SERIAL_BLOCK if workers <= 1 \
        else workers * _PARALLEL_BLOCK_PER_WORKER
    pool = ProcessPoolExecutor(max_workers=workers) if workers > 1 else None
    try:
        done = 0
        while done < cfg.max_trials:
            stop = min(done + block, cfg.max_trials)
            if pool is None:
                errs = _trial_range(cfg, snr_db, snr_index, frame, done, stop)
            else:
                bounds = np.linspace(done, stop, workers + 1, dtype=int)
                jobs = [(cfg, snr_db, snr_index, frame, int(a), int(b))
                        for a, b in zip(bounds[:-1], bounds[1:]) if b > a]
                errs = np.concatenate(
                    list(pool.map(_trial_range_star, jobs)))
            for e in errs:
                trials += 1
                errors += int(e)
                if errors >= cfg.target_bit_errors:
                    stopped_by = "target_errors"
                    break
            if stopped_by == "target_errors":
                break
            done = stop
    finally:
        if pool is not None:
            pool.shutdown()

    c = get_constellation(cfg.mod)
    bits_total = trials * cfg.k * c.bits_per_symbol
    return BerPoint(
        snr_db=float(snr_db),
        trials=trials,
        bit_errors=errors,
        bits_total=bits_total,
        ber=errors / bits_total,
        stopped_by=stopped_by,
    )


def run_sweep(cfg: SimConfig, workers: int = 1) -> BerCurve:
    """One BerPoint per configured SNR; the frame is built once unless
    fresh_frame_per_trial is set."""
    frame = None if cfg.fresh_frame_per_trial else build_frame(cfg)
    points = [run_ber_point(cfg, s, frame, workers) for s in cfg.snr_db]
    return BerCurve(config=cfg, points=points)
