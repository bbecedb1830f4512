import math

import numpy as np
import pytest

from mcnoma.detectors import DetectorConfig
from mcnoma.frames import generate_random_unit_norm_frame, make_tight, \
    write_frame_file
from mcnoma.phy import get_constellation, modulate, sample_channel, transmit
from mcnoma.sim import (
    BerPoint,
    SimConfig,
    build_frame,
    noise_variance_for,
    rayleigh_bpsk_ber,
    run_ber_point,
    run_sweep,
    run_trial,
)

RAYLEIGH_10DB = 0.023268705377203824  # 0.5 (1 - sqrt(10/11))


def _cfg(**kw):
    base = dict(m=4, k=8, mod="bpsk", frame="random-tight",
                detector=DetectorConfig(kind="gsd"), snr_db=(10.0,),
                target_bit_errors=400, max_trials=1000, master_seed=0)
    base.update(kw)
    return SimConfig(**base)


def test_config_validation():
    with pytest.raises(ValueError):
        _cfg(m=5, k=4)
    with pytest.raises(ValueError):
        _cfg(snr_db=())
    with pytest.raises(ValueError):
        _cfg(snr_db=(4.0, 4.0))
    with pytest.raises(ValueError):
        _cfg(snr_db=(8.0, 4.0))
    with pytest.raises(ValueError):
        _cfg(mod="8psk")
    with pytest.raises(ValueError):
        _cfg(frame="identity")  # k != m
    with pytest.raises(ValueError):
        _cfg(target_bit_errors=0)
    with pytest.raises(ValueError):
        _cfg(max_trials=0)


def test_noise_variance_convention():
    assert noise_variance_for(_cfg(m=1, k=1, frame="identity"), 10.0) \
        == pytest.approx(0.1, abs=1e-15)
    assert noise_variance_for(_cfg(), 0.0) == pytest.approx(2.0, abs=1e-15)
    assert noise_variance_for(_cfg(), math.inf) == 0.0


def test_rayleigh_closed_form():
    assert rayleigh_bpsk_ber(10.0) == pytest.approx(RAYLEIGH_10DB, abs=1e-15)


def test_build_frame_sources(tmp_path):
    eye = build_frame(_cfg(m=4, k=4, frame="identity"))
    assert np.array_equal(eye.entries, np.eye(4))
    rt = build_frame(_cfg(frame="random-tight"))
    assert rt.tight
    t = make_tight(generate_random_unit_norm_frame(4, 8, 5))
    path = tmp_path / "f.txt"
    write_frame_file(t, str(path))
    loaded = build_frame(_cfg(frame=f"file:{path}"))
    assert np.array_equal(loaded.entries, t.entries)
    with pytest.raises(ValueError):
        build_frame(_cfg(m=2, k=4, frame=f"file:{path}"))
    with pytest.raises(ValueError):
        build_frame(_cfg(frame="fourier"))


def test_run_trial_noiseless_ml_is_exact():
    cfg = _cfg(detector=DetectorConfig(kind="ml_exhaustive"),
               snr_db=(math.inf,))
    frame = build_frame(cfg)
    for t in range(50):
        rng = np.random.default_rng([cfg.master_seed, 0, t])
        assert run_trial(cfg, math.inf, frame, rng) == 0


def test_run_trial_deterministic():
    cfg = _cfg(snr_db=(0.0,))
    frame = build_frame(cfg)
    a = [run_trial(cfg, 0.0, frame, np.random.default_rng([9, 0, t]))
         for t in range(30)]
    b = [run_trial(cfg, 0.0, frame, np.random.default_rng([9, 0, t]))
         for t in range(30)]
    assert a == b
    assert sum(a) > 0  # 0 dB: errors must actually occur


def test_run_trial_matches_matched_filter_oracle():
    # scalar BPSK over Rayleigh: ML reduces to the sign of Re(h* y)
    cfg = _cfg(m=1, k=1, frame="identity",
               detector=DetectorConfig(kind="ml_exhaustive"),
               snr_db=(10.0,), master_seed=77)
    frame = build_frame(cfg)
    nv = noise_variance_for(cfg, 10.0)
    c = get_constellation("bpsk")
    for t in range(300):
        got = run_trial(cfg, 10.0, frame, np.random.default_rng([77, 0, t]))
        rng = np.random.default_rng([77, 0, t])
        bits = rng.integers(0, 2, 1)
        s = modulate(bits, c, 1)
        h = sample_channel(1, rng)
        y = transmit(frame, h, s, nv, rng)
        stat = float(np.real(np.conj(h[0]) * y[0]))
        decided = 1.0 if stat >= 0 else -1.0
        assert got == int(decided != s[0].real)


def test_ber_point_huge_snr_error_free():
    cfg = _cfg(detector=DetectorConfig(kind="ml_exhaustive"),
               snr_db=(80.0,), max_trials=300)
    pt = run_ber_point(cfg, 80.0)
    assert pt.ber == 0.0
    assert pt.bit_errors == 0
    assert pt.trials == 300
    assert pt.stopped_by == "max_trials"
    assert pt.bits_total == 300 * 8


def test_ber_point_target_stopping_and_exact_ratio():
    cfg = _cfg(snr_db=(0.0,), target_bit_errors=25, max_trials=5000)
    pt = run_ber_point(cfg, 0.0)
    assert pt.stopped_by == "target_errors"
    assert pt.bit_errors >= 25
    assert pt.bits_total == pt.trials * 8
    assert pt.ber == pt.bit_errors / pt.bits_total


def test_ber_point_unknown_snr_rejected():
    cfg = _cfg(snr_db=(10.0,))
    with pytest.raises(ValueError):
        run_ber_point(cfg, 12.0)


def test_ber_point_rayleigh_calibration_10db():
    cfg = _cfg(m=1, k=1, frame="identity",
               detector=DetectorConfig(kind="ml_exhaustive"),
               snr_db=(10.0,), target_bit_errors=200, max_trials=100_000,
               master_seed=2)
    pt = run_ber_point(cfg, 10.0)
    assert pt.bit_errors >= 200
    sigma = math.sqrt(RAYLEIGH_10DB * (1 - RAYLEIGH_10DB) / pt.trials)
    assert abs(pt.ber - RAYLEIGH_10DB) <= 3 * sigma


def test_ber_point_deterministic_repeat():
    cfg = _cfg(m=2, k=4, snr_db=(4.0,), target_bit_errors=50,
               max_trials=2000, master_seed=5)
    assert run_ber_point(cfg, 4.0) == run_ber_point(cfg, 4.0)


def test_ber_point_worker_count_invariance():
    cfg = _cfg(m=2, k=4, snr_db=(4.0,), target_bit_errors=50,
               max_trials=2000, master_seed=5)
    serial = run_ber_point(cfg, 4.0, workers=1)
    parallel = run_ber_point(cfg, 4.0, workers=3)
    assert serial == parallel


def test_sweep_single_point_degenerate():
    cfg = _cfg(m=2, k=4, snr_db=(6.0,), target_bit_errors=30, max_trials=1500)
    curve = run_sweep(cfg)
    assert len(curve.points) == 1
    assert curve.points[0] == run_ber_point(cfg, 6.0)
    assert curve.config is cfg


def test_sweep_orders_points_by_snr():
    cfg = _cfg(m=2, k=4, snr_db=(0.0, 6.0), target_bit_errors=20,
               max_trials=800)
    curve = run_sweep(cfg)
    assert [p.snr_db for p in curve.points] == [0.0, 6.0]
    assert all(isinstance(p, BerPoint) for p in curve.points)


def test_fresh_frame_per_trial_deterministic_but_distinct():
    fixed = _cfg(m=2, k=4, snr_db=(8.0,), target_bit_errors=40,
                 max_trials=1500, master_seed=3)
    fresh = _cfg(m=2, k=4, snr_db=(8.0,), target_bit_errors=40,
                 max_trials=1500, master_seed=3, fresh_frame_per_trial=True)
    a = run_ber_point(fresh, 8.0)
    b = run_ber_point(fresh, 8.0)
    assert a == b
    assert a != run_ber_point(fixed, 8.0)


def test_overloaded_noiseless_sweep_is_error_free():
    cfg = _cfg(mod="qpsk", frame="incoherent", snr_db=(math.inf,),
               max_trials=1000, frame_restarts=2, frame_iters=30)
    pt = run_ber_point(cfg, math.inf)
    assert pt.bit_errors == 0
    assert pt.stopped_by == "max_trials"
