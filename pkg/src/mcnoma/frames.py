"""Spreading frame construction and coherence analytics.

A frame here is an M x K complex matrix F with unit-norm columns, K >= M.
Columns are per-user signature waveforms over M orthogonal resources. Tight
frames satisfy F F* = (K/M) I, which preserves total transmit energy under
overloading. The optimizer below pushes the worst-case column correlation
(coherence) toward the Welch bound by alternating Gram clipping with
re-tightening.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

TIGHT_TOL = 1e-9
_SHRINK = 0.9  # per-iteration coherence target contraction in the optimizer


@dataclass
class Frame:
    """Unit-norm spreading dictionary.

    Attributes
    ----------
    m : int
        Number of orthogonal resources (rows).
    k : int
        Number of users (columns), k >= m.
    entries : np.ndarray
        Complex m x k matrix, every column unit norm.
    tight : bool
        True when F F* = (k/m) I holds within TIGHT_TOL.
    """

    m: int
    k: int
    entries: np.ndarray
    tight: bool = False

    def __post_init__(self):
        if self.m < 1 or self.k < self.m:
            raise ValueError(f"need 1 <= m <= k, got m={self.m} k={self.k}")
        self.entries = np.ascontiguousarray(self.entries, dtype=np.complex128)
        if self.entries.shape != (self.m, self.k):
            raise ValueError(
                f"entries shape {self.entries.shape} != ({self.m}, {self.k})")
        norms = np.linalg.norm(self.entries, axis=0)
        if np.max(np.abs(norms - 1.0)) > TIGHT_TOL:
            raise ValueError("columns must be unit norm within 1e-9")
        if self.tight and tightness_residual(self.entries) > TIGHT_TOL:
            raise ValueError("tight flag set but F F* deviates from (k/m) I")


@dataclass
class FrameReport:
    """Coherence analytics for a frame."""

    coherence: float
    welch_bound: float
    tightness_residual: float
    frame_potential: float  # ||F* F||_F^2


def tightness_residual(entries: np.ndarray) -> float:
    """Max absolute deviation of F F* from (k/m) I."""
    m, k = entries.shape
    g = entries @ entries.conj().T
    return float(np.max(np.abs(g - (k / m) * np.eye(m))))


def generate_random_unit_norm_frame(m: int, k: int, seed: int) -> Frame:
    """Draw an i.i.d. circular-Gaussian m x k matrix and normalize columns.

    Deterministic for fixed seed.
    """
    if m < 1 or k < m:
        raise ValueError(f"need 1 <= m <= k, got m={m} k={k}")
    rng = np.random.default_rng(seed)
    entries = _random_unit_norm(m, k, rng)
    return Frame(m, k, entries)


def _random_unit_norm(m: int, k: int, rng: np.random.Generator) -> np.ndarray:
    z = (rng.standard_normal((m, k)) + 1j * rng.standard_normal((m, k)))
    z /= np.sqrt(2.0)
    return z / np.linalg.norm(z, axis=0)


def _polar_tighten(f: np.ndarray) -> np.ndarray:
    """Project onto the tight-frame manifold: F -> sqrt(k/m) (F F*)^(-1/2) F."""
    m, k = f.shape
    g = f @ f.conj().T
    w, v = np.linalg.eigh(g)
    if w[0] <= w[-1] * 1e-13:
        raise np.linalg.LinAlgError("rank-deficient frame, cannot tighten")
    inv_sqrt = (v * (1.0 / np.sqrt(w))) @ v.conj().T
    return np.sqrt(k / m) * (inv_sqrt @ f)


def _balance_norms(f: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    """Equalize column norms by right-multiplying unitary pair rotations.

    Right-unitary action leaves F F* untouched, so a tight frame stays
    exactly tight. Each rotation mixes the currently heaviest and lightest
    columns so that the heavy one lands exactly on norm 1; total column
    energy is fixed at k by tightness, so at most k-1 rotations are needed.
    """
    f = f.copy()
    k = f.shape[1]
    for _ in range(4 * k):
        n2 = np.einsum("ij,ij->j", f.conj(), f).real
        hi = int(np.argmax(n2))
        lo = int(np.argmin(n2))
        if n2[hi] - 1.0 <= tol and 1.0 - n2[lo] <= tol:
            break
        p, q = n2[hi], n2[lo]
        a = f[:, hi]
        b = f[:, lo]
        ip = np.vdot(a, b)
        phi = -np.angle(ip) if ip != 0 else 0.0
        r = abs(ip)
        # After rotating by theta (with b phase-aligned), the heavy column's
        # norm^2 is p cos^2 + q sin^2 + r sin(2 theta); solve for value 1.
        half = (p - q) / 2.0
        d = 1.0 - (p + q) / 2.0
        rad = np.hypot(half, r)
        two_theta = np.arctan2(r, half) + np.arccos(np.clip(d / rad, -1.0, 1.0))
        c = np.cos(two_theta / 2.0)
        s = np.sin(two_theta / 2.0)
        bt = np.exp(1j * phi) * b
        # compute both columns before writing back, the slices are views
        new_hi = c * a + s * bt
        new_lo = np.exp(-1j * phi) * (c * bt - s * a)
        f[:, hi] = new_hi
        f[:, lo] = new_lo
    return f


def make_tight(f: Frame, max_rounds: int = 100) -> Frame:
    """Return the nearest tight frame with unit-norm columns.

    Polar-factor tightening followed by a norm-correction pass of unitary
    column-pair rotations; the rotations preserve tightness exactly, so one
    round normally lands within 1e-9 on both constraints. Raises
    np.linalg.LinAlgError when the input is rank deficient.
    """
    entries = f.entries
    for _ in range(max_rounds):
        entries = _polar_tighten(entries)
        entries = _balance_norms(entries)
        norm_dev = float(np.max(np.abs(np.linalg.norm(entries, axis=0) - 1.0)))
        if tightness_residual(entries) <= TIGHT_TOL and norm_dev <= TIGHT_TOL:
            return Frame(f.m, f.k, entries, tight=True)
    raise RuntimeError(
        f"tightening did not converge in {max_rounds} rounds for "
        f"{f.m}x{f.k}")


def coherence(f: Frame) -> float:
    """Largest |<f_i, f_j>| over distinct column pairs (0 when k = 1)."""
    g = np.abs(f.entries.conj().T @ f.entries)
    np.fill_diagonal(g, 0.0)
    return float(np.max(g))


def welch_bound(m: int, k: int) -> float:
    """Lower bound sqrt((k-m)/(m(k-1))) on the coherence of unit-norm frames."""
    if k < 2:
        raise ValueError("Welch bound needs k >= 2")
    if m < 1 or k < m:
        raise ValueError(f"need 1 <= m <= k, got m={m} k={k}")
    return float(np.sqrt((k - m) / (m * (k - 1))))


def frame_potential(f: Frame) -> float:
    """Frobenius energy of the column Gram, ||F* F||_F^2."""
    g = f.entries.conj().T @ f.entries
    return float(np.sum(np.abs(g) ** 2))


def frame_report(f: Frame) -> FrameReport:
    wb = welch_bound(f.m, f.k) if f.k >= 2 else 0.0
    return FrameReport(
        coherence=coherence(f),
        welch_bound=wb,
        tightness_residual=tightness_residual(f.entries),
        frame_potential=frame_potential(f),
    )


def generate_incoherent_tight_frame(
    m: int,
    k: int,
    seed: int,
    restarts: int = 8,
    iters: int = 100,
) -> tuple[Frame, FrameReport]:
    """Best-of-restarts alternating minimization of frame coherence.

    Each restart seeds its own stream from (seed, restart index), draws a
    random unit-norm frame, tightens it, then alternates: clip Gram
    off-diagonal magnitudes toward a shrinking coherence target, rebuild a
    rank-m frame from the clipped Gram, re-tighten. The best tight candidate
    (lowest coherence, earliest restart on ties) is kept. Deterministic for
    fixed arguments.
    """
    if m < 1 or k < m:
        raise ValueError(f"need 1 <= m <= k, got m={m} k={k}")
    if restarts < 1 or iters < 0:
        raise ValueError("restarts >= 1 and iters >= 0 required")
    wb = welch_bound(m, k) if k >= 2 else 0.0

    best: Frame | None = None
    best_mu = np.inf
    degenerate = 0
    for r in range(restarts):
        rng = np.random.default_rng([seed, r])
        try:
            cand, mu = _optimize_restart(m, k, rng, iters, wb)
        except np.linalg.LinAlgError:
            # fresh draw once, then give up on this restart
            try:
                cand, mu = _optimize_restart(m, k, rng, iters, wb)
            except np.linalg.LinAlgError:
                degenerate += 1
                continue
        if mu < best_mu:
            best = cand
            best_mu = mu
    if best is None:
        raise RuntimeError(
            f"all {restarts} restarts degenerate for {m}x{k}")
    return best, frame_report(best)


def _optimize_restart(
    m: int, k: int, rng: np.random.Generator, iters: int, wb: float,
) -> tuple[Frame, float]:
    f = make_tight(Frame(m, k, _random_unit_norm(m, k, rng)))
    best = f
    best_mu = coherence(f)
    ent = f.entries
    for _ in range(iters):
        g = ent.conj().T @ ent
        mags = np.abs(g)
        np.fill_diagonal(mags, 0.0)
        target = max(wb, _SHRINK * float(np.max(mags)))
        # clip off-diagonal correlations above the target, keep phases
        over = mags > target
        scale = np.ones_like(mags)
        scale[over] = target / mags[over]
        g = g * scale
        np.fill_diagonal(g, 1.0)
        # nearest rank-m factor of the clipped Gram
        w, v = np.linalg.eigh(g)
        w_top = np.clip(w[-m:], 0.0, None)
        ent = (np.sqrt(w_top)[:, None] * v[:, -m:].conj().T)
        norms = np.linalg.norm(ent, axis=0)
        if np.min(norms) < 1e-12:
            raise np.linalg.LinAlgError("degenerate column after Gram rebuild")
        ent = ent / norms
        tightened = make_tight(Frame(m, k, ent))
        ent = tightened.entries
        mu = coherence(tightened)
        if mu < best_mu:
            best = tightened
            best_mu = mu
    return best, best_mu


def write_frame_file(f: Frame, path: str) -> None:
    """Write a frame as text: header "M K", then M rows of K entries.

    Entries are formatted "re+imj" with 17 significant digits, which
    round-trips float64 exactly.
    """
    lines = [f"{f.m} {f.k}"]
    for row in f.entries:
        lines.append(" ".join(
            f"{z.real:.16e}{z.imag:+.16e}j" for z in row))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_frame_file(path: str) -> Frame:
    """Parse a frame file written by write_frame_file. Exact round-trip."""
    with open(path) as fh:
        header = fh.readline().split()
        if len(header) != 2:
            raise ValueError(f"{path}: malformed header, expected 'M K'")
        m, k = int(header[0]), int(header[1])
        entries = np.empty((m, k), dtype=np.complex128)
        for i in range(m):
            parts = fh.readline().split()
            if len(parts) != k:
                raise ValueError(f"{path}: row {i} has {len(parts)} entries, "
                                 f"expected {k}")
            entries[i] = [complex(p) for p in parts]
    tight = tightness_residual(entries) <= TIGHT_TOL
    return Frame(m, k, entries, tight=tight)
