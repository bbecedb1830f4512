"""Multiuser detection: exhaustive ML, generalized sphere decoding, MMSE.

The overloaded regime M < K makes A = diag(h) F wide, so plain sphere
decoding does not apply. The generalized decoder minimizes the augmented
cost ||y - A s||^2 + alpha ||s||^2, whose Gram A* A + alpha I is positive
definite for alpha > 0 and admits a Cholesky factor R driving a depth-first
Schnorr-Euchner enumeration. For constant-modulus alphabets ||s||^2 is the
same for every hypothesis, so the augmented argmin IS the ML argmin for any
alpha > 0; the exhaustive search therefore certifies exact ML on BPSK/QPSK.

Ties are broken everywhere toward the lexicographically smallest label
sequence, counting users in their original order.
"""

from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np

from .phy import Constellation

_NO_BUDGET = np.iinfo(np.int64).max
_ML_HYPOTHESIS_GUARD = 2 ** 20
_ML_CHUNK = 4096


@dataclass
class DetectorConfig:
    """Knobs for the sphere-decoder family.

    kind is one of ml_exhaustive, gsd, gsd_stochastic, mmse. alpha is the
    Tikhonov weight (must be > 0 when M < K). initial_radius_scale inflates
    the starting sphere radius taken from the quantized linear estimate.
    max_visited_nodes, restarts and column_order_seed only matter for
    gsd_stochastic: each restart searches under a node budget with its own
    random column permutation.
    """

    kind: str = "gsd"
    alpha: float = 1.0
    initial_radius_scale: float = 1.0
    max_visited_nodes: int | None = None
    restarts: int = 1
    column_order_seed: int = 0


@dataclass
class DetectionResult:
    """Decision plus bookkeeping.

    decided holds constellation points (original user order). metric is the
    plain residual ||y - A decided||^2, recomputed from the decision.
    exact_ml_certified is True only when the search provably returned the
    ML argmin under the shared tie-break.
    """

    decided: np.ndarray
    metric: float
    visited_nodes: int
    exact_ml_certified: bool


@numba.njit(cache=True)
def _se_search(r, z, points, level_to_orig, radius, budget):
    """Depth-first Schnorr-Euchner enumeration minimizing ||z - R s||^2.

    r is K x K upper triangular. level_to_orig maps tree level (column of r)
    to the original user index; leaf ties are compared in original order so
    the winner is independent of the permutation. Returns point indices per
    original user (-1s when no leaf was reached), the best cost, the number
    of visited nodes, and whether the tree was exhausted within budget.
    """
    k = r.shape[0]
    q = points.shape[0]
    order = np.empty((k, q), np.int64)
    inc = np.empty((k, q), np.float64)
    pos = np.empty(k, np.int64)
    above = np.empty(k, np.float64)
    chosen = np.empty(k, np.int64)
    best_orig = np.full(k, -1, np.int64)
    cand_orig = np.empty(k, np.int64)
    best_cost = np.inf
    visited = np.int64(0)
    exhausted = True

    l = k - 1
    above[l] = 0.0
    b = z[l]
    for p in range(q):
        d = b - r[l, l] * points[p]
        inc[l, p] = d.real * d.real + d.imag * d.imag
        order[l, p] = p
    for i in range(1, q):
        key_i = order[l, i]
        key_v = inc[l, key_i]
        j = i - 1
        while j >= 0 and inc[l, order[l, j]] > key_v:
            order[l, j + 1] = order[l, j]
            j -= 1
        order[l, j + 1] = key_i
    pos[l] = 0

    while True:
        if pos[l] == q:
            l += 1
            if l == k:
                break
            continue
        p = order[l, pos[l]]
        pos[l] += 1
        if visited >= budget:
            exhausted = False
            break
        visited += 1
        nd = above[l] + inc[l, p]
        lim = best_cost if best_cost < radius else radius
        if nd > lim:
            # children are sorted by increment, the rest can only be worse
            pos[l] = q
            continue
        chosen[l] = p
        if l == 0:
            take = False
            if nd < best_cost:
                take = True
            elif nd == best_cost and best_orig[0] >= 0:
                for j in range(k):
                    cand_orig[level_to_orig[j]] = chosen[j]
                for u in range(k):
                    if cand_orig[u] != best_orig[u]:
                        take = cand_orig[u] < best_orig[u]
                        break
            if take:
                best_cost = nd
                for j in range(k):
                    best_orig[level_to_orig[j]] = chosen[j]
            continue
        l -= 1
        above[l] = nd
        b = z[l]
        for j in range(l + 1, k):
            b -= r[l, j] * points[chosen[j]]
        for pp in range(q):
            d = b - r[l, l] * points[pp]
            inc[l, pp] = d.real * d.real + d.imag * d.imag
            order[l, pp] = pp
        for i in range(1, q):
            key_i = order[l, i]
            key_v = inc[l, key_i]
            j = i - 1
            while j >= 0 and inc[l, order[l, j]] > key_v:
                order[l, j + 1] = order[l, j]
                j -= 1
            order[l, j + 1] = key_i
        pos[l] = 0

    return best_orig, best_cost, visited, exhausted


def _quantize(s_hat: np.ndarray, points: np.ndarray) -> np.ndarray:
    """Nearest-point indices; argmin first occurrence = smallest label."""
    return np.argmin(np.abs(s_hat[:, None] - points[None, :]), axis=1)


def _gsd_once(y, a, points, alpha, perm, radius_scale, budget):
    """One permuted sphere search with radius seeding and budget.

    Returns (point indices per original user, tree cost, visited nodes,
    exhausted flag). Falls back to the quantized linear estimate when the
    budget ran out before any leaf was reached; an exhausted finite-radius
    search that found no leaf retries once with infinite radius (the seeded
    radius can exclude every hypothesis when initial_radius_scale < 1).
    """
    k = a.shape[1]
    ap = a[:, perm]
    gram = ap.conj().T @ ap + alpha * np.eye(k)
    low = np.linalg.cholesky(gram)  # raises LinAlgError when not PD
    r = np.ascontiguousarray(low.conj().T)
    s_hat = np.linalg.solve(gram, ap.conj().T @ y)
    z = r @ s_hat
    q_idx = _quantize(s_hat, points)
    resid = z - r @ points[q_idx]
    c0 = float(np.real(np.vdot(resid, resid)))
    level_to_orig = np.asarray(perm, dtype=np.int64)

    best, cost, visited, exhausted = _se_search(
        r, z, points, level_to_orig, radius_scale * c0, np.int64(budget))
    if best[0] < 0 and exhausted:
        left = budget - int(visited)
        best, cost, v2, exhausted = _se_search(
            r, z, points, level_to_orig, np.inf, np.int64(left))
        visited = int(visited) + int(v2)
    if best[0] < 0:
        # budget exhausted before any leaf: report the quantized estimate
        fallback = np.empty(k, dtype=np.int64)
        fallback[level_to_orig] = q_idx
        return fallback, c0, int(visited), False
    return np.asarray(best), float(cost), int(visited), bool(exhausted)


def _finish(y, a, points, idx, visited, certified) -> DetectionResult:
    decided = points[idx]
    resid = y - a @ decided
    metric = float(np.real(np.vdot(resid, resid)))
    return DetectionResult(decided, metric, int(visited), bool(certified))


def ml_exhaustive(y, a, c: Constellation) -> DetectionResult:
    """Brute-force argmin of ||y - A s||^2 over all |points|^K hypotheses.

    Hypotheses are enumerated in lexicographic label order and compared with
    strict <, so the first minimizer (smallest label sequence) wins. Guarded
    to 2^20 hypotheses.
    """
    y = np.asarray(y, dtype=np.complex128).ravel()
    a = np.asarray(a, dtype=np.complex128)
    m, k = a.shape
    q = len(c.points)
    total = q ** k
    if total > _ML_HYPOTHESIS_GUARD:
        raise ValueError(f"{q}^{k} hypotheses exceed the 2^20 guard")
    pw = q ** np.arange(k - 1, -1, -1)
    at = a.T.copy()
    best_cost = np.inf
    best_digits = None
    for start in range(0, total, _ML_CHUNK):
        idx = np.arange(start, min(start + _ML_CHUNK, total))
        digits = (idx[:, None] // pw[None, :]) % q  # user 0 most significant
        s_all = c.points[digits]
        resid = y[None, :] - s_all @ at
        costs = np.einsum("ij,ij->i", resid.conj(), resid).real
        b = int(np.argmin(costs))
        if costs[b] < best_cost:
            best_cost = float(costs[b])
            best_digits = digits[b]
    return _finish(y, a, c.points, best_digits, total, True)


def _check_gsd_args(m: int, k: int, cfg: DetectorConfig) -> None:
    if m > k:
        raise ValueError(f"sphere decoder needs M <= K, got {m}x{k}")
    if cfg.alpha < 0:
        raise ValueError("alpha must be >= 0")
    if m < k and cfg.alpha == 0:
        raise ValueError("alpha > 0 required in the underdetermined case")
    if cfg.initial_radius_scale <= 0:
        raise ValueError("initial_radius_scale must be > 0")


def gsd_detect(y, a, c: Constellation, cfg: DetectorConfig) -> DetectionResult:
    """Generalized sphere decoder, always run to tree exhaustion.

    Matches ml_exhaustive exactly (decision and tie-break) on constant-
    modulus constellations for any alpha > 0. On 16QAM the result is the
    best hypothesis under the augmented metric and is not ML certified.
    """
    y = np.asarray(y, dtype=np.complex128).ravel()
    a = np.asarray(a, dtype=np.complex128)
    m, k = a.shape
    _check_gsd_args(m, k, cfg)
    idx, _, visited, exhausted = _gsd_once(
        y, a, c.points, cfg.alpha, np.arange(k), cfg.initial_radius_scale,
        _NO_BUDGET)
    return _finish(y, a, c.points, idx, visited,
                   exhausted and c.constant_modulus)


def gsd_stochastic(y, a, c: Constellation,
                   cfg: DetectorConfig) -> DetectionResult:
    """Budgeted sphere decoding over random column orders, best-of-restarts.

    Restart 0 keeps the original column order (so one unbudgeted restart
    reproduces gsd_detect exactly); restart r >= 1 draws its permutation
    from a stream seeded by (column_order_seed, r). Each restart visits at
    most max_visited_nodes tree nodes. The best augmented cost wins, ties
    going to the lexicographically smaller label sequence. The result is ML
    certified only when some restart exhausted its tree within budget.
    """
    y = np.asarray(y, dtype=np.complex128).ravel()
    a = np.asarray(a, dtype=np.complex128)
    m, k = a.shape
    _check_gsd_args(m, k, cfg)
    if cfg.restarts < 1:
        raise ValueError("restarts must be >= 1")
    budget = _NO_BUDGET if cfg.max_visited_nodes is None \
        else int(cfg.max_visited_nodes)
    if budget < 1:
        raise ValueError("max_visited_nodes must be >= 1")

    best_idx = None
    best_key = None
    total_visited = 0
    any_exhausted = False
    for rst in range(cfg.restarts):
        if rst == 0:
            perm = np.arange(k)
        else:
            perm = np.random.default_rng(
                [cfg.column_order_seed, rst]).permutation(k)
        idx, cost, visited, exhausted = _gsd_once(
            y, a, c.points, cfg.alpha, perm, cfg.initial_radius_scale, budget)
        total_visited += visited
        any_exhausted = any_exhausted or exhausted
        key = (cost, tuple(idx))
        if best_key is None or key < best_key:
            best_key = key
            best_idx = idx
    return _finish(y, a, c.points, best_idx, total_visited,
                   any_exhausted and c.constant_modulus)


def mmse_detect(y, a, c: Constellation, noise_variance: float) -> DetectionResult:
    """Linear MMSE estimate quantized per entry to the nearest point.

    s_hat = A* (A A* + noise_variance I)^(-1) y. Raises LinAlgError when the
    system matrix is singular (only possible at noise_variance = 0).
    """
    y = np.asarray(y, dtype=np.complex128).ravel()
    a = np.asarray(a, dtype=np.complex128)
    m = a.shape[0]
    cov = a @ a.conj().T + noise_variance * np.eye(m)
    s_hat = a.conj().T @ np.linalg.solve(cov, y)
    idx = _quantize(s_hat, c.points)
    return _finish(y, a, c.points, idx, 0, False)


def detect(y, a, c: Constellation, cfg: DetectorConfig,
           noise_variance: float = 1.0) -> DetectionResult:
    """Dispatch on cfg.kind; mmse additionally uses noise_variance."""
    if cfg.kind == "ml_exhaustive":
        return ml_exhaustive(y, a, c)
    if cfg.kind == "gsd":
        return gsd_detect(y, a, c, cfg)
    if cfg.kind == "gsd_stochastic":
        return gsd_stochastic(y, a, c, cfg)
    if cfg.kind == "mmse":
        return mmse_detect(y, a, c, noise_variance)
    raise ValueError(f"unknown detector kind {cfg.kind!r}")
