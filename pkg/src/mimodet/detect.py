"""MIMO detectors: exhaustive ML, sphere-decoder ML, and zero-forcing.

The exhaustive detector minimizes ||H x - r||^2 over the full candidate set
S^n and is the ground-truth oracle for everything else.  The sphere decoder
returns the identical decision for square-QAM constellations by exact
Schnorr-Euchner enumeration of the equivalent real-valued lattice problem.
ZF solves the unconstrained least-squares problem by QR and quantizes each
entry to the nearest symbol.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy.linalg import solve_triangular

from .constellation import Constellation, ConstellationKind, nearest_symbols

#: Refuse exhaustive enumeration beyond this many candidates (M^n).
DEFAULT_ML_BUDGET = 1 << 20

#: Candidates evaluated per vectorized chunk in the exhaustive search.
_ENUM_CHUNK = 1 << 16

#: Full enumerations up to this size are cached per (constellation, n).
_ENUM_CACHE_LIMIT = 1 << 16

#: H is treated as rank deficient when min/max |R_kk| falls below this.
RANK_TOLERANCE = 1e-10

_enum_cache: dict = {}


@dataclass(frozen=True)
class DetectionOutcome:
    """A detector decision, optionally scored against the transmitted vector."""

    x_hat: np.ndarray
    detector: str
    metric: float
    symbol_errors: np.ndarray | None = None
    vector_error: bool | None = None

    def scored(self, x_true: np.ndarray) -> "DetectionOutcome":
        """Copy with per-entry and any-entry error flags filled in."""
        errs = np.asarray(self.x_hat) != np.asarray(x_true)
        return replace(self, symbol_errors=errs, vector_error=bool(errs.any()))


@dataclass(frozen=True)
class ZfIntermediate:
    """Decorrelated signal x_tilde and per-user post-detection SNR scales.

    gamma[j] = 1 / [(H^H H)^-1]_jj; conditioned on H the ZF noise seen by
    user j is CN(0, sigma^2 / gamma[j]).
    """

    x_tilde: np.ndarray
    gamma: np.ndarray


def _check_system(H: np.ndarray, r: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    H = np.asarray(H, dtype=np.complex128)
    r = np.asarray(r, dtype=np.complex128).ravel()
    if H.ndim != 2:
        raise ValueError(f"H must be a matrix, got shape {H.shape}")
    m, n = H.shape
    if not (m >= n >= 1):
        raise ValueError(f"need m >= n >= 1, got H of shape {H.shape}")
    if r.size != m:
        raise ValueError(f"r has length {r.size}, expected {m}")
    if not (np.all(np.isfinite(H.view(np.float64))) and np.all(np.isfinite(r.view(np.float64)))):
        raise ValueError("H and r must be finite")
    return H, r


def _candidate_chunk(start: int, stop: int, M: int, n: int) -> np.ndarray:
    """Candidate index vectors for lexicographic ranks [start, stop)."""
    ranks = np.arange(start, stop, dtype=np.int64)
    powers = M ** (n - 1 - np.arange(n, dtype=np.int64))
    return (ranks[:, None] // powers) % M


def _enumeration(c: Constellation, n: int):
    """Cached (indices, symbols, conj symbols) for small full enumerations."""
    key = (c.cache_token(), n)
    hit = _enum_cache.get(key)
    if hit is None:
        idx = _candidate_chunk(0, c.M**n, c.M, n)
        X = c.symbols[idx]
        hit = (idx, X, X.conj())
        if len(_enum_cache) > 8:
            _enum_cache.clear()
        _enum_cache[key] = hit
    return hit


def detect_ml_exhaustive(
    H: np.ndarray,
    r: np.ndarray,
    c: Constellation,
    n: int | None = None,
    budget: int = DEFAULT_ML_BUDGET,
) -> DetectionOutcome:
    """Global minimizer of ||H x - r||^2 over all M^n candidate vectors.

    Ties break to the lexicographically smallest index vector.  Refuses to
    run when M^n exceeds ``budget`` rather than approximating.
    """
    H, r = _check_system(H, r)
    m, n_cols = H.shape
    if n is None:
        n = n_cols
    elif n != n_cols:
        raise ValueError(f"n={n} does not match H with {n_cols} columns")
    total = c.M**n
    if total > budget:
        raise ValueError(
            f"exhaustive enumeration of {c.M}^{n} = {total} candidates exceeds "
            f"the budget of {budget}; raise the budget explicitly to override"
        )

    G = H.conj().T @ H
    b = H.conj().T @ r
    best_val = np.inf
    best_idx: np.ndarray | None = None

    def consider(idx: np.ndarray, X: np.ndarray, Xc: np.ndarray) -> None:
        nonlocal best_val, best_idx
        # ||Hx - r||^2 = x^H G x - 2 Re(x^H b) + ||r||^2; the constant is dropped
        quad = np.einsum("kj,kj->k", Xc @ G, X).real - 2.0 * (Xc @ b).real
        j = int(np.argmin(quad))
        if quad[j] < best_val:
            best_val = quad[j]
            best_idx = idx[j].copy()

    if total <= _ENUM_CACHE_LIMIT:
        consider(*_enumeration(c, n))
    else:
        for start in range(0, total, _ENUM_CHUNK):
            idx = _candidate_chunk(start, min(start + _ENUM_CHUNK, total), c.M, n)
            X = c.symbols[idx]
            consider(idx, X, X.conj())

    metric = float(np.sum(np.abs(H @ c.symbols[best_idx] - r) ** 2))
    return DetectionOutcome(x_hat=best_idx, detector="ml-exhaustive", metric=metric)


def _qam_lattice(c: Constellation) -> tuple[float, np.ndarray, dict]:
    """Decompose a square-QAM set into scale * (a + i b), a,b odd integers.

    Returns (scale, sorted integer levels, (a, b) -> symbol index lookup).
    """
    scale = c.d_min / 2.0
    a = np.rint(c.symbols.real / scale).astype(np.int64)
    b = np.rint(c.symbols.imag / scale).astype(np.int64)
    lookup = {(int(ai), int(bi)): i for i, (ai, bi) in enumerate(zip(a, b))}
    levels = np.unique(a).astype(np.float64)
    return scale, levels, lookup


def _sphere_search(R: np.ndarray, y: np.ndarray, levels: np.ndarray):
    """Exact Schnorr-Euchner search of argmin ||y - R u||^2, u in levels^d.

    R is upper triangular with nonzero diagonal.  Levels at each layer are
    visited in order of distance from the unconstrained (Babai) center, so
    the first leaf reached is the Babai point and sets the initial radius;
    the radius then shrinks with every improving leaf.  Returns the best
    level vector, its squared distance, and the number of leaves visited.
    """
    d = R.shape[0]
    nlev = levels.size
    best_u = None
    best_dist = np.inf
    u = np.zeros(d)
    order = [None] * d
    t = [0] * d
    acc = [0.0] * d
    srow = [0.0] * d
    leaves = 0

    def enter(k: int, dist_above: float) -> None:
        srow[k] = float(R[k, k + 1 :] @ u[k + 1 :]) if k + 1 < d else 0.0
        center = (y[k] - srow[k]) / R[k, k]
        order[k] = np.argsort(np.abs(levels - center), kind="stable")
        t[k] = 0
        acc[k] = dist_above

    k = d - 1
    enter(k, 0.0)
    while True:
        if t[k] >= nlev:
            k += 1
            if k >= d:
                break
            t[k] += 1
            continue
        lev = levels[order[k][t[k]]]
        e = y[k] - srow[k] - R[k, k] * lev
        cand = acc[k] + e * e
        if cand >= best_dist:
            # remaining levels at this layer are at least as far from the center
            t[k] = nlev
            continue
        u[k] = lev
        if k == 0:
            best_dist = cand
            best_u = u.copy()
            leaves += 1
            t[k] += 1
            continue
        k -= 1
        enter(k, cand)
    return best_u, best_dist, leaves


def detect_ml_sphere(
    H: np.ndarray,
    r: np.ndarray,
    c: Constellation,
    n: int | None = None,
) -> DetectionOutcome:
    """Exact ML detection for square-QAM constellations via sphere decoding.

    The complex system is rewritten as a 2m x 2n real lattice problem
    (stacked real/imaginary parts) and searched exactly, so the decision
    always equals :func:`detect_ml_exhaustive`.
    """
    if c.kind is not ConstellationKind.QAM:
        raise ValueError(f"sphere decoder supports QAM constellations only, got {c.kind.value}")
    H, r = _check_system(H, r)
    m, n_cols = H.shape
    if n is not None and n != n_cols:
        raise ValueError(f"n={n} does not match H with {n_cols} columns")
    n = n_cols

    scale, levels, lookup = _qam_lattice(c)
    B = np.block([[H.real, -H.imag], [H.imag, H.real]])
    y = np.concatenate([r.real, r.imag])
    Q, R = np.linalg.qr(B, mode="reduced")
    diag = np.abs(np.diag(R))
    if diag.min() < RANK_TOLERANCE * diag.max():
        raise np.linalg.LinAlgError("channel matrix is numerically rank deficient")
    ytil = Q.T @ y
    # fold the lattice scale into R so the search runs over integer levels
    u, _, _ = _sphere_search(R * scale, ytil, levels)

    a = np.rint(u[:n]).astype(np.int64)
    b = np.rint(u[n:]).astype(np.int64)
    x_hat = np.array([lookup[(int(ai), int(bi))] for ai, bi in zip(a, b)], dtype=np.int64)
    metric = float(np.sum(np.abs(H @ c.symbols[x_hat] - r) ** 2))
    return DetectionOutcome(x_hat=x_hat, detector="ml-sphere", metric=metric)


def zf_decorrelate(H: np.ndarray, r: np.ndarray) -> ZfIntermediate:
    """Least-squares decorrelation x_tilde = argmin ||H x - r||^2 plus gamma.

    Solved through the QR factorization of H; the explicit Gram inverse is
    never formed (it exists only as a test oracle).  gamma[j] is obtained
    from the squared row norms of R^-1.
    """
    H, r = _check_system(H, r)
    n = H.shape[1]
    Q, R = np.linalg.qr(H, mode="reduced")
    diag = np.abs(np.diag(R))
    if diag.min() < RANK_TOLERANCE * diag.max():
        raise np.linalg.LinAlgError("channel matrix is numerically rank deficient")
    x_tilde = solve_triangular(R, Q.conj().T @ r)
    Rinv = solve_triangular(R, np.eye(n, dtype=np.complex128))
    gamma = 1.0 / np.sum(np.abs(Rinv) ** 2, axis=1)
    return ZfIntermediate(x_tilde=x_tilde, gamma=gamma)


def detect_zf(H: np.ndarray, r: np.ndarray, c: Constellation) -> DetectionOutcome:
    """Zero-forcing detection: decorrelate, then quantize entrywise."""
    inter = zf_decorrelate(H, r)
    x_hat = nearest_symbols(c, inter.x_tilde).astype(np.int64)
    H = np.asarray(H, dtype=np.complex128)
    r = np.asarray(r, dtype=np.complex128).ravel()
    metric = float(np.sum(np.abs(H @ c.symbols[x_hat] - r) ** 2))
    return DetectionOutcome(x_hat=x_hat, detector="zf", metric=metric)
