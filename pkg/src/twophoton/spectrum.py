"""Parity-resolved exact diagonalization with truncation control.

The quadratic coupling conserves photon parity, so every Hamiltonian built by
the model layer splits into two blocks.  This module diagonalizes the blocks,
merges and labels the levels, doubles the Fock cutoff until the requested
levels stop moving, tracks level identity along coupling sweeps, and
extrapolates the spectral-collapse point from the closing level spacings.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, replace
from typing import NamedTuple

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.optimize import linear_sum_assignment

from .model import ModelParams, build_hamiltonian, collapse_coupling
from .operators import HilbertSpace

__all__ = [
    "EigenDecomposition",
    "SweepResult",
    "CollapseDiagnostics",
    "Transition",
    "NonConvergentError",
    "CollapseFitError",
    "diagonalize",
    "converge_spectrum",
    "sweep_coupling",
    "estimate_collapse",
    "transition_table",
    "state_labels",
]

N_MAX_START = 64
N_MAX_CAP = 4096

# Below this block size a dense eigh beats ARPACK comfortably.
_DENSE_BLOCK = 1200


class NonConvergentError(RuntimeError):
    """Raised when cutoff doubling hits the cap with levels still moving.

    Near and beyond the collapse coupling this is the expected signal, not a
    numerical accident, so the error carries the evidence: the energy history
    per cutoff and the last (partial) decomposition.
    """

    def __init__(self, message, *, params=None, history=None, partial=None):
        super().__init__(message)
        self.params = params
        self.history = history or []
        self.partial = partial
        self.failing_g = params.g2 if params is not None else None


class CollapseFitError(RuntimeError):
    """Raised when the spacing extrapolation has too little data to fit."""


@dataclass(frozen=True)
class EigenDecomposition:
    """Sorted low-energy levels of a parity-symmetric Hamiltonian.

    ``states`` holds one column per level in the full tensor-product basis of
    ``space``.  ``parities`` are exact +-1 labels (each eigenvector lives in
    a single parity sector by construction).  ``converged`` marks levels that
    passed the cutoff-doubling comparison; plain :func:`diagonalize` output
    is exact for its cutoff and carries all-True flags.
    """

    space: HilbertSpace
    energies: np.ndarray
    states: np.ndarray
    parities: np.ndarray
    n_max_used: int
    converged: np.ndarray

    @property
    def k_levels(self) -> int:
        return len(self.energies)

    def truncated(self, k: int) -> "EigenDecomposition":
        if k > self.k_levels:
            raise ValueError(f"cannot keep {k} of {self.k_levels} levels")
        return EigenDecomposition(
            space=self.space,
            energies=self.energies[:k],
            states=self.states[:, :k],
            parities=self.parities[:k],
            n_max_used=self.n_max_used,
            converged=self.converged[:k],
        )


@dataclass(frozen=True)
class SweepResult:
    """Converged levels on a coupling grid with identity tracking.

    ``continuity_map[i]`` is a permutation: entry ``m`` gives the level index
    at ``g_values[i+1]`` that continues level ``m`` of ``g_values[i]``, chosen
    by maximal eigenvector overlap.  ``matched_overlaps[i]`` stores those
    overlaps.
    """

    g_values: np.ndarray
    energies: np.ndarray
    parities: np.ndarray
    converged: np.ndarray
    n_max_used: np.ndarray
    continuity_map: list
    matched_overlaps: list


@dataclass(frozen=True)
class CollapseDiagnostics:
    """Outcome of the collapse-point estimation.

    ``spacing_curve`` has one (g, mean spacing) row per usable grid point.
    ``first_failing_g`` is the smallest coupling at which the convergence
    protocol gave up, if one was encountered (the probe above the analytic
    point runs with a reduced cutoff cap of 1024 to stay cheap).
    """

    g_col_analytic: float
    g_col_estimated: float
    method: str
    spacing_curve: np.ndarray
    first_failing_g: float | None = None


class Transition(NamedTuple):
    j: int
    k: int
    frequency: float
    matrix_element: float


def _parity_indices(space: HilbertSpace) -> tuple[np.ndarray, np.ndarray]:
    pattern = (-1) ** np.arange(space.boson_dim)
    full = np.tile(pattern, space.qubit_dim)
    return np.where(full == 1)[0], np.where(full == -1)[0]


def _fix_phase(vecs: np.ndarray) -> np.ndarray:
    # Pin the global phase so the largest component is real positive; keeps
    # eigenvectors reproducible across BLAS builds and runs.
    for col in range(vecs.shape[1]):
        v = vecs[:, col]
        i = int(np.argmax(np.abs(v)))
        piv = v[i]
        if piv != 0:
            vecs[:, col] = v * (np.conj(piv) / abs(piv))
    return vecs


def _lowest_block(hb: sp.csr_matrix, k: int) -> tuple[np.ndarray, np.ndarray]:
    """Lowest-k eigenpairs of one parity block, dense or Lanczos."""
    n = hb.shape[0]
    k = min(k, n)
    use_real = np.all(hb.data.imag == 0) if hb.nnz else True
    if use_real:
        hb = hb.real
    if n <= _DENSE_BLOCK or k >= n - 1 or k > n // 4:
        w, v = np.linalg.eigh(hb.toarray())
        return w[:k], v[:, :k]
    v0 = np.full(n, 1.0 / np.sqrt(n))
    try:
        w, v = spla.eigsh(
            hb,
            k=k,
            which="SA",
            v0=v0,
            ncv=min(n - 1, max(2 * k + 20, 60)),
        )
    except spla.ArpackNoConvergence:
        w, v = np.linalg.eigh(hb.toarray())
        return w[:k], v[:, :k]
    order = np.argsort(w)
    return w[order], v[:, order]


def diagonalize(
    H: sp.spmatrix, space: HilbertSpace, k_levels: int | None = None
) -> EigenDecomposition:
    """Diagonalize a parity-symmetric operator block by block.

    Projects into the two photon-parity sectors, solves each, merges the
    results sorted by energy (ties broken with parity +1 first) and keeps the
    lowest ``k_levels``.  Raises ValueError if the operator mixes sectors or
    ``k_levels`` exceeds the dimension.
    """
    H = sp.csr_matrix(H)
    dim = space.dim
    if H.shape != (dim, dim):
        raise ValueError(f"operator shape {H.shape} does not match dim {dim}")
    if k_levels is None:
        k_levels = dim
    if not 1 <= k_levels <= dim:
        raise ValueError(f"k_levels must be in 1..{dim}, got {k_levels}")

    even, odd = _parity_indices(space)
    scale = np.abs(H.data).max() if H.nnz else 1.0
    cross = H[even][:, odd]
    leak = np.abs(cross.data).max() if cross.nnz else 0.0
    if leak > 1e-12 * scale:
        raise ValueError(
            "operator does not commute with photon parity "
            f"(cross-sector magnitude {leak:.3e})"
        )

    energies = []
    vectors = []
    parities = []
    for idx, par in ((even, 1), (odd, -1)):
        block = H[idx][:, idx]
        w, v = _lowest_block(block, k_levels)
        full = np.zeros((dim, v.shape[1]), dtype=complex)
        full[idx, :] = v
        energies.append(w)
        vectors.append(full)
        parities.append(np.full(len(w), par, dtype=np.int8))
    energies = np.concatenate(energies)
    vectors = np.concatenate(vectors, axis=1)
    parities = np.concatenate(parities)

    order = np.lexsort((-parities, energies))[:k_levels]
    return EigenDecomposition(
        space=space,
        energies=np.asarray(energies[order], dtype=float),
        states=_fix_phase(vectors[:, order]),
        parities=parities[order],
        n_max_used=space.n_max,
        converged=np.ones(len(order), dtype=bool),
    )


def converge_spectrum(
    params: ModelParams,
    k_levels: int,
    rel_tol: float = 1e-8,
    n_max_start: int = N_MAX_START,
    n_max_cap: int = N_MAX_CAP,
) -> EigenDecomposition:
    """Double the Fock cutoff until the lowest levels stop moving.

    Successive cutoffs n and 2n are compared level by level; the run stops
    when every |delta E| < rel_tol * omega_c and returns the larger-cutoff
    decomposition.  Hitting ``n_max_cap`` raises :class:`NonConvergentError`
    carrying the full energy history, which near the collapse coupling is the
    physically expected outcome.
    """
    if rel_tol <= 0:
        raise ValueError(f"rel_tol must be > 0, got {rel_tol}")
    if k_levels < 1:
        raise ValueError(f"k_levels must be >= 1, got {k_levels}")
    tol = rel_tol * params.omega_c
    history: list[tuple[int, np.ndarray]] = []
    prev: np.ndarray | None = None
    eig = None
    flags = None
    n_max = n_max_start
    while n_max <= n_max_cap:
        space = HilbertSpace(params.n_qubits, n_max)
        if space.dim < k_levels:
            n_max *= 2
            continue
        eig = diagonalize(build_hamiltonian(params, space), space, k_levels)
        history.append((n_max, eig.energies.copy()))
        if prev is not None:
            flags = np.abs(eig.energies - prev) < tol
            if flags.all():
                return replace(eig, converged=flags)
        prev = eig.energies
        n_max *= 2
    last_deltas = (
        np.abs(history[-1][1] - history[-2][1]) if len(history) > 1 else None
    )
    worst = float(last_deltas.max()) if last_deltas is not None else float("nan")
    raise NonConvergentError(
        f"levels still moving at n_max={history[-1][0] if history else n_max_cap}"
        f" (worst |dE| = {worst:.3e}, tol = {tol:.3e}); "
        "the model may be at or beyond the spectral collapse",
        params=params,
        history=history,
        partial=replace(eig, converged=flags)
        if eig is not None and flags is not None
        else eig,
    )


def _embed_states(states: np.ndarray, src: HilbertSpace, dst: HilbertSpace) -> np.ndarray:
    """Zero-pad eigenvectors from a smaller Fock cutoff into a larger one."""
    if src.n_max == dst.n_max:
        return states
    if src.n_qubits != dst.n_qubits or src.n_max > dst.n_max:
        raise ValueError("can only embed into a larger cutoff of the same model")
    k = states.shape[1]
    cube = states.reshape(src.qubit_dim, src.boson_dim, k)
    out = np.zeros((dst.qubit_dim, dst.boson_dim, k), dtype=states.dtype)
    out[:, : src.boson_dim, :] = cube
    return out.reshape(dst.dim, k)


def sweep_coupling(
    params: ModelParams,
    g_grid,
    k_levels: int,
    rel_tol: float = 1e-8,
) -> SweepResult:
    """Converged spectra on an increasing coupling grid with level tracking.

    Levels at neighbouring grid points are matched by maximal eigenvector
    overlap (optimal assignment), which keeps identities straight through the
    level crossings that energy ordering would scramble.
    """
    g_grid = np.asarray(g_grid, dtype=float)
    if g_grid.ndim != 1 or len(g_grid) < 1:
        raise ValueError("g_grid must be a non-empty 1-d sequence")
    if np.any(np.diff(g_grid) <= 0):
        raise ValueError("g_grid must be strictly increasing")
    if np.any(g_grid < 0):
        raise ValueError("g_grid entries must be >= 0")
    g_col = collapse_coupling(params)
    if g_grid[-1] >= g_col:
        raise ValueError(
            f"g_grid must stay below the collapse coupling {g_col:.6g}"
        )

    decomps = []
    for g in g_grid:
        try:
            decomps.append(converge_spectrum(replace(params, g2=float(g)), k_levels, rel_tol))
        except NonConvergentError as err:
            raise NonConvergentError(
                f"sweep failed to converge at g2={g:.12g}: {err}",
                params=replace(params, g2=float(g)),
                history=err.history,
                partial=err.partial,
            ) from err

    continuity = []
    overlaps = []
    for a, b in zip(decomps[:-1], decomps[1:]):
        big = a.space if a.space.n_max >= b.space.n_max else b.space
        sa = _embed_states(a.states, a.space, big)
        sb = _embed_states(b.states, b.space, big)
        ov = np.abs(sa.conj().T @ sb)
        row, col = linear_sum_assignment(-ov)
        perm = np.empty(k_levels, dtype=int)
        perm[row] = col
        continuity.append(perm)
        overlaps.append(ov[row, col][np.argsort(row)])

    return SweepResult(
        g_values=g_grid,
        energies=np.stack([d.energies for d in decomps]),
        parities=np.stack([d.parities for d in decomps]),
        converged=np.stack([d.converged for d in decomps]),
        n_max_used=np.array([d.n_max_used for d in decomps]),
        continuity_map=continuity,
        matched_overlaps=overlaps,
    )


def estimate_collapse(
    params: ModelParams,
    grid_fractions=(0.90, 0.92, 0.94, 0.96, 0.98),
    rel_tol: float = 1e-8,
    spacing_band: tuple[int, int] = (10, 20),
    probe_above: bool = True,
) -> CollapseDiagnostics:
    """Locate the collapse coupling from the closing high-ladder spacings.

    The mean spacing of levels ``spacing_band`` scales like
    sqrt(omega_c (omega_c - 4 N g)) near the endpoint, so spacing^2 is fitted
    linearly in g over ``grid_fractions`` of the analytic point and the root
    of the fit is returned.  The low levels keep discrete character at the
    collapse, which is why the band starts at level 10.

    Falls back to method "convergence-failure" (the smallest coupling whose
    convergence run gave up) when fewer than 4 grid points survive.
    """
    lo, hi = spacing_band
    if not 0 <= lo < hi:
        raise ValueError(f"invalid spacing band {spacing_band}")
    g_col = collapse_coupling(params)
    samples = []
    failures = []
    for frac in grid_fractions:
        g = frac * g_col
        try:
            eig = converge_spectrum(replace(params, g2=g), hi + 1, rel_tol)
        except NonConvergentError:
            failures.append(g)
            continue
        spacing = (eig.energies[hi] - eig.energies[lo]) / (hi - lo)
        samples.append((g, spacing))

    if probe_above and not failures:
        probe_g = 1.02 * g_col
        try:
            converge_spectrum(
                replace(params, g2=probe_g), hi + 1, rel_tol, n_max_cap=1024
            )
        except NonConvergentError:
            failures.append(probe_g)

    curve = np.array(samples, dtype=float).reshape(-1, 2)
    first_fail = min(failures) if failures else None

    if len(samples) < 4:
        if first_fail is not None:
            return CollapseDiagnostics(
                g_col_analytic=g_col,
                g_col_estimated=first_fail,
                method="convergence-failure",
                spacing_curve=curve,
                first_failing_g=first_fail,
            )
        raise CollapseFitError(
            f"only {len(samples)} usable grid points, need 4 for the fit"
        )

    coeffs = np.polyfit(curve[:, 0], curve[:, 1] ** 2, 1)
    slope, intercept = coeffs
    if slope >= 0:
        raise CollapseFitError(
            "level spacings do not close with increasing g; no collapse trend"
        )
    g_est = -intercept / slope
    if g_est <= 0:
        raise CollapseFitError(f"fit root {g_est:.6g} is not positive")
    return CollapseDiagnostics(
        g_col_analytic=g_col,
        g_col_estimated=float(g_est),
        method="spacing-extrapolation",
        spacing_curve=curve,
        first_failing_g=first_fail,
    )


def transition_table(eigs: EigenDecomposition, X: sp.spmatrix) -> list[Transition]:
    """All upward transition frequencies and |matrix elements| of X.

    Returns one entry per ordered pair j < k, sorted by frequency.  Requires
    every retained level to carry a converged flag, since transition data from
    drifting levels would be meaningless.
    """
    if not bool(np.all(eigs.converged)):
        raise ValueError("transition_table needs fully converged levels")
    mat = eigs.states.conj().T @ (sp.csr_matrix(X) @ eigs.states)
    out = []
    k_tot = eigs.k_levels
    for j in range(k_tot):
        for k in range(j + 1, k_tot):
            out.append(
                Transition(
                    j=j,
                    k=k,
                    frequency=float(eigs.energies[k] - eigs.energies[j]),
                    matrix_element=float(abs(mat[j, k])),
                )
            )
    out.sort(key=lambda t: (t.frequency, t.j, t.k))
    return out


def state_labels(eigs: EigenDecomposition) -> list[str]:
    """Labels like '0+', '1-': position within the parity sector by energy."""
    counters = {1: 0, -1: 0}
    labels = []
    for par in eigs.parities:
        p = int(par)
        labels.append(f"{counters[p]}{'+' if p == 1 else '-'}")
        counters[p] += 1
    return labels
