"""Exact-diagonalization reference values.

Everything here works on dense matrices and plain amplitude vectors; it is
the ground truth the circuit estimators are checked against.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import bisect
from scipy.sparse.csgraph import connected_components

from .errors import (
    DomainError,
    GateShapeError,
    HermiticityError,
    NoGapError,
    NormalizationError,
    ThermalMatchError,
)
from .hamiltonians import HamiltonianSpec, Z, dense_matrix, site_operator

NORM_TOL = 1e-9
RANGE_SLACK = 1e-12


@dataclass(frozen=True, eq=False)
class Spectrum:
    """Ascending eigenvalues, eigenvector columns and degeneracy groups."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    groups: tuple[tuple[int, ...], ...]
    deg_tol: float

    @property
    def dim(self) -> int:
        return self.eigenvalues.size

    @property
    def group_energies(self) -> np.ndarray:
        return np.array([self.eigenvalues[list(g)].mean() for g in self.groups])

    @property
    def norm(self) -> float:
        return float(np.max(np.abs(self.eigenvalues))) if self.dim else 0.0

    @property
    def spread(self) -> float:
        """Width ``max - min`` of the spectrum."""
        return float(self.eigenvalues[-1] - self.eigenvalues[0])

    @property
    def is_degenerate(self) -> bool:
        return any(len(g) > 1 for g in self.groups)

    def coefficients(self, amplitudes) -> np.ndarray:
        psi = np.asarray(amplitudes, dtype=complex).reshape(-1)
        if psi.size != self.dim:
            raise GateShapeError(f"state of length {psi.size} vs spectrum of dimension {self.dim}")
        return self.eigenvectors.conj().T @ psi

    def group_weights(self, amplitudes) -> np.ndarray:
        """``p_j = <psi|P_j|psi>`` for every degeneracy group."""
        w = np.abs(self.coefficients(amplitudes)) ** 2
        return np.array([w[list(g)].sum() for g in self.groups])


@dataclass(frozen=True)
class IprReport:
    q: int
    value: float
    entropy: float
    basis_label: str = "computational"


def _amps(state) -> np.ndarray:
    if hasattr(state, "to_dense"):
        return state.to_dense().amplitudes
    return np.asarray(state, dtype=complex).reshape(-1)


def group_degenerate(eigenvalues: np.ndarray, deg_tol: float) -> tuple[tuple[int, ...], ...]:
    """Group ascending eigenvalues lying within ``deg_tol`` of their group's lowest member."""
    if eigenvalues.size == 0:
        return ()
    groups = [[0]]
    for k in range(1, eigenvalues.size):
        if eigenvalues[k] - eigenvalues[groups[-1][0]] <= deg_tol:
            groups[-1].append(k)
        else:
            groups.append([k])
    return tuple(tuple(g) for g in groups)


def eigendecompose(H: np.ndarray, deg_tol: float | None = None) -> Spectrum:
    """Full Hermitian eigendecomposition; ``deg_tol`` defaults to ``1e-8 * ||H||``."""
    H = np.asarray(H, dtype=complex)
    if H.ndim != 2 or H.shape[0] != H.shape[1]:
        raise HermiticityError("matrix must be square")
    dev = np.max(np.abs(H - H.conj().T)) if H.size else 0.0
    if dev > 1e-10:
        raise HermiticityError(f"matrix is not Hermitian (deviation {dev:.2e})")
    w, v = np.linalg.eigh(H)
    if deg_tol is None:
        deg_tol = 1e-8 * max(float(np.max(np.abs(w))) if w.size else 0.0, 1e-300)
    return Spectrum(w, v, group_degenerate(w, deg_tol), float(deg_tol))


def spectrum_of(spec: HamiltonianSpec, deg_tol: float | None = None) -> Spectrum:
    return eigendecompose(dense_matrix(spec), deg_tol)


def participation_entropy(value: float, q: int) -> float:
    """Renyi participation entropy ``log2(I_q) / (1 - q)``."""
    if not value > 0:
        raise DomainError(f"IPR must be positive, got {value}")
    if q == 1:
        raise DomainError("q = 1 is not a Renyi index here")
    return math.log2(min(value, 1.0)) / (1 - q)


def _report(value: float, q: int, label: str) -> IprReport:
    return IprReport(q, float(value), participation_entropy(value, q), label)


def ipr_from_weights(weights, q: int, label: str = "") -> IprReport:
    if q < 2:
        raise DomainError("the Renyi index q must be >= 2")
    return _report(float(np.sum(np.asarray(weights, dtype=float) ** q)), q, label)


def ipr_direct(amplitudes, q: int, basis_label: str = "computational") -> IprReport:
    """``sum_i |c_i|^(2q)`` of a normalized vector."""
    c = _amps(amplitudes)
    norm = np.linalg.norm(c)
    if abs(norm - 1) > NORM_TOL:
        raise NormalizationError(f"state norm is {norm:.12f}, expected 1")
    return ipr_from_weights(np.abs(c) ** 2, q, basis_label)


def ipr_degenerate(state, spectrum: Spectrum, q: int) -> IprReport:
    """``sum_j p_j^q`` with ``p_j`` the weight in degeneracy group ``j``."""
    c = _amps(state)
    if abs(np.linalg.norm(c) - 1) > NORM_TOL:
        raise NormalizationError("state is not normalized")
    return ipr_from_weights(spectrum.group_weights(c), q, "eigenbasis")


def ipr_in_eigenbasis(state, spectrum: Spectrum, q: int) -> IprReport:
    """IPR in the eigenbasis; degenerate spectra are handled per eigenspace."""
    if spectrum.is_degenerate:
        return ipr_degenerate(state, spectrum, q)
    return ipr_direct(spectrum.coefficients(_amps(state)), q, "eigenbasis")


def survival_average_numeric(state, H: np.ndarray | Spectrum, t_max: float,
                             n_samples: int = 1_000_000, chunk: int = 65536) -> float:
    """Uniform-grid mean of ``|<psi|exp(-iHt)|psi>|^2`` over ``t in [0, t_max)``.

    The amplitude is evaluated in the eigenbasis, summing over occupied
    eigenspaces only.
    """
    if not t_max > 0:
        raise DomainError("t_max must be positive")
    spectrum = H if isinstance(H, Spectrum) else eigendecompose(H)
    p = spectrum.group_weights(_amps(state))
    e = spectrum.group_energies
    occ = p > 1e-300
    p, e = p[occ], e[occ]
    e = e - e.mean() if e.size else e
    ts = np.arange(n_samples) * (t_max / n_samples)
    total = 0.0
    for s in range(0, n_samples, chunk):
        amp = np.exp(-1j * np.outer(ts[s:s + chunk], e)) @ p
        total += float(np.sum(np.abs(amp) ** 2))
    return total / n_samples


def min_gap(spectrum: Spectrum) -> float:
    """Smallest spacing between consecutive degeneracy-group energies."""
    if len(spectrum.groups) < 2:
        raise NoGapError("spectrum has a single degeneracy group")
    return float(np.min(np.diff(spectrum.group_energies)))


def ground_state(spectrum: Spectrum, tie_breaker: np.ndarray | None = None) -> tuple[np.ndarray, bool]:
    """Lowest eigenvector and whether a degenerate tie had to be broken.

    A degenerate ground space is resolved by diagonalizing ``tie_breaker``
    inside it and keeping its lowest eigenvector (for a field term this is the
    zero-field limit from the positive side). Remaining ties keep the vector
    whose sorted ``|amplitude|`` profile is lexicographically largest. The
    global phase makes the largest-magnitude entry real positive.
    """
    g = list(spectrum.groups[0])
    basis = spectrum.eigenvectors[:, g]
    tied = len(g) > 1
    if tied and tie_breaker is not None:
        sub = basis.conj().T @ tie_breaker @ basis
        w, u = np.linalg.eigh((sub + sub.conj().T) / 2)
        keep = np.flatnonzero(w - w[0] <= spectrum.deg_tol + 1e-12)
        basis = basis @ u[:, keep]
    if basis.shape[1] > 1:
        profiles = [tuple(np.round(np.sort(np.abs(basis[:, k]))[::-1], 12)) for k in range(basis.shape[1])]
        basis = basis[:, [max(range(len(profiles)), key=lambda k: profiles[k])]]
    v = basis[:, 0]
    k = int(np.argmax(np.round(np.abs(v), 12)))
    v = v * (abs(v[k]) / v[k])
    return v / np.linalg.norm(v), tied


# --------------------------------------------------------------------------
# thermalization diagnostics
# --------------------------------------------------------------------------

def diagonal_ensemble_average(state, spectrum: Spectrum, op: np.ndarray) -> float:
    """Infinite-time average ``sum_j <psi|P_j O P_j|psi>``."""
    c = spectrum.coefficients(_amps(state))
    total = 0.0
    for g in spectrum.groups:
        v = spectrum.eigenvectors[:, list(g)] @ c[list(g)]
        total += float(np.real(v.conj() @ op @ v))
    return total


def canonical_average(spectrum: Spectrum, op: np.ndarray, beta: float) -> float:
    w = spectrum.eigenvalues
    logw = -beta * w
    weights = np.exp(logw - logw.max())
    diag = np.real(np.einsum("ij,ik,kj->j", spectrum.eigenvectors.conj(), op, spectrum.eigenvectors))
    return float(weights @ diag / weights.sum())


def canonical_energy(spectrum: Spectrum, beta: float) -> float:
    w = spectrum.eigenvalues
    logw = -beta * w
    weights = np.exp(logw - logw.max())
    return float(weights @ w / weights.sum())


def match_temperature(spectrum: Spectrum, energy: float, beta_scale: float = 100.0) -> float:
    """Inverse temperature whose canonical energy equals ``energy``.

    Solved by bisection on ``[-beta_max, beta_max]`` with
    ``beta_max = beta_scale / ||H||``.
    """
    scale = spectrum.norm
    if scale == 0:
        return 0.0
    beta_max = beta_scale / scale
    f = lambda b: canonical_energy(spectrum, b) - energy  # noqa: E731
    lo, hi = f(-beta_max), f(beta_max)
    if lo * hi > 0:
        if abs(lo) < 1e-12 * scale:
            return -beta_max
        if abs(hi) < 1e-12 * scale:
            return beta_max
        raise ThermalMatchError(
            f"energy {energy} outside the canonical range "
            f"[{canonical_energy(spectrum, beta_max)}, {canonical_energy(spectrum, -beta_max)}]")
    if lo == 0:
        return -beta_max
    return float(bisect(f, -beta_max, beta_max, xtol=1e-13, maxiter=500))


def dynamical_sector(H: np.ndarray, amplitudes, tol: float = 1e-12) -> np.ndarray:
    """Mask of basis states in the blocks of ``H`` that the state overlaps.

    Blocks are the connected components of the graph ``|H_ab| > tol``; the
    evolution never leaves their union.
    """
    _, labels = connected_components(np.abs(H) > tol, directed=False)
    occupied = np.unique(labels[np.abs(amplitudes) > 0])
    return np.isin(labels, occupied)


def delta_sigma_z(spec: HamiltonianSpec | np.ndarray, site: int, initial_state,
                  spectrum: Spectrum | None = None, register=None,
                  restrict_sector: bool = True) -> float:
    """Long-time average of ``Z_site`` minus its energy-matched canonical value.

    With ``restrict_sector`` both averages are taken inside the blocks of
    ``H`` reachable from the initial state (for PXP: the blockade subspace);
    otherwise the canonical ensemble runs over the full register and
    ``spectrum`` (if given) is reused.
    """
    if isinstance(spec, HamiltonianSpec):
        H = dense_matrix(spec)
        register = spec.register
    else:
        H = np.asarray(spec, dtype=complex)
    if register is None:
        raise ValueError("a register is needed to place Z on a site")
    psi = _amps(initial_state)
    if abs(np.linalg.norm(psi) - 1) > NORM_TOL:
        raise NormalizationError("initial state is not normalized")
    z = site_operator(Z, site, register)
    if restrict_sector:
        keep = dynamical_sector(H, psi)
        if not keep.all():
            H, psi, z = H[np.ix_(keep, keep)], psi[keep], z[np.ix_(keep, keep)]
            spectrum = None
    spectrum = spectrum or eigendecompose(H)
    long_time = diagonal_ensemble_average(psi, spectrum, z)
    energy = float(np.real(psi.conj() @ H @ psi))
    beta = match_temperature(spectrum, energy)
    return long_time - canonical_average(spectrum, z, beta)
