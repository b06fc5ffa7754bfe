"""Spin-chain Hamiltonians as sums of local operator products.

Each model is kept symbolic (a list of :class:`HamiltonianTerm`) so that the
same object feeds both the dense exact-diagonalization path and the
first-order Trotter circuit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import reduce

import numpy as np

from .errors import HermiticityError, SizeCapError, UnsupportedTermError
from .statevector import CircuitPlan, GateOp, SiteRegister, dense_gate

DENSE_CAP = 1 << 14
MAX_TERM_SUPPORT = 3

# Pauli and projector matrices (qubits).
X = np.array([[0, 1], [1, 0]], dtype=complex)
Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
Z = np.array([[1, 0], [0, -1]], dtype=complex)
P0 = np.array([[1, 0], [0, 0]], dtype=complex)
I2 = np.eye(2, dtype=complex)

# Spin-1 operators in the |+1>, |0>, |-1> ordering (digit 0 is S^z = +1).
_r = 1 / math.sqrt(2)
SX1 = _r * np.array([[0, 1, 0], [1, 0, 1], [0, 1, 0]], dtype=complex)
SY1 = _r * np.array([[0, -1j, 0], [1j, 0, -1j], [0, 1j, 0]], dtype=complex)
SZ1 = np.diag([1.0, 0.0, -1.0]).astype(complex)
I3 = np.eye(3, dtype=complex)


@dataclass(frozen=True, eq=False)
class LocalOperator:
    site: int
    matrix: np.ndarray
    name: str = ""

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=complex)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError(f"local operator on site {self.site} is not square")
        object.__setattr__(self, "matrix", m)


@dataclass(frozen=True)
class HamiltonianTerm:
    """``coefficient * prod(factors)``; factors sit on strictly increasing sites."""

    coefficient: float
    factors: tuple[LocalOperator, ...]

    def __post_init__(self):
        sites = [f.site for f in self.factors]
        if any(b <= a for a, b in zip(sites, sites[1:])):
            raise ValueError(f"factor sites must be strictly increasing, got {sites}")

    @property
    def support(self) -> tuple[int, ...]:
        return tuple(f.site for f in self.factors)

    def local_matrix(self) -> np.ndarray:
        """``coefficient * kron(factors)`` on the term's own support."""
        if not self.factors:
            return np.array([[self.coefficient]], dtype=complex)
        return self.coefficient * reduce(np.kron, [f.matrix for f in self.factors])


def term(coefficient: float, *factors: tuple[int, np.ndarray, str]) -> HamiltonianTerm:
    ops = sorted((LocalOperator(s, m, n) for s, m, n in factors), key=lambda f: f.site)
    return HamiltonianTerm(float(coefficient), tuple(ops))


@dataclass
class HamiltonianSpec:
    register: SiteRegister
    terms: list[HamiltonianTerm]
    label: str = ""
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        for t in self.terms:
            for f in t.factors:
                self.register.check_sites([f.site])
                d = self.register.local_dims[f.site]
                if f.matrix.shape != (d, d):
                    raise ValueError(
                        f"operator {f.name!r} has shape {f.matrix.shape} on a site of dimension {d}")


# --------------------------------------------------------------------------
# model builders
# --------------------------------------------------------------------------

def build_oat(L: int, coupling: float = 0.5, include_diagonal: bool = True) -> HamiltonianSpec:
    """One-axis twisting ``coupling * sum_{i,j} Z_i Z_j`` on ``L`` qubits.

    The ordered double sum is stored as ``2*coupling`` on every pair ``i < j``;
    its ``i == j`` part is the constant ``coupling * L`` (identity term), kept
    when ``include_diagonal`` is set. With the default ``coupling = 1/2`` the
    x-polarized coherent state becomes a GHZ state at ``t = pi/4``; a coupling
    of ``1/4`` reaches it at ``t = pi/2`` instead.
    """
    if L < 2:
        raise ValueError("OAT needs L >= 2")
    terms = [term(2 * coupling, (i, Z, "Z"), (j, Z, "Z"))
             for i in range(L) for j in range(i + 1, L)]
    if include_diagonal:
        terms.append(HamiltonianTerm(coupling * L, ()))
    return HamiltonianSpec(SiteRegister.uniform(L, 2), terms, "oat",
                           {"L": L, "coupling": coupling, "include_diagonal": include_diagonal})


def build_pxp(L: int, h: float, periodic: bool = True) -> HamiltonianSpec:
    """``sum_i P_{i-1} X_i P_{i+1} - h sum_i Z_i`` with ``P = |0><0|``.

    Kinetic terms come first (by site), then field terms. Open chains drop the
    missing projector at each edge. Zero-field terms are omitted.
    """
    if periodic and L < 3:
        raise ValueError("periodic PXP needs L >= 3")
    if L < 2:
        raise ValueError("PXP needs L >= 2")
    terms = []
    for i in range(L):
        factors = [(i, X, "X")]
        for j in (i - 1, i + 1):
            if periodic:
                factors.append((j % L, P0, "P"))
            elif 0 <= j < L:
                factors.append((j, P0, "P"))
        terms.append(term(1.0, *factors))
    if h != 0:
        terms += [term(-h, (i, Z, "Z")) for i in range(L)]
    return HamiltonianSpec(SiteRegister.uniform(L, 2), terms, "pxp",
                           {"L": L, "h": h, "periodic": periodic})


def build_aklt(L: int, h: float) -> HamiltonianSpec:
    """Open spin-1 AKLT chain with a longitudinal field ``-(h/L) sum_i S^z_i``.

    Per bond: ``1/2 S.S + 1/6 (S.S)^2 + 1/3``, with the square expanded into
    the nine products ``S^a S^b (x) S^a S^b`` and the constant carried as an
    identity term on the bond.
    """
    if L < 2:
        raise ValueError("AKLT needs L >= 2")
    spins = (("Sx", SX1), ("Sy", SY1), ("Sz", SZ1))
    terms = []
    for i in range(L - 1):
        j = i + 1
        for name, s in spins:
            terms.append(term(0.5, (i, s, name), (j, s, name)))
        for na, a in spins:
            for nb, b in spins:
                ab = a @ b
                terms.append(term(1 / 6, (i, ab, na + nb), (j, ab, na + nb)))
        terms.append(term(1 / 3, (i, I3, "I"), (j, I3, "I")))
    if h != 0:
        terms += [term(-h / L, (i, SZ1, "Sz")) for i in range(L)]
    return HamiltonianSpec(SiteRegister.uniform(L, 3), terms, "aklt", {"L": L, "h": h})


# --------------------------------------------------------------------------
# dense matrices
# --------------------------------------------------------------------------

def embed_operator(ops: dict[int, np.ndarray], register: SiteRegister) -> np.ndarray:
    """Kronecker product of ``ops`` (site -> matrix) with identities elsewhere."""
    mats = [ops.get(s, np.eye(d, dtype=complex)) for s, d in enumerate(register.local_dims)]
    return reduce(np.kron, mats)


def dense_matrix(spec: HamiltonianSpec, cap: int = DENSE_CAP) -> np.ndarray:
    n = spec.register.total_dim
    if n > cap:
        raise SizeCapError(f"dense matrix of dimension {n} exceeds cap {cap}")
    H = np.zeros((n, n), dtype=complex)
    for t in spec.terms:
        if not t.factors:
            H[np.diag_indices(n)] += t.coefficient
            continue
        H += t.coefficient * embed_operator({f.site: f.matrix for f in t.factors}, spec.register)
    dev = np.max(np.abs(H - H.conj().T)) if n else 0.0
    if dev > 1e-12:
        raise HermiticityError(f"{spec.label} matrix is not Hermitian (deviation {dev:.2e})")
    return H


def site_operator(matrix: np.ndarray, site: int, register: SiteRegister) -> np.ndarray:
    return embed_operator({site: np.asarray(matrix, dtype=complex)}, register)


def spectral_norm(H: np.ndarray) -> float:
    """Largest absolute eigenvalue of a Hermitian matrix."""
    if H.size == 0:
        return 0.0
    return float(np.max(np.abs(np.linalg.eigvalsh(H))))


def hermitian_expm(G: np.ndarray, tau: float) -> np.ndarray:
    """``exp(-i tau G)`` for Hermitian ``G`` via its eigendecomposition."""
    dev = np.max(np.abs(G - G.conj().T))
    if dev > 1e-10:
        raise HermiticityError(f"generator is not Hermitian (deviation {dev:.2e})")
    w, v = np.linalg.eigh(G)
    return (v * np.exp(-1j * tau * w)) @ v.conj().T


def exact_evolution(H: np.ndarray, t: float) -> np.ndarray:
    return hermitian_expm(H, t)


# --------------------------------------------------------------------------
# Trotterization
# --------------------------------------------------------------------------

def _term_groups(spec: HamiltonianSpec) -> list[tuple[tuple[int, ...], np.ndarray]]:
    """Consecutive terms on the same support, merged into one generator each.

    Merging is exact and only coarsens the product formula; it is what keeps
    the non-Hermitian products ``S^a S^b`` of the AKLT expansion inside a
    Hermitian (hence unitary) gate.
    """
    groups: list[tuple[tuple[int, ...], np.ndarray]] = []
    for t in spec.terms:
        if len(t.support) > MAX_TERM_SUPPORT:
            raise UnsupportedTermError(
                f"term on {len(t.support)} sites exceeds the {MAX_TERM_SUPPORT}-site limit")
        m = t.local_matrix()
        if groups and groups[-1][0] == t.support:
            groups[-1] = (t.support, groups[-1][1] + m)
        else:
            groups.append((t.support, m))
    return groups


def trotter_step_gates(spec: HamiltonianSpec, dt: float) -> list[GateOp]:
    """One first-order step ``prod_terms exp(-i dt H_term)`` in term order."""
    gates = []
    for support, gen in _term_groups(spec):
        if not support:
            # constant term: a global phase, carried on site 0
            d0 = spec.register.local_dims[0]
            phase = np.exp(-1j * dt * gen[0, 0].real)
            gates.append(dense_gate((0,), phase * np.eye(d0), label="phase", check=False))
            continue
        gates.append(dense_gate(support, hermitian_expm(gen, dt), label="trotter"))
    return gates


def trotter_circuit(spec: HamiltonianSpec, t: float, n_T: int) -> CircuitPlan:
    if n_T < 1:
        raise ValueError("n_T must be >= 1")
    step = trotter_step_gates(spec, t / n_T)
    return CircuitPlan(spec.register, step * n_T,
                       metadata={"t": t, "n_T": n_T, "label": spec.label})


def trotter_error_bound(norm_H: float, t: float, n_T: int) -> float:
    """Operator-norm bound ``||H||^2 t^2 / (2 n_T)`` of the first-order formula."""
    return norm_H ** 2 * t ** 2 / (2 * n_T)


def gate_count_estimate(spec: HamiltonianSpec, m: int, n_T: int) -> int:
    """``2^(m+1) N_t + m^2`` with ``N_t`` the gate count of one Trotterized evolution."""
    n_t = len(trotter_step_gates(spec, 1.0)) * n_T
    return gate_count_formula(m, n_t)


def gate_count_formula(m: int, n_t: int) -> int:
    return 2 ** (m + 1) * n_t + m * m
