"""IPR estimator circuits: multi-copy permutation test and eigenbasis phase test.

Register layouts (site 0 first):

* computational basis: ``[ancilla] [copy 0] ... [copy q-1] [blank 0] ... [blank q-2]``,
  blank ``r`` receiving the digits of copy ``r + 1``;
* eigenbasis: ``[ancilla 0 .. m-1] [copy 0] [copy 1]``, ancilla ``k`` carrying
  binary weight ``2^(m-1-k)`` so that the ancilla register reads ``x`` in the
  usual big-endian order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import DomainError, UnsupportedRegisterError
from .hamiltonians import (
    HamiltonianSpec,
    dense_matrix,
    hermitian_expm,
    trotter_step_gates,
)
from .statevector import (
    HADAMARD,
    AnyState,
    CircuitPlan,
    GateOp,
    QuditState,
    SiteRegister,
    basis_state,
    choose_backend,
    cnot,
    cycle_gate,
    dense_gate,
    execute,
    gates_unitary,
    hadamard,
    outcome_probability,
    qft_gate,
    sample_outcomes,
    sum_gate,
    tensor_product,
)


SPARSE_MIN_DIM = 1 << 16
SPARSE_FILL = 16


@dataclass
class IprEstimate:
    q: int
    point_value: float
    n_shots: int | None = None
    std_error: float = 0.0
    error_bound: float | None = None
    metadata: dict = field(default_factory=dict)

    @property
    def exact(self) -> bool:
        return self.n_shots is None


def _zeros(dims: Sequence[int]) -> QuditState:
    return basis_state(SiteRegister(tuple(dims)), [0] * len(dims))


def _assemble(parts: Sequence[AnyState], register: SiteRegister, sparse: bool) -> AnyState:
    sparse = sparse or choose_backend(register) == "sparse"
    out = parts[0].to_sparse() if sparse else parts[0]
    for p in parts[1:]:
        out = tensor_product(out, p.to_sparse() if sparse else p)
    return out


def _nnz(psi: AnyState) -> int:
    if isinstance(psi, QuditState):
        return int(np.count_nonzero(psi.amplitudes))
    return int(psi.indices.size)


# --------------------------------------------------------------------------
# computational (or rotated) basis
# --------------------------------------------------------------------------

def basis_rotation_x(L: int) -> list[np.ndarray]:
    """Per-site Hadamards: they map the Pauli-X eigenbasis onto the computational one."""
    if L < 1:
        raise ValueError("L must be >= 1")
    return [HADAMARD.copy() for _ in range(L)]


def build_comp_basis_circuit(psi: QuditState, q: int,
                             basis_rotation: Sequence[np.ndarray] | None = None) -> CircuitPlan:
    """Circuit whose ancilla reads ``P0 = (1 + I_q) / 2``.

    ``basis_rotation`` lists one unitary per site, mapping the basis of
    interest onto the computational basis; it is applied to every copy first.
    """
    if q < 2:
        raise DomainError("q must be >= 2")
    dims = psi.register.local_dims
    if len(set(dims)) != 1:
        raise UnsupportedRegisterError(f"mixed local dimensions {dims} are not supported")
    d, n = dims[0], len(dims)
    if basis_rotation is not None and len(basis_rotation) != n:
        raise ValueError(f"need {n} rotation matrices, got {len(basis_rotation)}")
    register = SiteRegister((2,) + dims * (2 * q - 1))
    copy = [[1 + k * n + s for s in range(n)] for k in range(q)]
    blank = [[1 + (q + r) * n + s for s in range(n)] for r in range(q - 1)]

    gates: list[GateOp] = []
    if basis_rotation is not None:
        for k in range(q):
            for s, v in enumerate(basis_rotation):
                gates.append(dense_gate((copy[k][s],), v, label="V"))
    for r in range(q - 1):
        for s in range(n):
            src, dst = copy[r + 1][s], blank[r][s]
            gates.append(cnot(src, dst) if d == 2 else sum_gate(src, dst))
    gates.append(hadamard(0))
    gates.append(cycle_gate(copy, control=0))
    gates.append(hadamard(0))

    # every gate after the ancilla Hadamard permutes basis states, so the
    # support stays at 2 * nnz(psi)^q; sparse storage wins when that is small
    support = 2 * _nnz(psi) ** q
    sparse = register.total_dim > SPARSE_MIN_DIM and SPARSE_FILL * support <= register.total_dim
    initial = _assemble([_zeros((2,))] + [psi] * q + [_zeros(dims * (q - 1))], register, sparse)
    return CircuitPlan(register, gates, (0,), (0,), initial,
                       {"kind": "computational", "q": q, "d": d, "n": n,
                        "rotated": basis_rotation is not None})


def run_comp_basis_exact(plan: CircuitPlan, backend: str = "auto") -> IprEstimate:
    out = execute(plan, backend=backend)
    p0 = outcome_probability(out, plan.readout_sites, plan.readout_target)
    return IprEstimate(plan.metadata["q"], 2 * p0 - 1, metadata={**plan.metadata, "p0": p0})


def run_comp_basis_sampled(plan: CircuitPlan, n_shots: int, seed: int | None,
                           backend: str = "auto", final_state: AnyState | None = None) -> IprEstimate:
    """Shot-sampled estimate ``2 n0/N - 1`` with standard error ``2 sqrt(p(1-p)/N)``.

    ``final_state`` may carry an already executed output to skip re-running
    the circuit (the draw depends only on the output and the seed).
    """
    out = final_state if final_state is not None else execute(plan, backend=backend)
    counts = sample_outcomes(out, plan.readout_sites, n_shots, seed)
    p_hat = counts.get(tuple(plan.readout_target), 0) / n_shots
    se = 2 * math.sqrt(p_hat * (1 - p_hat) / n_shots)
    return IprEstimate(plan.metadata["q"], 2 * p_hat - 1, n_shots, se,
                       metadata={**plan.metadata, "seed": seed})


def required_shots(q: int, epsilon: float) -> int:
    """Copies of the state needed for accuracy ``epsilon``: ``ceil(q / epsilon^2)``."""
    if not epsilon > 0:
        raise DomainError("epsilon must be positive")
    v = q / epsilon ** 2
    r = round(v)
    return int(r) if abs(v - r) <= 1e-9 * v else math.ceil(v)


# --------------------------------------------------------------------------
# Hamiltonian eigenbasis
# --------------------------------------------------------------------------

def eigenbasis_error_bound(m: int, gap: float, t: float) -> float:
    """Upper bound ``4^-m pi^2 / (gap^2 t^2)`` on the phase-estimation residual."""
    if not gap > 0 or not t > 0:
        raise DomainError("gap and t must be positive")
    return 4.0 ** (-m) * math.pi ** 2 / (gap ** 2 * t ** 2)


def bound_is_valid(spread: float, t: float) -> bool:
    """The bound needs every phase difference inside ``(0, pi]``: ``spread * t <= pi``."""
    return spread * t <= math.pi * (1 + 1e-12)


def default_time(spread: float) -> float:
    if not spread > 0:
        raise DomainError("spectral spread must be positive")
    return math.pi / spread


def _shift(gate: GateOp, offset: int, controls: Sequence[tuple[int, int]]) -> GateOp:
    return GateOp(tuple(s + offset for s in gate.targets), gate.unitary,
                  tuple(controls) + tuple((s + offset, v) for s, v in gate.controls),
                  gate.kind, tuple(tuple(s + offset for s in b) for b in gate.blocks),
                  gate.exponent, gate.label)


def evolution_gates(spec: HamiltonianSpec, t: float, n_T: int,
                    exact_evolution: bool) -> list[GateOp]:
    """Gates of one ``U = exp(-iHt)`` on the bare system register."""
    if exact_evolution:
        n = spec.register.n_sites
        return [dense_gate(tuple(range(n)), hermitian_expm(dense_matrix(spec), t), label="U")]
    return trotter_step_gates(spec, t / n_T) * n_T


def evolution_unitary(spec: HamiltonianSpec, t: float, n_T: int, exact_evolution: bool) -> np.ndarray:
    if exact_evolution:
        return hermitian_expm(dense_matrix(spec), t)
    return gates_unitary(evolution_gates(spec, t, n_T, False), spec.register)


def build_eigenbasis_circuit(psi: QuditState, spec: HamiltonianSpec, t: float, m: int,
                             n_T: int = 10, exact_evolution: bool = False,
                             fuse: bool = True, unitary: np.ndarray | None = None) -> CircuitPlan:
    """Phase-test circuit whose all-zero ancilla probability approximates ``I^H_2``.

    Ancilla ``k`` controls ``U^w`` on copy 0 and ``(U^dag)^w`` on copy 1 with
    ``w = 2^(m-1-k)``. With ``fuse`` the powers are precomputed as one dense
    block gate per ancilla and copy (repeated squaring of the same ``U``);
    without it every factor of ``U`` is emitted ``w`` times. ``unitary``
    overrides the evolution operator (used by bound studies on raw matrices).
    """
    if m < 1:
        raise DomainError("m must be >= 1")
    if not t > 0:
        raise DomainError("t must be positive")
    if psi.register != spec.register:
        raise UnsupportedRegisterError("state and Hamiltonian live on different registers")
    dims = psi.register.local_dims
    n = len(dims)
    register = SiteRegister((2,) * m + dims * 2)
    c0, c1 = m, m + n

    gates: list[GateOp] = [hadamard(k) for k in range(m)]
    if fuse or unitary is not None:
        u = unitary if unitary is not None else evolution_unitary(spec, t, n_T, exact_evolution)
        powers = [u]
        for _ in range(m - 1):
            powers.append(powers[-1] @ powers[-1])
        for k in range(m):
            uw = powers[m - 1 - k]
            gates.append(dense_gate(tuple(range(c0, c0 + n)), uw, ((k, 1),), label="C-U^w"))
            gates.append(dense_gate(tuple(range(c1, c1 + n)), uw.conj().T, ((k, 1),),
                                    label="C-Udag^w"))
    else:
        step = evolution_gates(spec, t, n_T, exact_evolution)
        inverse = [g.dagger() for g in reversed(step)]
        for k in range(m):
            w = 2 ** (m - 1 - k)
            for _ in range(w):
                gates += [_shift(g, c0, ((k, 1),)) for g in step]
            for _ in range(w):
                gates += [_shift(g, c1, ((k, 1),)) for g in inverse]
    gates.append(qft_gate(tuple(range(m))))

    initial = _assemble([_zeros((2,) * m), psi, psi], register, sparse=False)
    return CircuitPlan(register, gates, tuple(range(m)), (0,) * m, initial,
                       {"kind": "eigenbasis", "q": 2, "m": m, "t": t, "n_T": n_T,
                        "exact_evolution": exact_evolution, "fused": fuse,
                        "label": spec.label})


def run_eigenbasis_circuit(plan: CircuitPlan, gap: float | None = None,
                           backend: str = "auto") -> IprEstimate:
    """Exact all-zero ancilla probability ``P_{0,m}``; ``gap`` attaches the residual bound."""
    out = execute(plan, backend=backend)
    p = outcome_probability(out, plan.readout_sites, plan.readout_target)
    meta = plan.metadata
    bound = eigenbasis_error_bound(meta["m"], gap, meta["t"]) if gap is not None else None
    return IprEstimate(2, p, error_bound=bound, metadata=dict(meta))


def run_eigenbasis_sampled(plan: CircuitPlan, n_shots: int, seed: int | None,
                           gap: float | None = None, backend: str = "auto") -> IprEstimate:
    out = execute(plan, backend=backend)
    counts = sample_outcomes(out, plan.readout_sites, n_shots, seed)
    p_hat = counts.get(tuple(plan.readout_target), 0) / n_shots
    meta = plan.metadata
    bound = eigenbasis_error_bound(meta["m"], gap, meta["t"]) if gap is not None else None
    return IprEstimate(2, p_hat, n_shots, math.sqrt(p_hat * (1 - p_hat) / n_shots), bound,
                       {**meta, "seed": seed})
