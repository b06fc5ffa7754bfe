"""Mixed-radix statevectors and the gate kernels used by the estimator circuits.

Convention: site 0 is the most significant mixed-radix digit, so the flat
index of digits ``(s_0, ..., s_{n-1})`` is ``sum_k s_k * prod(dims[k+1:])``.

Two storage formats share the same kernels' semantics:

* :class:`QuditState` keeps every amplitude in a dense array and applies
  gates on the ``dims``-shaped tensor view.
* :class:`SparseQuditState` keeps only the nonzero amplitudes as an
  ``(index, amplitude)`` list. The multi-copy circuits produce states whose
  support is tiny compared with the register (a 4-qubit state at ``q = 4``
  lives on 29 sites but on at most ``2 * 16**4`` basis states), so this is
  what makes them tractable.
"""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import (
    BlockShapeError,
    GateShapeError,
    InvalidBasisIndexError,
    NumericalDriftError,
    SizeCapError,
)

UNITARY_ATOL = 1e-10
DRIFT_TOL = 1e-9
DENSE_BACKEND_CAP = 1 << 22
EMBED_CAP = 1 << 12

HADAMARD = np.array([[1, 1], [1, -1]], dtype=complex) / math.sqrt(2)
PAULI_X = np.array([[0, 1], [1, 0]], dtype=complex)


@dataclass(frozen=True)
class SiteRegister:
    """Ordered local dimensions of a register; site 0 is leftmost."""

    local_dims: tuple[int, ...]

    def __post_init__(self):
        dims = tuple(int(d) for d in self.local_dims)
        if not dims:
            raise GateShapeError("a register needs at least one site")
        if any(d < 2 for d in dims):
            raise GateShapeError(f"local dimensions must be >= 2, got {dims}")
        object.__setattr__(self, "local_dims", dims)

    @classmethod
    def uniform(cls, n_sites: int, d: int = 2) -> SiteRegister:
        return cls((d,) * n_sites)

    @property
    def n_sites(self) -> int:
        return len(self.local_dims)

    @property
    def total_dim(self) -> int:
        return math.prod(self.local_dims)

    @property
    def strides(self) -> tuple[int, ...]:
        out = [1] * self.n_sites
        for k in range(self.n_sites - 2, -1, -1):
            out[k] = out[k + 1] * self.local_dims[k + 1]
        return tuple(out)

    def __add__(self, other: SiteRegister) -> SiteRegister:
        return SiteRegister(self.local_dims + other.local_dims)

    def sub_dims(self, sites: Sequence[int]) -> tuple[int, ...]:
        self.check_sites(sites)
        return tuple(self.local_dims[s] for s in sites)

    def check_sites(self, sites: Sequence[int]) -> None:
        for s in sites:
            if not 0 <= s < self.n_sites:
                raise GateShapeError(f"site {s} outside register of {self.n_sites} sites")
        if len(set(sites)) != len(sites):
            raise GateShapeError(f"repeated site in {tuple(sites)}")

    def index_of(self, digits: Sequence[int]) -> int:
        if len(digits) != self.n_sites:
            raise InvalidBasisIndexError(
                f"expected {self.n_sites} digits, got {len(digits)}")
        idx = 0
        for dgt, d in zip(digits, self.local_dims):
            if not 0 <= dgt < d:
                raise InvalidBasisIndexError(f"digit {dgt} out of range for local dim {d}")
            idx = idx * d + int(dgt)
        return idx

    def digits_of(self, index: int) -> tuple[int, ...]:
        if not 0 <= index < self.total_dim:
            raise InvalidBasisIndexError(f"index {index} out of range")
        out = []
        for d in reversed(self.local_dims):
            index, r = divmod(index, d)
            out.append(r)
        return tuple(reversed(out))


class QuditState:
    """Dense normalized amplitude vector over a :class:`SiteRegister`."""

    __slots__ = ("register", "amplitudes")

    def __init__(self, register: SiteRegister, amplitudes, *, check: bool = True):
        amps = np.ascontiguousarray(amplitudes, dtype=complex).reshape(-1)
        if amps.size != register.total_dim:
            raise GateShapeError(
                f"{amps.size} amplitudes for register of dimension {register.total_dim}")
        self.register = register
        self.amplitudes = amps
        if check:
            _check_drift(self)

    def __repr__(self):
        return f"QuditState(dims={self.register.local_dims})"

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def tensor(self) -> np.ndarray:
        return self.amplitudes.reshape(self.register.local_dims)

    def copy(self) -> QuditState:
        return QuditState(self.register, self.amplitudes.copy(), check=False)

    def to_dense(self) -> QuditState:
        return self

    def to_sparse(self) -> SparseQuditState:
        nz = np.flatnonzero(self.amplitudes)
        return SparseQuditState(self.register, nz, self.amplitudes[nz], check=False)


class SparseQuditState:
    """Nonzero amplitudes of a state as (flat index, amplitude) pairs.

    Indices are unique but kept in no particular order; kernels that merge
    amplitudes produce unique indices again.
    """

    __slots__ = ("register", "indices", "amplitudes")

    def __init__(self, register: SiteRegister, indices, amplitudes, *, check: bool = True):
        idx = np.asarray(indices, dtype=np.int64).reshape(-1)
        amps = np.asarray(amplitudes, dtype=complex).reshape(-1)
        if idx.shape != amps.shape:
            raise GateShapeError("indices and amplitudes differ in length")
        if idx.size and (idx.min() < 0 or idx.max() >= register.total_dim):
            raise InvalidBasisIndexError("sparse index outside the register")
        self.register = register
        self.indices = idx
        self.amplitudes = amps
        if check:
            if np.unique(idx).size != idx.size:
                raise InvalidBasisIndexError("duplicate sparse indices")
            _check_drift(self)

    def __repr__(self):
        return f"SparseQuditState(dims={self.register.local_dims}, nnz={self.indices.size})"

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def copy(self) -> SparseQuditState:
        return SparseQuditState(self.register, self.indices.copy(), self.amplitudes.copy(),
                                check=False)

    def digits(self, site: int) -> np.ndarray:
        return (self.indices // self.register.strides[site]) % self.register.local_dims[site]

    def to_dense(self) -> QuditState:
        if self.register.total_dim > DENSE_BACKEND_CAP:
            raise SizeCapError(f"register dimension {self.register.total_dim} too large for dense storage")
        amps = np.zeros(self.register.total_dim, dtype=complex)
        amps[self.indices] = self.amplitudes
        return QuditState(self.register, amps, check=False)

    def to_sparse(self) -> SparseQuditState:
        return self


AnyState = QuditState | SparseQuditState


def _check_drift(state: AnyState) -> None:
    drift = abs(state.norm() - 1.0)
    if not drift <= DRIFT_TOL:
        raise NumericalDriftError(f"state norm deviates from 1 by {drift:.3e}")


# --------------------------------------------------------------------------
# state preparation
# --------------------------------------------------------------------------

def basis_state(register: SiteRegister, digits: Sequence[int]) -> QuditState:
    amps = np.zeros(register.total_dim, dtype=complex)
    amps[register.index_of(digits)] = 1.0
    return QuditState(register, amps, check=False)


def from_amplitudes(amplitudes, local_dims: Sequence[int] | None = None) -> QuditState:
    """Wrap a normalized vector; qubit sites are assumed when ``local_dims`` is omitted."""
    amps = np.asarray(amplitudes, dtype=complex).reshape(-1)
    if local_dims is None:
        n = int(round(math.log2(amps.size)))
        if 1 << n != amps.size:
            raise GateShapeError("vector length is not a power of two; pass local_dims")
        local_dims = (2,) * n
    return QuditState(SiteRegister(tuple(local_dims)), amps)


def random_state(register: SiteRegister, rng: np.random.Generator) -> QuditState:
    """Haar-random pure state (normalized complex Gaussian vector)."""
    v = rng.normal(size=register.total_dim) + 1j * rng.normal(size=register.total_dim)
    return QuditState(register, v / np.linalg.norm(v))


def ghz_state(n_sites: int, d: int = 2) -> QuditState:
    """``(|0...0> + |d-1 ... d-1>)/sqrt(2)`` on ``n_sites`` sites of dimension ``d``."""
    reg = SiteRegister.uniform(n_sites, d)
    amps = np.zeros(reg.total_dim, dtype=complex)
    amps[0] = amps[-1] = 1 / math.sqrt(2)
    return QuditState(reg, amps)


def product_state(site_vectors: Sequence[np.ndarray]) -> QuditState:
    amps = np.ones(1, dtype=complex)
    for v in site_vectors:
        amps = np.kron(amps, np.asarray(v, dtype=complex))
    reg = SiteRegister(tuple(len(v) for v in site_vectors))
    return QuditState(reg, amps / np.linalg.norm(amps))


def tensor_product(a: AnyState, b: AnyState) -> AnyState:
    reg = a.register + b.register
    if isinstance(a, QuditState) and isinstance(b, QuditState):
        return QuditState(reg, np.kron(a.amplitudes, b.amplitudes), check=False)
    sa, sb = a.to_sparse(), b.to_sparse()
    idx = (sa.indices[:, None] * b.register.total_dim + sb.indices[None, :]).reshape(-1)
    amps = np.outer(sa.amplitudes, sb.amplitudes).reshape(-1)
    return SparseQuditState(reg, idx, amps, check=False)


def tensor_power(state: AnyState, k: int) -> AnyState:
    out = state
    for _ in range(k - 1):
        out = tensor_product(out, state)
    return out


# --------------------------------------------------------------------------
# gates
# --------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class GateOp:
    """One circuit element acting on ``targets``, optionally controlled.

    ``kind`` selects the kernel:

    * ``"dense"`` - ``unitary`` over the target sites (first target most significant)
    * ``"sum"`` - targets ``(a, b)``: ``|x, y> -> |x, y + exponent*x mod d>``
    * ``"cycle"`` - ``blocks`` are cyclically shifted by ``exponent`` places,
      block ``k`` receiving the content of block ``k - exponent``

    ``controls`` holds ``(site, value)`` pairs; the gate acts only on the
    subspace where every control site carries its value.
    """

    targets: tuple[int, ...]
    unitary: np.ndarray | None = None
    controls: tuple[tuple[int, int], ...] = ()
    kind: str = "dense"
    blocks: tuple[tuple[int, ...], ...] = ()
    exponent: int = 1
    label: str = ""

    def __post_init__(self):
        object.__setattr__(self, "targets", tuple(int(s) for s in self.targets))
        object.__setattr__(self, "controls", tuple((int(s), int(v)) for s, v in self.controls))
        ctrl_sites = {s for s, _ in self.controls}
        if ctrl_sites & set(self.targets):
            raise GateShapeError("target and control sites overlap")
        if len(ctrl_sites) != len(self.controls):
            raise GateShapeError("repeated control site")
        if self.kind == "dense":
            if self.unitary is None:
                raise GateShapeError("dense gate without a matrix")
            u = np.asarray(self.unitary, dtype=complex)
            if u.ndim != 2 or u.shape[0] != u.shape[1]:
                raise GateShapeError(f"gate matrix must be square, got {u.shape}")
            object.__setattr__(self, "unitary", u)
        elif self.kind == "sum":
            if len(self.targets) != 2:
                raise GateShapeError("SUM gate needs exactly two target sites")
        elif self.kind == "cycle":
            flat = tuple(s for blk in self.blocks for s in blk)
            if flat != self.targets:
                raise BlockShapeError("cycle targets must be the concatenated blocks")
            if len(self.blocks) < 2 or len({len(b) for b in self.blocks}) != 1:
                raise BlockShapeError("cycle needs >= 2 blocks of equal length")
            if len(set(flat)) != len(flat):
                raise BlockShapeError("cycle blocks overlap")
        else:
            raise GateShapeError(f"unknown gate kind {self.kind!r}")

    def dagger(self) -> GateOp:
        if self.kind == "dense":
            return GateOp(self.targets, self.unitary.conj().T, self.controls, label=self.label + "^dag")
        return GateOp(self.targets, None, self.controls, self.kind, self.blocks,
                      -self.exponent, self.label + "^dag")

    def with_controls(self, extra: Sequence[tuple[int, int]]) -> GateOp:
        return GateOp(self.targets, self.unitary, self.controls + tuple(extra), self.kind,
                      self.blocks, self.exponent, self.label)

    def is_unitary(self, atol: float = UNITARY_ATOL) -> bool:
        if self.kind != "dense":
            return True
        u = self.unitary
        return bool(np.allclose(u.conj().T @ u, np.eye(u.shape[0]), atol=atol, rtol=0))


def dense_gate(targets: Sequence[int], unitary, controls: Sequence[tuple[int, int]] = (),
               label: str = "U", check: bool = True) -> GateOp:
    gate = GateOp(tuple(targets), np.asarray(unitary, dtype=complex), tuple(controls), label=label)
    if check and not gate.is_unitary():
        raise GateShapeError(f"matrix of gate {label!r} is not unitary")
    return gate


def hadamard(site: int) -> GateOp:
    return GateOp((site,), HADAMARD, label="H")


def cnot(control: int, target: int) -> GateOp:
    return GateOp((target,), PAULI_X, ((control, 1),), label="CNOT")


def sum_gate(control: int, target: int) -> GateOp:
    return GateOp((control, target), None, kind="sum", label="SUM")


def cycle_gate(blocks: Sequence[Sequence[int]], control: int | None = None,
               exponent: int = 1) -> GateOp:
    blocks = tuple(tuple(int(s) for s in b) for b in blocks)
    controls = () if control is None else ((control, 1),)
    return GateOp(tuple(s for b in blocks for s in b), None, controls, "cycle", blocks,
                  exponent, label=f"C-Pi{len(blocks)}" if controls else f"Pi{len(blocks)}")


def qft_matrix(m: int) -> np.ndarray:
    """``|x> -> 2^{-m/2} sum_k exp(2 pi i x k / 2^m) |k>``."""
    n = 1 << m
    k = np.arange(n)
    return np.exp(2j * np.pi * np.outer(k, k) / n) / math.sqrt(n)


def qft_gate(sites: Sequence[int]) -> GateOp:
    return GateOp(tuple(sites), qft_matrix(len(sites)), label="QFT")


def validate_gate(gate: GateOp, register: SiteRegister) -> None:
    register.check_sites(gate.targets + tuple(s for s, _ in gate.controls))
    for s, v in gate.controls:
        if not 0 <= v < register.local_dims[s]:
            raise GateShapeError(f"control value {v} invalid on site {s}")
    if gate.kind == "dense":
        dim = math.prod(register.sub_dims(gate.targets))
        if gate.unitary.shape[0] != dim:
            raise GateShapeError(
                f"gate {gate.label!r} has dimension {gate.unitary.shape[0]}, targets need {dim}")
    elif gate.kind == "sum":
        a, b = gate.targets
        if register.local_dims[a] != register.local_dims[b]:
            raise GateShapeError("SUM gate needs equal local dimensions")
    else:
        profiles = {register.sub_dims(b) for b in gate.blocks}
        if len(profiles) != 1:
            raise BlockShapeError("cycle blocks have different local-dim profiles")


def local_matrix(gate: GateOp, register: SiteRegister) -> np.ndarray:
    """Matrix of ``gate`` on its target sites, ignoring controls."""
    validate_gate(gate, register)
    if gate.kind == "dense":
        return gate.unitary
    dims = register.sub_dims(gate.targets)
    sub = SiteRegister(dims)
    out = np.zeros((sub.total_dim, sub.total_dim))
    for col in range(sub.total_dim):
        out[sub.index_of(_permuted_digits(gate, sub.digits_of(col), dims)), col] = 1.0
    return out


def _permuted_digits(gate: GateOp, digits: tuple[int, ...], dims: tuple[int, ...]) -> tuple[int, ...]:
    if gate.kind == "sum":
        x, y = digits
        return (x, (y + gate.exponent * x) % dims[1])
    q = len(gate.blocks)
    w = len(gate.blocks[0])
    chunks = [digits[k * w:(k + 1) * w] for k in range(q)]
    return tuple(d for k in range(q) for d in chunks[(k - gate.exponent) % q])


def embed_gate(gate: GateOp, register: SiteRegister) -> np.ndarray:
    """Full ``total_dim x total_dim`` matrix of a gate, built by basis enumeration.

    Deliberately independent of the tensor kernels; used as a test oracle and
    for small-register unitaries.
    """
    if register.total_dim > EMBED_CAP:
        raise SizeCapError(f"refusing to embed into dimension {register.total_dim}")
    u = local_matrix(gate, register)
    dims = register.sub_dims(gate.targets)
    sub = SiteRegister(dims)
    full = np.zeros((register.total_dim, register.total_dim), dtype=complex)
    for col in range(register.total_dim):
        digits = list(register.digits_of(col))
        if any(digits[s] != v for s, v in gate.controls):
            full[col, col] = 1.0
            continue
        t_in = sub.index_of([digits[s] for s in gate.targets])
        for t_out in range(sub.total_dim):
            amp = u[t_out, t_in]
            if amp == 0:
                continue
            for s, dgt in zip(gate.targets, sub.digits_of(t_out)):
                digits[s] = dgt
            full[register.index_of(digits), col] += amp
    return full


# --------------------------------------------------------------------------
# kernels
# --------------------------------------------------------------------------

def _controlled_view(tensor: np.ndarray, controls):
    if not controls:
        return tensor, (lambda s: s)
    idx = [slice(None)] * tensor.ndim
    for s, v in controls:
        idx[s] = v
    removed = sorted(s for s, _ in controls)
    return tensor[tuple(idx)], (lambda s: s - bisect.bisect_left(removed, s))


def _dense_kernel(tensor: np.ndarray, gate: GateOp) -> None:
    view, ax = _controlled_view(tensor, gate.controls)
    if gate.kind == "dense":
        axes = [ax(s) for s in gate.targets]
        k = len(axes)
        moved = np.moveaxis(view, axes, range(k))
        shape = moved.shape
        out = gate.unitary @ moved.reshape(gate.unitary.shape[0], -1)
        view[...] = np.moveaxis(out.reshape(shape), range(k), axes)
    elif gate.kind == "sum":
        a, b = (ax(s) for s in gate.targets)
        d = view.shape[a]
        for x in range(1, d):
            sl = [slice(None)] * view.ndim
            sl[a] = x
            sub = view[tuple(sl)]
            bb = b - 1 if b > a else b
            sub[...] = np.roll(sub, (gate.exponent * x) % d, axis=bb)
    else:
        q = len(gate.blocks)
        perm = list(range(view.ndim))
        for k, blk in enumerate(gate.blocks):
            src = gate.blocks[(k - gate.exponent) % q]
            for s_dst, s_src in zip(blk, src):
                perm[ax(s_dst)] = ax(s_src)
        view[...] = np.transpose(view, perm).copy()


def _sparse_kernel(state: SparseQuditState, gate: GateOp) -> SparseQuditState:
    reg = state.register
    strides = reg.strides
    idx, amps = state.indices, state.amplitudes
    mask = None
    for s, v in gate.controls:
        hit = state.digits(s) == v
        mask = hit if mask is None else mask & hit
    if gate.kind == "cycle":
        shift = _cycle_shift(state, gate)
        if mask is not None:
            shift = np.where(mask, shift, 0)
        return SparseQuditState(reg, idx + shift, amps.copy(), check=False)
    digits = {s: state.digits(s) for s in gate.targets}

    if gate.kind == "dense":
        dims = reg.sub_dims(gate.targets)
        sub = SiteRegister(dims)
        t_in = digits[gate.targets[0]]
        for s, d in zip(gate.targets[1:], dims[1:]):
            t_in = t_in * d + digits[s]
        offsets = np.array([sum(dg * strides[s] for s, dg in zip(gate.targets, sub.digits_of(r)))
                            for r in range(sub.total_dim)], dtype=np.int64)
        nz_rows = gate.unitary != 0
        if np.all(nz_rows.sum(axis=0) == 1):
            # one nonzero per column (CNOT, phases): indices move, nothing merges
            perm = np.argmax(nz_rows, axis=0)
            shift = (offsets[perm] - offsets)[t_in]
            if mask is not None:
                shift = np.where(mask, shift, 0)
            entries = gate.unitary[perm, np.arange(perm.size)]
            if np.all(entries == 1):
                return SparseQuditState(reg, idx + shift, amps.copy(), check=False)
            factor = entries[t_in]
            if mask is not None:
                factor = np.where(mask, factor, 1)
            return SparseQuditState(reg, idx + shift, amps * factor, check=False)
        if mask is None:
            mask = np.ones(idx.size, dtype=bool)
        # group entries by their index with the target digits cleared; each
        # group is one column vector the gate multiplies
        t_sel = t_in[mask]
        bases, group = np.unique(idx[mask] - offsets[t_sel], return_inverse=True)
        block = np.zeros((bases.size, sub.total_dim), dtype=complex)
        block[group.reshape(-1), t_sel] = amps[mask]
        out = block @ gate.unitary.T
        new_idx = (bases[:, None] + offsets[None, :]).reshape(-1)
        new_amp = out.reshape(-1)
        nz = new_amp != 0
        # entries failing a control keep their control digits, so they never collide
        return SparseQuditState(reg, np.concatenate([idx[~mask], new_idx[nz]]),
                                np.concatenate([amps[~mask], new_amp[nz]]), check=False)

    a, b = gate.targets
    d = reg.local_dims[b]
    shift = ((digits[b] + gate.exponent * digits[a]) % d - digits[b]) * strides[b]
    if mask is not None:
        shift = np.where(mask, shift, 0)
    return SparseQuditState(reg, idx + shift, amps.copy(), check=False)


def _cycle_shift(state: SparseQuditState, gate: GateOp) -> np.ndarray:
    """Index change of every stored entry under the block cycle (controls ignored)."""
    reg = state.register
    strides = reg.strides
    q = len(gate.blocks)
    contiguous = all(list(b) == list(range(b[0], b[0] + len(b))) for b in gate.blocks)
    if contiguous:
        # a run of sites reads as one mixed-radix number
        span = math.prod(reg.local_dims[s] for s in gate.blocks[0])
        value = [(state.indices // strides[b[-1]]) % span for b in gate.blocks]
        shift = np.zeros(state.indices.size, dtype=np.int64)
        for k, blk in enumerate(gate.blocks):
            shift += (value[(k - gate.exponent) % q] - value[k]) * strides[blk[-1]]
        return shift
    digits = {s: state.digits(s) for s in gate.targets}
    shift = np.zeros(state.indices.size, dtype=np.int64)
    for k, blk in enumerate(gate.blocks):
        src = gate.blocks[(k - gate.exponent) % q]
        for s_dst, s_src in zip(blk, src):
            shift += (digits[s_src] - digits[s_dst]) * strides[s_dst]
    return shift


def apply_gate_inplace(state: AnyState, gate: GateOp) -> AnyState:
    """Apply ``gate``; dense states are mutated, sparse states are replaced.

    Returns the resulting state object (the same object for dense storage).
    """
    validate_gate(gate, state.register)
    if isinstance(state, QuditState):
        _dense_kernel(state.tensor(), gate)
        return state
    return _sparse_kernel(state, gate)


def apply_gate(state: AnyState, gate: GateOp) -> AnyState:
    out = apply_gate_inplace(state.copy(), gate)
    _check_drift(out)
    return out


def apply_sum_d(state: AnyState, control_site: int, target_site: int) -> AnyState:
    return apply_gate(state, sum_gate(control_site, target_site))


def apply_controlled_block_cycle(state: AnyState, control_site: int,
                                 blocks: Sequence[Sequence[int]]) -> AnyState:
    if state.register.local_dims[control_site] != 2:
        raise BlockShapeError("the cycle control must be a qubit")
    return apply_gate(state, cycle_gate(blocks, control_site))


def apply_qft(state: AnyState, sites: Sequence[int]) -> AnyState:
    if any(state.register.local_dims[s] != 2 for s in sites):
        raise GateShapeError("QFT acts on qubit sites only")
    return apply_gate(state, qft_gate(sites))


# --------------------------------------------------------------------------
# readout
# --------------------------------------------------------------------------

def marginal_probabilities(state: AnyState, sites: Sequence[int]) -> np.ndarray:
    """Outcome distribution on ``sites``, indexed mixed-radix in the given order."""
    reg = state.register
    sites = list(sites)
    dims = reg.sub_dims(sites)
    if isinstance(state, QuditState):
        p = np.abs(state.tensor()) ** 2
        others = tuple(s for s in range(reg.n_sites) if s not in sites)
        p = p.sum(axis=others)
        kept = sorted(sites)
        p = np.transpose(p, [kept.index(s) for s in sites])
        return p.reshape(-1)
    key = np.zeros(state.indices.size, dtype=np.int64)
    for s, d in zip(sites, dims):
        key = key * d + state.digits(s)
    return np.bincount(key, np.abs(state.amplitudes) ** 2, math.prod(dims))


def outcome_probability(state: AnyState, sites: Sequence[int], digits: Sequence[int]) -> float:
    sites = list(sites)
    dims = state.register.sub_dims(sites)
    if len(digits) != len(sites):
        raise InvalidBasisIndexError("one digit per site required")
    for dgt, d in zip(digits, dims):
        if not 0 <= dgt < d:
            raise InvalidBasisIndexError(f"digit {dgt} out of range for local dim {d}")
    if isinstance(state, QuditState):
        idx = [slice(None)] * state.register.n_sites
        for s, dgt in zip(sites, digits):
            idx[s] = dgt
        return float(np.sum(np.abs(state.tensor()[tuple(idx)]) ** 2))
    mask = np.ones(state.indices.size, dtype=bool)
    for s, dgt in zip(sites, digits):
        mask &= state.digits(s) == dgt
    return float(np.sum(np.abs(state.amplitudes[mask]) ** 2))


def sample_outcomes(state: AnyState, sites: Sequence[int], n_shots: int,
                    seed: int | None) -> dict[tuple[int, ...], int]:
    """Multinomial measurement record on ``sites``; keys are digit tuples."""
    if n_shots < 1:
        raise ValueError("n_shots must be >= 1")
    p = marginal_probabilities(state, sites)
    p = p / p.sum()
    counts = np.random.default_rng(seed).multinomial(n_shots, p)
    sub = SiteRegister(state.register.sub_dims(list(sites)))
    return {sub.digits_of(int(k)): int(counts[k]) for k in np.flatnonzero(counts)}


# --------------------------------------------------------------------------
# circuits
# --------------------------------------------------------------------------

@dataclass
class CircuitPlan:
    """Ordered gate list plus the readout that encodes the estimate."""

    register: SiteRegister
    gates: list[GateOp]
    readout_sites: tuple[int, ...] = ()
    readout_target: tuple[int, ...] = ()
    initial_state: AnyState | None = None
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        for g in self.gates:
            validate_gate(g, self.register)
        self.register.check_sites(self.readout_sites)
        if len(self.readout_target) != len(self.readout_sites):
            raise GateShapeError("readout target needs one digit per readout site")

    def census(self) -> dict[str, int]:
        out: dict[str, int] = {}
        for g in self.gates:
            out[g.label] = out.get(g.label, 0) + 1
        return out


def choose_backend(register: SiteRegister, backend: str = "auto") -> str:
    if backend not in ("auto", "dense", "sparse"):
        raise ValueError(f"unknown backend {backend!r}")
    if backend == "auto":
        return "dense" if register.total_dim <= DENSE_BACKEND_CAP else "sparse"
    return backend


def execute(plan: CircuitPlan, initial_state: AnyState | None = None,
            backend: str = "auto") -> AnyState:
    """Run every gate of ``plan`` on a private copy of the initial state.

    ``auto`` keeps a sparse initial state sparse and otherwise picks by size.
    """
    state = initial_state if initial_state is not None else plan.initial_state
    if state is None:
        raise ValueError("no initial state supplied")
    if state.register != plan.register:
        raise GateShapeError("initial state register does not match the plan")
    if backend == "auto" and isinstance(state, SparseQuditState):
        backend = "sparse"
    if choose_backend(plan.register, backend) == "dense":
        state = state.to_dense().copy()
    else:
        state = state.to_sparse().copy()
    for g in plan.gates:
        state = apply_gate_inplace(state, g)
    _check_drift(state)
    return state


def gates_unitary(gates: Sequence[GateOp], register: SiteRegister) -> np.ndarray:
    """Matrix of a gate sequence, obtained by running the kernels on every basis column.

    A reference site of dimension ``total_dim`` is appended and the register is
    prepared in the normalized maximally entangled state with it, so one pass
    of the kernels transforms all columns at once.
    """
    n = register.total_dim
    if n > EMBED_CAP:
        raise SizeCapError(f"refusing to build a {n}-dimensional unitary")
    ext = SiteRegister(register.local_dims + (n,))
    state = QuditState(ext, np.eye(n, dtype=complex).reshape(-1) / math.sqrt(n))
    for g in gates:
        validate_gate(g, register)
        state = apply_gate_inplace(state, g)
    _check_drift(state)
    return state.amplitudes.reshape(n, n) * math.sqrt(n)
