"""Named experiments. Each returns :class:`ResultRow` objects ordered by the swept variable."""

from __future__ import annotations

import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import reduce
from typing import Callable, Sequence

import numpy as np

from .. import ed
from ..circuits import (
    IprEstimate,
    basis_rotation_x,
    bound_is_valid,
    build_comp_basis_circuit,
    build_eigenbasis_circuit,
    default_time,
    evolution_unitary,
    run_comp_basis_exact,
    run_comp_basis_sampled,
    run_eigenbasis_circuit,
    run_eigenbasis_sampled,
)
from ..hamiltonians import (
    SZ1,
    HamiltonianSpec,
    build_aklt,
    build_oat,
    build_pxp,
    dense_matrix,
    embed_operator,
    exact_evolution,
    spectral_norm,
    trotter_circuit,
    trotter_error_bound,
)
from ..statevector import (
    HADAMARD,
    QuditState,
    SiteRegister,
    basis_state,
    gates_unitary,
    product_state,
    random_state,
)
from .config import ExperimentConfig

RESIDUAL_FLOOR = -1e-12


@dataclass
class ResultRow:
    experiment: str
    variable_name: str
    variable: float
    estimator: float
    oracle: float
    error_bound: float | None = None
    std_error: float = 0.0
    wall_ms: float = 0.0
    extra: dict = field(default_factory=dict)


def worker_count() -> int:
    """Pool size: ``min(4, cpu count)``, capped by ``IPR_QSIM_THREADS`` when set."""
    n = min(4, os.cpu_count() or 1)
    env = os.environ.get("IPR_QSIM_THREADS")
    if env:
        n = min(n, max(1, int(env)))
    return n


def parallel_map(fn: Callable, items: Sequence, workers: int | None = None) -> list:
    """Order-preserving map, in a process pool when more than one worker is allowed."""
    workers = worker_count() if workers is None else workers
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=min(workers, len(items))) as pool:
        return list(pool.map(fn, items))


def point_seed(seed: int, *key: int) -> int:
    return int(np.random.SeedSequence([seed, *key]).generate_state(1)[0])


def _timed(fn, *args):
    t0 = time.perf_counter()
    out = fn(*args)
    return out, (time.perf_counter() - t0) * 1e3


# --------------------------------------------------------------------------
# one-axis twisting
# --------------------------------------------------------------------------

def oat_initial_state(L: int) -> QuditState:
    """x-polarized coherent state ``((|0> + |1>)/sqrt 2)^L``."""
    return product_state([np.array([1.0, 1.0]) / math.sqrt(2)] * L)


def _oat_point(args) -> ResultRow:
    cfg, k, t = args
    t0 = time.perf_counter()
    L = cfg.L
    spec = build_oat(L)
    psi0 = oat_initial_state(L)
    psi = QuditState(psi0.register, exact_evolution(dense_matrix(spec), t) @ psi0.amplitudes)
    rotated = reduce(np.kron, [HADAMARD] * L) @ psi.amplitudes
    oracle = ed.ipr_direct(rotated, cfg.q).value
    plan = build_comp_basis_circuit(psi, cfg.q, basis_rotation_x(L))
    est = _comp_estimate(plan, cfg, k)
    return ResultRow("oat_sweep", "t", t, est.point_value, oracle, None, est.std_error,
                     (time.perf_counter() - t0) * 1e3, {"L": L, "q": cfg.q})


def _comp_estimate(plan, cfg: ExperimentConfig, k: int) -> IprEstimate:
    if cfg.mode == "sampled":
        return run_comp_basis_sampled(plan, cfg.n_shots, point_seed(cfg.seed, k))
    return run_comp_basis_exact(plan)


def run_oat_sweep(cfg: ExperimentConfig) -> list[ResultRow]:
    return parallel_map(_oat_point, [(cfg, k, t) for k, t in enumerate(cfg.t_grid)])


# --------------------------------------------------------------------------
# PXP with a field, eigenbasis estimator
# --------------------------------------------------------------------------

def neel_state(register: SiteRegister) -> QuditState:
    """``|0101...>``."""
    return basis_state(register, [s % 2 for s in range(register.n_sites)])


def _pxp_point(args) -> list[ResultRow]:
    cfg, k, h = args
    t0 = time.perf_counter()
    spec = build_pxp(cfg.L, h, cfg.periodic)
    spectrum = ed.spectrum_of(spec)
    psi = neel_state(spec.register)
    oracle = ed.ipr_in_eigenbasis(psi, spectrum, 2).value
    gap = ed.min_gap(spectrum)
    norm = spectrum.norm
    t = cfg.t
    exact = cfg.evolution == "exact"
    allowance = 0.0 if exact else trotter_error_bound(norm, t, cfg.n_T)
    dsz = ed.delta_sigma_z(spec, 0, psi, spectrum)
    u = evolution_unitary(spec, t, cfg.n_T, exact)
    setup_ms = (time.perf_counter() - t0) * 1e3
    rows = []
    for j, m in enumerate(cfg.m_list):
        plan = build_eigenbasis_circuit(psi, spec, t, m, cfg.n_T, exact, unitary=u)
        if cfg.mode == "sampled":
            est, ms = _timed(run_eigenbasis_sampled, plan, cfg.n_shots,
                             point_seed(cfg.seed, k, j), gap)
        else:
            est, ms = _timed(run_eigenbasis_circuit, plan, gap)
        rows.append(ResultRow(
            "pxp_sweep", "h", h, est.point_value, oracle, est.error_bound, est.std_error,
            setup_ms + ms,
            {"m": m, "L": cfg.L, "t": t, "n_T": cfg.n_T, "gap": gap, "spectral_norm": norm,
             "trotter_allowance": allowance, "bound_valid": int(bound_is_valid(spectrum.spread, t)),
             "delta_sigma_z": dsz}))
    return rows


def run_pxp_sweep(cfg: ExperimentConfig) -> list[ResultRow]:
    chunks = parallel_map(_pxp_point, [(cfg, k, h) for k, h in enumerate(cfg.h_grid)])
    return [row for chunk in chunks for row in chunk]


# --------------------------------------------------------------------------
# AKLT ground state, qudit estimator
# --------------------------------------------------------------------------

def aklt_ground_state(L: int, h: float) -> tuple[QuditState, bool]:
    """Ground state of the AKLT chain; ties resolved along the field direction."""
    spec = build_aklt(L, h)
    spectrum = ed.spectrum_of(spec)
    field_op = -sum(embed_operator({i: SZ1}, spec.register) for i in range(L))
    v, tied = ed.ground_state(spectrum, field_op)
    return QuditState(spec.register, v), tied


def _aklt_point(args) -> ResultRow:
    cfg, k, h = args
    t0 = time.perf_counter()
    psi, tied = aklt_ground_state(cfg.L, h)
    oracle = ed.ipr_direct(psi, cfg.q).value
    plan = build_comp_basis_circuit(psi, cfg.q)
    est = _comp_estimate(plan, cfg, k)
    return ResultRow("aklt_sweep", "h", h, est.point_value, oracle, None, est.std_error,
                     (time.perf_counter() - t0) * 1e3,
                     {"L": cfg.L, "q": cfg.q, "tie_broken": int(tied)})


def run_aklt_sweep(cfg: ExperimentConfig) -> list[ResultRow]:
    if cfg.d not in (None, 3):
        raise ValueError("the AKLT chain is spin-1 (d = 3)")
    return parallel_map(_aklt_point, [(cfg, k, h) for k, h in enumerate(cfg.h_grid)])


# --------------------------------------------------------------------------
# convergence in the number of ancillas
# --------------------------------------------------------------------------

def run_m_convergence(cfg: ExperimentConfig) -> list[ResultRow]:
    spec = build_pxp(cfg.L, cfg.h, cfg.periodic)
    spectrum = ed.spectrum_of(spec)
    psi = neel_state(spec.register)
    oracle = ed.ipr_in_eigenbasis(psi, spectrum, 2).value
    gap = ed.min_gap(spectrum)
    t = cfg.t if cfg.t is not None else default_time(spectrum.spread)
    exact = cfg.evolution == "exact"
    u = evolution_unitary(spec, t, cfg.n_T, exact)
    rows = []
    for j, m in enumerate(cfg.m_list):
        plan = build_eigenbasis_circuit(psi, spec, t, m, cfg.n_T, exact, unitary=u)
        if cfg.mode == "sampled":
            est, ms = _timed(run_eigenbasis_sampled, plan, cfg.n_shots, point_seed(cfg.seed, j), gap)
        else:
            est, ms = _timed(run_eigenbasis_circuit, plan, gap)
        rows.append(ResultRow("m_convergence", "m", m, est.point_value, oracle, est.error_bound,
                              est.std_error, ms,
                              {"h": cfg.h, "L": cfg.L, "t": t, "residual": est.point_value - oracle,
                               "bound_valid": int(bound_is_valid(spectrum.spread, t)),
                               "evolution": cfg.evolution}))
    return rows


# --------------------------------------------------------------------------
# bound study
# --------------------------------------------------------------------------

def random_hermitian(dim: int, rng: np.random.Generator) -> np.ndarray:
    """GUE sample ``(A + A^dag)/2`` with complex Gaussian ``A``."""
    a = (rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))) / math.sqrt(2)
    return (a + a.conj().T) / 2


def residual_rows(case: str, H: np.ndarray, psi: QuditState, m_list: Sequence[int],
                  t: float | None = None) -> list[ResultRow]:
    """Circuit residual ``P_{0,m} - I^H_2`` against its bound for exact evolution."""
    spectrum = ed.eigendecompose(H)
    t = default_time(spectrum.spread) if t is None else t
    oracle = ed.ipr_in_eigenbasis(psi, spectrum, 2).value
    gap = ed.min_gap(spectrum)
    valid = bound_is_valid(spectrum.spread, t)
    u = exact_evolution(H, t)
    shell = HamiltonianSpec(psi.register, [], case)
    rows = []
    for m in m_list:
        t0 = time.perf_counter()
        est = run_eigenbasis_circuit(build_eigenbasis_circuit(psi, shell, t, m, unitary=u), gap)
        residual = est.point_value - oracle
        violation = residual < RESIDUAL_FLOOR or (valid and residual > est.error_bound)
        rows.append(ResultRow("bound_study", "m", m, est.point_value, oracle, est.error_bound, 0.0,
                              (time.perf_counter() - t0) * 1e3,
                              {"case": case, "check": "residual", "t": t, "gap": gap,
                               "residual": residual, "bound_valid": int(valid),
                               "violation": int(violation)}))
    return rows


def _random_trial(args) -> list[ResultRow]:
    cfg, i = args
    rng = np.random.default_rng(point_seed(cfg.seed, i))
    reg = SiteRegister.uniform(cfg.n_qubits, 2)
    H = random_hermitian(reg.total_dim, rng)
    return residual_rows(f"random-{i}", H, random_state(reg, rng), cfg.m_list)


def benchmark_cases() -> list[tuple[str, np.ndarray, QuditState]]:
    cases = []
    for h in (0.0, 0.3, 0.655, 1.0):
        spec = build_pxp(6, h)
        cases.append((f"pxp-L6-h{h:g}", dense_matrix(spec), neel_state(spec.register)))
    for h in (0.0, 1.0):
        spec = build_aklt(3, h)
        psi = random_state(spec.register, np.random.default_rng(7))
        cases.append((f"aklt-L3-h{h:g}", dense_matrix(spec), psi))
    spec = build_oat(4)
    cases.append(("oat-L4", dense_matrix(spec), oat_initial_state(4)))
    return cases


def trotter_rows(case: str, spec: HamiltonianSpec, t: float,
                 n_T_list: Sequence[int]) -> list[ResultRow]:
    """Operator-norm Trotter error against ``||H||^2 t^2 / (2 n_T)``."""
    H = dense_matrix(spec)
    norm = spectral_norm(H)
    u = exact_evolution(H, t)
    rows = []
    for n_T in n_T_list:
        t0 = time.perf_counter()
        plan = trotter_circuit(spec, t, n_T)
        err = float(np.linalg.norm(gates_unitary(plan.gates, spec.register) - u, 2))
        bound = trotter_error_bound(norm, t, n_T)
        rows.append(ResultRow("bound_study", "n_T", n_T, err, 0.0, bound, 0.0,
                              (time.perf_counter() - t0) * 1e3,
                              {"case": case, "check": "trotter", "t": t,
                               "violation": int(err > bound)}))
    return rows


def run_bound_study(cfg: ExperimentConfig) -> list[ResultRow]:
    rows: list[ResultRow] = []
    for chunk in parallel_map(_random_trial, [(cfg, i) for i in range(cfg.n_trials)]):
        rows += chunk
    for case, H, psi in benchmark_cases():
        rows += residual_rows(case, H, psi, cfg.m_list)
    for h in (0.0, 0.655, 1.0):
        rows += trotter_rows(f"pxp-L4-h{h:g}", build_pxp(4, h), 1.0, cfg.n_T_list)
    for h in (0.0, 1.0):
        rows += trotter_rows(f"aklt-L4-h{h:g}", build_aklt(4, h), 1.0, cfg.n_T_list)
    return rows


RUNNERS = {
    "oat_sweep": run_oat_sweep,
    "pxp_sweep": run_pxp_sweep,
    "aklt_sweep": run_aklt_sweep,
    "m_convergence": run_m_convergence,
    "bound_study": run_bound_study,
}


def run_experiment(cfg: ExperimentConfig) -> list[ResultRow]:
    return RUNNERS[cfg.experiment](cfg)


def count_violations(rows: Sequence[ResultRow]) -> int:
    return sum(int(r.extra.get("violation", 0)) for r in rows)
