"""Invariant checks behind ``ipr-qsim verify``; each check reports a violation count."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .. import ed
from ..circuits import (
    build_comp_basis_circuit,
    build_eigenbasis_circuit,
    run_comp_basis_exact,
    run_eigenbasis_circuit,
)
from ..hamiltonians import HamiltonianSpec, build_pxp, dense_matrix, exact_evolution
from ..statevector import QuditState, SiteRegister, random_state
from .config import build_config
from .experiments import count_violations, neel_state, point_seed, run_bound_study


@dataclass
class CheckResult:
    name: str
    violations: int
    detail: str


def check_bound_study(n_trials: int, seed: int) -> CheckResult:
    cfg = build_config({"experiment": "bound_study", "n_trials": n_trials, "seed": seed})
    rows = run_bound_study(cfg)
    return CheckResult("bound_study", count_violations(rows), f"{len(rows)} rows")


def check_comp_basis(n_states: int, seed: int, tol: float = 1e-10) -> CheckResult:
    worst, bad = 0.0, 0
    for i in range(n_states):
        rng = np.random.default_rng(point_seed(seed, 100, i))
        psi = random_state(SiteRegister.uniform(2 + i % 2, 2), rng)
        for q in (2, 3, 4):
            dev = abs(run_comp_basis_exact(build_comp_basis_circuit(psi, q)).point_value
                      - ed.ipr_direct(psi, q).value)
            worst = max(worst, dev)
            bad += dev > tol
    return CheckResult("comp_basis_equivalence", bad, f"max deviation {worst:.2e}")


def degenerate_hamiltonian(rng: np.random.Generator, dim: int = 8) -> np.ndarray:
    """Random eigenbasis with a threefold-degenerate lowest level."""
    levels = np.array([0.0, 0.0, 0.0, 1.0, 1.7, 2.3, 3.1, 4.0][:dim])
    q, _ = np.linalg.qr(rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim)))
    return (q * levels) @ q.conj().T


def check_degenerate(seed: int, m: int = 8) -> CheckResult:
    rng = np.random.default_rng(point_seed(seed, 200))
    H = degenerate_hamiltonian(rng)
    spectrum = ed.eigendecompose(H)
    reg = SiteRegister.uniform(3, 2)
    inside = spectrum.eigenvectors[:, list(spectrum.groups[0])] @ rng.normal(size=3)
    psi = QuditState(reg, inside / np.linalg.norm(inside))
    t = math.pi / spectrum.spread
    shell = HamiltonianSpec(reg, [], "degenerate")
    plan = build_eigenbasis_circuit(psi, shell, t, m, unitary=exact_evolution(H, t))
    p = run_eigenbasis_circuit(plan).point_value
    return CheckResult("degenerate_subspace", int(abs(p - 1) > 1e-6), f"P0 - 1 = {p - 1:.2e}")


def check_survival(seed: int) -> CheckResult:
    spec = build_pxp(6, 0.3)
    spectrum = ed.eigendecompose(dense_matrix(spec))
    psi = neel_state(spec.register)
    avg = ed.survival_average_numeric(psi, spectrum, 1e4 / ed.min_gap(spectrum))
    dev = abs(avg - ed.ipr_degenerate(psi, spectrum, 2).value)
    return CheckResult("survival_identity", int(dev > 1e-2), f"deviation {dev:.2e}")


def run_all(n_trials: int = 500, seed: int = 0) -> list[CheckResult]:
    return [
        check_comp_basis(40, seed),
        check_degenerate(seed),
        check_survival(seed),
        check_bound_study(n_trials, seed),
    ]
