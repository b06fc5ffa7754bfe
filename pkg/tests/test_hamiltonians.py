import math
from functools import reduce

import numpy as np
import pytest

from ipr_qsim import ed
from ipr_qsim.circuits import basis_rotation_x
from ipr_qsim.errors import HermiticityError, SizeCapError, UnsupportedTermError
from ipr_qsim.hamiltonians import (
    P0,
    SX1,
    SY1,
    SZ1,
    HamiltonianSpec,
    X,
    Z,
    build_aklt,
    build_oat,
    build_pxp,
    dense_matrix,
    exact_evolution,
    gate_count_estimate,
    gate_count_formula,
    spectral_norm,
    term,
    trotter_circuit,
    trotter_error_bound,
    trotter_step_gates,
)
from ipr_qsim.statevector import SiteRegister, execute, gates_unitary, random_state


def kron_all(mats):
    return reduce(np.kron, mats)


def op_norm(a):
    return float(np.linalg.norm(a, 2))


ALL_MODELS = [build_oat(3), build_oat(5), build_pxp(4, 0.0), build_pxp(5, 0.7),
              build_pxp(4, 0.3, periodic=False), build_aklt(2, 0.0), build_aklt(3, 2.5)]


@pytest.mark.parametrize("spec", ALL_MODELS, ids=lambda s: f"{s.label}-{s.params}")
def test_models_are_hermitian(spec):
    H = dense_matrix(spec)
    assert np.max(np.abs(H - H.conj().T)) <= 1e-12
    assert np.allclose(np.linalg.eigvals(H).imag, 0, atol=1e-10)


# ---------------------------------------------------------------- OAT

@pytest.mark.parametrize("coupling,diag", [(0.25, [0.5, -0.5, -0.5, 0.5]), (0.5, [1, -1, -1, 1])])
def test_oat_l2_pair_spectrum(coupling, diag):
    H = dense_matrix(build_oat(2, coupling, include_diagonal=False))
    assert np.allclose(H, np.diag(np.diag(H)))
    np.testing.assert_allclose(np.diag(H).real, diag)


def test_oat_constant_is_a_global_phase():
    L, t = 4, 0.37
    with_c = exact_evolution(dense_matrix(build_oat(L)), t)
    without = exact_evolution(dense_matrix(build_oat(L, include_diagonal=False)), t)
    phase = with_c[0, 0] / without[0, 0]
    np.testing.assert_allclose(with_c, phase * without, atol=1e-12)
    psi = np.full(2**L, 2 ** (-L / 2))
    a = ed.ipr_direct(with_c @ psi, 2).value
    b = ed.ipr_direct(without @ psi, 2).value
    assert a == pytest.approx(b, abs=1e-14)


@pytest.mark.parametrize("coupling,t", [(0.5, math.pi / 4), (0.25, math.pi / 2)])
def test_oat_reaches_x_ghz(coupling, t):
    L = 4
    H = dense_matrix(build_oat(L, coupling))
    psi = exact_evolution(H, t) @ np.full(2**L, 2 ** (-L / 2))
    rotated = kron_all(basis_rotation_x(L)) @ psi
    assert ed.ipr_direct(rotated, 2).value == pytest.approx(0.5, abs=1e-12)


# ---------------------------------------------------------------- PXP

def test_pxp_kinetic_blocks_adjacent_excitations():
    L = 4
    H = dense_matrix(build_pxp(L, 0.0))
    reg = SiteRegister.uniform(L, 2)
    blocked = [i for i in range(2**L)
               if any(reg.digits_of(i)[s] == 1 and reg.digits_of(i)[(s + 1) % L] == 1
                      for s in range(L))]
    allowed = [i for i in range(2**L) if i not in blocked]
    assert blocked
    assert np.all(H[np.ix_(blocked, allowed)] == 0)
    assert np.all(H[np.ix_(allowed, blocked)] == 0)


def test_pxp_field_only_offsets():
    spec = HamiltonianSpec(SiteRegister.uniform(2, 2), build_pxp(3, 1.0).terms[3:5], "field")
    np.testing.assert_allclose(sorted(np.linalg.eigvalsh(dense_matrix(spec))), [-2, 0, 0, 2], atol=1e-15)


def test_pxp_matches_independent_kronecker():
    L, h = 4, 0.4
    eye = np.eye(2)
    H = np.zeros((16, 16), dtype=complex)
    for i in range(L):
        mats = [eye] * L
        mats[(i - 1) % L], mats[i], mats[(i + 1) % L] = P0, X, P0
        H += kron_all(mats)
        mats = [eye] * L
        mats[i] = Z
        H -= h * kron_all(mats)
    np.testing.assert_allclose(dense_matrix(build_pxp(L, h)), H, atol=1e-15)


@pytest.mark.parametrize("L", [3, 4, 6])
def test_pxp_translation_symmetry(L):
    H = dense_matrix(build_pxp(L, 0.55))
    reg = SiteRegister.uniform(L, 2)
    shift = np.zeros((2**L, 2**L))
    for i in range(2**L):
        d = reg.digits_of(i)
        shift[reg.index_of(d[-1:] + d[:-1]), i] = 1
    assert np.max(np.abs(shift @ H - H @ shift)) <= 1e-12


def test_pxp_open_chain_drops_edge_projectors():
    H = dense_matrix(build_pxp(3, 0.0, periodic=False))
    expected = (kron_all([X, P0, np.eye(2)]) + kron_all([P0, X, P0])
                + kron_all([np.eye(2), P0, X]))
    np.testing.assert_allclose(H, expected, atol=1e-15)


def test_pxp_term_order_kinetic_then_field():
    names = [tuple(f.name for f in t.factors) for t in build_pxp(4, 0.2).terms]
    assert all("X" in n for n in names[:4])
    assert all(n == ("Z",) for n in names[4:])


# ---------------------------------------------------------------- AKLT

def test_aklt_two_site_block_is_spin2_projector():
    H = dense_matrix(build_aklt(2, 0.0))
    w = np.linalg.eigvalsh(H)
    assert w[0] == pytest.approx(0.0, abs=1e-12)
    np.testing.assert_allclose(w, [0] * 4 + [1] * 5, atol=1e-12)
    np.testing.assert_allclose(H @ H, H, atol=1e-12)


def test_aklt_expansion_matches_closed_form():
    sds = sum(np.kron(s, s) for s in (SX1, SY1, SZ1))
    bond = 0.5 * sds + sds @ sds / 6 + np.eye(9) / 3
    np.testing.assert_allclose(dense_matrix(build_aklt(2, 0.0)), bond, atol=1e-14)


def test_aklt_large_field_polarizes():
    spec = build_aklt(4, 20.0)
    psi, _ = ed.ground_state(ed.spectrum_of(spec))
    assert np.argmax(np.abs(psi)) == 0
    assert ed.ipr_direct(psi, 2).value > 0.9


# ---------------------------------------------------------------- dense matrices

def test_empty_spec_is_zero():
    spec = HamiltonianSpec(SiteRegister((2, 3)), [])
    np.testing.assert_array_equal(dense_matrix(spec), np.zeros((6, 6)))


def test_single_z_on_site_zero():
    spec = HamiltonianSpec(SiteRegister((2, 2)), [term(1.0, (0, Z, "Z"))])
    np.testing.assert_array_equal(dense_matrix(spec), np.diag([1, 1, -1, -1]))


def test_dense_cap():
    with pytest.raises(SizeCapError):
        dense_matrix(build_pxp(6, 0.1), cap=32)


def test_non_hermitian_term_rejected():
    spec = HamiltonianSpec(SiteRegister((2,)), [term(1.0, (0, np.array([[0, 1], [0, 0]]), "s+"))])
    with pytest.raises(HermiticityError):
        dense_matrix(spec)


def test_operator_shape_checked():
    with pytest.raises(ValueError):
        HamiltonianSpec(SiteRegister((2, 2)), [term(1.0, (0, SZ1, "Sz"))])


def test_factor_sites_must_increase():
    from ipr_qsim.hamiltonians import HamiltonianTerm, LocalOperator
    with pytest.raises(ValueError):
        HamiltonianTerm(1.0, (LocalOperator(1, Z), LocalOperator(0, Z)))


def test_spectral_norm_from_eigenvalues():
    assert spectral_norm(np.diag([-3.0, 1.0, 2.0])) == 3.0


# ---------------------------------------------------------------- Trotter

@pytest.mark.parametrize("n_T", [1, 2, 7, 30])
def test_trotter_exact_for_commuting_oat(n_T):
    spec = build_oat(4)
    u = gates_unitary(trotter_circuit(spec, 0.9, n_T).gates, spec.register)
    np.testing.assert_allclose(u, exact_evolution(dense_matrix(spec), 0.9), atol=1e-10)


N_T_LIST = [2, 4, 8, 16, 32, 64]


@pytest.mark.parametrize("spec", [build_pxp(4, 0.0), build_pxp(4, 0.655), build_aklt(4, 1.0)],
                         ids=["pxp-h0", "pxp-hc", "aklt-h1"])
def test_trotter_error_within_bound(spec):
    H = dense_matrix(spec)
    u = exact_evolution(H, 1.0)
    norm = spectral_norm(H)
    errs = []
    for n_T in N_T_LIST:
        err = op_norm(gates_unitary(trotter_circuit(spec, 1.0, n_T).gates, spec.register) - u)
        assert err <= trotter_error_bound(norm, 1.0, n_T)
        errs.append(err)
    assert errs[-1] < errs[0]
    assert all(b <= a * 1.05 for a, b in zip(errs, errs[1:]))


def test_trotter_on_random_state_converges(rng):
    for spec in (build_pxp(4, 0.3), build_aklt(3, 0.5)):
        psi = random_state(spec.register, rng)
        exact = exact_evolution(dense_matrix(spec), 1.0) @ psi.amplitudes
        errs = [np.linalg.norm(execute(trotter_circuit(spec, 1.0, n), psi).amplitudes - exact)
                for n in (2, 64)]
        assert errs[1] < errs[0]


def test_trotter_merges_same_support_into_unitaries():
    spec = build_aklt(3, 0.0)
    gates = trotter_step_gates(spec, 0.1)
    assert len(gates) == 2
    assert all(g.is_unitary() for g in gates)


def test_trotter_rejects_wide_terms():
    reg = SiteRegister.uniform(4, 2)
    spec = HamiltonianSpec(reg, [term(1.0, *[(s, Z, "Z") for s in range(4)])])
    with pytest.raises(UnsupportedTermError):
        trotter_step_gates(spec, 0.1)


def test_trotter_bound_formula():
    assert trotter_error_bound(2.0, 1.5, 3) == pytest.approx(4 * 2.25 / 6)


def test_fig5_trotter_configuration_builds():
    plan = trotter_circuit(build_pxp(8, 0.655), 1.0, 10)
    assert plan.metadata["n_T"] == 10
    assert len(plan.gates) == 10 * 16


# ---------------------------------------------------------------- gate counts

def test_gate_count_formula_values():
    assert gate_count_formula(0, 5) == 10
    assert gate_count_formula(3, 10) == 169


def test_gate_count_estimate_against_expanded_circuit():
    from ipr_qsim.circuits import build_eigenbasis_circuit
    from ipr_qsim.harness.experiments import neel_state
    spec = build_pxp(4, 0.5)
    m, n_T = 3, 2
    plan = build_eigenbasis_circuit(neel_state(spec.register), spec, 1.0, m, n_T, fuse=False)
    actual = len(plan.gates)
    estimate = gate_count_estimate(spec, m, n_T)
    assert estimate / 2 <= actual <= 2 * estimate
