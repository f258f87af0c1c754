import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from oracles import dense_grid_mu, generic_lower_lft, neumann_upper_lft

from spinring.mu import (
    ClosedPlant,
    GeneralizedPlant,
    PlantKind,
    ResolventSingular,
    SingularPlantError,
    assemble_plant,
    close_controller,
    mu_lower_bound,
    orth_complement,
    performance_gains,
    singular_values,
    upper_lft,
)
from spinring.ring_model import RingSpec, build_hamiltonian, coupling_structure, spillage_structure


def crandn(rng, *shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


def random_closed(rng, n):
    return ClosedPlant(crandn(rng, n, n), crandn(rng, n, n), crandn(rng, n - 1, n), crandn(rng, n - 1, n))


def ring_closed(rng, n, kind="coupling"):
    spec = RingSpec(n)
    bias = rng.uniform(-5, 5, n)
    k = int(rng.integers(1, n + 1))
    S = coupling_structure(spec, k) if kind == "coupling" else bias[k - 1] * spillage_structure(spec, k)
    out = int(rng.integers(1, n + 1))
    P = assemble_plant(build_hamiltonian(spec), S, orth_complement(out, n), kind)
    return close_controller(P, bias)


def check_certified(M, res):
    g = performance_gains(M, np.array([res.witness_delta]))[0] if res.witness_delta != 0 else singular_values(M.M22)[0]
    assert g >= res.beta - 1e-8
    assert res.witness_delta == 0 or 1 / abs(res.witness_delta) >= res.beta - 1e-8
    expected = res.witness_gain if res.witness_delta == 0 else min(res.witness_gain, 1 / abs(res.witness_delta))
    assert res.beta == pytest.approx(expected, abs=1e-10)


# --- orthogonal complement ---------------------------------------------------


def test_orth_complement_small():
    C = orth_complement(1, 2).rows
    assert np.allclose(np.abs(C), [[0.0, 1.0]])


@given(st.integers(2, 20), st.data())
def test_orth_complement_invariants(n, data):
    out = data.draw(st.integers(1, n))
    C = orth_complement(out, n).rows
    assert C.shape == (n - 1, n)
    assert np.allclose(C @ C.T, np.eye(n - 1), atol=1e-12)
    assert np.abs(C[:, out - 1]).max() <= 1e-12


def test_orth_complement_rank_n11():
    C = orth_complement(3, 11).rows
    s = singular_values(C)
    assert np.sum(s > 1e-10) == 10
    assert np.linalg.norm(C[:, 2]) == 0.0
    with pytest.raises(ValueError):
        orth_complement(12, 11)


# --- plant assembly ------------------------------------------------------------


def test_plant_zero_structure():
    H = build_hamiltonian(RingSpec(5))
    P = assemble_plant(H, np.zeros((5, 5)), orth_complement(2, 5), "coupling")
    for j in (1, 2, 3):
        assert np.all(P[1, j] == 0)


def test_plant_sign_pattern(rng):
    spec = RingSpec(7)
    P = assemble_plant(build_hamiltonian(spec), coupling_structure(spec, 3), orth_complement(4, 7), PlantKind.COUPLING)
    assert np.array_equal(P[1, 2], -P[1, 1]) and np.array_equal(P[1, 3], -P[1, 1])
    assert np.array_equal(P[2, 2], -P[2, 1]) and np.array_equal(P[2, 3], P[2, 2])
    assert np.array_equal(P[3, 2], -P[3, 1]) and np.array_equal(P[3, 3], P[3, 2])
    shapes = [[b.shape for b in row] for row in P.blocks]
    assert shapes == [[(7, 7)] * 3, [(6, 7)] * 3, [(7, 7)] * 3]
    assert P.matrix().shape == (20, 21)


def test_plant_p31_is_minus_inverse():
    spec = RingSpec(11)
    H = build_hamiltonian(spec)
    P = assemble_plant(H, coupling_structure(spec, 1), orth_complement(1, 11), "coupling")
    X = np.linalg.solve(1j * H, np.eye(11))
    assert np.allclose(P[3, 1], -X, atol=1e-12)


def test_plant_singular_for_n_divisible_by_four():
    spec = RingSpec(8)
    with pytest.raises(SingularPlantError):
        assemble_plant(build_hamiltonian(spec), coupling_structure(spec, 1), orth_complement(1, 8), "coupling")


def test_plant_dimension_mismatch():
    spec = RingSpec(5)
    with pytest.raises(ValueError):
        assemble_plant(build_hamiltonian(spec), np.zeros((4, 4)), orth_complement(1, 5), "spillage")


# --- lower LFT -----------------------------------------------------------------


def test_close_controller_zero_bias():
    spec = RingSpec(5)
    P = assemble_plant(build_hamiltonian(spec), coupling_structure(spec, 2), orth_complement(3, 5), "coupling")
    M = close_controller(P, np.zeros(5))
    assert np.array_equal(M.M11, P[1, 1]) and np.array_equal(M.M22, P[2, 2])
    assert np.array_equal(M.M12, P[1, 2]) and np.array_equal(M.M21, P[2, 1])


def test_close_controller_decoupled_blocks(rng):
    n = 4
    blocks = [[crandn(rng, r, n) for _ in range(3)] for r in (n, n - 1, n)]
    blocks[0][2] = np.zeros((n, n))
    blocks[1][2] = np.zeros((n - 1, n))
    P = GeneralizedPlant(tuple(tuple(r) for r in blocks), PlantKind.COUPLING)
    M = close_controller(P, rng.uniform(-3, 3, n))
    assert np.array_equal(M.M11, P[1, 1]) and np.array_equal(M.M21, P[2, 1])


def test_close_controller_matches_generic_lft(rng):
    for _ in range(20):
        n = 4
        blocks = tuple(tuple(crandn(rng, r, n) for _ in range(3)) for r in (n, n - 1, n))
        P = GeneralizedPlant(blocks, PlantKind.SPILLAGE)
        D = rng.uniform(-2, 2, n)
        M = close_controller(P, D)
        # F_l with the controller K = -iD closing psi -> u
        full = P.matrix()
        oracle = generic_lower_lft(full, -1j * np.diag(D), 2 * n - 1, 2 * n)
        got = np.block([[M.M11, M.M12], [M.M21, M.M22]])
        assert np.abs(got - oracle).max() <= 1e-12 * max(1.0, np.abs(oracle).max())


def test_close_controller_singular():
    n = 3
    I = np.eye(n, dtype=complex)
    Z = np.zeros((n, n), complex)
    blocks = ((Z, Z, Z), (Z[:2], Z[:2], Z[:2]), (Z, Z, 1j * I))
    # I + i (iI) D = I - D is singular at D = I
    with pytest.raises(SingularPlantError):
        close_controller(GeneralizedPlant(blocks, PlantKind.COUPLING), np.ones(n))


# --- upper LFT -----------------------------------------------------------------


def test_upper_lft_examples(rng):
    M = random_closed(rng, 4)
    assert np.array_equal(upper_lft(M, 0.0), M.M22)
    M0 = ClosedPlant(np.zeros((4, 4)), M.M12, M.M21, M.M22)
    d = 0.3 - 0.2j
    assert np.allclose(upper_lft(M0, d), M.M22 + d * M.M21 @ M.M12, atol=1e-14)


def test_upper_lft_matches_neumann(rng):
    for _ in range(20):
        M = random_closed(rng, 3)
        d = 0.3 + 0.4j
        M = ClosedPlant(M.M11 * (0.9 / (abs(d) * singular_values(M.M11)[0])), M.M12, M.M21, M.M22)
        assert np.abs(upper_lft(M, d) - neumann_upper_lft(M.M11, M.M12, M.M21, M.M22, d)).max() <= 1e-10


def test_upper_lft_flags_singular_resolvent():
    M = ClosedPlant(np.eye(3, dtype=complex), np.eye(3), np.ones((2, 3)), np.zeros((2, 3)))
    with pytest.raises(ResolventSingular):
        upper_lft(M, 1.0)
    assert performance_gains(M, np.array([1.0, 0.5]))[0] == np.inf


# --- singular values -------------------------------------------------------------


def test_singular_values_examples(rng):
    assert np.allclose(singular_values(np.eye(3)), 1)
    A = np.zeros((2, 3))
    A[0, 0], A[1, 1] = 2.0, 3.0
    assert np.allclose(singular_values(A), [3, 2])
    B = crandn(rng, 10, 11)
    gram = np.sqrt(np.sort(np.linalg.eigvalsh(B @ B.conj().T))[::-1])
    assert np.allclose(singular_values(B), gram, atol=1e-10)


# --- mu lower bound ----------------------------------------------------------------


def test_mu_zero_plant():
    Z = np.zeros((3, 3), complex)
    M = ClosedPlant(Z, Z, Z[:2], Z[:2])
    assert mu_lower_bound(M).beta == 0.0


def test_mu_unreachable_performance(rng):
    M = random_closed(rng, 3)
    M = ClosedPlant(M.M11, M.M12, np.zeros((2, 3), complex), M.M22)
    r = mu_lower_bound(M)
    assert r.witness_delta == 0
    assert r.beta == pytest.approx(singular_values(M.M22)[0], rel=1e-12)


def test_mu_open_loop_gain():
    # D = 0, structure = 0: bound is the w -> z gain of C Phi
    spec = RingSpec(7)
    H = build_hamiltonian(spec)
    C = orth_complement(2, 7)
    M = close_controller(assemble_plant(H, np.zeros((7, 7)), C, "coupling"), np.zeros(7))
    r = mu_lower_bound(M)
    assert r.beta == pytest.approx(singular_values(C.rows @ np.linalg.inv(1j * H))[0], rel=1e-12)


def test_mu_certification_random(rng):
    for _ in range(10):
        for M in (random_closed(rng, 3), ring_closed(rng, 5), ring_closed(rng, 7, "spillage")):
            check_certified(M, mu_lower_bound(M))


def test_mu_against_dense_grid_small(rng):
    for _ in range(3):
        M = random_closed(rng, 3)
        oracle = dense_grid_mu(M.M11, M.M12, M.M21, M.M22, n_r=100, n_phi=128)
        assert mu_lower_bound(M).beta >= 0.98 * oracle


def test_mu_denser_grid_not_worse(rng):
    for _ in range(5):
        M = ring_closed(rng, 5)
        a = mu_lower_bound(M, refine_iters=0).beta
        b = mu_lower_bound(M, n_radii=121, n_phases=128, refine_iters=0).beta
        assert b >= a - 1e-12


def test_mu_scaling(rng):
    for _ in range(5):
        M = random_closed(rng, 3)
        for c in (0.1, 7.0):
            a = mu_lower_bound(M)
            b = mu_lower_bound(M.scaled(c))
            assert b.beta == pytest.approx(c * a.beta, rel=0.01)
            check_certified(M.scaled(c), b)
