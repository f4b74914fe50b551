import math

import numpy as np
import pytest
from hypothesis import given

from _helpers import PAULI, brute_density, coefficient_vectors, ginibre_density, random_rotation, seeds
from ttqi import (
    DensityMatrix4,
    DomainError,
    FanoCoefficients,
    SpinBasis,
    ValidationError,
    assemble_density,
    extract_fano,
    partial_transpose,
    reduced_state,
    rotate_basis,
    validate_physicality,
    von_neumann_entropy,
)
from ttqi.fano import BinKinematics

UPUP = np.zeros((4, 4))
UPUP[0, 0] = 1.0
SINGLET_VEC = np.array([0.0, 1.0, -1.0, 0.0]) / math.sqrt(2.0)
SINGLET = np.outer(SINGLET_VEC, SINGLET_VEC)


def fano(P=(0, 0, 0), Pbar=(0, 0, 0), C=np.zeros((3, 3))):
    return FanoCoefficients(np.array(P, float), np.array(Pbar, float), np.array(C, float))


class TestTypes:
    def test_helicity_axis_order(self):
        b = SpinBasis.helicity()
        assert b.axis_labels == ("n", "r", "k")
        assert SpinBasis.beam().axis_labels == ("x", "y", "z")

    def test_basis_from_name(self):
        assert SpinBasis.from_name("beam") == SpinBasis.beam()
        with pytest.raises(ValidationError):
            SpinBasis.from_name("lab")

    @pytest.mark.parametrize(
        "mtt, cos",
        [((400, 300), (0, 0.4)), ((300, 400), (0.5, 0.2)), ((300, 400), (0.0, 1.2))],
    )
    def test_bad_kinematics(self, mtt, cos):
        with pytest.raises(ValidationError):
            BinKinematics(mtt, cos)

    def test_coefficient_range(self):
        with pytest.raises(ValidationError):
            fano(C=np.diag([1.1, 0, 0]))

    def test_unphysical_coefficients_are_representable(self):
        f = fano(C=np.diag([-1.0, -1.0, 1.0]))
        assert not validate_physicality(f).is_physical

    def test_density_rejects_bad_trace(self):
        with pytest.raises(ValidationError):
            DensityMatrix4(np.eye(4) / 2.0)

    def test_density_rejects_non_hermitian(self):
        m = np.eye(4, dtype=complex) / 4.0
        m[0, 1] = 0.1j
        with pytest.raises(ValidationError):
            DensityMatrix4(m)


class TestAssemble:
    def test_maximally_mixed(self):
        np.testing.assert_allclose(assemble_density(fano()).entries, np.eye(4) / 4, atol=1e-15)

    def test_singlet(self):
        rho = assemble_density(fano(C=-np.eye(3))).entries
        np.testing.assert_allclose(rho, SINGLET, atol=1e-15)

    def test_up_up_projector(self):
        rho = assemble_density(fano((0, 0, 1), (0, 0, 1), np.diag([0, 0, 1]))).entries
        np.testing.assert_allclose(rho, UPUP, atol=1e-15)

    @given(coefficient_vectors)
    def test_matches_term_by_term_expansion(self, v):
        f = FanoCoefficients.from_vector(v)
        np.testing.assert_allclose(
            assemble_density(f).entries, brute_density(f.P, f.Pbar, f.C), atol=1e-14
        )

    @given(coefficient_vectors)
    def test_hermitian_unit_trace_for_any_coefficients(self, v):
        m = assemble_density(FanoCoefficients.from_vector(v)).entries
        assert np.max(np.abs(m - m.conj().T)) <= 1e-12
        assert abs(np.trace(m) - 1.0) <= 1e-12


class TestExtract:
    def test_maximally_mixed(self):
        np.testing.assert_allclose(extract_fano(np.eye(4) / 4).as_vector(), 0.0, atol=1e-15)

    def test_singlet(self):
        f = extract_fano(SINGLET)
        np.testing.assert_allclose(f.P, 0.0, atol=1e-15)
        np.testing.assert_allclose(f.Pbar, 0.0, atol=1e-15)
        np.testing.assert_allclose(f.C, -np.eye(3), atol=1e-15)

    def test_round_trip_on_100_random_states(self):
        rng = np.random.default_rng(7)
        worst = 0.0
        for _ in range(100):
            rho = ginibre_density(rng)
            back = assemble_density(extract_fano(rho)).entries
            worst = max(worst, np.max(np.abs(back - rho)))
        assert worst < 1e-12

    @given(coefficient_vectors)
    def test_round_trip_coefficients(self, v):
        f = FanoCoefficients.from_vector(v)
        back = extract_fano(assemble_density(f)).as_vector()
        assert np.max(np.abs(back - v)) < 1e-12

    def test_rejects_wrong_trace(self):
        with pytest.raises(ValidationError):
            extract_fano(np.eye(4) / 3)


def _brute_partial_trace(rho, keep):
    out = np.zeros((2, 2), dtype=complex)
    for i in range(2):
        for j in range(2):
            for k in range(2):
                if keep == "top":
                    out[i, j] += rho[2 * i + k, 2 * j + k]
                else:
                    out[i, j] += rho[2 * k + i, 2 * k + j]
    return out


class TestReducedState:
    def test_singlet_is_unpolarized(self):
        for side in ("top", "antitop"):
            np.testing.assert_allclose(reduced_state(SINGLET, side).bloch, 0.0, atol=1e-15)

    def test_up_up(self):
        for side in ("top", "antitop"):
            np.testing.assert_allclose(reduced_state(UPUP, side).bloch, [0, 0, 1], atol=1e-15)

    @given(seeds)
    def test_matches_entrywise_partial_trace(self, seed):
        rho = ginibre_density(np.random.default_rng(seed))
        for side in ("top", "antitop"):
            np.testing.assert_allclose(
                reduced_state(rho, side).matrix(), _brute_partial_trace(rho, side), atol=1e-13
            )

    def test_bad_side(self):
        with pytest.raises(ValidationError):
            reduced_state(SINGLET, "bottom")


class TestPartialTranspose:
    def test_maximally_mixed(self):
        np.testing.assert_allclose(partial_transpose(np.eye(4) / 4), np.eye(4) / 4)

    def test_singlet_spectrum(self):
        lam = np.linalg.eigvalsh(partial_transpose(SINGLET, "antitop"))
        np.testing.assert_allclose(lam, [-0.5, 0.5, 0.5, 0.5], atol=1e-14)

    @given(seeds)
    def test_involution_trace_hermiticity(self, seed):
        rho = ginibre_density(np.random.default_rng(seed))
        for side in ("top", "antitop"):
            pt = partial_transpose(rho, side)
            np.testing.assert_allclose(partial_transpose(pt, side), rho, atol=1e-15)
            assert abs(np.trace(pt) - 1.0) < 1e-12
            np.testing.assert_allclose(pt, pt.conj().T, atol=1e-15)

    @given(seeds)
    def test_antitop_transpose_matches_brute_force(self, seed):
        rho = ginibre_density(np.random.default_rng(seed))
        brute = np.zeros_like(rho)
        for i in range(2):
            for j in range(2):
                for k in range(2):
                    for m in range(2):
                        brute[2 * i + j, 2 * k + m] = rho[2 * i + m, 2 * k + j]
        np.testing.assert_allclose(partial_transpose(rho, "antitop"), brute, atol=0)

    @given(seeds)
    def test_separable_mixtures_stay_positive(self, seed):
        rng = np.random.default_rng(seed)
        w = rng.dirichlet(np.ones(4))
        rho = np.zeros((4, 4), dtype=complex)
        for wk in w:
            a = ginibre_density(rng, 1)[:2, :2]
            b = ginibre_density(rng, 1)[:2, :2]
            a = a / np.trace(a)
            b = b / np.trace(b)
            rho += wk * np.kron(a, b)
        for side in ("top", "antitop"):
            assert np.linalg.eigvalsh(partial_transpose(rho, side))[0] >= -1e-10


class TestEntropy:
    def test_qubit_maximally_mixed(self):
        assert von_neumann_entropy(np.eye(2) / 2) == pytest.approx(1.0, abs=1e-15)

    def test_pure(self):
        assert von_neumann_entropy(SINGLET) == pytest.approx(0.0, abs=1e-12)
        assert von_neumann_entropy(UPUP) == 0.0

    def test_dyadic_spectrum(self):
        rho = np.diag([0.5, 0.25, 0.125, 0.125])
        assert von_neumann_entropy(rho) == pytest.approx(1.75, abs=1e-15)

    def test_negative_eigenvalue_rejected(self):
        rho = np.diag([0.5, 0.3, 0.25, -0.05])
        with pytest.raises(DomainError):
            von_neumann_entropy(rho)

    def test_tiny_negative_eigenvalue_clamped(self):
        rho = np.diag([0.5 + 5e-11, 0.5, -5e-11, 0.0])
        assert von_neumann_entropy(rho) == pytest.approx(1.0, abs=1e-9)

    def test_wrong_shape(self):
        with pytest.raises(DomainError):
            von_neumann_entropy(np.eye(3) / 3)

    @given(seeds)
    def test_bounds_and_purity(self, seed):
        rng = np.random.default_rng(seed)
        rank = int(rng.integers(1, 5))
        rho = ginibre_density(rng, rank)
        s = von_neumann_entropy(rho)
        assert -1e-12 <= s <= 2.0 + 1e-12
        pure = abs(np.trace(rho @ rho).real - 1.0) < 1e-9
        assert pure == (s < 1e-6)


class TestPhysicality:
    def test_singlet(self):
        rep = validate_physicality(fano(C=-np.eye(3)), 1e-9)
        assert rep.is_physical
        assert rep.min_eigenvalue == pytest.approx(0.0, abs=1e-15)

    def test_overcorrelated_axis(self):
        v = np.zeros(15)
        v[6] = -1.2
        rep = validate_physicality(v)
        assert not rep.is_physical
        assert rep.min_eigenvalue == pytest.approx(-0.05, abs=1e-15)

    def test_out_of_range_needs_raw_vector(self):
        with pytest.raises(ValidationError):
            fano(C=np.diag([-1.2, 0, 0]))

    def test_maximally_mixed(self):
        np.testing.assert_allclose(validate_physicality(fano()).eigenvalues, 0.25, atol=1e-15)


def _rz90():
    return np.array([[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]])


class TestRotation:
    def test_identity(self):
        f = fano((0.1, 0.2, 0.3), (0.0, -0.1, 0.2), np.diag([0.3, 0.2, 0.1]))
        g = rotate_basis(f, np.eye(3), np.eye(3))
        np.testing.assert_array_equal(g.as_vector(), f.as_vector())

    def test_singlet_common_rotation(self):
        R = random_rotation(np.random.default_rng(3))
        g = rotate_basis(fano(C=-np.eye(3)), R, R)
        np.testing.assert_allclose(g.C, -np.eye(3), atol=1e-14)

    def test_top_only_quarter_turn(self):
        C = np.diag([0.6, 0.5, 0.4])
        g = rotate_basis(fano(C=C), _rz90(), np.eye(3))
        expected = np.zeros((3, 3))
        for i in range(3):
            for j in range(3):
                expected[i, j] = sum(_rz90()[i, k] * C[k, j] for k in range(3))
        np.testing.assert_allclose(g.C, expected, atol=1e-15)
        np.testing.assert_allclose(g.C, [[0, -0.5, 0], [0.6, 0, 0], [0, 0, 0.4]], atol=1e-15)

    def test_non_orthogonal_rejected(self):
        with pytest.raises(ValidationError):
            rotate_basis(fano(), np.diag([1.0, 1.0, 2.0]), np.eye(3))

    def test_reflection_needs_opt_in(self):
        flip = np.diag([1.0, 1.0, -1.0])
        with pytest.raises(ValidationError):
            rotate_basis(fano(), flip, np.eye(3))
        rotate_basis(fano(), flip, np.eye(3), allow_improper=True)

    @given(seeds)
    def test_rotation_is_a_local_unitary(self, seed):
        rng = np.random.default_rng(seed)
        f = extract_fano(ginibre_density(rng))
        Rt, Rb = random_rotation(rng), random_rotation(rng)
        g = rotate_basis(f, Rt, Rb)
        np.testing.assert_allclose(
            validate_physicality(g).eigenvalues, validate_physicality(f).eigenvalues, atol=1e-12
        )
        np.testing.assert_allclose(
            np.linalg.eigvalsh(g.C.T @ g.C), np.linalg.eigvalsh(f.C.T @ f.C), atol=1e-12
        )


def test_pauli_helper_is_standard():
    # guards the independent expansion used above
    for s in PAULI:
        np.testing.assert_allclose(s @ s, np.eye(2))
    np.testing.assert_allclose(PAULI[0] @ PAULI[1], 1j * PAULI[2])
