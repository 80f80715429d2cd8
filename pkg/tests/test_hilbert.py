import itertools

import numpy as np
import pytest

from rydthz.errors import DimensionError, SpaceMismatchError, ValidationError
from rydthz.hilbert import (
    AtomLevels,
    DensityMatrix,
    HilbertSpace,
    OperatorHandle,
    PureState,
    basis_state,
    embed_site_operator,
    expectation,
    identity_operator,
    norm_and_normalize,
    product_state,
)

from conftest import kron_embed, kron_product_state

GR = AtomLevels.GR
GER = AtomLevels.GER


def n_r_local(space):
    mat = np.zeros((space.site_dim, space.site_dim))
    r = space.atom_levels.level_index("r")
    for ph in range(space.phonon_dim):
        mat[space.local_index(r, ph), space.local_index(r, ph)] = 1.0
    return mat


class TestEncoding:
    @pytest.mark.parametrize(
        "space",
        [
            HilbertSpace(2, GR),
            HilbertSpace(3, GER),
            HilbertSpace(4, GR),
            HilbertSpace(2, GR, phonon_cutoff=2),
            HilbertSpace(3, GER, phonon_cutoff=1),
        ],
        ids=["gr2", "ger3", "gr4", "gr2ph2", "ger3ph1"],
    )
    def test_roundtrip_exhaustive(self, space):
        for config in itertools.product(range(space.site_dim), repeat=space.n_sites):
            idx = space.encode(config)
            assert space.decode(idx) == tuple(config)

    def test_little_endian_site0_fastest(self):
        space = HilbertSpace(3, GR)
        assert space.encode([1, 0, 0]) == 1
        assert space.encode([0, 1, 0]) == 2
        assert space.encode([0, 0, 1]) == 4

    def test_atom_varies_fastest_within_site(self):
        space = HilbertSpace(1, GR, phonon_cutoff=2)
        assert space.local_index(atom=1, phonon=0) == 1
        assert space.local_index(atom=0, phonon=1) == 2
        assert space.local_index(atom=1, phonon=2) == 5

    def test_level_order_g_e_r(self):
        assert GER.level_index("g") == 0
        assert GER.level_index("e") == 1
        assert GER.level_index("r") == 2
        assert GR.level_index("r") == 1
        with pytest.raises(ValidationError):
            GR.level_index("e")


class TestDenseCap:
    def test_large_space_constructible_but_not_materializable(self):
        space = HilbertSpace(11, GR, phonon_cutoff=7)  # 16**11 amplitudes
        assert space.dim > space.dense_cap
        with pytest.raises(DimensionError):
            space.require_dense()
        with pytest.raises(DimensionError):
            PureState(space, np.zeros(4))

    def test_cap_is_configurable(self):
        space = HilbertSpace(4, GR, dense_cap=8)
        with pytest.raises(DimensionError):
            basis_state(space, [0, 0, 0, 0])


class TestProductState:
    def test_all_ground(self):
        space = HilbertSpace(2, GR)
        st = product_state(space, [space.site_ket("g")] * 2)
        np.testing.assert_allclose(st.amplitudes, [1, 0, 0, 0])

    def test_ger_basis_state(self):
        space = HilbertSpace(3, GER)
        kets = [space.site_ket("e"), space.site_ket("r"), space.site_ket("e")]
        st = product_state(space, kets)
        idx = space.encode([1, 2, 1])
        assert st.amplitudes[idx] == 1.0
        assert np.count_nonzero(st.amplitudes) == 1

    def test_superposition_factorizes(self):
        space = HilbertSpace(2, GR)
        plus = (space.site_ket("g") + space.site_ket("r")) / np.sqrt(2)
        st = product_state(space, [plus, space.site_ket("g")])
        np.testing.assert_allclose(
            st.amplitudes, [1 / np.sqrt(2), 1 / np.sqrt(2), 0, 0]
        )

    def test_matches_kron_oracle_random(self, rng):
        space = HilbertSpace(3, GER, phonon_cutoff=1)
        for _ in range(5):
            kets = []
            for _ in range(3):
                k = rng.normal(size=space.site_dim) + 1j * rng.normal(size=space.site_dim)
                kets.append(k / np.linalg.norm(k))
            st = product_state(space, kets)
            np.testing.assert_allclose(
                st.amplitudes, kron_product_state(kets), atol=1e-12
            )

    def test_norm_is_one(self, rng):
        space = HilbertSpace(4, GR)
        kets = []
        for _ in range(4):
            k = rng.normal(size=2) + 1j * rng.normal(size=2)
            kets.append(k / np.linalg.norm(k))
        assert abs(product_state(space, kets).norm() - 1.0) < 1e-12

    def test_rejects_unnormalized_ket(self):
        space = HilbertSpace(2, GR)
        with pytest.raises(ValidationError):
            product_state(space, [space.site_ket("g") * 1.1, space.site_ket("g")])

    def test_rejects_wrong_count(self):
        space = HilbertSpace(2, GR)
        with pytest.raises(DimensionError):
            product_state(space, [space.site_ket("g")])


class TestEmbedSiteOperator:
    def test_single_site_n_r(self):
        space = HilbertSpace(1, GR)
        op = embed_site_operator(space, 0, np.diag([0.0, 1.0]))
        np.testing.assert_allclose(op.matrix.toarray(), np.diag([0, 1]))
        assert op.hermitian

    def test_two_site_sigma_x(self):
        space = HilbertSpace(2, GR)
        sx = np.array([[0, 1.0], [1.0, 0]])
        op = embed_site_operator(space, 0, sx).matrix.toarray()
        gg, rg = space.encode([0, 0]), space.encode([1, 0])
        assert op[gg, rg] == 1.0 and op[rg, gg] == 1.0
        np.testing.assert_allclose(op, kron_embed(2, 2, 0, sx))

    def test_ger_raise_operator_against_kron_oracle(self):
        space = HilbertSpace(2, GER)
        r_from_e = np.zeros((3, 3))
        r_from_e[2, 1] = 1.0  # |r><e|
        op = embed_site_operator(space, 1, r_from_e)
        np.testing.assert_allclose(
            op.matrix.toarray(), kron_embed(2, 3, 1, r_from_e), atol=1e-15
        )
        psi_ee = product_state(space, [space.site_ket("e")] * 2)
        out = op.apply(psi_ee)
        assert abs(out.norm() - 1.0) < 1e-12
        target = space.encode([1, 2])  # (e, r)
        assert abs(out.amplitudes[target] - 1.0) < 1e-12

    def test_random_embeddings_match_oracle(self, rng):
        space = HilbertSpace(3, GR, phonon_cutoff=1)
        d = space.site_dim
        for site in range(3):
            local = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
            op = embed_site_operator(space, site, local)
            np.testing.assert_allclose(
                op.matrix.toarray(), kron_embed(3, d, site, local), atol=1e-13
            )

    def test_disjoint_embeddings_commute_exactly(self, rng):
        space = HilbertSpace(3, GER)
        a = rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3))
        b = rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3))
        oa = embed_site_operator(space, 0, a)
        ob = embed_site_operator(space, 2, b)
        diff = oa.matrix @ ob.matrix - ob.matrix @ oa.matrix
        assert abs(diff).max() <= 1e-14

    def test_site_out_of_range(self):
        space = HilbertSpace(2, GR)
        with pytest.raises(DimensionError):
            embed_site_operator(space, 2, np.eye(2))

    def test_wrong_local_dimension(self):
        space = HilbertSpace(2, GR, phonon_cutoff=1)
        with pytest.raises(DimensionError):
            embed_site_operator(space, 0, np.eye(2))

    def test_hermitian_flag_is_checked_not_assumed(self):
        space = HilbertSpace(1, GR)
        assert embed_site_operator(space, 0, np.diag([0.0, 1.0])).hermitian
        assert not embed_site_operator(space, 0, np.array([[0, 1], [0, 0]])).hermitian


class TestExpectation:
    def test_eigenstate(self):
        space = HilbertSpace(3, GR)
        psi = basis_state(space, [1, 0, 0])  # r at site 0
        op = embed_site_operator(space, 0, n_r_local(space))
        assert expectation(psi, op) == pytest.approx(1.0, abs=1e-12)

    def test_shared_excitation(self):
        space = HilbertSpace(4, GR)
        amps = np.zeros(space.dim, dtype=complex)
        for k in range(4):
            amps[space.encode([1 if j == k else 0 for j in range(4)])] = 0.5
        psi = PureState(space, amps)
        total = sum(
            (embed_site_operator(space, j, n_r_local(space)) for j in range(1, 4)),
            embed_site_operator(space, 0, n_r_local(space)),
        )
        assert expectation(psi, total) == pytest.approx(1.0, abs=1e-12)

    def test_maximally_mixed(self):
        space = HilbertSpace(2, GR)
        rho = DensityMatrix(space, np.eye(space.dim) / space.dim)
        op = embed_site_operator(space, 0, n_r_local(space))
        assert expectation(rho, op) == pytest.approx(0.5, abs=1e-12)

    def test_identity_normalization(self, rng):
        space = HilbertSpace(3, GR)
        v = rng.normal(size=space.dim) + 1j * rng.normal(size=space.dim)
        _, psi = norm_and_normalize(PureState(space, v))
        assert expectation(psi, identity_operator(space)) == pytest.approx(1.0)

    def test_space_mismatch(self):
        a, b = HilbertSpace(2, GR), HilbertSpace(3, GR)
        with pytest.raises(SpaceMismatchError):
            expectation(basis_state(a, [0, 0]), identity_operator(b))


class TestNormAndNormalize:
    def test_simple(self):
        space = HilbertSpace(2, GR)
        nrm, unit = norm_and_normalize(PureState(space, [2, 0, 0, 0]))
        assert nrm == pytest.approx(2.0)
        np.testing.assert_allclose(unit.amplitudes, [1, 0, 0, 0])

    def test_unit_vector_unchanged(self):
        space = HilbertSpace(2, GR)
        psi = basis_state(space, [1, 0])
        nrm, unit = norm_and_normalize(psi)
        assert nrm == pytest.approx(1.0)
        np.testing.assert_allclose(unit.amplitudes, psi.amplitudes)

    def test_collective_lowering_on_all_e(self):
        # L = sqrt(Gamma) sum_j |r><e|_j on |eee>, Gamma=1: norm sqrt(3),
        # normalized state = equal superposition of single-r states.
        space = HilbertSpace(3, GER)
        lower = np.zeros((3, 3))
        lower[2, 1] = 1.0
        full = sum(kron_embed(3, 3, j, lower) for j in range(3))
        psi_s = kron_product_state([[0, 1, 0]] * 3)
        applied = PureState(space, full @ psi_s)
        nrm, unit = norm_and_normalize(applied)
        assert nrm == pytest.approx(np.sqrt(3.0), abs=1e-12)
        for k in range(3):
            cfg = [2 if j == k else 1 for j in range(3)]
            assert unit.amplitudes[space.encode(cfg)] == pytest.approx(
                1 / np.sqrt(3), abs=1e-12
            )

    def test_zero_vector_rejected(self):
        space = HilbertSpace(1, GR)
        with pytest.raises(ValidationError):
            norm_and_normalize(PureState(space, [0, 0]))


class TestContainers:
    def test_states_are_immutable(self):
        space = HilbertSpace(1, GR)
        psi = basis_state(space, [0])
        with pytest.raises(ValueError):
            psi.amplitudes[0] = 2.0

    def test_density_matrix_check(self):
        space = HilbertSpace(1, GR)
        good = DensityMatrix(space, np.diag([0.7, 0.3]))
        good.check()
        bad = DensityMatrix(space, np.array([[0.5, 0.4], [0.1, 0.5]]))
        with pytest.raises(ValidationError):
            bad.check()

    def test_operator_requires_matching_shape(self):
        space = HilbertSpace(2, GR)
        import scipy.sparse as sp

        with pytest.raises(DimensionError):
            OperatorHandle(space, sp.identity(3, format="csr"))
