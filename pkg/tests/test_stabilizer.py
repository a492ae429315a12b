from pathlib import Path

import numpy as np
import pytest
from numpy.testing import assert_allclose

from gapflow.errors import ValidationError
from gapflow.models import toric_code_hamiltonian, toric_code_model
from gapflow.spectral import entanglement_entropy, ground_data, local_order_test
from gapflow.spin_core import PAULI, LocalOperator, hermitian_eigensystem, partial_trace
from gapflow.stabilizer import (
    LN2,
    CellComplex,
    PauliOperator,
    StabilizerGroup,
    bell_pair_group,
    build_surface,
    dump_complex,
    genus_surface,
    gf2_nullspace,
    gf2_rank,
    ground_degeneracy,
    kitaev_preskill_partition,
    load_complex,
    logical_operators,
    phase_signature,
    planar,
    product_state_group,
    purify,
    stabilizer_entropy,
    surface_row,
    topological_entropy,
    toric_code_stabilizers,
    torus,
)

FIXTURES = Path(__file__).resolve().parent.parent / 'fixtures'


def xor_basis_rank(m):
    """Rank over GF(2) by inserting each row, read as an integer, into an xor basis."""
    basis = {}
    for row in m:
        value = int(''.join(str(int(b)) for b in row), 2) if len(row) else 0
        while value:
            top = value.bit_length() - 1
            if top not in basis:
                basis[top] = value
                break
            value ^= basis[top]
    return len(basis)


def degeneracy(complex_):
    return ground_degeneracy(toric_code_stabilizers(complex_))


class TestCellComplex:

    @pytest.mark.parametrize('lx, ly', [(2, 2), (3, 3), (4, 4), (2, 3)])
    def test_torus_counts(self, lx, ly):
        c = torus(lx, ly)
        assert (c.star_vertex_count, c.n_edges, c.n_faces) == (lx * ly, 2 * lx * ly, lx * ly)
        assert c.closed
        assert c.euler_characteristic == 0
        assert c.genus == 1

    @pytest.mark.parametrize('boundary, v, e, f, chi', [
        ('smooth', 16, 24, 9, 1),
        ('rough', 4, 12, 9, 1),
        ('mixed', 8, 18, 9, -1),
    ])
    def test_planar_counts(self, boundary, v, e, f, chi):
        c = planar(3, 3, boundary)
        assert (c.star_vertex_count, c.n_edges, c.n_faces) == (v, e, f)
        assert c.euler_characteristic == chi
        assert not c.closed
        assert c.genus == 0

    def test_genus2_fixture(self):
        c = load_complex(FIXTURES / 'genus2.json')
        assert (c.star_vertex_count, c.n_edges, c.n_faces) == (14, 32, 16)
        assert c.closed
        assert c.euler_characteristic == -2
        assert c.genus == 2

    def test_genus_surface(self):
        c = genus_surface(2)
        assert c.closed
        assert c.genus == 2
        assert genus_surface(3).genus == 3
        with pytest.raises(ValidationError):
            genus_surface(0)

    def test_face_cycle(self):
        cycle = torus(3, 3).face_cycle(0)
        assert len(cycle) == 4
        assert len(set(cycle)) == 4

    def test_open_face_rejected(self):
        with pytest.raises(ValidationError, match='not closed'):
            CellComplex('bad', 3, [(0, 1), (1, 2)], [(0, 1)])

    def test_overglued_edge_rejected(self):
        edges = [(0, 1), (1, 2), (2, 0)]
        with pytest.raises(ValidationError, match='more than 2 faces'):
            CellComplex('bad', 3, edges, [(0, 1, 2)] * 3)

    def test_bad_references(self):
        with pytest.raises(ValidationError):
            CellComplex('bad', 2, [(0, 5)], [])
        with pytest.raises(ValidationError):
            CellComplex('bad', 2, [(0, 1)], [(3,)])

    def test_bad_builders(self):
        with pytest.raises(ValidationError):
            torus(1, 4)
        with pytest.raises(ValidationError):
            planar(3, 3, 'jagged')
        with pytest.raises(ValidationError):
            build_surface({'kind': 'klein'})

    def test_dump_and_load(self, tmp_path):
        c = planar(2, 3, 'mixed')
        dump_complex(c, tmp_path / 'patch.json')
        assert load_complex(tmp_path / 'patch.json') == c

    def test_build_surface(self):
        assert build_surface('torus').name == 'torus(2,2)'
        assert build_surface({'kind': 'planar', 'Lx': 3, 'boundary': 'rough'}).name == 'planar(3,3,rough)'
        assert build_surface(str(FIXTURES / 'genus2.json')).genus == 2


class TestGF2:

    def test_rank_against_xor_basis(self, rng):
        for _ in range(20):
            m = rng.integers(0, 2, size=(rng.integers(1, 12), rng.integers(1, 16)), dtype=np.uint8)
            assert gf2_rank(m) == xor_basis_rank(m)

    def test_identity_rank(self):
        assert gf2_rank(np.eye(5, dtype=np.uint8)) == 5
        assert gf2_rank(np.zeros((0, 4), dtype=np.uint8)) == 0

    def test_nullspace(self, rng):
        m = rng.integers(0, 2, size=(6, 10), dtype=np.uint8)
        basis = gf2_nullspace(m)
        assert basis.shape[0] == 10 - gf2_rank(m)
        assert not np.any((m.astype(int) @ basis.T.astype(int)) % 2)
        assert gf2_rank(basis) == basis.shape[0]


class TestPauliAlgebra:

    def test_commutation(self):
        x0 = PauliOperator.on(2, 'X', [0])
        z0 = PauliOperator.on(2, 'Z', [0])
        assert not x0.commutes(z0)
        assert PauliOperator.on(2, 'X', [0, 1]).commutes(PauliOperator.on(2, 'Z', [0, 1]))
        assert PauliOperator.on(2, 'Y', [1]).support == frozenset({1})

    def test_anticommuting_generators_rejected(self):
        with pytest.raises(ValidationError, match='anticommute'):
            StabilizerGroup((PauliOperator.on(1, 'X', [0]), PauliOperator.on(1, 'Z', [0])), 1)

    def test_length_mismatch(self):
        with pytest.raises(ValidationError):
            StabilizerGroup((PauliOperator.on(3, 'Z', [0]),), 2)

    def test_toric_group_is_css(self):
        group = toric_code_stabilizers(torus(3, 3))
        assert group.is_css
        assert group.x_checks().shape == (9, 18)
        assert group.z_checks().shape == (9, 18)


class TestDegeneracy:

    @pytest.mark.parametrize('lx, ly', [(2, 2), (3, 3), (4, 4), (2, 3), (3, 4)])
    def test_torus(self, lx, ly):
        assert degeneracy(torus(lx, ly)) == 4

    @pytest.mark.parametrize('boundary, expected', [('smooth', 1), ('rough', 1), ('mixed', 2)])
    def test_planar(self, boundary, expected):
        assert degeneracy(planar(3, 3, boundary)) == expected

    def test_genus2(self):
        assert degeneracy(load_complex(FIXTURES / 'genus2.json')) == 16
        assert degeneracy(genus_surface(2)) == 16

    def test_genus3(self):
        assert degeneracy(genus_surface(3)) == 64

    def test_surface_row(self):
        row = surface_row(load_complex(FIXTURES / 'genus2.json'))
        assert row == {'surface': 'genus2', 'V': 14, 'E': 32, 'F': 16, 'genus': 2, 'rank': 28, 'degeneracy': 16}

    def test_phase_signature(self):
        signature = phase_signature([torus(2, 2), planar(3, 3)])
        assert signature == {'torus(2,2)': 4, 'planar(3,3,smooth)': 1}

    def test_logical_operators(self):
        assert logical_operators(torus(3, 3)) == {'surface': 'torus(3,3)', 'logical_qubits': 2,
                                                  'genus': 1, 'closed': True}
        record = logical_operators(planar(3, 3, 'mixed'))
        assert record['logical_qubits'] == 1
        assert not record['closed']


class TestEntropy:

    def test_bell_pairs(self):
        group = bell_pair_group(2)
        assert stabilizer_entropy(group, [0]) == pytest.approx(LN2)
        assert stabilizer_entropy(group, [0, 1]) == pytest.approx(0.0)
        assert stabilizer_entropy(group, [1, 2]) == pytest.approx(2 * LN2)

    def test_product_state(self):
        group = product_state_group(4)
        assert stabilizer_entropy(group, [0, 2]) == 0.0
        assert stabilizer_entropy(group, []) == 0.0

    def test_region_out_of_range(self):
        with pytest.raises(ValidationError):
            stabilizer_entropy(product_state_group(2), [5])

    def test_purified_state_is_pure(self):
        group = purify(toric_code_stabilizers(torus(3, 3)))
        assert ground_degeneracy(group) == 1
        region = [0, 1, 9, 10, 4]
        complement = [q for q in range(18) if q not in region]
        assert stabilizer_entropy(group, region) == pytest.approx(stabilizer_entropy(group, complement))

    def test_purify_needs_css(self):
        y = PauliOperator.on(1, 'Y', [0])
        with pytest.raises(ValidationError):
            purify(StabilizerGroup((y,), 1))

    @pytest.mark.parametrize('size', [4, 5])
    def test_topological_entropy_of_toric_code(self, size):
        c = torus(size, size)
        a, b, cc = kitaev_preskill_partition(c, 1, 1)
        group = toric_code_stabilizers(c)
        assert topological_entropy(group, a, b, cc) == pytest.approx(LN2, abs=1e-12)
        assert topological_entropy(purify(group), a, b, cc) == pytest.approx(LN2, abs=1e-12)

    def test_controls_have_no_topological_entropy(self):
        a, b, c = kitaev_preskill_partition(torus(4, 4))
        assert topological_entropy(product_state_group(32), a, b, c) == 0.0
        assert topological_entropy(bell_pair_group(16), [0], [1], [2]) == pytest.approx(0.0)

    def test_overlapping_regions(self):
        group = toric_code_stabilizers(torus(4, 4))
        with pytest.raises(ValidationError, match='overlap'):
            topological_entropy(group, [0, 1], [1, 2], [3])

    def test_partition_needs_large_torus(self):
        with pytest.raises(ValidationError):
            kitaev_preskill_partition(torus(3, 3))
        with pytest.raises(ValidationError):
            kitaev_preskill_partition(planar(4, 4))

    def test_partition_is_disjoint(self):
        a, b, c = kitaev_preskill_partition(torus(4, 4))
        assert len(set(a) | set(b) | set(c)) == len(a) + len(b) + len(c) == 12


class TestDenseCrossCheck:

    @pytest.fixture(scope='class')
    def torus22(self):
        c = torus(2, 2)
        model = toric_code_model(c)
        gd = ground_data(hermitian_eigensystem(toric_code_hamiltonian(c)))
        return c, model, gd

    def test_kernel_dimension(self, torus22):
        c, _, gd = torus22
        assert gd.m == 4 == degeneracy(c)
        assert gd.e0 == pytest.approx(-8.0)

    def test_no_local_order(self, torus22):
        c, model, gd = torus22
        worst = max(local_order_test(gd.projector, LocalOperator((q,), PAULI[p]), model.geometry)
                    for q in range(c.n_edges) for p in 'XYZ')
        assert worst <= 1e-10

    @pytest.mark.parametrize('region', [[0], [0, 1], [0, 4], [0, 1, 4, 5], [0, 2, 4, 6, 7]])
    def test_entropy_matches_partial_trace(self, torus22, region):
        c, model, gd = torus22
        rho = partial_trace(gd.projector / gd.m, region, model.geometry)
        dense = entanglement_entropy(0.5 * (rho + rho.conj().T))
        assert dense == pytest.approx(stabilizer_entropy(toric_code_stabilizers(c), region), abs=1e-9)

    def test_projector_commutes_with_stabilizers(self, torus22):
        c, model, gd = torus22
        h = toric_code_hamiltonian(c)
        assert_allclose(h @ gd.projector, -8.0 * gd.projector, atol=1e-10)
