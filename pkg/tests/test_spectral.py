import numpy as np
import pytest
from numpy.testing import assert_allclose

from gapflow.errors import PatchNotIsolatedError, ValidationError
from gapflow.models import assemble_hamiltonian, tfim
from gapflow.spectral import (
    GapScanRow,
    area_law_scan,
    bulk_patch,
    degeneracy_splitting,
    entanglement_entropy,
    entropy_profile,
    free_fermion_spectrum,
    gap_scan,
    ground_data,
    ground_data_for,
    local_order_test,
    locate_critical_point,
    patch_from_energies,
    rows_frame,
    scan_point,
)
from gapflow.spin_core import PAULI, LocalOperator, hermitian_eigensystem, hermitian_eigenvalues


class TestPatch:

    def test_degenerate_cluster(self):
        m, split, gap = patch_from_energies([0.0, 1e-12, 1.0, 2.0], norm=2.0)
        assert m == 2
        assert split == pytest.approx(1e-12)
        assert gap == pytest.approx(1.0)

    def test_explicit_m(self):
        m, split, gap = patch_from_energies([0.0, 0.1, 1.0, 2.0], m=2)
        assert (m, split, gap) == (2, pytest.approx(0.1), pytest.approx(0.9))

    def test_not_isolated(self):
        with pytest.raises(PatchNotIsolatedError) as info:
            patch_from_energies([0.0, 0.5, 0.6], m=2)
        assert info.value.spectrum_head[:3] == [0.0, 0.5, 0.6]

    def test_whole_spectrum_degenerate(self):
        with pytest.raises(PatchNotIsolatedError):
            patch_from_energies([1.0, 1.0, 1.0])

    def test_bad_m(self):
        with pytest.raises(ValidationError):
            patch_from_energies([0.0, 1.0], m=3)

    @pytest.mark.parametrize('energies, m, gap', [
        ([0.0, 1e-3, 1.0, 1.5], 2, 0.999),
        ([0.0, 0.3, 0.9, 1.0], 1, 0.3),
        ([0.0, 0.0, 0.0, 0.0, 0.5, 0.6], 4, 0.5),
        ([0.0, 1.0], 1, 1.0),
    ])
    def test_bulk_patch(self, energies, m, gap):
        bulk_m, bulk_gap = bulk_patch(energies)
        assert bulk_m == m
        assert bulk_gap == pytest.approx(gap)

    def test_bulk_patch_without_gap(self):
        m, gap = bulk_patch([1.0, 1.0, 1.0])
        assert m == 3
        assert np.isnan(gap)

    def test_ground_data_projector(self, tfim6):
        gd = ground_data(hermitian_eigensystem(assemble_hamiltonian(tfim6, 0.0)))
        assert gd.m == 2
        assert_allclose(gd.projector @ gd.projector, gd.projector, atol=1e-12)
        assert np.trace(gd.projector).real == pytest.approx(2.0)
        assert gd.e0 == pytest.approx(-5.0)
        assert gd.patch_gap == pytest.approx(2.0)


class TestFreeFermionOracle:

    @pytest.mark.parametrize('lam', [0.3, 1.0, 1.7])
    def test_matches_exact_diagonalization(self, tfim6, lam):
        e = hermitian_eigenvalues(assemble_hamiltonian(tfim6, lam), 3)
        eps = free_fermion_spectrum(6, lam)
        assert e[1] - e[0] == pytest.approx(eps[0], abs=1e-8)
        assert e[2] - e[0] == pytest.approx(eps[1], abs=1e-8)

    def test_classical_limit(self):
        eps = free_fermion_spectrum(5, 0.0)
        assert_allclose(eps, [0.0, 2.0, 2.0, 2.0, 2.0], atol=1e-14)

    def test_scan_point_reports_oracle(self, tfim6):
        row = scan_point(tfim6, 1.5)
        assert row.status == 'ok'
        assert row.m == 1
        assert row.gap == pytest.approx(row.oracle_gap, abs=1e-8)


class TestGapScan:

    def test_rows_ordered_by_size_then_lambda(self):
        rows = gap_scan(tfim, [4, 6], [0.0, 0.5, 1.0], progress=False)
        assert [(r.N, r.lam) for r in rows] == [(4, 0.0), (4, 0.5), (4, 1.0), (6, 0.0), (6, 0.5), (6, 1.0)]
        df = rows_frame(rows)
        assert list(df.columns) == ['model', 'N', 'lambda', 'e0', 'gap', 'm', 'split', 'patch_gap',
                                    'bulk_m', 'bulk_gap', 'oracle_gap', 'status']
        assert len(df) == 6

    def test_classical_point_is_doubly_degenerate(self):
        rows = gap_scan(tfim, [6], [0.0], progress=False)
        assert rows[0].m == 2
        assert rows[0].patch_gap == pytest.approx(2.0)

    def test_locate_critical_point_parabola(self):
        lams = np.round(np.arange(0.0, 2.01, 0.1), 12)
        rows = [GapScanRow('toy', 8, float(l), 0.0, 1.0, 1, 0.0, 1.0, bulk_m=1, bulk_gap=(l - 1.03) ** 2 + 0.1)
                for l in lams]
        assert locate_critical_point(rows)[8] == pytest.approx(1.03, abs=1e-9)

    def test_locate_critical_point_ignores_doublet_splitting(self):
        lams = np.round(np.arange(0.0, 1.01, 0.1), 12)
        rows = [GapScanRow('toy', 8, float(l), 0.0, 1e-9 if l < 0.5 else l, 1, 0.0, 1.0,
                           bulk_m=2 if l < 0.5 else 1, bulk_gap=1.0 if l < 0.5 else l)
                for l in lams]
        assert locate_critical_point(rows)[8] == 0.5

    def test_gap_closes_between_phases(self):
        rows = gap_scan(tfim, [10], [0.5, 1.0, 1.5], progress=False)
        ordered, critical, disordered = rows
        assert ordered.gap < 1e-2
        assert (ordered.bulk_m, critical.bulk_m, disordered.bulk_m) == (2, 1, 1)
        assert critical.bulk_gap < min(ordered.bulk_gap, disordered.bulk_gap)
        assert critical.bulk_gap == pytest.approx(critical.oracle_gap, abs=1e-8)

    def test_failed_point_is_flagged(self, tfim6):
        row = scan_point(tfim6, 1.5, m=100)
        assert row.status.startswith('validation')
        assert row.m == 0
        assert np.isnan(row.patch_gap)
        assert np.isfinite(row.e0)
        bad_delta = scan_point(tfim6, 1.5, delta=-1.0)
        assert bad_delta.status.startswith('validation')
        assert np.isnan(bad_delta.e0)

    def test_scan_continues_past_failed_points(self):
        rows = gap_scan(tfim, [4], [0.5, 1.5, 9.0], progress=False)
        assert [r.status for r in rows[:2]] == ['ok', 'ok']
        assert 'outside' in rows[2].status
        assert set(locate_critical_point(rows)) == {4}

    def test_splitting_shrinks_in_ordered_phase(self):
        points = degeneracy_splitting(tfim, 0.5, [4, 6, 8])
        splits = [p[1] for p in points]
        assert splits[0] / splits[1] >= 2
        assert splits[1] / splits[2] >= 2
        assert all(p[2] >= 0.3 for p in points)

    def test_splitting_needs_three_levels(self):
        with pytest.raises(ValidationError, match='three levels'):
            degeneracy_splitting(tfim, 0.5, [1])

    @pytest.mark.slow
    def test_ising_transition_signature(self):
        lams = np.round(np.arange(0.0, 2.0001, 0.05), 12)
        rows = gap_scan(tfim, [12], lams, progress=False)
        assert all(r.status == 'ok' for r in rows)
        assert all(abs(r.gap - r.oracle_gap) < 1e-8 for r in rows)
        assert 0.8 <= locate_critical_point(rows)[12] <= 1.2
        at_one = [scan_point(tfim(n), 1.0).gap for n in (6, 8, 10, 12)]
        assert all(a > b for a, b in zip(at_one, at_one[1:]))
        gapped = [scan_point(tfim(n), 1.5) for n in (8, 10, 12)]
        assert all(r.m == 1 for r in gapped)
        assert max(r.gap for r in gapped) <= 1.1 * min(r.gap for r in gapped)


class TestEntropy:

    def test_maximally_mixed_qubit(self):
        assert entanglement_entropy(np.eye(2) / 2) == pytest.approx(np.log(2))

    def test_pure_state(self):
        assert entanglement_entropy(np.diag([1.0, 0.0])) == pytest.approx(0.0, abs=1e-15)

    def test_rejects_bad_trace(self):
        with pytest.raises(ValidationError):
            entanglement_entropy(np.eye(2))

    def test_profile_is_symmetric(self, tfim6):
        gd = ground_data_for(tfim6, 1.5)
        profile = entropy_profile(gd.vectors[:, 0], tfim6.geometry)
        values = [s for _, s in profile]
        assert values[0] == pytest.approx(0.0, abs=1e-12)
        assert values[-1] == pytest.approx(0.0, abs=1e-12)
        assert_allclose(values, values[::-1], atol=1e-10)

    def test_area_law_deep_in_paramagnet(self, tfim8):
        s = [v for _, v in area_law_scan(tfim8, 2.0)]
        assert max(s) - min(s) <= 0.2

    def test_degenerate_ground_state_needs_explicit_state(self, tfim8):
        with pytest.raises(ValidationError):
            area_law_scan(tfim8, 0.0)

    def test_explicit_state(self, tfim8):
        plus = np.full(2 ** 8, 1 / 16)
        minus = plus * np.array([(-1) ** bin(i).count('1') for i in range(2 ** 8)])
        gd = ground_data_for(tfim8, 0.0)
        for psi in (plus, minus):
            assert np.linalg.norm(gd.projector @ psi - psi) <= 1e-10
            assert all(v == pytest.approx(0.0, abs=1e-12) for _, v in area_law_scan(tfim8, 0.0, state=psi))
        cat = [v for _, v in area_law_scan(tfim8, 0.0, state=plus + minus)]
        assert_allclose(cat, np.log(2), atol=1e-10)

    @pytest.mark.slow
    def test_area_law_and_critical_growth(self):
        model = tfim(12)
        gapped = [v for _, v in area_law_scan(model, 2.0, range(1, 7))]
        assert max(gapped) - min(gapped) <= 0.2
        critical = [v for _, v in area_law_scan(model, 1.0, range(1, 6))]
        assert all(a < b for a, b in zip(critical, critical[1:]))


class TestLocalOrder:

    def test_ordered_ground_space_has_local_order(self, tfim6):
        gd = ground_data_for(tfim6, 0.0)
        assert gd.m == 2
        assert local_order_test(gd.projector, LocalOperator((0,), PAULI['X']), tfim6.geometry) > 0.5

    def test_unique_ground_state_has_none(self, tfim6):
        gd = ground_data_for(tfim6, 1.5)
        assert local_order_test(gd.projector, LocalOperator((2,), PAULI['X']), tfim6.geometry) < 1e-10
