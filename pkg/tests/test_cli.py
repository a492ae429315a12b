import importlib.util
import json
from pathlib import Path

import numpy as np
import pandas as pd
import pytest

from gapflow.cli import main, run
from gapflow.config import (
    apply_overrides,
    build_model,
    load_document,
    make_config,
    parse_grid,
    parse_int_grid,
)
from gapflow.errors import ValidationError


def read_json(path):
    with open(path) as f:
        return json.load(f)


class TestGrids:

    def test_inclusive_stop(self):
        grid = parse_grid('0:2:0.1')
        assert len(grid) == 21
        assert grid[3] == 0.3
        assert grid[-1] == 2.0

    def test_sizes(self):
        assert parse_int_grid('6:12:2') == [6, 8, 10, 12]
        assert parse_int_grid([4, 6]) == [4, 6]

    def test_scalar_and_list(self):
        assert parse_grid(0.5) == [0.5]
        assert parse_grid([1, 2.5]) == [1.0, 2.5]

    @pytest.mark.parametrize('spec', ['1:2', '2:1:0.1', '0:1:0', 'a:b:c', None])
    def test_bad_grids(self, spec):
        with pytest.raises(ValidationError):
            parse_grid(spec)

    def test_non_integer_sizes(self):
        with pytest.raises(ValidationError):
            parse_int_grid('0:1:0.5')


class TestConfig:

    def test_overrides(self):
        data = apply_overrides({'model': {'name': 'tfim', 'N': 8}},
                               ['model.N=6', 'lambda=0.3', 'sizes=6:12:2', 'cocycle=false'])
        assert data == {'model': {'name': 'tfim', 'N': 6}, 'lambda': 0.3, 'sizes': '6:12:2', 'cocycle': False}

    def test_malformed_override(self):
        with pytest.raises(ValidationError):
            apply_overrides({}, ['steps'])

    def test_precedence(self):
        assert make_config('flow')['steps'] == 400
        assert make_config('flow', {'steps': 100})['steps'] == 100
        cfg = make_config('flow', {'steps': 100, 'out': 'a'}, ['steps=50'], out='b')
        assert cfg['steps'] == 50
        assert str(cfg.out_dir) == 'b'

    def test_nested_document_merges_model(self):
        cfg = make_config('gap-scan', {'model': {'N': 6}})
        assert cfg['model'] == {'name': 'tfim', 'N': 6, 'bc': 'open'}

    def test_default_out(self):
        assert str(make_config('splitting').out_dir).endswith('splitting')

    def test_unknown_key(self):
        with pytest.raises(ValidationError, match='unknown config keys'):
            make_config('flow', {'stepz': 10})

    def test_wrong_subcommand(self):
        with pytest.raises(ValidationError):
            make_config('flow', {'subcommand': 'gap-scan'})
        with pytest.raises(ValidationError):
            make_config('anneal')

    def test_document_name_is_dropped(self):
        cfg = make_config('flow', {'name': 'tfim_flow', 'subcommand': 'flow'})
        assert 'name' not in cfg.params
        assert cfg.echo()['subcommand'] == 'flow'

    def test_load_document(self, tmp_path):
        path = tmp_path / 'job.yaml'
        path.write_text('steps: 80\nmodel:\n  N: 6\n')
        assert load_document(path) == {'steps': 80, 'model': {'N': 6}}
        with pytest.raises(ValidationError):
            load_document(tmp_path / 'missing.json')
        (tmp_path / 'list.yaml').write_text('- 1\n- 2\n')
        with pytest.raises(ValidationError):
            load_document(tmp_path / 'list.yaml')

    def test_build_model(self):
        assert build_model({'name': 'aklt', 'N': 4}).geometry.dim == 81
        path = build_model({'name': 'aklt', 'N': 4, 'perturbation': {'op': 'Sz2', 'strength': 0.1}})
        assert path.lam_range == (0.0, 1.0)
        assert build_model({'name': 'toric', 'surface': {'kind': 'torus', 'Lx': 2}}).n_sites == 8
        with pytest.raises(ValidationError):
            build_model({'name': 'potts', 'N': 4})
        with pytest.raises(ValidationError):
            build_model({'name': 'tfim', 'N': 4, 'spin': 3})


class TestRunners:

    def test_splitting_table(self):
        table = run(make_config('splitting', {'sizes': [4, 6]}))
        assert list(table.frame.columns) == ['N', 'lambda', 'split', 'gap2', 'ratio']
        assert table.frame['ratio'].iloc[0] >= 2

    def test_topo_entropy_states(self):
        toric = run(make_config('topo-entropy')).record
        assert toric['gamma_over_ln2'] == pytest.approx(1.0)
        assert toric['degeneracy'] == 4
        product = run(make_config('topo-entropy', {'state': 'product'})).record
        assert product['gamma_topo'] == 0.0
        bell = run(make_config('topo-entropy', {'state': 'bell'})).record
        assert bell['gamma_topo'] == pytest.approx(0.0)
        with pytest.raises(ValidationError):
            run(make_config('topo-entropy', {'state': 'ghz'}))

    def test_symmetry_control(self):
        params = {'model': {'N': 6}, 'lambdas': [1.3, 1.6], 'steps': 20}
        clean = run(make_config('symmetry', params)).record
        assert clean['max_generator_commutator'] <= 1e-10
        assert clean['flow_commutator'] <= 1e-8
        control = run(make_config('symmetry', dict(params, control_op='X', control_strength=0.2))).record
        assert control['max_generator_commutator'] > 1e-3

    def test_seed_fixes_random_operator(self):
        params = {'model': {'N': 6}, 'op': 'random', 'steps': 20}
        first = run(make_config('locality', params)).frame
        again = run(make_config('locality', params)).frame
        other = run(make_config('locality', dict(params, seed=7))).frame
        assert first.equals(again)
        assert not np.allclose(first['delta'], other['delta'])

    def test_decompose_record(self):
        table = run(make_config('decompose', {'model': {'N': 6}}))
        assert table.record['residual'] <= 1e-10
        assert list(table.frame.columns) == ['r', 'norm']


class TestMain:

    def test_gap_scan(self, tmp_path, capsys):
        out = tmp_path / 'scan'
        code = main(['gap-scan', '--override', 'sizes=4:6:2', '--override', 'lambdas=0:1:0.5', '--out', str(out)])
        assert code == 0
        df = pd.read_csv(out / 'gap-scan.csv')
        assert len(df) == 6
        assert list(df['N']) == [4, 4, 4, 6, 6, 6]
        provenance = read_json(out / 'provenance.json')
        assert provenance['status'] == 'ok'
        assert provenance['config']['sizes'] == '4:6:2'
        assert 'Results saved' in capsys.readouterr().out

    def test_deterministic_csv(self, tmp_path):
        args = ['gap-scan', '--override', 'sizes=[4]', '--override', 'lambdas=0:1:0.25']
        assert main(args + ['--out', str(tmp_path / 'a')]) == 0
        assert main(args + ['--out', str(tmp_path / 'b')]) == 0
        assert (tmp_path / 'a' / 'gap-scan.csv').read_bytes() == (tmp_path / 'b' / 'gap-scan.csv').read_bytes()

    def test_topo_degeneracy_from_config(self, tmp_path):
        config = tmp_path / 'job.json'
        config.write_text(json.dumps({'subcommand': 'topo-degeneracy',
                                      'surfaces': [{'kind': 'torus', 'Lx': 2, 'Ly': 2}]}))
        out = tmp_path / 'topo'
        assert main(['topo-degeneracy', '--config', str(config), '--out', str(out)]) == 0
        record = read_json(out / 'topo-degeneracy.json')
        assert record['degeneracy'] == 4
        assert (out / 'topo-degeneracy.csv').exists()
        assert (out / 'provenance.json').exists()

    def test_gap_closed_exit_code(self, tmp_path):
        out = tmp_path / 'flow'
        code = main(['flow', '--override', 'model.N=6', '--override', 'lambda0=0.5', '--override', 'lambda1=1.5',
                     '--override', 'gamma=0.5', '--override', 'steps=20', '--out', str(out)])
        assert code == 3
        error = read_json(out / 'error.json')
        assert error['kind'] == 'numerical'
        assert 'gap closed along path' in error['message']
        assert read_json(out / 'provenance.json')['status'] == 'numerical'

    def test_validation_exit_code(self, tmp_path):
        out = tmp_path / 'bad'
        assert main(['flow', '--override', 'bogus=1', '--out', str(out)]) == 2
        assert read_json(out / 'error.json')['kind'] == 'validation'

    def test_lambda_out_of_range(self, tmp_path):
        out = tmp_path / 'range'
        assert main(['entropy-scan', '--override', 'lambdas=[9.0]', '--out', str(out)]) == 2

    def test_dry_run(self, tmp_path, capsys):
        out = tmp_path / 'dry'
        assert main(['gap-scan', '--dry-run', '--out', str(out)]) == 0
        assert not out.exists()
        assert json.loads(capsys.readouterr().out)['subcommand'] == 'gap-scan'

    def test_lr_cone(self, tmp_path):
        out = tmp_path / 'lr'
        code = main(['lr-cone', '--override', 'model.N=6', '--override', 'lambda=1.5',
                     '--override', 'distances=1:4:1', '--override', 'times=0:1:0.25', '--out', str(out)])
        assert code == 0
        df = pd.read_csv(out / 'lr-cone.csv')
        assert list(df.columns) == ['d', 't', 'c']
        assert len(df) == 4 * 5
        assert 'fit' in read_json(out / 'lr-cone.json')

    @pytest.mark.slow
    def test_full_gap_scan(self, tmp_path):
        out = tmp_path / 'full'
        assert main(['gap-scan', '--override', 'sizes=6:12:2', '--override', 'lambdas=0:2:0.1',
                     '--out', str(out)]) == 0
        df = pd.read_csv(out / 'gap-scan.csv')
        assert len(df) == 4 * 21
        assert 0.8 <= read_json(out / 'gap-scan.json')['critical_points']['12'] <= 1.2


def load_script(relative):
    path = Path(__file__).resolve().parent.parent / relative
    module_spec = importlib.util.spec_from_file_location(path.stem, path)
    module = importlib.util.module_from_spec(module_spec)
    module_spec.loader.exec_module(module)
    return module


class TestSurfaceFixtures:

    @pytest.fixture(scope='class')
    def generate(self):
        return load_script('scripts/setup/generate_surfaces.py')

    def test_writes_outside_committed_fixtures(self, generate, tmp_path):
        committed = generate.COMMITTED / 'genus2.json'
        before = committed.read_bytes()
        generator = generate.SurfaceFixtureGenerator(tmp_path / 'surfaces')
        written = generator.write_all()
        generator.check_committed(written)
        assert committed.read_bytes() == before
        assert written['genus2_connected_sum'] == 16
        assert (tmp_path / 'surfaces' / 'half_plane.json').exists()

    def test_refuses_committed_directory(self, generate):
        with pytest.raises(ValidationError, match='committed fixtures'):
            generate.SurfaceFixtureGenerator(generate.COMMITTED)

    def test_keeps_differing_file(self, generate, tmp_path):
        (tmp_path / 'disk.json').write_text(json.dumps({'name': 'other', 'vertices': [0, 1],
                                                        'edges': [[0, 1]], 'faces': []}))
        with pytest.raises(ValidationError, match='different content'):
            generate.SurfaceFixtureGenerator(tmp_path).write_all()
        generate.SurfaceFixtureGenerator(tmp_path, force=True).write_all()
