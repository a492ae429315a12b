import argparse
import json
import logging
import os
import sys
import time
from datetime import datetime
from pathlib import Path
from typing import Callable, Dict, List, Optional

import numpy as np
import pandas as pd

from gapflow import __version__
from gapflow.config import (
    SUBCOMMANDS,
    JobConfig,
    build_model,
    load_document,
    make_config,
    model_builder,
    parse_grid,
    parse_int_grid,
)
from gapflow.dynamics import lr_commutator_scan, lr_fit
from gapflow.errors import FitError, GapflowError, ValidationError
from gapflow.flow import (
    apply_automorphism,
    choose_gamma,
    decompose_generator,
    derivative_identity_check,
    flow_run,
    generator_at,
    integrate_flow,
    locality_profile,
    make_filter,
    step_refinement_study,
    symmetry_commutation,
)
from gapflow.io import ResultTable, write_json, write_provenance, write_result
from gapflow.models import SymmetryAction, add_field, named_operator, verify_symmetry
from gapflow.spectral import (
    area_law_scan,
    degeneracy_splitting,
    gap_scan,
    ground_data_for,
    locate_critical_point,
    rows_frame,
)
from gapflow.spin_core import LocalOperator, embed, spectral_norm
from gapflow.stabilizer import (
    bell_pair_group,
    build_surface,
    ground_degeneracy,
    kitaev_preskill_partition,
    logical_operators,
    phase_signature,
    product_state_group,
    stabilizer_entropy,
    surface_row,
    toric_code_stabilizers,
    topological_entropy,
)

logger = logging.getLogger(__name__)

LOG_LEVEL_ENV = 'GAPFLOW_LOG_LEVEL'


def _center(model, site):
    sites = model.geometry.sites
    if site is None:
        return sites[len(sites) // 2]
    if site not in sites:
        raise ValidationError(f"site {site!r} not in {model.name}")
    return site


def _patch_m(model, lam, cfg: JobConfig) -> int:
    if cfg['m'] is not None:
        return int(cfg['m'])
    return ground_data_for(model, lam, None, cfg['delta']).m


def run_gap_scan(cfg: JobConfig) -> ResultTable:
    rows = gap_scan(model_builder(cfg['model']), parse_int_grid(cfg['sizes']), parse_grid(cfg['lambdas']),
                    cfg['m'], cfg['delta'], cfg['workers'], cfg['progress'])
    critical = locate_critical_point(rows)
    return ResultTable('gap-scan', rows_frame(rows), {'critical_points': critical})


def run_splitting(cfg: JobConfig) -> ResultTable:
    lam = float(cfg['lambda'])
    points = degeneracy_splitting(model_builder(cfg['model']), lam, parse_int_grid(cfg['sizes']), cfg['workers'])
    df = pd.DataFrame(points, columns=['N', 'split', 'gap2'])
    df.insert(1, 'lambda', lam)
    df['ratio'] = df['split'] / df['split'].shift(-1)
    return ResultTable('splitting', df)


def run_lr_cone(cfg: JobConfig) -> ResultTable:
    model = build_model(cfg['model'])
    lam = float(cfg['lambda'])
    site = _center(model, cfg['a_site'])
    rng = np.random.default_rng(cfg['seed'])
    a = LocalOperator((site,), named_operator(cfg['a_op'], model.geometry.local_dims[0], rng))
    b = LocalOperator((site,), named_operator(cfg['b_op'], model.geometry.local_dims[0], rng))
    samples = lr_commutator_scan(model, lam, a, b, parse_int_grid(cfg['distances']), parse_grid(cfg['times']),
                                 cfg['workers'], cfg['progress'])
    df = pd.DataFrame([(s.d, s.t, s.c) for s in samples], columns=['d', 't', 'c'])
    record = {'model': model.name, 'N': model.n_sites, 'lambda': lam}
    try:
        fit = lr_fit(samples, cfg['epsilon'], spectral_norm(a.matrix) * spectral_norm(b.matrix))
        record['fit'] = fit.to_record()
    except FitError as e:
        logger.warning("LR fit skipped: %s", e.message)
        record['fit'] = None
        record['fit_error'] = e.to_record()
    return ResultTable('lr-cone', df, record)


def run_flow(cfg: JobConfig) -> ResultTable:
    model = build_model(cfg['model'])
    record = flow_run(model, float(cfg['lambda0']), float(cfg['lambda1']), int(cfg['steps']), cfg['gamma'],
                      cfg['m'], cfg['delta'], float(cfg['min_gap']), bool(cfg['cocycle']), cfg['workers'])
    record = {'model': model.name, 'N': model.n_sites, **record}
    extra = {}
    if cfg['refine']:
        study = step_refinement_study(model, float(cfg['lambda0']), float(cfg['lambda1']),
                                      parse_int_grid(cfg['refine']), record['gamma'], record['m'])
        extra['refinement'] = pd.DataFrame(study, columns=['steps', 'transport_residual'])
    return ResultTable('flow', record=record, extra=extra)


def run_flow_identity(cfg: JobConfig) -> ResultTable:
    model = build_model(cfg['model'])
    lam = float(cfg['lambda'])
    hs = parse_grid(cfg['h'])
    m = _patch_m(model, lam, cfg)
    residuals = [derivative_identity_check(model, lam, cfg['gamma'], h, m) for h in hs]
    df = pd.DataFrame({'lambda': lam, 'h': hs, 'residual': residuals})
    df['ratio'] = df['residual'] / df['residual'].shift(1)
    return ResultTable('flow-identity', df)


def run_locality(cfg: JobConfig) -> ResultTable:
    model = build_model(cfg['model'])
    geometry = model.geometry
    center = _center(model, cfg['center'])
    flow = integrate_flow(model, float(cfg['lambda0']), float(cfg['lambda1']), int(cfg['steps']), cfg['gamma'],
                          cfg['m'], cfg['delta'], workers=cfg['workers'])
    rng = np.random.default_rng(cfg['seed'])
    a = embed(LocalOperator((center,), named_operator(cfg['op'], geometry.local_dims[0], rng)), geometry)
    radii = parse_int_grid(cfg['radii']) if cfg['radii'] is not None else None
    profile = locality_profile(apply_automorphism(flow, a), center, geometry, radii, cfg['workers'])
    df = pd.DataFrame({'r': profile.radii, 'delta': profile.deltas})
    record = {'model': model.name, 'N': model.n_sites, 'center': center, 'gamma': flow.gamma,
              'decay_rate': profile.decay_rate}
    return ResultTable('locality', df, record)


def run_decompose(cfg: JobConfig) -> ResultTable:
    model = build_model(cfg['model'])
    lam = float(cfg['lambda'])
    center = _center(model, cfg['center'])
    gamma, _ = choose_gamma(model, [lam], _patch_m(model, lam, cfg), cfg['gamma'])
    gen = generator_at(model, lam, make_filter(gamma, tabulate=False))
    dec = decompose_generator(gen, center, model.geometry)
    df = pd.DataFrame({'r': dec.radii, 'norm': dec.norms})
    record = {'model': model.name, 'N': model.n_sites, 'lambda': lam, 'gamma': gamma,
              'center': center, 'residual': dec.reconstruction_residual}
    return ResultTable('decompose', df, record)


def run_symmetry(cfg: JobConfig) -> ResultTable:
    model = build_model(cfg['model'])
    geometry = model.geometry
    local_dim = geometry.local_dims[0]
    if cfg['control_op']:
        model = add_field(model, named_operator(cfg['control_op'], local_dim), float(cfg['control_strength']),
                          name=f'{model.name}+control')
    action = SymmetryAction.uniform(geometry, named_operator(cfg['symmetry_op'], local_dim), cfg['symmetry_op'])
    lams = parse_grid(cfg['lambdas'])
    rows = []
    for lam in lams:
        gamma, _ = choose_gamma(model, [lam], _patch_m(model, lam, cfg), cfg['gamma'])
        gen = generator_at(model, lam, make_filter(gamma, tabulate=False))
        rows.append((lam, gamma, symmetry_commutation(gen.d_matrix, action, geometry)))
    flow = integrate_flow(model, float(cfg['lambda0']), float(cfg['lambda1']), int(cfg['steps']), cfg['gamma'],
                          cfg['m'], cfg['delta'], workers=cfg['workers'])
    record = {
        'model': model.name,
        'symmetry': cfg['symmetry_op'],
        'hamiltonian_deviation': verify_symmetry(model, action, lams),
        'max_generator_commutator': max(r[2] for r in rows),
        'flow_commutator': symmetry_commutation(flow.v_matrix, action, geometry),
    }
    return ResultTable('symmetry', pd.DataFrame(rows, columns=['lambda', 'gamma', 'commutator']), record)


def run_entropy_scan(cfg: JobConfig) -> ResultTable:
    model = build_model(cfg['model'])
    ells = parse_int_grid(cfg['ells']) if cfg['ells'] is not None else None
    rows = []
    for lam in parse_grid(cfg['lambdas']):
        for ell, s in area_law_scan(model, lam, ells, m=cfg['m'], delta=cfg['delta']):
            rows.append((lam, ell, s))
    return ResultTable('entropy-scan', pd.DataFrame(rows, columns=['lambda', 'ell', 'entropy']))


def run_topo_degeneracy(cfg: JobConfig) -> ResultTable:
    surfaces = [build_surface(s) for s in cfg['surfaces']]
    rows = []
    for s in surfaces:
        row = surface_row(s)
        row['logical_qubits'] = logical_operators(s)['logical_qubits']
        rows.append(row)
    df = pd.DataFrame(rows, columns=['surface', 'V', 'E', 'F', 'genus', 'rank', 'degeneracy', 'logical_qubits'])
    record = {'signature': phase_signature(surfaces)}
    if len(surfaces) == 1:
        record['degeneracy'] = rows[0]['degeneracy']
    return ResultTable('topo-degeneracy', df, record)


def run_topo_entropy(cfg: JobConfig) -> ResultTable:
    surface = build_surface(cfg['surface'])
    state = cfg['state']
    if state == 'toric':
        group = toric_code_stabilizers(surface)
    elif state == 'product':
        group = product_state_group(surface.n_edges)
    elif state == 'bell':
        group = bell_pair_group(surface.n_edges // 2)
    else:
        raise ValidationError(f"unknown state {state!r}; use toric, product or bell")
    regions = cfg['regions']
    if regions is None:
        a, b, c = kitaev_preskill_partition(surface) if state == 'toric' else ([0], [1], [2])
    else:
        try:
            a, b, c = regions['A'], regions['B'], regions['C']
        except (KeyError, TypeError):
            raise ValidationError("regions must be a mapping with keys A, B and C") from None
    names = {'A': a, 'B': b, 'C': c, 'AB': [*a, *b], 'BC': [*b, *c], 'AC': [*a, *c], 'ABC': [*a, *b, *c]}
    gamma = topological_entropy(group, a, b, c)
    record = {
        'surface': surface.name,
        'state': state,
        'regions': {'A': list(a), 'B': list(b), 'C': list(c)},
        'entropies': {k: stabilizer_entropy(group, v) for k, v in names.items()},
        'gamma_topo': gamma,
        'gamma_over_ln2': gamma / np.log(2.0),
        'degeneracy': ground_degeneracy(group),
        'convention': 'maximally mixed within the ground space',
    }
    return ResultTable('topo-entropy', record=record)


RUNNERS: Dict[str, Callable[[JobConfig], ResultTable]] = {
    'gap-scan': run_gap_scan,
    'splitting': run_splitting,
    'lr-cone': run_lr_cone,
    'flow': run_flow,
    'flow-identity': run_flow_identity,
    'locality': run_locality,
    'decompose': run_decompose,
    'symmetry': run_symmetry,
    'entropy-scan': run_entropy_scan,
    'topo-degeneracy': run_topo_degeneracy,
    'topo-entropy': run_topo_entropy,
}


def run(cfg: JobConfig) -> ResultTable:
    if cfg.subcommand not in RUNNERS:
        raise ValidationError(f"unknown subcommand {cfg.subcommand!r}")
    return RUNNERS[cfg.subcommand](cfg)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog='gapflow', description='Finite-size experiments on gapped ground state phases')
    parser.add_argument('--version', action='version', version=f'%(prog)s {__version__}')
    parser.add_argument('subcommand', choices=SUBCOMMANDS)
    parser.add_argument('--config', help='JSON (or YAML) job config')
    parser.add_argument('--out', help='output directory (overrides the config)')
    parser.add_argument('--override', action='append', default=[], metavar='KEY=VALUE',
                        help='override a config field; dotted keys reach nested fields')
    parser.add_argument('--log-level', default=os.environ.get(LOG_LEVEL_ENV, 'WARNING'))
    parser.add_argument('--dry-run', action='store_true', help='print the materialized config and exit')
    return parser


def execute(cfg: JobConfig) -> int:
    """Run one job, write its outputs, return the exit code."""
    started = datetime.now()
    t0 = time.perf_counter()
    out_dir = cfg.out_dir
    print(f"\n>>> Running: {cfg.subcommand} -> {out_dir}")
    try:
        table = run(cfg)
    except GapflowError as e:
        write_json(e.to_record(), out_dir / 'error.json')
        write_provenance(cfg.echo(), started, time.perf_counter() - t0, out_dir, status=e.kind)
        print(json.dumps(e.to_record(), default=str), file=sys.stderr)
        print(f"  ✗ Error in {cfg.subcommand}: {e.message}")
        return e.exit_code
    paths = write_result(table, out_dir)
    write_provenance(cfg.echo(), started, time.perf_counter() - t0, out_dir)
    for p in paths:
        print(f"  Results saved: {p}")
    return 0


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=getattr(logging, str(args.log_level).upper(), logging.WARNING),
                        format='%(asctime)s %(levelname)s %(name)s: %(message)s')
    try:
        document = load_document(args.config) if args.config else {}
        cfg = make_config(args.subcommand, document, args.override, args.out)
    except GapflowError as e:
        out_dir = Path(args.out or Path('results/raw') / args.subcommand)
        write_json(e.to_record(), out_dir / 'error.json')
        print(json.dumps(e.to_record(), default=str), file=sys.stderr)
        return e.exit_code
    if args.dry_run:
        print(json.dumps(cfg.echo(), indent=2, default=str))
        return 0
    return execute(cfg)
