import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, Hashable, Iterable, Optional, Sequence, Tuple

import numpy as np

from gapflow.errors import ValidationError
from gapflow.spin_core import (
    PAULI,
    LatticeGeometry,
    LocalOperator,
    chain,
    embed,
    graph_geometry,
    kron,
    spectral_norm,
    spin_operators,
)

logger = logging.getLogger(__name__)

LAMBDA_SLACK = 1e-12
MatrixFn = Callable[[float], np.ndarray]


def _const(m: np.ndarray) -> MatrixFn:
    return lambda lam: m


def _zero_like(m: np.ndarray) -> MatrixFn:
    z = np.zeros_like(m)
    return lambda lam: z


@dataclass(frozen=True)
class InteractionTerm:
    support: Tuple[Hashable, ...]
    phi: MatrixFn = field(repr=False)
    dphi: MatrixFn = field(repr=False)
    label: str = ''

    @classmethod
    def linear(cls, support, fixed: np.ndarray, slope: np.ndarray, label: str = '') -> 'InteractionTerm':
        """phi(lam) = fixed + lam * slope."""
        return cls(tuple(support), lambda lam: fixed + lam * slope, _const(slope), label)

    @classmethod
    def constant(cls, support, m: np.ndarray, label: str = '') -> 'InteractionTerm':
        return cls(tuple(support), _const(m), _zero_like(m), label)


@dataclass(frozen=True)
class Model:
    name: str
    geometry: LatticeGeometry
    terms: Tuple[InteractionTerm, ...]
    interaction_range: int
    lam_range: Tuple[float, float] = (0.0, 1.0)
    default_lambda: Optional[float] = None
    params: Dict = field(default_factory=dict)
    norm_bound: float = field(default=0.0, init=False)

    def __post_init__(self):
        object.__setattr__(self, 'terms', tuple(self.terms))
        lo, hi = self.lam_range
        if lo > hi:
            raise ValidationError(f"empty lambda range {self.lam_range}")
        if self.default_lambda is None:
            object.__setattr__(self, 'default_lambda', float(lo))
        bound = 0.0
        samples = np.linspace(lo, hi, 5)
        for term in self.terms:
            diam = self.geometry.diameter(term.support)
            if diam >= self.interaction_range:
                raise ValidationError(
                    f"term {term.label or term.support} has diameter {diam} >= range {self.interaction_range}")
            for lam in samples:
                m = term.phi(lam)
                LocalOperator(term.support, m).check_dims(self.geometry)
                if np.linalg.norm(m - m.conj().T) > 1e-10 * max(np.linalg.norm(m), 1.0):
                    raise ValidationError(f"term {term.label or term.support} not Hermitian at lambda={lam}")
                bound = max(bound, spectral_norm(m))
        object.__setattr__(self, 'norm_bound', bound)

    @property
    def n_sites(self) -> int:
        return self.geometry.n_sites

    def check_lambda(self, lam: float):
        lo, hi = self.lam_range
        if not (lo - LAMBDA_SLACK <= lam <= hi + LAMBDA_SLACK):
            raise ValidationError(f"lambda={lam} outside {self.name} range [{lo}, {hi}]",
                                  {'lambda': lam, 'range': [lo, hi]})


def assemble_hamiltonian(model: Model, lam: Optional[float] = None) -> np.ndarray:
    lam = model.default_lambda if lam is None else lam
    model.check_lambda(lam)
    h = np.zeros((model.geometry.dim, model.geometry.dim))
    for term in model.terms:
        h = h + embed(LocalOperator(term.support, term.phi(lam)), model.geometry)
    return h


def assemble_derivative(model: Model, lam: Optional[float] = None) -> np.ndarray:
    lam = model.default_lambda if lam is None else lam
    model.check_lambda(lam)
    h = np.zeros((model.geometry.dim, model.geometry.dim))
    for term in model.terms:
        h = h + embed(LocalOperator(term.support, term.dphi(lam)), model.geometry)
    return h


def _bonds(n: int, bc: str):
    if bc not in ('open', 'periodic'):
        raise ValidationError(f"unknown boundary condition {bc!r}")
    bonds = [(i, i + 1) for i in range(n - 1)]
    if bc == 'periodic' and n >= 3:
        bonds.append((n - 1, 0))
    return bonds


def tfim(n: int, bc: str = 'open', lam_range: Tuple[float, float] = (0.0, 5.0),
         default_lambda: Optional[float] = None) -> Model:
    """H = -sum X_i X_{i+1} - lam * sum Z_i."""
    if n < 1:
        raise ValidationError("tfim needs N >= 1")
    geometry = chain(n, 2, periodic=(bc == 'periodic'))
    xx = -np.kron(PAULI['X'], PAULI['X'])
    terms = [InteractionTerm.constant(b, xx, f'XX{b}') for b in _bonds(n, bc)]
    terms += [InteractionTerm.linear((i,), np.zeros((2, 2)), -PAULI['Z'], f'Z{i}') for i in range(n)]
    return Model('tfim', geometry, terms, 2, tuple(lam_range), default_lambda,
                 {'N': n, 'bc': bc})


def xy_chain(n: int, anisotropy: float = 1.0, field: Optional[float] = None, bc: str = 'open',
             lam_range: Tuple[float, float] = (0.0, 5.0)) -> Model:
    """H = -sum [(1+g)/2 XX + (1-g)/2 YY] - lam * sum Z; lam is the transverse field.

    `field` only sets the default evaluation point."""
    if n < 2:
        raise ValidationError("xy chain needs N >= 2")
    geometry = chain(n, 2, periodic=(bc == 'periodic'))
    g = anisotropy
    bond = -(0.5 * (1 + g) * np.kron(PAULI['X'], PAULI['X'])
             + 0.5 * (1 - g) * np.kron(PAULI['Y'], PAULI['Y']).real)
    terms = [InteractionTerm.constant(b, bond, f'XY{b}') for b in _bonds(n, bc)]
    terms += [InteractionTerm.linear((i,), np.zeros((2, 2)), -PAULI['Z'], f'Z{i}') for i in range(n)]
    return Model('xy', geometry, terms, 2, tuple(lam_range), field,
                 {'N': n, 'bc': bc, 'anisotropy': g})


def heisenberg_chain(n: int, coupling: float = 1.0, bc: str = 'open',
                     lam_range: Tuple[float, float] = (-2.0, 2.0),
                     default_lambda: Optional[float] = None) -> Model:
    """Spin-1/2 XXZ chain J sum (Sx Sx + Sy Sy + lam Sz Sz); lam is the anisotropy."""
    if n < 2:
        raise ValidationError("heisenberg chain needs N >= 2")
    geometry = chain(n, 2, periodic=(bc == 'periodic'))
    sx, sy, sz = spin_operators(2)
    flip = coupling * (np.kron(sx, sx) + np.kron(sy, sy)).real
    zz = coupling * np.kron(sz, sz)
    terms = [InteractionTerm.linear(b, flip, zz, f'XXZ{b}') for b in _bonds(n, bc)]
    return Model('heisenberg', geometry, terms, 2, tuple(lam_range), default_lambda,
                 {'N': n, 'bc': bc, 'J': coupling})


def aklt_bond() -> np.ndarray:
    """Projector onto total spin 2 of two spin-1 sites."""
    sx, sy, sz = spin_operators(3)
    ss = (np.kron(sx, sx) + np.kron(sy, sy) + np.kron(sz, sz)).real
    return 0.5 * ss + ss @ ss / 6.0 + np.eye(9) / 3.0


def aklt(n: int, bc: str = 'open') -> Model:
    if n < 2:
        raise ValidationError("aklt needs N >= 2")
    geometry = chain(n, 3, periodic=(bc == 'periodic'))
    p2 = aklt_bond()
    terms = [InteractionTerm.constant(b, p2, f'P2{b}') for b in _bonds(n, bc)]
    return Model('aklt', geometry, terms, 2, (0.0, 1.0), None, {'N': n, 'bc': bc})


def add_field(model: Model, op: np.ndarray, strength: float, sites: Optional[Iterable] = None,
              name: Optional[str] = None) -> Model:
    """Same model plus strength * op on every (or each listed) site, lambda-independent."""
    op = np.asarray(op)
    sites = model.geometry.sites if sites is None else tuple(sites)
    extra = [InteractionTerm.constant((s,), strength * op, f'field{s}') for s in sites]
    params = dict(model.params, perturbation_strength=strength)
    return Model(name or f'{model.name}+field', model.geometry, model.terms + tuple(extra),
                 max(model.interaction_range, 1), model.lam_range, model.default_lambda, params)


def _frozen_terms(model: Model, lam: float, weight: Callable[[float], float], dweight: float):
    terms = []
    for term in model.terms:
        m = term.phi(lam)
        terms.append(InteractionTerm(
            term.support,
            (lambda s, m=m: weight(s) * m),
            (lambda s, m=m: dweight * m),
            term.label,
        ))
    return terms


def interpolate(model0: Model, model1: Model, lam0: Optional[float] = None,
                lam1: Optional[float] = None) -> Model:
    """Straight path H(s) = (1-s) H0 + s H1 with both endpoints frozen at their lambda."""
    g0, g1 = model0.geometry, model1.geometry
    if g0.sites != g1.sites or g0.local_dims != g1.local_dims or g0.periodic != g1.periodic:
        raise ValidationError(f"cannot interpolate {model0.name} and {model1.name}: geometries differ")
    lam0 = model0.default_lambda if lam0 is None else lam0
    lam1 = model1.default_lambda if lam1 is None else lam1
    model0.check_lambda(lam0)
    model1.check_lambda(lam1)
    terms = (_frozen_terms(model0, lam0, lambda s: 1.0 - s, -1.0)
             + _frozen_terms(model1, lam1, lambda s: s, 1.0))
    return Model('interpolated', g0, terms, max(model0.interaction_range, model1.interaction_range),
                 (0.0, 1.0), 0.0,
                 {'from': model0.name, 'to': model1.name, 'lambda0': lam0, 'lambda1': lam1})


def toric_code_model(complex_) -> Model:
    """Dense -sum A_v - sum B_p on one qubit per edge."""
    edges = list(range(complex_.n_edges))
    stars = complex_.stars()
    adjacency = set()
    for v_edges in stars + list(complex_.faces):
        for a in v_edges:
            for b in v_edges:
                if a < b:
                    adjacency.add((a, b))
    geometry = graph_geometry(edges, adjacency, 2)
    terms = []
    for v, v_edges in enumerate(stars):
        terms.append(InteractionTerm.constant(tuple(v_edges), -_pauli_string('X', len(v_edges)), f'A{v}'))
    for f, f_edges in enumerate(complex_.faces):
        terms.append(InteractionTerm.constant(tuple(f_edges), -_pauli_string('Z', len(f_edges)), f'B{f}'))
    rng = 1 + max(geometry.diameter(t.support) for t in terms)
    return Model('toric', geometry, terms, rng, (0.0, 1.0), None, {'surface': complex_.name})


def _pauli_string(letter: str, k: int) -> np.ndarray:
    out = np.eye(1)
    for _ in range(k):
        out = kron(out, PAULI[letter])
    return out.real if not np.any(np.imag(out)) else out


@dataclass(frozen=True)
class SymmetryAction:
    unitaries: Dict[Hashable, np.ndarray] = field(repr=False)
    label: str = ''

    def __post_init__(self):
        for site, u in self.unitaries.items():
            u = np.asarray(u)
            if np.max(np.abs(u.conj().T @ u - np.eye(u.shape[0]))) > 1e-12:
                raise ValidationError(f"symmetry action at site {site!r} is not unitary")

    @classmethod
    def uniform(cls, geometry: LatticeGeometry, u: np.ndarray, label: str = '') -> 'SymmetryAction':
        return cls({s: np.asarray(u) for s in geometry.sites}, label)

    @classmethod
    def identity(cls, geometry: LatticeGeometry) -> 'SymmetryAction':
        return cls({s: np.eye(d) for s, d in zip(geometry.sites, geometry.local_dims)}, 'identity')

    def restrict(self, support: Sequence[Hashable]) -> np.ndarray:
        out = np.eye(1)
        for s in support:
            out = np.kron(out, self.unitaries[s])
        return out

    def global_unitary(self, geometry: LatticeGeometry) -> np.ndarray:
        missing = [s for s in geometry.sites if s not in self.unitaries]
        if missing:
            raise ValidationError(f"symmetry action undefined on sites {missing}")
        return self.restrict(geometry.sites)


def verify_symmetry(model: Model, action: SymmetryAction, lams: Optional[Iterable[float]] = None) -> float:
    lams = list(np.linspace(*model.lam_range, 5)) if lams is None else list(lams)
    worst = 0.0
    for term in model.terms:
        u = action.restrict(term.support)
        for lam in lams:
            m = term.phi(lam)
            worst = max(worst, spectral_norm(u @ m @ u.conj().T - m))
    logger.debug("symmetry %s on %s: max deviation %.3e", action.label, model.name, worst)
    return worst


ZOO = {
    'tfim': tfim,
    'xy': xy_chain,
    'aklt': aklt,
    'heisenberg': heisenberg_chain,
}


def perturb(model: Model, op: np.ndarray, strength: float, sites: Optional[Iterable] = None) -> Model:
    """Path s in [0, 1] from model to model + strength * sum op."""
    return interpolate(model, add_field(model, op, strength, sites))


def toric_code_hamiltonian(complex_) -> np.ndarray:
    return assemble_hamiltonian(toric_code_model(complex_))


def named_operator(name: str, local_dim: int = 2, rng: Optional[np.random.Generator] = None) -> np.ndarray:
    """Single-site operator by name: X, Y, Z (qubits), Sx, Sy, Sz, Sz2 (any spin), or
    'random', a Hermitian operator of unit norm drawn from rng."""
    if name == 'random':
        rng = np.random.default_rng() if rng is None else rng
        a = rng.normal(size=(local_dim, local_dim)) + 1j * rng.normal(size=(local_dim, local_dim))
        h = 0.5 * (a + a.conj().T)
        return h / spectral_norm(h)
    if name in PAULI:
        if local_dim != 2:
            raise ValidationError(f"Pauli {name} needs local dimension 2, got {local_dim}")
        return PAULI[name]
    sx, sy, sz = spin_operators(local_dim)
    table = {'Sx': sx, 'Sy': sy, 'Sz': sz, 'Sz2': sz @ sz}
    if name not in table:
        raise ValidationError(f"unknown operator {name!r}")
    return table[name]
