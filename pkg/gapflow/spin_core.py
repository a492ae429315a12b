import logging
from dataclasses import dataclass, field
from typing import Hashable, Iterable, Optional, Sequence, Tuple

import numpy as np
import scipy.linalg as linalg
from scipy.sparse.csgraph import shortest_path

from gapflow.errors import (
    ConvergenceError,
    DimensionBudgetError,
    ValidationError,
)

logger = logging.getLogger(__name__)

MAX_DIM = 2 ** 14
HERMITIAN_RTOL = 1e-10
EIG_RTOL = 1e-10

SIGMA_I = np.eye(2)
SIGMA_X = np.array([[0.0, 1.0], [1.0, 0.0]])
SIGMA_Y = np.array([[0.0, -1.0j], [1.0j, 0.0]])
SIGMA_Z = np.array([[1.0, 0.0], [0.0, -1.0]])
PAULI = {'I': SIGMA_I, 'X': SIGMA_X, 'Y': SIGMA_Y, 'Z': SIGMA_Z}


def spin_operators(local_dim: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Sx, Sy, Sz for spin (local_dim - 1)/2, basis ordered from m=+S down to m=-S."""
    m = local_dim
    sp = np.zeros((m, m))
    for i in range(1, m):
        sp[i - 1, i] = np.sqrt(i * (m - i))
    sm = sp.T.copy()
    sz = np.diag([0.5 * (m - 1.0) - i for i in range(m)])
    sx = 0.5 * (sp + sm)
    sy = -0.5j * (sp - sm)
    return sx, sy, sz


def _check_budget(dim: int, what: str = 'matrix'):
    if dim > MAX_DIM:
        raise DimensionBudgetError(
            f"{what} dimension {dim} exceeds dense budget {MAX_DIM}",
            {'dim': int(dim), 'max_dim': MAX_DIM},
        )


@dataclass(frozen=True)
class LatticeGeometry:
    sites: Tuple[Hashable, ...]
    local_dims: Tuple[int, ...]
    distance: np.ndarray = field(repr=False, compare=False)
    kind: str = 'graph'
    periodic: bool = False

    def __post_init__(self):
        if len(self.sites) != len(self.local_dims):
            raise ValidationError("sites and local_dims differ in length")
        if len(set(self.sites)) != len(self.sites):
            raise ValidationError("duplicate site ids")
        if list(self.sites) != sorted(self.sites):
            raise ValidationError("sites must be given in canonical (sorted) order")
        if any(d < 2 for d in self.local_dims):
            raise ValidationError("local dimensions must be >= 2")
        n = len(self.sites)
        dist = np.asarray(self.distance)
        if dist.shape != (n, n):
            raise ValidationError(f"distance matrix must be {n}x{n}")
        if n:
            if np.any(np.diag(dist) != 0) or np.any(dist != dist.T) or np.any(dist < 0):
                raise ValidationError("distance is not a metric (identity or symmetry fails)")
            if np.any(dist[:, None, :] > dist[:, :, None] + dist[None, :, :]):
                raise ValidationError("distance violates the triangle inequality")
        _check_budget(self.dim, 'Hilbert space')

    @property
    def n_sites(self) -> int:
        return len(self.sites)

    @property
    def dim(self) -> int:
        return int(np.prod(self.local_dims, dtype=np.int64)) if self.sites else 1

    def index(self, site: Hashable) -> int:
        try:
            return self.sites.index(site)
        except ValueError:
            raise ValidationError(f"unknown site id {site!r}") from None

    def dims_of(self, support: Iterable[Hashable]) -> Tuple[int, ...]:
        return tuple(self.local_dims[self.index(s)] for s in support)

    def d(self, x: Hashable, y: Hashable) -> int:
        return int(self.distance[self.index(x), self.index(y)])

    def set_distance(self, xs: Iterable[Hashable], ys: Iterable[Hashable]) -> int:
        ix = [self.index(x) for x in xs]
        iy = [self.index(y) for y in ys]
        if not ix or not iy:
            raise ValidationError("distance between empty sets is undefined")
        return int(self.distance[np.ix_(ix, iy)].min())

    def diameter(self, support: Iterable[Hashable]) -> int:
        idx = [self.index(s) for s in support]
        if not idx:
            return 0
        return int(self.distance[np.ix_(idx, idx)].max())

    def ball(self, center: Hashable, r: int) -> Tuple[Hashable, ...]:
        row = self.distance[self.index(center)]
        return tuple(s for s, dd in zip(self.sites, row) if dd <= r)

    def radius_from(self, center: Hashable) -> int:
        return int(self.distance[self.index(center)].max())

    def translate(self, site: Hashable, shift: int) -> Hashable:
        """Site `shift` steps along a chain; only meaningful for chain geometries."""
        if self.kind != 'chain':
            raise ValidationError("translation is defined on chains only")
        i = self.index(site) + shift
        if self.periodic:
            i %= self.n_sites
        if not 0 <= i < self.n_sites:
            raise ValidationError(f"site {site!r} shifted by {shift} leaves the chain")
        return self.sites[i]


def chain(n: int, local_dim: int = 2, periodic: bool = False) -> LatticeGeometry:
    if n < 1:
        raise ValidationError("chain needs at least one site")
    _check_budget(local_dim ** n, 'Hilbert space')
    idx = np.arange(n)
    dist = np.abs(idx[:, None] - idx[None, :])
    if periodic:
        dist = np.minimum(dist, n - dist)
    return LatticeGeometry(tuple(range(n)), (local_dim,) * n, dist, kind='chain', periodic=periodic)


def graph_geometry(sites: Sequence[Hashable], edges: Iterable[Tuple[Hashable, Hashable]],
                   local_dim: int = 2) -> LatticeGeometry:
    """Geometry whose metric is the graph distance on the given adjacency."""
    sites = tuple(sorted(sites))
    pos = {s: i for i, s in enumerate(sites)}
    adj = np.zeros((len(sites), len(sites)))
    for a, b in edges:
        adj[pos[a], pos[b]] = adj[pos[b], pos[a]] = 1
    dist = shortest_path(adj, unweighted=True, directed=False)
    if np.isinf(dist).any():
        raise ValidationError("site graph is disconnected")
    return LatticeGeometry(sites, (local_dim,) * len(sites), dist.astype(int), kind='graph')


@dataclass(frozen=True)
class LocalOperator:
    support: Tuple[Hashable, ...]
    matrix: np.ndarray = field(repr=False)

    def __post_init__(self):
        object.__setattr__(self, 'support', tuple(self.support))
        if len(set(self.support)) != len(self.support):
            raise ValidationError("support has repeated sites")
        m = np.asarray(self.matrix)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValidationError(f"local operator must be square, got {m.shape}")
        object.__setattr__(self, 'matrix', m)

    def check_dims(self, geometry: LatticeGeometry):
        expected = int(np.prod(geometry.dims_of(self.support), dtype=np.int64))
        if self.matrix.shape[0] != expected:
            raise ValidationError(
                f"operator on {self.support} has dimension {self.matrix.shape[0]}, expected {expected}")


@dataclass(frozen=True)
class EigenSystem:
    energies: np.ndarray
    vectors: np.ndarray = field(repr=False)
    # spectral norm of the source matrix; an upper bound when only the low end was computed
    norm: float = 0.0

    @property
    def complete(self) -> bool:
        return len(self.energies) == self.vectors.shape[0]

    @property
    def dim(self) -> int:
        return self.vectors.shape[0]

    def reconstruct(self) -> np.ndarray:
        return (self.vectors * self.energies) @ self.vectors.conj().T


def kron(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    a, b = np.asarray(a), np.asarray(b)
    _check_budget(a.shape[0] * b.shape[0], 'kron rows')
    _check_budget(a.shape[1] * b.shape[1], 'kron cols')
    return np.kron(a, b)


def embed(op: LocalOperator, geometry: LatticeGeometry) -> np.ndarray:
    op.check_dims(geometry)
    n = geometry.n_sites
    pos = [geometry.index(s) for s in op.support]
    order = np.argsort(pos)
    sorted_pos = [pos[i] for i in order]
    dims = geometry.dims_of(op.support)
    k = len(pos)

    mat = op.matrix
    if k and list(order) != list(range(k)):
        sub_dims = tuple(dims[i] for i in order)
        t = mat.reshape(dims + dims)
        t = t.transpose(list(order) + [k + i for i in order])
        mat = t.reshape(mat.shape)
        dims = sub_dims

    if k == 0:
        return mat[0, 0] * np.eye(geometry.dim, dtype=np.result_type(mat, float))

    if sorted_pos == list(range(sorted_pos[0], sorted_pos[0] + k)):
        left = int(np.prod(geometry.local_dims[:sorted_pos[0]], dtype=np.int64))
        right = int(np.prod(geometry.local_dims[sorted_pos[-1] + 1:], dtype=np.int64))
        out = mat
        if left > 1:
            out = np.kron(np.eye(left), out)
        if right > 1:
            out = np.kron(out, np.eye(right))
        return out

    rest = [i for i in range(n) if i not in sorted_pos]
    rest_dim = int(np.prod([geometry.local_dims[i] for i in rest], dtype=np.int64))
    full = np.kron(mat, np.eye(rest_dim))
    legs = sorted_pos + rest
    all_dims = tuple(geometry.local_dims[i] for i in legs)
    axes = [legs.index(p) for p in range(n)]
    t = full.reshape(all_dims + all_dims).transpose(axes + [n + a for a in axes])
    return t.reshape(geometry.dim, geometry.dim)


def hermiticity_defect(h: np.ndarray) -> float:
    """Relative Frobenius distance of h from its adjoint."""
    scale = np.linalg.norm(h)
    if scale == 0:
        return 0.0
    return float(np.linalg.norm(h - h.conj().T) / scale)


def require_hermitian(h: np.ndarray, what: str = 'matrix'):
    h = np.asarray(h)
    if h.ndim != 2 or h.shape[0] != h.shape[1]:
        raise ValidationError(f"{what} must be square, got shape {h.shape}")
    defect = hermiticity_defect(h)
    if defect > HERMITIAN_RTOL:
        raise ValidationError(f"{what} is not Hermitian (relative defect {defect:.3e})",
                              {'defect': defect})


def _as_real_if_possible(h: np.ndarray) -> np.ndarray:
    if np.iscomplexobj(h) and not np.any(h.imag):
        return np.ascontiguousarray(h.real)
    return h


def hermitian_eigensystem(h: np.ndarray, check: bool = True, count: Optional[int] = None) -> EigenSystem:
    """Eigendecomposition of h; with `count` only the lowest eigenpairs."""
    require_hermitian(h)
    h = _as_real_if_possible(np.asarray(h))
    if count is not None and count < h.shape[0]:
        energies, vectors = linalg.eigh(h, subset_by_index=[0, count - 1])
        norm = float(np.max(np.sum(np.abs(h), axis=1)))
    else:
        energies, vectors = linalg.eigh(h)
        norm = float(np.max(np.abs(energies))) if len(energies) else 0.0
    if check:
        scale = max(norm, np.finfo(float).tiny)
        residual = float(np.max(np.linalg.norm(h @ vectors - vectors * energies, axis=0)))
        gram = float(np.max(np.abs(vectors.conj().T @ vectors - np.eye(len(energies)))))
        if residual > EIG_RTOL * scale or gram > EIG_RTOL:
            raise ConvergenceError(
                f"eigensolver residual {residual:.3e} (gram defect {gram:.3e}) above tolerance",
                {'residual': residual, 'gram_defect': gram, 'norm': scale})
    return EigenSystem(energies, vectors, norm)


def hermitian_eigenvalues(h: np.ndarray, count: Optional[int] = None) -> np.ndarray:
    """Ascending eigenvalues; only the lowest `count` when given."""
    require_hermitian(h)
    h = _as_real_if_possible(np.asarray(h))
    if count is not None and count < h.shape[0]:
        return linalg.eigh(h, eigvals_only=True, subset_by_index=[0, count - 1])
    return linalg.eigh(h, eigvals_only=True)


def spectral_norm(a: np.ndarray) -> float:
    a = np.asarray(a)
    if a.size == 0:
        return 0.0
    if a.shape[0] == a.shape[1]:
        # Hermitian and anti-Hermitian inputs: largest |eigenvalue| directly
        scale = np.linalg.norm(a)
        if scale == 0:
            return 0.0
        for herm in (a, 1j * a):
            if np.linalg.norm(herm - herm.conj().T) <= 1e-13 * scale:
                e = linalg.eigh(_as_real_if_possible(0.5 * (herm + herm.conj().T)), eigvals_only=True)
                return float(max(abs(e[0]), abs(e[-1])))
    top = linalg.eigh(a.conj().T @ a, eigvals_only=True)[-1]
    return float(np.sqrt(max(top, 0.0)))


def _split_dims(geometry: LatticeGeometry, keep: Iterable[Hashable]):
    keep = list(keep)
    keep_pos = sorted(geometry.index(s) for s in keep)
    if len(set(keep_pos)) != len(keep_pos):
        raise ValidationError("keep set has repeated sites")
    rest_pos = [i for i in range(geometry.n_sites) if i not in keep_pos]
    dk = int(np.prod([geometry.local_dims[i] for i in keep_pos], dtype=np.int64))
    dr = int(np.prod([geometry.local_dims[i] for i in rest_pos], dtype=np.int64))
    return keep_pos, rest_pos, dk, dr


def partial_trace(a: np.ndarray, keep: Iterable[Hashable], geometry: LatticeGeometry) -> np.ndarray:
    """Trace out the complement of `keep`; result legs follow canonical site order."""
    a = np.asarray(a)
    if a.shape != (geometry.dim, geometry.dim):
        raise ValidationError(f"operator shape {a.shape} does not match lattice dimension {geometry.dim}")
    keep_pos, rest_pos, dk, dr = _split_dims(geometry, keep)
    n = geometry.n_sites
    perm = keep_pos + rest_pos
    t = a.reshape(geometry.local_dims * 2).transpose(perm + [n + p for p in perm])
    return np.einsum('ijkj->ik', t.reshape(dk, dr, dk, dr))


def reduced_density(psi: np.ndarray, keep: Iterable[Hashable], geometry: LatticeGeometry) -> np.ndarray:
    """Reduced density matrix of a pure state without forming |psi><psi|."""
    psi = np.asarray(psi).reshape(-1)
    if psi.shape[0] != geometry.dim:
        raise ValidationError(f"state length {psi.shape[0]} does not match lattice dimension {geometry.dim}")
    keep_pos, rest_pos, dk, dr = _split_dims(geometry, keep)
    m = psi.reshape(geometry.local_dims).transpose(keep_pos + rest_pos).reshape(dk, dr)
    return m @ m.conj().T


def conditional_expectation(a: np.ndarray, region: Iterable[Hashable], geometry: LatticeGeometry) -> np.ndarray:
    region = tuple(sorted(region))
    _, _, _, dr = _split_dims(geometry, region)
    reduced = partial_trace(a, region, geometry) / dr
    return embed(LocalOperator(region, reduced), geometry)


def unitary_exp(h: np.ndarray, s: float) -> np.ndarray:
    """exp(i s h) through the eigendecomposition of h."""
    require_hermitian(h)
    energies, vectors = linalg.eigh(_as_real_if_possible(np.asarray(h)))
    return (vectors * np.exp(1j * s * energies)) @ vectors.conj().T


def commutator(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return a @ b - b @ a
