import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, FrozenSet, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np

from gapflow.errors import ValidationError

logger = logging.getLogger(__name__)

LN2 = float(np.log(2.0))


@dataclass(frozen=True)
class CellComplex:
    """Vertices 0..n_vertices-1, edges as vertex pairs, faces as edge-id tuples.

    Open vertices sit on rough boundaries and carry no star."""
    name: str
    n_vertices: int
    edges: Tuple[Tuple[int, int], ...]
    faces: Tuple[Tuple[int, ...], ...]
    open_vertices: FrozenSet[int] = frozenset()
    meta: Dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        object.__setattr__(self, 'edges', tuple(tuple(int(v) for v in e) for e in self.edges))
        object.__setattr__(self, 'faces', tuple(tuple(int(e) for e in f) for f in self.faces))
        object.__setattr__(self, 'open_vertices', frozenset(int(v) for v in self.open_vertices))
        for e in self.edges:
            if len(e) != 2 or not all(0 <= v < self.n_vertices for v in e):
                raise ValidationError(f"edge {e} has endpoints outside 0..{self.n_vertices - 1}")
        counts = np.zeros(self.n_edges, dtype=int)
        for i, f in enumerate(self.faces):
            if not f:
                raise ValidationError(f"face {i} is empty")
            for e in f:
                if not 0 <= e < self.n_edges:
                    raise ValidationError(f"face {i} references unknown edge {e}")
                counts[e] += 1
            parity: Dict[int, int] = {}
            for e in f:
                for v in self.edges[e]:
                    parity[v] = parity.get(v, 0) ^ 1
            broken = [v for v, p in parity.items() if p and v not in self.open_vertices]
            if broken:
                raise ValidationError(f"face {i} boundary is not closed at vertices {broken}")
        if np.any(counts > 2):
            raise ValidationError(f"inconsistent gluing: edges {np.flatnonzero(counts > 2).tolist()} lie in more than 2 faces")

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @property
    def n_faces(self) -> int:
        return len(self.faces)

    @property
    def vertex_edges(self) -> List[Tuple[int, ...]]:
        incident: List[List[int]] = [[] for _ in range(self.n_vertices)]
        for i, (u, v) in enumerate(self.edges):
            incident[u].append(i)
            if v != u:
                incident[v].append(i)
        return [tuple(x) for x in incident]

    def stars(self) -> List[Tuple[int, ...]]:
        return [es for v, es in enumerate(self.vertex_edges) if es and v not in self.open_vertices]

    @property
    def star_vertex_count(self) -> int:
        return len(self.stars())

    @property
    def closed(self) -> bool:
        if self.open_vertices:
            return False
        counts = np.zeros(self.n_edges, dtype=int)
        for f in self.faces:
            for e in f:
                counts[e] += 1
        return bool(np.all(counts == 2))

    @property
    def euler_characteristic(self) -> int:
        return self.star_vertex_count - self.n_edges + self.n_faces

    @property
    def genus(self) -> Optional[int]:
        if self.closed:
            two_g = 2 - self.euler_characteristic
            if two_g % 2:
                raise ValidationError(f"{self.name}: odd 2-chi on a closed surface")
            return two_g // 2
        return self.meta.get('genus')

    def face_cycle(self, face: int) -> List[int]:
        """Boundary vertices of a face in cyclic order."""
        edges = list(self.faces[face])
        u, v = self.edges[edges[0]]
        cycle = [u, v]
        used = {edges[0]}
        while len(used) < len(edges):
            nxt = next((e for e in edges if e not in used and cycle[-1] in self.edges[e]), None)
            if nxt is None:
                raise ValidationError(f"face {face} of {self.name} is not a simple cycle")
            used.add(nxt)
            a, b = self.edges[nxt]
            cycle.append(b if a == cycle[-1] else a)
        if cycle[-1] != cycle[0]:
            raise ValidationError(f"face {face} of {self.name} is not a simple cycle")
        return cycle[:-1]

    def to_dict(self) -> Dict:
        out = {
            'name': self.name,
            'vertices': list(range(self.n_vertices)),
            'edges': [list(e) for e in self.edges],
            'faces': [list(f) for f in self.faces],
        }
        if self.open_vertices:
            out['open_vertices'] = sorted(self.open_vertices)
        return out


def from_dict(data: Dict, name: Optional[str] = None) -> CellComplex:
    try:
        vertices = list(data['vertices'])
        edges = data['edges']
        faces = data['faces']
    except KeyError as e:
        raise ValidationError(f"cell complex is missing {e.args[0]!r}") from None
    index = {v: i for i, v in enumerate(vertices)}
    try:
        edges = [(index[a], index[b]) for a, b in edges]
        open_vertices = [index[v] for v in data.get('open_vertices', [])]
    except KeyError as e:
        raise ValidationError(f"edge references unknown vertex {e.args[0]!r}") from None
    return CellComplex(name or data.get('name', 'complex'), len(vertices), edges, faces, open_vertices,
                       dict(data.get('meta', {})))


def load_complex(path: Union[str, Path]) -> CellComplex:
    path = Path(path)
    with open(path) as f:
        data = json.load(f)
    return from_dict(data, data.get('name', path.stem))


def dump_complex(complex_: CellComplex, path: Union[str, Path]):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w') as f:
        json.dump(complex_.to_dict(), f, indent=2)


def torus(lx: int, ly: int) -> CellComplex:
    if lx < 2 or ly < 2:
        raise ValidationError(f"torus needs Lx, Ly >= 2, got ({lx}, {ly})")

    def vid(x, y):
        return (x % lx) + lx * (y % ly)

    def h(x, y):
        return (x % lx) + lx * (y % ly)

    def v(x, y):
        return lx * ly + (x % lx) + lx * (y % ly)

    edges = [None] * (2 * lx * ly)
    for y in range(ly):
        for x in range(lx):
            edges[h(x, y)] = (vid(x, y), vid(x + 1, y))
            edges[v(x, y)] = (vid(x, y), vid(x, y + 1))
    faces = [(h(x, y), h(x, y + 1), v(x, y), v(x + 1, y)) for y in range(ly) for x in range(lx)]
    return CellComplex(f'torus({lx},{ly})', lx * ly, edges, faces, frozenset(),
                       {'kind': 'torus', 'Lx': lx, 'Ly': ly})


def planar(lx: int, ly: int, boundary: str = 'smooth') -> CellComplex:
    """Lx x Ly square patch.

    smooth: every boundary vertex carries a star; rough: boundary vertices are
    open and edges along the boundary are removed; mixed: rough on the left and
    right sides, smooth on top and bottom."""
    if lx < 2 or ly < 2:
        raise ValidationError(f"planar patch needs Lx, Ly >= 2, got ({lx}, {ly})")
    if boundary not in ('smooth', 'rough', 'mixed'):
        raise ValidationError(f"unknown boundary type {boundary!r}")

    def vid(x, y):
        return x + (lx + 1) * y

    if boundary == 'smooth':
        open_vertices = set()
    elif boundary == 'rough':
        open_vertices = {vid(x, y) for x in range(lx + 1) for y in range(ly + 1)
                         if x in (0, lx) or y in (0, ly)}
    else:
        open_vertices = {vid(x, y) for x in (0, lx) for y in range(ly + 1)}

    candidates = {}
    for y in range(ly + 1):
        for x in range(lx):
            candidates[('h', x, y)] = (vid(x, y), vid(x + 1, y))
    for y in range(ly):
        for x in range(lx + 1):
            candidates[('v', x, y)] = (vid(x, y), vid(x, y + 1))
    kept = [k for k, (a, b) in candidates.items() if not (a in open_vertices and b in open_vertices)]
    ids = {k: i for i, k in enumerate(kept)}
    edges = [candidates[k] for k in kept]
    faces = []
    for y in range(ly):
        for x in range(lx):
            f = [('h', x, y), ('h', x, y + 1), ('v', x, y), ('v', x + 1, y)]
            faces.append(tuple(ids[k] for k in f if k in ids))
    return CellComplex(f'planar({lx},{ly},{boundary})', (lx + 1) * (ly + 1), edges, faces,
                       frozenset(open_vertices),
                       {'kind': 'planar', 'Lx': lx, 'Ly': ly, 'boundary': boundary, 'genus': 0})


def connected_sum(a: CellComplex, b: CellComplex, face_a: int = 0, face_b: int = 0,
                  name: Optional[str] = None) -> CellComplex:
    """Remove one face from each complex and glue along the two boundary cycles."""
    cyc_a = a.face_cycle(face_a)
    cyc_b = b.face_cycle(face_b)
    if len(cyc_a) != len(cyc_b) or len(set(cyc_a)) != len(cyc_a) or len(set(cyc_b)) != len(cyc_b):
        raise ValidationError("glued faces must be simple cycles of equal length")
    k = len(cyc_a)
    vmap = {cyc_b[i]: cyc_a[(-i) % k] for i in range(k)}
    nxt = a.n_vertices
    for vb in range(b.n_vertices):
        if vb not in vmap:
            vmap[vb] = nxt
            nxt += 1

    def a_edge_between(u, v):
        for e in a.faces[face_a]:
            if set(a.edges[e]) == {u, v}:
                return e
        raise ValidationError(f"no boundary edge between {u} and {v} on the glued face")

    emap = {}
    cycle_edges_b = set(b.faces[face_b])
    edges = list(a.edges)
    for eb, (u, v) in enumerate(b.edges):
        if eb in cycle_edges_b:
            emap[eb] = a_edge_between(vmap[u], vmap[v])
        else:
            emap[eb] = len(edges)
            edges.append((vmap[u], vmap[v]))
    faces = [f for i, f in enumerate(a.faces) if i != face_a]
    faces += [tuple(emap[e] for e in f) for i, f in enumerate(b.faces) if i != face_b]
    open_vertices = set(a.open_vertices) | {vmap[v] for v in b.open_vertices}
    return CellComplex(name or f'{a.name}#{b.name}', nxt, edges, faces, frozenset(open_vertices),
                       {'kind': 'glued'})


def genus_surface(g: int, size: int = 3) -> CellComplex:
    """Closed orientable surface of genus g as a chain of connected sums of tori."""
    if g < 1:
        raise ValidationError(f"genus_surface needs g >= 1, got {g}")
    surface = torus(size, size)
    for _ in range(g - 1):
        surface = connected_sum(surface, torus(size, size), face_a=surface.n_faces - 1, face_b=0)
    return CellComplex(f'genus{g}', surface.n_vertices, surface.edges, surface.faces,
                       surface.open_vertices, {'kind': 'genus', 'g': g, 'size': size})


def build_surface(spec: Union[str, Dict]) -> CellComplex:
    """Surface from a spec: {'kind': torus|planar|genus|file, ...}."""
    if isinstance(spec, str):
        spec = {'kind': 'file', 'path': spec} if spec.endswith('.json') else {'kind': spec}
    kind = spec.get('kind')
    if kind == 'torus':
        return torus(int(spec.get('Lx', 2)), int(spec.get('Ly', spec.get('Lx', 2))))
    if kind == 'planar':
        return planar(int(spec.get('Lx', 3)), int(spec.get('Ly', spec.get('Lx', 3))), spec.get('boundary', 'smooth'))
    if kind == 'genus':
        return genus_surface(int(spec.get('g', 2)), int(spec.get('size', 3)))
    if kind == 'file':
        return load_complex(spec['path'])
    raise ValidationError(f"unknown surface kind {kind!r}")


@dataclass(frozen=True)
class PauliOperator:
    x_bits: np.ndarray
    z_bits: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.x_bits, dtype=np.uint8) & 1
        z = np.asarray(self.z_bits, dtype=np.uint8) & 1
        if x.shape != z.shape or x.ndim != 1:
            raise ValidationError("x and z parts must be equal-length vectors")
        object.__setattr__(self, 'x_bits', x)
        object.__setattr__(self, 'z_bits', z)

    @classmethod
    def on(cls, n: int, letter: str, qubits: Iterable[int]) -> 'PauliOperator':
        x = np.zeros(n, dtype=np.uint8)
        z = np.zeros(n, dtype=np.uint8)
        for q in qubits:
            if letter in ('X', 'Y'):
                x[q] ^= 1
            if letter in ('Z', 'Y'):
                z[q] ^= 1
        return cls(x, z)

    @property
    def support(self) -> FrozenSet[int]:
        return frozenset(np.flatnonzero(self.x_bits | self.z_bits).tolist())

    def symplectic(self, other: 'PauliOperator') -> int:
        return int((np.dot(self.x_bits, other.z_bits) + np.dot(self.z_bits, other.x_bits)) % 2)

    def commutes(self, other: 'PauliOperator') -> bool:
        return self.symplectic(other) == 0


@dataclass(frozen=True)
class StabilizerGroup:
    generators: Tuple[PauliOperator, ...]
    n_qubits: int
    label: str = ''

    def __post_init__(self):
        object.__setattr__(self, 'generators', tuple(self.generators))
        for g in self.generators:
            if g.x_bits.shape[0] != self.n_qubits:
                raise ValidationError(f"generator length {g.x_bits.shape[0]} != {self.n_qubits} qubits")
        if self.generators:
            m = self.gf2_matrix.astype(np.int64)
            x, z = m[:, :self.n_qubits], m[:, self.n_qubits:]
            clash = (x @ z.T + z @ x.T) % 2
            if np.any(clash):
                i, j = np.argwhere(clash)[0]
                raise ValidationError(f"generators {i} and {j} anticommute", {'pair': [int(i), int(j)]})

    @property
    def gf2_matrix(self) -> np.ndarray:
        if not self.generators:
            return np.zeros((0, 2 * self.n_qubits), dtype=np.uint8)
        return np.array([np.concatenate([g.x_bits, g.z_bits]) for g in self.generators], dtype=np.uint8)

    @property
    def is_css(self) -> bool:
        return all(not g.x_bits.any() or not g.z_bits.any() for g in self.generators)

    def x_checks(self) -> np.ndarray:
        return np.array([g.x_bits for g in self.generators if g.x_bits.any()], dtype=np.uint8).reshape(-1, self.n_qubits)

    def z_checks(self) -> np.ndarray:
        return np.array([g.z_bits for g in self.generators if g.z_bits.any()], dtype=np.uint8).reshape(-1, self.n_qubits)


def toric_code_stabilizers(complex_: CellComplex) -> StabilizerGroup:
    """Stars A_v = prod X over edges at v and plaquettes B_p = prod Z over edges of p."""
    n = complex_.n_edges
    gens = [PauliOperator.on(n, 'X', es) for es in complex_.stars()]
    gens += [PauliOperator.on(n, 'Z', f) for f in complex_.faces]
    return StabilizerGroup(tuple(gens), n, f'toric[{complex_.name}]')


def gf2_rref(m: np.ndarray) -> Tuple[np.ndarray, List[int]]:
    a = (np.asarray(m) & 1).astype(np.uint8, copy=True)
    rows, cols = a.shape
    pivots = []
    r = 0
    for c in range(cols):
        if r >= rows:
            break
        hits = np.flatnonzero(a[r:, c])
        if hits.size == 0:
            continue
        p = r + int(hits[0])
        if p != r:
            a[[r, p]] = a[[p, r]]
        ones = np.flatnonzero(a[:, c])
        ones = ones[ones != r]
        if ones.size:
            a[ones] ^= a[r]
        pivots.append(c)
        r += 1
    return a[:r], pivots


def gf2_rank(m: np.ndarray) -> int:
    m = np.asarray(m)
    if m.size == 0:
        return 0
    return len(gf2_rref(m)[1])


def gf2_nullspace(m: np.ndarray) -> np.ndarray:
    """Basis (as rows) of {v : m v = 0 mod 2}."""
    m = np.asarray(m, dtype=np.uint8)
    cols = m.shape[1]
    if m.shape[0] == 0:
        return np.eye(cols, dtype=np.uint8)
    rref, pivots = gf2_rref(m)
    free = [c for c in range(cols) if c not in pivots]
    basis = np.zeros((len(free), cols), dtype=np.uint8)
    for i, f in enumerate(free):
        basis[i, f] = 1
        for r, p in enumerate(pivots):
            basis[i, p] = rref[r, f]
    return basis


def logical_qubits(group: StabilizerGroup) -> int:
    return group.n_qubits - gf2_rank(group.gf2_matrix)


def ground_degeneracy(group: StabilizerGroup, n_qubits: Optional[int] = None) -> int:
    """2^(n - rank) for commuting generators (checked on construction)."""
    n = group.n_qubits if n_qubits is None else n_qubits
    return 2 ** (n - gf2_rank(group.gf2_matrix))


def purify(group: StabilizerGroup) -> StabilizerGroup:
    """Add Z-type logical operators so the group fixes a single state (CSS groups only)."""
    if not group.is_css:
        raise ValidationError("purify needs generators that are pure X or pure Z type")
    n = group.n_qubits
    hz = group.z_checks()
    candidates = gf2_nullspace(group.x_checks()) if len(group.x_checks()) else np.eye(n, dtype=np.uint8)
    rank = gf2_rank(hz) if len(hz) else 0
    chosen = [row for row in hz]
    added = []
    for z in candidates:
        trial = np.array(chosen + [z], dtype=np.uint8)
        r = gf2_rank(trial)
        if r > rank:
            chosen.append(z)
            added.append(PauliOperator(np.zeros(n, dtype=np.uint8), z))
            rank = r
    logger.debug("purify %s: added %d logical Z operators", group.label, len(added))
    return StabilizerGroup(group.generators + tuple(added), n, group.label + '+logicals')


def _check_region(group: StabilizerGroup, region: Iterable[int]) -> List[int]:
    region = sorted(set(int(q) for q in region))
    bad = [q for q in region if not 0 <= q < group.n_qubits]
    if bad:
        raise ValidationError(f"region qubits {bad} outside 0..{group.n_qubits - 1}")
    return region


def stabilizer_entropy(group: StabilizerGroup, region: Iterable[int]) -> float:
    """S(A) = (|A| - dim G_A) ln 2, G_A the subgroup supported inside A.

    On a degenerate code space this is the entropy of the maximally mixed code state."""
    region = _check_region(group, region)
    if not region:
        return 0.0
    n = group.n_qubits
    m = group.gf2_matrix
    outside = [q for q in range(n) if q not in set(region)]
    cols = outside + [n + q for q in outside]
    dim_inside = gf2_rank(m) - gf2_rank(m[:, cols])
    return (len(region) - dim_inside) * LN2


def topological_entropy(group: StabilizerGroup, a: Iterable[int], b: Iterable[int], c: Iterable[int]) -> float:
    """-(S_A + S_B + S_C - S_AB - S_BC - S_AC + S_ABC); ln 2 for the toric code."""
    a, b, c = (set(_check_region(group, r)) for r in (a, b, c))
    if a & b or b & c or a & c:
        raise ValidationError("tripartition regions overlap")
    s = lambda *rs: stabilizer_entropy(group, set().union(*rs))
    kp = s(a) + s(b) + s(c) - s(a, b) - s(b, c) - s(a, c) + s(a, b, c)
    return -kp


def kitaev_preskill_partition(complex_: CellComplex, x0: int = 0, y0: int = 0) -> Tuple[Tuple[int, ...], ...]:
    """Three sectors of the 2x2-plaquette disk with lower-left corner (x0, y0) on a torus.

    The sectors meet at the disk's centre vertex; each owns one or two of its
    four edges plus an arc of the disk boundary."""
    meta = complex_.meta
    if meta.get('kind') != 'torus':
        raise ValidationError("the standard tripartition is defined on tori")
    lx, ly = meta['Lx'], meta['Ly']
    if lx < 4 or ly < 4:
        raise ValidationError("the standard tripartition needs Lx, Ly >= 4")

    def h(x, y):
        return (x0 + x) % lx + lx * ((y0 + y) % ly)

    def v(x, y):
        return lx * ly + (x0 + x) % lx + lx * ((y0 + y) % ly)

    a = (h(0, 1), v(1, 1), v(0, 0), v(0, 1), h(0, 2))
    b = (v(1, 0), h(0, 0), h(1, 0))
    c = (h(1, 1), v(2, 0), v(2, 1), h(1, 2))
    return a, b, c


def product_state_group(n: int) -> StabilizerGroup:
    return StabilizerGroup(tuple(PauliOperator.on(n, 'Z', [q]) for q in range(n)), n, 'product')


def bell_pair_group(pairs: int) -> StabilizerGroup:
    """Qubits (2i, 2i+1) in Bell states."""
    n = 2 * pairs
    gens = []
    for i in range(pairs):
        gens.append(PauliOperator.on(n, 'X', [2 * i, 2 * i + 1]))
        gens.append(PauliOperator.on(n, 'Z', [2 * i, 2 * i + 1]))
    return StabilizerGroup(tuple(gens), n, 'bell-chain')


def surface_row(complex_: CellComplex) -> Dict:
    group = toric_code_stabilizers(complex_)
    rank = gf2_rank(group.gf2_matrix)
    return {
        'surface': complex_.name,
        'V': complex_.star_vertex_count,
        'E': complex_.n_edges,
        'F': complex_.n_faces,
        'genus': complex_.genus,
        'rank': rank,
        'degeneracy': 2 ** (complex_.n_edges - rank),
    }


def phase_signature(complexes: Sequence[CellComplex]) -> Dict[str, int]:
    """Toric-code degeneracy across a set of surfaces."""
    return {c.name: ground_degeneracy(toric_code_stabilizers(c)) for c in complexes}


def logical_operators(complex_: CellComplex) -> Dict:
    """Logical qubit count k = n - rank; on closed surfaces k must equal 2g."""
    group = toric_code_stabilizers(complex_)
    k = logical_qubits(group)
    genus = complex_.genus
    if complex_.closed and k != 2 * genus:
        raise ValidationError(f"{complex_.name}: {k} logical qubits on a genus-{genus} surface")
    return {'surface': complex_.name, 'logical_qubits': k, 'genus': genus, 'closed': complex_.closed}
