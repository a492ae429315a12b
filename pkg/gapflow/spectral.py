import logging
from dataclasses import asdict, dataclass, field
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
import scipy.linalg as linalg
from scipy.special import xlogy

from gapflow.errors import GapflowError, PatchNotIsolatedError, ValidationError
from gapflow.models import Model, assemble_hamiltonian
from gapflow.parallel import parallel_map
from gapflow.spin_core import (
    EigenSystem,
    LatticeGeometry,
    LocalOperator,
    embed,
    hermitian_eigensystem,
    hermitian_eigenvalues,
    reduced_density,
    spectral_norm,
)

logger = logging.getLogger(__name__)

DEFAULT_DELTA_RTOL = 1e-8
STATE_TOL = 1e-10
SCAN_LEVELS = 8
BULK_RATIO = 0.25

GAP_SCAN_COLUMNS = ['model', 'N', 'lambda', 'e0', 'gap', 'm', 'split', 'patch_gap', 'bulk_m', 'bulk_gap',
                    'oracle_gap', 'status']


@dataclass(frozen=True)
class GroundData:
    e0: float
    projector: np.ndarray = field(repr=False)
    m: int
    patch_gap: float
    split: float
    vectors: np.ndarray = field(repr=False)
    spectrum_head: Tuple[float, ...] = ()


@dataclass(frozen=True)
class GapScanRow:
    model: str
    N: int
    lam: float
    e0: float
    gap: float
    m: int
    split: float
    patch_gap: float
    oracle_gap: float = float('nan')
    bulk_m: int = 0
    bulk_gap: float = float('nan')
    status: str = 'ok'


def default_delta(norm: float) -> float:
    return DEFAULT_DELTA_RTOL * max(norm, 1.0)


def patch_from_energies(energies: Sequence[float], m: Optional[int] = None,
                        delta: Optional[float] = None, norm: Optional[float] = None) -> Tuple[int, float, float]:
    """(m, split, patch_gap) of the lowest cluster.

    Raises PatchNotIsolatedError when the cluster cannot be separated from the
    rest of the computed spectrum."""
    energies = np.asarray(energies, dtype=float)
    if energies.size == 0:
        raise ValidationError("empty spectrum")
    head = energies[:min(len(energies), SCAN_LEVELS)]
    if m is None:
        if delta is None:
            delta = default_delta(norm if norm is not None else float(np.max(np.abs(energies))))
        m = int(np.sum(energies - energies[0] <= delta))
        if m == len(energies):
            raise PatchNotIsolatedError(
                f"no level above the ground cluster within the {len(energies)} computed (delta={delta:.3e})", head)
    if not 1 <= m <= len(energies):
        raise ValidationError(f"patch size m={m} outside 1..{len(energies)}")
    split = float(energies[m - 1] - energies[0])
    patch_gap = float(energies[m] - energies[m - 1]) if m < len(energies) else float('inf')
    if not patch_gap > split:
        raise PatchNotIsolatedError(
            f"patch not isolated: m={m}, split {split:.3e} >= patch gap {patch_gap:.3e}", head)
    return m, split, patch_gap


def bulk_patch(energies: Sequence[float], delta: Optional[float] = None,
               ratio: float = BULK_RATIO) -> Tuple[int, float]:
    """(m, gap above) of the low-lying cluster, absorbing near-degenerate levels.

    Level k joins the cluster while E_k - E0 <= delta or E_k - E0 <= ratio * (E_{k+1} - E_k).
    A finite symmetry-broken doublet, split by an exponentially small amount, is then
    one patch and the gap is measured above it."""
    e = np.asarray(energies, dtype=float)
    if e.size < 2:
        return int(e.size), float('nan')
    if delta is None:
        delta = default_delta(float(np.max(np.abs(e))))
    for k in range(1, len(e) - 1):
        lift = e[k] - e[0]
        if lift > delta and lift > ratio * (e[k + 1] - e[k]):
            return k, float(e[k] - e[k - 1])
    k = len(e) - 1
    if e[k] - e[0] <= delta:
        return len(e), float('nan')
    return k, float(e[k] - e[k - 1])


def ground_data(eig: EigenSystem, m: Optional[int] = None, delta: Optional[float] = None) -> GroundData:
    if len(eig.energies) == 0:
        raise ValidationError("empty spectrum")
    if m is not None and not eig.complete and m >= len(eig.energies):
        raise ValidationError(f"m={m} needs more than the {len(eig.energies)} computed levels")
    m, split, patch_gap = patch_from_energies(eig.energies, m, delta, eig.norm)
    vecs = eig.vectors[:, :m]
    projector = vecs @ vecs.conj().T
    head = tuple(float(e) for e in eig.energies[:SCAN_LEVELS])
    return GroundData(float(eig.energies[0]), projector, m, patch_gap, split, vecs, head)


def ground_data_for(model: Model, lam: float, m: Optional[int] = None, delta: Optional[float] = None,
                    levels: Optional[int] = None) -> GroundData:
    """Ground data of model at lam, diagonalizing only the low end when `levels` is given."""
    h = assemble_hamiltonian(model, lam)
    eig = hermitian_eigensystem(h, count=levels)
    return ground_data(eig, m, delta)


def free_fermion_spectrum(n: int, lam: float, coupling: float = 1.0) -> np.ndarray:
    """Quasiparticle energies of the open TFIM chain via Jordan-Wigner, ascending.

    E1 - E0 is the smallest entry and E2 - E0 the second smallest."""
    mat = np.diag(np.full(n, float(lam)))
    if n > 1:
        mat += np.diag(np.full(n - 1, float(coupling)), k=1)
    return np.sort(2.0 * linalg.svdvals(mat))


def _oracle_gap(model: Model, lam: float) -> float:
    if model.name == 'tfim' and model.params.get('bc') == 'open':
        return float(free_fermion_spectrum(model.n_sites, lam)[0])
    return float('nan')


def scan_point(model: Model, lam: float, m: Optional[int] = None, delta: Optional[float] = None) -> GapScanRow:
    """One gap-scan row; a failure at this point is recorded in `status` instead of raised."""
    n = model.n_sites
    nan = float('nan')
    energies = np.empty(0)
    oracle = nan
    try:
        oracle = _oracle_gap(model, lam)
        h = assemble_hamiltonian(model, lam)
        dim = h.shape[0]
        count = min(dim, max(SCAN_LEVELS, (m or 0) + 2))
        norm = float(np.max(np.sum(np.abs(h), axis=1)))
        if delta is None:
            delta = default_delta(norm)
        elif not delta >= 0:
            raise ValidationError(f"cluster tolerance delta={delta} must be >= 0")
        energies = hermitian_eigenvalues(h, count)
        bulk_m, bulk_gap = bulk_patch(energies, delta)
        try:
            mm, split, patch_gap = patch_from_energies(energies, m, delta, norm)
        except PatchNotIsolatedError:
            if count == dim:
                raise
            energies = hermitian_eigenvalues(h)
            mm, split, patch_gap = patch_from_energies(energies, m, delta, norm)
    except GapflowError as e:
        logger.info("%s N=%d lambda=%.6g: %s", model.name, n, lam, e.message)
        e0 = float(energies[0]) if energies.size else nan
        gap = float(energies[1] - energies[0]) if energies.size > 1 else nan
        return GapScanRow(model.name, n, lam, e0, gap, 0, nan, nan, oracle, status=f"{e.kind}: {e.message}")
    gap = float(energies[1] - energies[0]) if len(energies) > 1 else float('inf')
    return GapScanRow(model.name, n, lam, float(energies[0]), gap, mm, split, patch_gap, oracle,
                      bulk_m, bulk_gap)


def gap_scan(build: Callable[[int], Model], sizes: Iterable[int], lams: Iterable[float],
             m: Optional[int] = None, delta: Optional[float] = None,
             workers: Optional[int] = None, progress: bool = True) -> List[GapScanRow]:
    """One row per (N, lambda), ordered by N then lambda."""
    models = {n: build(n) for n in sizes}
    grid = [(n, float(lam)) for n in models for lam in lams]
    logger.info("gap scan over %d sizes x %d lambda points", len(models), len(grid) // max(len(models), 1))
    return parallel_map(lambda p: scan_point(models[p[0]], p[1], m, delta), grid, workers,
                        desc='gap-scan', progress=progress)


def rows_frame(rows: Sequence[GapScanRow]) -> pd.DataFrame:
    df = pd.DataFrame([asdict(r) for r in rows]).rename(columns={'lam': 'lambda'})
    return df.reindex(columns=GAP_SCAN_COLUMNS)


def locate_critical_point(rows: Sequence[GapScanRow]) -> Dict[int, float]:
    """Per size, lambda of the minimum of the gap above the low-lying cluster (`bulk_gap`).

    The minimum is refined by a parabola through its neighbours when all three share
    the same cluster size."""
    df = rows_frame(rows)
    df = df[(df['status'] == 'ok') & df['bulk_gap'].notna()]
    out = {}
    for n, group in df.groupby('N'):
        group = group.sort_values('lambda').reset_index(drop=True)
        i = int(group['bulk_gap'].idxmin())
        lam_min = float(group.loc[i, 'lambda'])
        if 0 < i < len(group) - 1 and group.loc[i - 1:i + 1, 'bulk_m'].nunique() == 1:
            x = group.loc[i - 1:i + 1, 'lambda'].to_numpy()
            y = group.loc[i - 1:i + 1, 'bulk_gap'].to_numpy()
            a, b, _ = np.polyfit(x, y, 2)
            if a > 0:
                lam_min = float(np.clip(-b / (2 * a), x[0], x[-1]))
        out[int(n)] = lam_min
    return out


def degeneracy_splitting(build: Callable[[int], Model], lam: float, sizes: Iterable[int],
                         workers: Optional[int] = None) -> List[Tuple[int, float, float]]:
    """(N, E1 - E0, E2 - E0) per size."""
    def point(n):
        model = build(n)
        if model.geometry.dim < 3:
            raise ValidationError(f"splitting needs three levels; {model.name} N={n} has dimension "
                                  f"{model.geometry.dim}", {'N': n})
        e = hermitian_eigenvalues(assemble_hamiltonian(model, lam), 3)
        return (n, float(e[1] - e[0]), float(e[2] - e[0]))
    return parallel_map(point, list(sizes), workers, desc='splitting')


def entanglement_entropy(rho: np.ndarray) -> float:
    """Von Neumann entropy in nats."""
    rho = np.asarray(rho)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        raise ValidationError(f"density matrix must be square, got {rho.shape}")
    if np.linalg.norm(rho - rho.conj().T) > STATE_TOL * max(1.0, np.linalg.norm(rho)):
        raise ValidationError("density matrix is not Hermitian")
    tr = float(np.real(np.trace(rho)))
    if abs(tr - 1.0) > STATE_TOL:
        raise ValidationError(f"density matrix trace {tr:.12g} != 1")
    p = linalg.eigh(rho, eigvals_only=True)
    if p[0] < -STATE_TOL:
        raise ValidationError(f"density matrix has negative eigenvalue {p[0]:.3e}")
    p = np.clip(p, 0.0, None)
    return float(-np.sum(xlogy(p, p)))


def _block_entropy(psi: np.ndarray, block: Sequence, geometry: LatticeGeometry) -> float:
    rho = reduced_density(psi, block, geometry)
    return entanglement_entropy(rho / np.real(np.trace(rho)))


def area_law_scan(model: Model, lam: float, ells: Optional[Iterable[int]] = None,
                  state: Optional[np.ndarray] = None, m: Optional[int] = None,
                  delta: Optional[float] = None) -> List[Tuple[int, float]]:
    """Entropy of left blocks of length ell of the ground state."""
    geometry = model.geometry
    n = geometry.n_sites
    ells = list(range(1, n // 2 + 1)) if ells is None else list(ells)
    if state is None:
        gd = ground_data_for(model, lam, m, delta, levels=min(geometry.dim, SCAN_LEVELS))
        if gd.m != 1:
            raise ValidationError(
                f"ground state is {gd.m}-fold degenerate at lambda={lam}; pass an explicit state",
                {'m': gd.m})
        state = gd.vectors[:, 0]
    state = np.asarray(state).reshape(-1)
    state = state / np.linalg.norm(state)
    out = []
    for ell in ells:
        if not 0 <= ell <= n:
            raise ValidationError(f"block length {ell} outside 0..{n}")
        out.append((ell, _block_entropy(state, geometry.sites[:ell], geometry)))
    return out


def entropy_profile(state: np.ndarray, geometry: LatticeGeometry) -> List[Tuple[int, float]]:
    """Entropy of every left/right cut of a pure state."""
    state = np.asarray(state).reshape(-1)
    state = state / np.linalg.norm(state)
    return [(ell, _block_entropy(state, geometry.sites[:ell], geometry)) for ell in range(geometry.n_sites + 1)]


def local_order_test(projector: np.ndarray, op: LocalOperator, geometry: LatticeGeometry) -> float:
    """||PAP - (Tr PAP / Tr P) P||; zero when A acts as a scalar on the ground space."""
    a = embed(op, geometry)
    pap = projector @ a @ projector
    tr_p = float(np.real(np.trace(projector)))
    if tr_p <= 0.5:
        raise ValidationError("projector has zero rank")
    return spectral_norm(pap - (np.trace(pap) / tr_p) * projector)
