import functools
import logging
from dataclasses import dataclass, field
from typing import Dict, Hashable, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from gapflow.errors import GapClosedError, PatchNotIsolatedError, ValidationError
from gapflow.models import Model, SymmetryAction, assemble_derivative, assemble_hamiltonian
from gapflow.parallel import parallel_map
from gapflow.spectral import GroundData, ground_data, patch_from_energies
from gapflow.spin_core import (
    EigenSystem,
    LatticeGeometry,
    commutator,
    conditional_expectation,
    hermitian_eigensystem,
    hermitian_eigenvalues,
    spectral_norm,
    unitary_exp,
)

logger = logging.getLogger(__name__)

MIN_GRID_RATIO = 16
DEFAULT_T_GAMMA = 200.0
DEFAULT_DT = 0.05
GAMMA_FRACTION = 0.9
QUAD_NODES = 4096
FILTER_CHUNK = 1024
FILTER_CACHE_SIZE = 8


def bump(omega, gamma: float):
    """w-hat(omega) = exp(1 - 1/(1 - (omega/gamma)^2)) inside (-gamma, gamma), 0 outside."""
    x = np.asarray(omega, dtype=float) / gamma
    inside = np.abs(x) < 1
    out = np.zeros_like(x)
    xi = x[inside]
    out[inside] = np.exp(-xi ** 2 / (1.0 - xi ** 2))
    return out


def transfer(omega, gamma: float):
    """W(omega) = (w-hat(omega) - 1)/(i omega), W(0) = 0; odd and purely imaginary."""
    w = np.asarray(omega, dtype=float)
    x = w / gamma
    num = np.full_like(w, -1.0)
    inside = np.abs(x) < 1
    xi = x[inside]
    num[inside] = np.expm1(-xi ** 2 / (1.0 - xi ** 2))
    out = np.zeros(w.shape, dtype=complex)
    nz = w != 0
    out[nz] = num[nz] / (1j * w[nz])
    return out


@dataclass(frozen=True)
class FilterFunction:
    gamma: float
    T: float
    dt: float
    times: np.ndarray = field(repr=False)
    w_samples: np.ndarray = field(repr=False)

    def what(self, omega):
        return bump(omega, self.gamma)

    def transfer(self, omega):
        return transfer(omega, self.gamma)

    @property
    def trapezoid_weights(self) -> np.ndarray:
        c = np.full(self.times.shape, self.dt)
        c[0] = c[-1] = 0.5 * self.dt
        return c

    def mass(self) -> float:
        """Trapezoid estimate of the integral of w over [-T, T]; 1 up to truncation."""
        return float(np.sum(self.trapezoid_weights * self.w_samples))


@functools.lru_cache(maxsize=FILTER_CACHE_SIZE)
def _tabulated_filter(gamma: float, n_half: int, dt: float, nodes: int) -> Tuple[np.ndarray, np.ndarray]:
    times = dt * np.arange(-n_half, n_half + 1)
    x, wts = np.polynomial.legendre.leggauss(nodes)
    omega = 0.5 * gamma * (x + 1.0)
    weights = 0.5 * gamma * wts * bump(omega, gamma) / np.pi
    t_half = times[n_half:]
    w_half = np.empty(t_half.shape)
    for start in range(0, len(t_half), FILTER_CHUNK):
        stop = start + FILTER_CHUNK
        w_half[start:stop] = np.cos(np.outer(t_half[start:stop], omega)) @ weights
    w_samples = np.concatenate([w_half[:0:-1], w_half])
    # shared between callers
    times.setflags(write=False)
    w_samples.setflags(write=False)
    return times, w_samples


def make_filter(gamma: float, T: Optional[float] = None, dt: float = DEFAULT_DT,
                nodes: int = QUAD_NODES, tabulate: bool = True) -> FilterFunction:
    """Tabulate w(t) = (1/pi) int_0^gamma w-hat(omega) cos(omega t) d omega on [-T, T].

    T defaults to 200/gamma. With tabulate=False only the frequency side is usable.
    Tables are cached per (gamma, grid, nodes)."""
    if T is None:
        T = DEFAULT_T_GAMMA / gamma if gamma > 0 else 0.0
    if not (gamma > 0 and T > 0 and dt > 0):
        raise ValidationError(f"filter needs gamma, T, dt > 0 (got {gamma}, {T}, {dt})")
    if T / dt < MIN_GRID_RATIO:
        raise ValidationError(f"degenerate time grid: T/dt = {T / dt:.3g} < {MIN_GRID_RATIO}",
                              {'T': T, 'dt': dt})
    n_half = int(round(T / dt))
    if not tabulate:
        return FilterFunction(float(gamma), float(n_half * dt), float(dt), np.empty(0), np.empty(0))
    times, w_samples = _tabulated_filter(float(gamma), n_half, float(dt), int(nodes))
    return FilterFunction(float(gamma), float(n_half * dt), float(dt), times, w_samples)


@dataclass(frozen=True)
class FlowGenerator:
    lam: float
    d_matrix: np.ndarray = field(repr=False)
    construction: str
    gamma: float
    T: Optional[float] = None
    dt: Optional[float] = None


@dataclass(frozen=True)
class FlowUnitary:
    lambda0: float
    lambda1: float
    v_matrix: np.ndarray = field(repr=False)
    steps: int
    gamma: float
    m: int
    min_patch_gap: float
    integrator: str = 'midpoint-exponential'

    def unitarity_residual(self) -> float:
        v = self.v_matrix
        return spectral_norm(v.conj().T @ v - np.eye(v.shape[0]))


@dataclass(frozen=True)
class LocalityProfile:
    center: Hashable
    radii: Tuple[int, ...]
    deltas: Tuple[float, ...]
    decay_rate: float


@dataclass(frozen=True)
class InteractionDecomposition:
    center: Hashable
    radii: Tuple[int, ...]
    terms: Tuple[np.ndarray, ...] = field(repr=False)
    norms: Tuple[float, ...] = ()
    reconstruction_residual: float = 0.0


def _in_eigenbasis(eig: EigenSystem, hprime: np.ndarray) -> np.ndarray:
    if not eig.complete:
        raise ValidationError("flow generator needs the complete eigensystem")
    if hprime.shape != (eig.dim, eig.dim):
        raise ValidationError(f"H' shape {hprime.shape} does not match dimension {eig.dim}")
    return eig.vectors.conj().T @ hprime @ eig.vectors


def _from_eigenbasis(eig: EigenSystem, m: np.ndarray) -> np.ndarray:
    d = eig.vectors @ m @ eig.vectors.conj().T
    return 0.5 * (d + d.conj().T)


def generator_frequency(eig: EigenSystem, hprime: np.ndarray, filt: FilterFunction,
                        lam: float = float('nan')) -> FlowGenerator:
    """D_jk = W(E_j - E_k) H'_jk in the eigenbasis of H."""
    hp = _in_eigenbasis(eig, np.asarray(hprime))
    omega = eig.energies[:, None] - eig.energies[None, :]
    d = _from_eigenbasis(eig, filt.transfer(omega) * hp)
    return FlowGenerator(lam, d, 'frequency', filt.gamma)


def time_kernel(omega: np.ndarray, filt: FilterFunction) -> np.ndarray:
    """Trapezoid quadrature of int dt w(t) int_0^t du e^{i omega u}."""
    omega = np.asarray(omega, dtype=float)
    out = np.zeros(omega.shape, dtype=complex)
    nz = omega != 0
    inv = np.zeros(omega.shape, dtype=complex)
    inv[nz] = 1.0 / (1j * omega[nz])
    for c, w, t in zip(filt.trapezoid_weights, filt.w_samples, filt.times):
        if t == 0:
            continue
        inner = np.where(nz, np.expm1(1j * omega * t) * inv, t)
        out += (c * w) * inner
    return out


def generator_time(eig: EigenSystem, hprime: np.ndarray, filt: FilterFunction,
                   lam: float = float('nan')) -> FlowGenerator:
    hp = _in_eigenbasis(eig, np.asarray(hprime))
    omega = eig.energies[:, None] - eig.energies[None, :]
    band = float(np.max(np.abs(omega))) + filt.gamma
    if 2 * np.pi / filt.dt <= band:
        logger.warning("time step %.3g aliases frequencies up to %.3g", filt.dt, band)
    d = _from_eigenbasis(eig, time_kernel(omega, filt) * hp)
    return FlowGenerator(lam, d, 'time', filt.gamma, filt.T, filt.dt)


def relative_disagreement(a: FlowGenerator, b: FlowGenerator) -> float:
    scale = np.linalg.norm(a.d_matrix)
    diff = np.linalg.norm(a.d_matrix - b.d_matrix)
    return float(diff / scale) if scale > 0 else float(diff)


def _spectrum(model: Model, lam: float) -> EigenSystem:
    return hermitian_eigensystem(assemble_hamiltonian(model, lam))


def _patch_size(model: Model, lam: float, m: Optional[int], delta: Optional[float]) -> int:
    if m is not None:
        return m
    eig = _spectrum(model, lam)
    return ground_data(eig, None, delta).m


def path_patch_gaps(model: Model, lams: Sequence[float], m: int,
                    workers: Optional[int] = None) -> List[float]:
    """Patch gap of the lowest m levels at each lam; GapClosedError where the patch dissolves."""
    def gap_at(lam):
        h = assemble_hamiltonian(model, lam)
        energies = hermitian_eigenvalues(h, min(h.shape[0], m + 1))
        try:
            return patch_from_energies(energies, m)[2]
        except PatchNotIsolatedError:
            gap = float(energies[m] - energies[m - 1]) if m < len(energies) else float('inf')
            raise GapClosedError(float(lam), gap, float('nan'),
                                 f"lowest {m} levels no longer isolated, patch gap {gap:.3e}") from None
    return parallel_map(gap_at, list(lams), workers, desc='patch-gaps', progress=False)


def choose_gamma(model: Model, lams: Sequence[float], m: int, gamma: Optional[float] = None,
                 fraction: float = GAMMA_FRACTION, min_gap: float = 0.0,
                 workers: Optional[int] = None) -> Tuple[float, float]:
    """(gamma, min patch gap); an explicit gamma is checked against every sampled point."""
    gaps = path_patch_gaps(model, lams, m, workers)
    i = int(np.argmin(gaps))
    min_gap_seen = float(gaps[i])
    if gamma is None:
        if min_gap_seen <= min_gap:
            raise GapClosedError(float(lams[i]), min_gap_seen, min_gap)
        gamma = fraction * min_gap_seen
    elif min_gap_seen < gamma:
        raise GapClosedError(float(lams[i]), min_gap_seen, gamma)
    return float(gamma), min_gap_seen


def generator_at(model: Model, lam: float, filt: FilterFunction, construction: str = 'frequency') -> FlowGenerator:
    eig = _spectrum(model, lam)
    hprime = assemble_derivative(model, lam)
    if construction == 'frequency':
        return generator_frequency(eig, hprime, filt, lam)
    if construction == 'time':
        return generator_time(eig, hprime, filt, lam)
    raise ValidationError(f"unknown generator construction {construction!r}")


def integrate_flow(model: Model, lambda0: float, lambda1: float, steps: int,
                   gamma: Optional[float] = None, m: Optional[int] = None, delta: Optional[float] = None,
                   construction: str = 'frequency', T: Optional[float] = None, dt: float = DEFAULT_DT,
                   min_gap: float = 0.0, workers: Optional[int] = None) -> FlowUnitary:
    """V_{k+1} = exp(i h D(lam_k + h/2)) V_k from V(lambda0) = I."""
    if steps < 1:
        raise ValidationError(f"steps must be >= 1, got {steps}")
    model.check_lambda(lambda0)
    model.check_lambda(lambda1)
    m = _patch_size(model, lambda0, m, delta)
    dim = model.geometry.dim
    if lambda1 == lambda0:
        return FlowUnitary(lambda0, lambda1, np.eye(dim, dtype=complex), 0,
                           float(gamma) if gamma is not None else float('nan'), m, float('nan'))

    h = (lambda1 - lambda0) / steps
    mids = [lambda0 + (k + 0.5) * h for k in range(steps)]
    samples = [lambda0] + mids + [lambda1]
    gamma, min_seen = choose_gamma(model, samples, m, gamma, min_gap=min_gap, workers=workers)
    filt = make_filter(gamma, T, dt, tabulate=(construction == 'time'))
    logger.info("flow %s [%g, %g]: %d steps, m=%d, gamma=%.4g (min patch gap %.4g)",
                model.name, lambda0, lambda1, steps, m, gamma, min_seen)

    generators = parallel_map(lambda lam: generator_at(model, lam, filt, construction).d_matrix,
                              mids, workers, desc='flow-generators', progress=False)
    v = np.eye(dim, dtype=complex)
    for d in generators:
        v = unitary_exp(d, h) @ v
    return FlowUnitary(float(lambda0), float(lambda1), v, steps, gamma, m, min_seen)


def transport_check(flow: FlowUnitary, p0: GroundData, p1: GroundData) -> float:
    """||V P(lambda0) V^dagger - P(lambda1)||."""
    v = flow.v_matrix
    if p0.projector.shape != v.shape or p1.projector.shape != v.shape:
        raise ValidationError("projector and flow dimensions differ")
    return spectral_norm(v @ p0.projector @ v.conj().T - p1.projector)


def endpoint_ground_data(model: Model, flow: FlowUnitary) -> Tuple[GroundData, GroundData]:
    return (ground_data(_spectrum(model, flow.lambda0), flow.m),
            ground_data(_spectrum(model, flow.lambda1), flow.m))


def derivative_identity_check(model: Model, lam: float, gamma: Optional[float] = None, h: float = 1e-3,
                              m: Optional[int] = None, delta: Optional[float] = None) -> float:
    """||(P(lam+h) - P(lam-h))/2h - i[D(lam), P(lam)]||."""
    m = _patch_size(model, lam, m, delta)
    lams = [lam - h, lam, lam + h]
    try:
        gamma, _ = choose_gamma(model, lams, m, gamma)
    except GapClosedError as e:
        raise PatchNotIsolatedError(f"patch not isolated near lambda={lam}: {e.message}",
                                    [e.details.get('patch_gap', float('nan'))]) from None
    eig = _spectrum(model, lam)
    p = ground_data(eig, m).projector
    p_minus = ground_data(_spectrum(model, lam - h), m).projector
    p_plus = ground_data(_spectrum(model, lam + h), m).projector
    filt = make_filter(gamma, tabulate=False)
    d = generator_frequency(eig, assemble_derivative(model, lam), filt, lam).d_matrix
    lhs = (p_plus - p_minus) / (2 * h)
    return spectral_norm(lhs - 1j * commutator(d, p))


def apply_automorphism(flow: FlowUnitary, a: np.ndarray) -> np.ndarray:
    """alpha(a) = V^dagger a V."""
    v = flow.v_matrix
    a = np.asarray(a)
    if a.shape != v.shape:
        raise ValidationError(f"operator shape {a.shape} does not match flow dimension {v.shape}")
    return v.conj().T @ a @ v


def _decay_rate(radii: Sequence[int], values: Sequence[float], floor: float = 1e-13) -> float:
    pts = [(r, np.log(x)) for r, x in zip(radii[:-1], values[:-1]) if x > floor]
    if len(pts) < 2:
        return float('nan')
    r, y = np.array(pts).T
    slope, _ = np.polyfit(r, y, 1)
    return float(-slope)


def locality_profile(alpha_a: np.ndarray, center: Hashable, geometry: LatticeGeometry,
                     radii: Optional[Iterable[int]] = None, workers: Optional[int] = None) -> LocalityProfile:
    """delta_r = ||alpha(A) - E_{B_r}(alpha(A))|| for balls around center."""
    r_max = geometry.radius_from(center)
    radii = tuple(range(r_max + 1)) if radii is None else tuple(radii)

    def delta(r):
        return spectral_norm(alpha_a - conditional_expectation(alpha_a, geometry.ball(center, r), geometry))

    deltas = tuple(parallel_map(delta, radii, workers, desc='locality', progress=False))
    return LocalityProfile(center, radii, deltas, _decay_rate(radii, deltas))


def decompose_generator(gen: FlowGenerator, center: Hashable, geometry: LatticeGeometry) -> InteractionDecomposition:
    """Psi(Z_0) = E_{B_0}(D), Psi(Z_r) = E_{B_r}(D) - E_{B_{r-1}}(D) up to the whole lattice."""
    d = gen.d_matrix
    radii = tuple(range(geometry.radius_from(center) + 1))
    terms = []
    previous = np.zeros_like(d)
    for r in radii:
        current = conditional_expectation(d, geometry.ball(center, r), geometry)
        terms.append(current - previous)
        previous = current
    norms = tuple(spectral_norm(t) for t in terms)
    residual = spectral_norm(sum(terms) - d)
    return InteractionDecomposition(center, radii, tuple(terms), norms, residual)


def symmetry_commutation(mat: np.ndarray, action: SymmetryAction, geometry: LatticeGeometry) -> float:
    u = action.global_unitary(geometry)
    if u.shape != np.shape(mat):
        raise ValidationError("symmetry and operator dimensions differ")
    return spectral_norm(commutator(u, np.asarray(mat)))


def cocycle_check(model: Model, lambda0: float, lambda1: float, lambda2: float, steps01: int, steps12: int,
                  gamma: Optional[float] = None, m: Optional[int] = None, delta: Optional[float] = None,
                  workers: Optional[int] = None) -> float:
    """||V(l2<-l0) - V(l2<-l1) V(l1<-l0)|| on aligned step grids."""
    m = _patch_size(model, lambda0, m, delta)
    if gamma is None:
        h = (lambda2 - lambda0) / (steps01 + steps12)
        grid = [lambda0 + (k + 0.5) * h for k in range(steps01 + steps12)] + [lambda0, lambda2]
        gamma, _ = choose_gamma(model, grid, m, workers=workers)
    v01 = integrate_flow(model, lambda0, lambda1, steps01, gamma, m, workers=workers)
    v12 = integrate_flow(model, lambda1, lambda2, steps12, gamma, m, workers=workers)
    v02 = integrate_flow(model, lambda0, lambda2, steps01 + steps12, gamma, m, workers=workers)
    return spectral_norm(v02.v_matrix - v12.v_matrix @ v01.v_matrix)


def flow_run(model: Model, lambda0: float, lambda1: float, steps: int, gamma: Optional[float] = None,
             m: Optional[int] = None, delta: Optional[float] = None, min_gap: float = 0.0,
             cocycle: bool = True, workers: Optional[int] = None) -> Dict:
    """Transport, unitarity and (for even step counts) cocycle residuals of one flow."""
    flow = integrate_flow(model, lambda0, lambda1, steps, gamma, m, delta, min_gap=min_gap, workers=workers)
    p0, p1 = endpoint_ground_data(model, flow)
    record = {
        'lambda0': lambda0,
        'lambda1': lambda1,
        'steps': steps,
        'gamma': flow.gamma,
        'm': flow.m,
        'min_patch_gap': flow.min_patch_gap,
        'transport_residual': transport_check(flow, p0, p1),
        'unitarity_residual': flow.unitarity_residual(),
        'cocycle_residual': float('nan'),
    }
    if cocycle and steps % 2 == 0 and steps >= 2:
        mid = 0.5 * (lambda0 + lambda1)
        record['cocycle_residual'] = cocycle_check(model, lambda0, mid, lambda1, steps // 2, steps // 2,
                                                   flow.gamma, flow.m, workers=workers)
    return record


def step_refinement_study(model: Model, lambda0: float, lambda1: float, steps_list: Iterable[int],
                          gamma: Optional[float] = None, m: Optional[int] = None,
                          delta: Optional[float] = None) -> List[Tuple[int, float]]:
    """Transport residual against step count at a fixed gamma."""
    out = []
    for steps in steps_list:
        flow = integrate_flow(model, lambda0, lambda1, steps, gamma, m, delta)
        gamma, m = flow.gamma, flow.m
        out.append((steps, transport_check(flow, *endpoint_ground_data(model, flow))))
    return out


def quadrature_study(eig: EigenSystem, hprime: np.ndarray, gamma: float,
                     levels: Iterable[Tuple[float, float]]) -> List[Tuple[float, float, float]]:
    """(T, dt, relative disagreement of time vs frequency construction) per level."""
    reference = generator_frequency(eig, hprime, make_filter(gamma, tabulate=False))
    out = []
    for T, dt in levels:
        gen = generator_time(eig, hprime, make_filter(gamma, T, dt))
        out.append((float(T), float(dt), relative_disagreement(reference, gen)))
    return out
