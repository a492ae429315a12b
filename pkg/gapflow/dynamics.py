import logging
from dataclasses import dataclass
from typing import Iterable, List, Optional, Sequence

import numpy as np
import scipy.linalg as linalg

from gapflow.errors import FitError, ValidationError
from gapflow.models import Model, assemble_hamiltonian
from gapflow.parallel import parallel_map
from gapflow.spin_core import (
    EigenSystem,
    LocalOperator,
    commutator,
    embed,
    hermitian_eigensystem,
    spectral_norm,
)

logger = logging.getLogger(__name__)

USABLE_FLOOR = 1e-12
DEFAULT_EPS_FRACTION = 1e-3


@dataclass(frozen=True)
class LRSample:
    d: int
    t: float
    c: float


@dataclass(frozen=True)
class LRFit:
    v: float
    mu: float
    c0: float
    residual: float
    epsilon: float
    arrival_velocity: float
    n_samples: int
    ok: bool

    def to_record(self) -> dict:
        return {
            'v': self.v, 'mu': self.mu, 'c0': self.c0, 'residual': self.residual,
            'epsilon': self.epsilon, 'arrival_velocity': self.arrival_velocity,
            'n_samples': self.n_samples, 'ok': self.ok,
        }


def heisenberg_evolve(eig: EigenSystem, b: np.ndarray, t: float) -> np.ndarray:
    """tau_t(b) = e^{iHt} b e^{-iHt}, evaluated in the eigenbasis of H."""
    if not eig.complete:
        raise ValidationError("Heisenberg evolution needs the complete eigensystem")
    b = np.asarray(b)
    if b.shape != (eig.dim, eig.dim):
        raise ValidationError(f"operator shape {b.shape} does not match Hamiltonian dimension {eig.dim}")
    if t == 0:
        return b.copy()
    vecs = eig.vectors
    phase = np.exp(1j * t * eig.energies)
    b_eig = vecs.conj().T @ b @ vecs
    return vecs @ (phase[:, None] * b_eig * phase.conj()[None, :]) @ vecs.conj().T


def _shifted(op: LocalOperator, shift: int, geometry) -> LocalOperator:
    return LocalOperator(tuple(geometry.translate(s, shift) for s in op.support), op.matrix)


def lr_commutator_scan(model: Model, lam: float, a: LocalOperator, b_template: LocalOperator,
                       distances: Iterable[int], times: Iterable[float],
                       workers: Optional[int] = None, progress: bool = True) -> List[LRSample]:
    """||[A, tau_t(B_d)]|| over the (d, t) grid; B_d is b_template translated by d sites."""
    geometry = model.geometry
    eig = hermitian_eigensystem(assemble_hamiltonian(model, lam))
    a_full = embed(a, geometry)
    times = [float(t) for t in times]

    placed = []
    for d in distances:
        try:
            b = _shifted(b_template, int(d), geometry)
        except ValidationError as e:
            logger.warning("distance %s rejected: %s", d, e.message)
            continue
        if set(b.support) & set(a.support):
            logger.warning("distance %s rejected: supports %s and %s overlap", d, a.support, b.support)
            continue
        placed.append((geometry.set_distance(a.support, b.support), embed(b, geometry)))
    if not placed:
        raise ValidationError("no requested distance gives disjoint supports")

    def sample(job):
        (d, b_full), t = job
        return LRSample(d, t, spectral_norm(commutator(a_full, heisenberg_evolve(eig, b_full, t))))

    jobs = [(p, t) for p in placed for t in times]
    logger.info("LR scan %s lambda=%.4g: %d distances x %d times", model.name, lam, len(placed), len(times))
    return parallel_map(sample, jobs, workers, desc='lr-cone', progress=progress)


def lr_arrival_velocity(samples: Sequence[LRSample], epsilon: float) -> float:
    """Slope of d against the first time at which c(d, t) reaches epsilon."""
    arrivals = []
    for d in sorted({s.d for s in samples}):
        hits = sorted(s.t for s in samples if s.d == d and s.t >= 0 and s.c >= epsilon)
        if hits:
            arrivals.append((hits[0], d))
    if len({t for t, _ in arrivals}) < 2:
        return float('nan')
    t_arr, d_arr = np.array(arrivals).T
    slope, _ = np.polyfit(t_arr, d_arr, 1)
    return float(slope)


def lr_fit(samples: Sequence[LRSample], epsilon: Optional[float] = None,
           norm_product: float = 1.0) -> LRFit:
    """Least squares of ln c = ln c0 - mu d + mu v |t| over outside-cone samples (c < epsilon).

    norm_product is ||a|| ||b||; commutators are bounded by twice it."""
    cap = 2.0 * norm_product
    if epsilon is None:
        epsilon = DEFAULT_EPS_FRACTION * cap
    usable = [s for s in samples if USABLE_FLOOR < s.c < min(epsilon, cap)]
    n_d = len({s.d for s in usable})
    n_t = len({abs(s.t) for s in usable})
    if n_d < 3 or n_t < 3:
        raise FitError("insufficient usable samples",
                       {'usable': len(usable), 'distances': n_d, 'times': n_t, 'epsilon': epsilon})
    d = np.array([s.d for s in usable], dtype=float)
    t = np.abs(np.array([s.t for s in usable], dtype=float))
    y = np.log([s.c for s in usable])
    design = np.column_stack([np.ones_like(d), d, t])
    coef, _, _, _ = linalg.lstsq(design, y)
    log_c0, slope_d, slope_t = coef
    mu = -slope_d
    v = slope_t / mu if mu != 0 else float('nan')
    residual = float(np.sqrt(np.mean((design @ coef - y) ** 2)))
    ok = bool(mu > 0)
    if not ok:
        logger.warning("LR fit gives non-positive mu=%.4g; cone not resolved", mu)
    return LRFit(float(v), float(mu), float(np.exp(log_c0)), residual, float(epsilon),
                 lr_arrival_velocity(samples, epsilon), len(usable), ok)
