"""Periodic guaranteed-RB allocation: minimize the worst delay-to-budget ratio.

Starting from an equal split, the allocator repeatedly evaluates the bound
ratio W_m / W_th_m per service and moves one RB toward the most stressed
service, drawing first from any unassigned remainder and then from the least
stressed donor; it commits only strict improvements and stops at the first
non-improving move.  A brute-force enumerator over all positive compositions
of the cell budget serves as the optimality oracle.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .capacity import ConcatPerRbVector, build_capacity_samples
from .martingale import ArrivalSampleSet, ThetaSearchParams, delay_bound
from .utilization import UtilizationPmf, empirical_pmf, fit_gmm_em, region_probabilities

BRUTE_FORCE_LIMIT = 1_000_000


@dataclass(frozen=True)
class ServiceSpec:
    """Delay budget, violation target and source bindings for one service."""

    id: int
    w_th_ms: float
    epsilon: float
    arrival: object = None
    channel: object = None

    def __post_init__(self):
        if self.w_th_ms <= 0:
            raise ValueError("w_th_ms must be positive")
        if not (0.0 < self.epsilon < 1.0):
            raise ValueError("epsilon must lie in (0, 1)")


@dataclass
class ServiceWindow:
    """Observation window for one service feeding a near-RT decision."""

    arrivals: ArrivalSampleSet
    per_rb: ConcatPerRbVector
    extra_rb_usage: np.ndarray

    def __post_init__(self):
        self.extra_rb_usage = np.asarray(self.extra_rb_usage, dtype=np.int64)
        if len(self.per_rb) == 0:
            raise ValueError("capacity window is empty")
        if self.extra_rb_usage.size == 0:
            raise ValueError("extra-RB usage window is empty")


@dataclass(frozen=True)
class AllocatorConfig:
    t_slot_ms: float = 1.0
    estimator: str = "empirical"
    gmm_components: int = 3
    gmm_iters: int = 200
    gmm_tol: float = 1e-8
    theta: ThetaSearchParams = field(default_factory=ThetaSearchParams)

    def __post_init__(self):
        if self.estimator not in ("empirical", "gmm"):
            raise ValueError(f"unknown estimator {self.estimator!r}")


@dataclass(frozen=True)
class GuaranteedAllocation:
    """Committed guarantees with their estimated bounds and ratio objective."""

    n_min: tuple[int, ...]
    w_est: tuple[float, ...]
    objective: float
    objective_history: tuple[float, ...] = ()
    evaluations: int = 0


def objective(w_est: Sequence[float], w_th: Sequence[float]) -> float:
    """Worst ratio of estimated bound to budget; inf dominates everything."""
    if len(w_est) != len(w_th):
        raise ValueError("w_est and w_th lengths differ")
    if any(t <= 0 for t in w_th):
        raise ValueError("budgets must be positive")
    return max(w / t for w, t in zip(w_est, w_th))


class _CandidateEvaluator:
    """Caches W(service, n_min) so repeated candidates cost nothing."""

    def __init__(self, specs, windows, n_cell, cfg: AllocatorConfig, rng=None):
        if len(specs) != len(windows):
            raise ValueError("specs and windows lengths differ")
        if not specs:
            raise ValueError("at least one service required")
        self.specs = specs
        self.windows = windows
        self.n_cell = n_cell
        self.cfg = cfg
        self._cache: dict[tuple[int, int], float] = {}
        self._gmms = None
        if cfg.estimator == "gmm":
            rng = rng if rng is not None else np.random.default_rng(0)
            self._gmms = [
                fit_gmm_em(
                    w.extra_rb_usage.astype(np.float64),
                    min(cfg.gmm_components, len(w.extra_rb_usage)),
                    cfg.gmm_iters,
                    cfg.gmm_tol,
                    rng,
                )
                for w in windows
            ]

    def pmf(self, m: int, n_min: int) -> UtilizationPmf:
        n_add = self.n_cell - n_min
        if self._gmms is not None:
            return region_probabilities(self._gmms[m], n_add)
        return empirical_pmf(self.windows[m].extra_rb_usage, n_add)

    def w_est(self, m: int, n_min: int) -> float:
        key = (m, n_min)
        got = self._cache.get(key)
        if got is not None:
            return got
        pi = self.pmf(m, n_min)
        x_s = build_capacity_samples(self.windows[m].per_rb, n_min, self.n_cell)
        res = delay_bound(
            self.windows[m].arrivals,
            x_s,
            pi.pi,
            self.specs[m].epsilon,
            self.cfg.t_slot_ms,
            self.cfg.theta,
        )
        self._cache[key] = res.w_ms
        return res.w_ms


def allocate(
    specs: Sequence[ServiceSpec],
    windows: Sequence[ServiceWindow],
    n_cell: int,
    cfg: AllocatorConfig | None = None,
    rng: Optional[np.random.Generator] = None,
) -> GuaranteedAllocation:
    """Iterative max-ratio descent over guaranteed-RB vectors.

    Donors never drop below one RB; unassigned remainder RBs from the floor
    initialization are absorbed by plain +1 moves before any donor is tapped.
    """
    cfg = cfg or AllocatorConfig()
    m_count = len(specs)
    if n_cell < m_count:
        raise ValueError("cell budget smaller than the number of services")
    ev = _CandidateEvaluator(specs, windows, n_cell, cfg, rng)
    w_th = [s.w_th_ms for s in specs]

    cand = [n_cell // m_count] * m_count
    best_n = None
    best_w: list[float] = []
    best_g = math.inf
    history: list[float] = []
    evals = 0
    while True:
        w_z = [ev.w_est(m, cand[m]) for m in range(m_count)]
        g_z = objective(w_z, w_th)
        evals += 1
        if best_n is None or g_z < best_g:
            best_n, best_w, best_g = list(cand), w_z, g_z
            history.append(g_z)
        else:
            break
        ratios = [w / t for w, t in zip(best_w, w_th)]
        receiver = min(range(m_count), key=lambda m: (-ratios[m], m))
        spare = n_cell - sum(best_n)
        if spare > 0:
            cand = list(best_n)
            cand[receiver] += 1
            continue
        donors = [m for m in range(m_count) if m != receiver and best_n[m] > 1]
        if not donors:
            break
        donor = min(donors, key=lambda m: (ratios[m], m))
        cand = list(best_n)
        cand[receiver] += 1
        cand[donor] -= 1
    return GuaranteedAllocation(tuple(best_n), tuple(best_w), best_g, tuple(history), evals)


def _compositions(total: int, parts: int):
    """All positive integer compositions of `total` into `parts`, lexicographic."""
    if parts == 1:
        yield (total,)
        return
    for head in range(1, total - parts + 2):
        for rest in _compositions(total - head, parts - 1):
            yield (head,) + rest


def brute_force_allocate(
    specs: Sequence[ServiceSpec],
    windows: Sequence[ServiceWindow],
    n_cell: int,
    cfg: AllocatorConfig | None = None,
    rng: Optional[np.random.Generator] = None,
) -> tuple[GuaranteedAllocation, int]:
    """Exhaustive minimizer over all positive compositions of the cell budget."""
    cfg = cfg or AllocatorConfig()
    m_count = len(specs)
    if n_cell < m_count:
        raise ValueError("cell budget smaller than the number of services")
    n_compositions = math.comb(n_cell - 1, m_count - 1)
    if n_compositions > BRUTE_FORCE_LIMIT:
        raise ValueError(f"{n_compositions} compositions exceed the enumeration guard")
    ev = _CandidateEvaluator(specs, windows, n_cell, cfg, rng)
    w_th = [s.w_th_ms for s in specs]

    best = None
    count = 0
    for comp in _compositions(n_cell, m_count):
        count += 1
        w_z = [ev.w_est(m, comp[m]) for m in range(m_count)]
        g_z = objective(w_z, w_th)
        if best is None or g_z < best[2]:
            best = (comp, w_z, g_z)
    alloc = GuaranteedAllocation(tuple(best[0]), tuple(best[1]), best[2], (best[2],), count)
    return alloc, count
