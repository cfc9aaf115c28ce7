"""Tolerance-driven schedules, coupled per-level runs and the telescoping estimator.

The multilevel estimate combines a base ensemble at the coarsest scheduled
level with one coupled pair per consecutive level step: the pair's fine and
auxiliary-coarse copies start from the identical prior draw, evolve under
the level-l and level-(l-1) gradients respectively, and never exchange
information afterwards, so their difference has small variance.

Cost accounting follows the unit model "one gradient evaluation at level l
costs 2**(q (l - ell0)) units"; ledgers are assembled from actual counted
evaluations and must agree exactly with the closed formulas in
:func:`ledger_costs`.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .seeding import STREAM_BASE, Seed, rng_for, seed_parts
from .svgd import Ensemble, Functional, RunConfig, estimate, svgd_run
from .targets import LevelTargetSpec, gradient_evaluator


@dataclass(frozen=True)
class MLSchedule:
    """Max level L, base level ell0 and ensemble sizes N[ell0..L] for a tolerance."""

    epsilon: float
    L: int
    ell0: int
    N: tuple[int, ...]
    beta: float
    q: float
    c_sl: float = 1.0
    c_ml: float = 1.0

    def __post_init__(self):
        if not 0.0 < self.epsilon < 1.0:
            raise ValueError("epsilon must lie in (0, 1)")
        if self.beta <= 0.0 or self.q < 0.0:
            raise ValueError("need beta > 0 and q >= 0")
        if self.ell0 < 0 or self.L < self.ell0:
            raise ValueError(f"need 0 <= ell0 <= L, got ell0={self.ell0}, L={self.L}")
        n = tuple(int(v) for v in self.N)
        if len(n) not in (self.L - self.ell0 + 1, 1):
            raise ValueError(
                f"need {self.L - self.ell0 + 1} ensemble sizes (or a single-level entry), "
                f"got {len(n)}"
            )
        if any(v < 2 for v in n):
            raise ValueError("every ensemble size must be >= 2")
        if any(a < b for a, b in zip(n, n[1:])):
            raise ValueError("ensemble sizes must be non-increasing in the level")
        object.__setattr__(self, "N", n)

    @property
    def single_level(self) -> bool:
        return len(self.N) == 1 and self.L > self.ell0

    def levels(self) -> range:
        if self.single_level:
            return range(self.L, self.L + 1)
        return range(self.ell0, self.L + 1)

    def size_at(self, level: int) -> int:
        if self.single_level:
            if level != self.L:
                raise ValueError(f"single-level schedule only covers level {self.L}")
            return self.N[0]
        return self.N[level - self.ell0]


def max_level(epsilon: float, beta: float) -> int:
    """L = ceil(log(2/epsilon) / (beta log 2)), the bias-balancing depth."""
    if not 0.0 < epsilon < 1.0:
        raise ValueError("epsilon must lie in (0, 1)")
    return math.ceil(math.log2(2.0 / epsilon) / beta)


def schedule_sl(epsilon: float, beta: float, q: float, c_sl: float = 1.0,
                ell0: int = 0) -> MLSchedule:
    """Single-level schedule: N_L = max(2, ceil(c_sl * epsilon**-2)) at level L."""
    level = max_level(epsilon, beta)
    if level < ell0:
        raise ValueError(
            f"tolerance {epsilon} is reachable below the base level ({level} < {ell0})"
        )
    n_l = max(2, math.ceil(c_sl * epsilon**-2))
    return MLSchedule(epsilon=epsilon, L=level, ell0=ell0, N=(n_l,),
                      beta=beta, q=q, c_sl=c_sl)


def schedule_ml(epsilon: float, beta: float, q: float, c_ml: float = 1.0,
                ell0: int = 0) -> MLSchedule:
    """Multilevel schedule N_l = max(2, ceil(c_ml (L+1)^4 2^(-2 beta (l-ell0)) eps^-2)).

    The geometric factor is taken relative to the base level so that the
    coarsest scheduled level gets the largest ensemble regardless of ell0.
    """
    level = max_level(epsilon, beta)
    if level < ell0:
        raise ValueError(
            f"tolerance {epsilon} is reachable below the base level ({level} < {ell0})"
        )
    amp = c_ml * (level + 1) ** 4 * epsilon**-2
    sizes = tuple(
        max(2, math.ceil(amp * 2.0 ** (-2.0 * beta * (l - ell0))))
        for l in range(ell0, level + 1)
    )
    return MLSchedule(epsilon=epsilon, L=level, ell0=ell0, N=sizes,
                      beta=beta, q=q, c_ml=c_ml)


def unit_cost(q: float, rel_level: int):
    """Cost units of one gradient evaluation ``rel_level`` levels above base."""
    if float(q).is_integer():
        return 1 << (int(q) * rel_level)
    return 2.0 ** (q * rel_level)


@dataclass(frozen=True)
class CostLedger:
    """Exact cost accounting: counted evaluations and their unit-cost totals."""

    per_level: dict[int, float]
    eval_counts: dict[int, int]
    total: float

    @classmethod
    def from_counts(cls, eval_counts: dict[int, int], q: float, ell0: int) -> "CostLedger":
        per_level = {
            lvl: count * unit_cost(q, lvl - ell0) for lvl, count in eval_counts.items()
        }
        total = sum(per_level.values())
        return cls(per_level=per_level, eval_counts=dict(eval_counts), total=total)


class _CountingGradient:
    """Wraps a gradient evaluator and counts per-particle evaluations."""

    def __init__(self, fn):
        self._fn = fn
        self.count = 0

    def __call__(self, positions: np.ndarray) -> np.ndarray:
        self.count += np.atleast_2d(positions).shape[0]
        return self._fn(positions)


@dataclass(frozen=True)
class CoupledPair:
    """Fine/auxiliary ensembles sharing their step-0 positions bit for bit."""

    fine: Ensemble
    coarse_aux: Ensemble
    shared_seed: tuple[int, ...]

    def __post_init__(self):
        if self.fine.n_particles != self.coarse_aux.n_particles:
            raise ValueError("fine and auxiliary ensembles must have equal size")
        if self.coarse_aux.level != self.fine.level - 1:
            raise ValueError("auxiliary ensemble must sit one level below the fine one")
        if not np.array_equal(self.fine.positions, self.coarse_aux.positions):
            raise ValueError("coupled ensembles must share identical initial positions")


def init_coupled_pair(target: LevelTargetSpec, n_particles: int, level: int,
                      seed: Seed) -> CoupledPair:
    """Draw one prior sample of size ``n_particles`` and mirror it at level-1."""
    positions = target.prior.sample(rng_for(seed, level), n_particles)
    return CoupledPair(
        fine=Ensemble(positions.copy(), level=level),
        coarse_aux=Ensemble(positions.copy(), level=level - 1),
        shared_seed=tuple(seed_parts(seed) + [level]),
    )


def run_sl(schedule: MLSchedule, target: LevelTargetSpec, phi: Functional,
           cfg: RunConfig, seed: Seed, collect=None):
    """Single-level estimator at level L: returns (value, ledger).

    ``collect(tag, ensemble)``, when given, receives the final ensemble
    (for debugging dumps); it must not mutate it.
    """
    level = schedule.L
    n_particles = schedule.N[-1]
    e0 = Ensemble(target.prior.sample(rng_for(seed, level), n_particles), level=level)
    grad = _CountingGradient(gradient_evaluator(target, level))
    final = svgd_run(e0, grad, cfg)
    if collect is not None:
        collect("sl", final)
    ledger = CostLedger.from_counts({level: grad.count}, schedule.q, schedule.ell0)
    return estimate(final, phi), ledger


def _run_pair(target, phi, cfg, seed, level, n_particles, collect=None):
    pair = init_coupled_pair(target, n_particles, level, seed)
    fine_grad = _CountingGradient(gradient_evaluator(target, level))
    aux_grad = _CountingGradient(gradient_evaluator(target, level - 1))
    fine = svgd_run(pair.fine, fine_grad, cfg)
    aux = svgd_run(pair.coarse_aux, aux_grad, cfg)
    if collect is not None:
        collect(f"fine_{level}", fine)
        collect(f"aux_{level - 1}", aux)
    return estimate(fine, phi), estimate(aux, phi), fine_grad.count, aux_grad.count


def run_ml(schedule: MLSchedule, target: LevelTargetSpec, phi: Functional,
           cfg: RunConfig, seed: Seed, parallel: int = 0, collect=None):
    """Telescoping estimator: returns (value, ledger, per-level report).

    The base ensemble and every coupled pair use disjoint substreams of
    ``seed`` (the reserved base stream and the pair's level index), so the
    telescoping terms are independent.  Pairs are independent of each other
    and may run on ``parallel`` worker threads; assembly order is fixed, so
    the result does not depend on the execution order.
    """

    base_level = schedule.L if schedule.single_level else schedule.ell0

    def run_base():
        e0 = Ensemble(
            target.prior.sample(rng_for(seed, STREAM_BASE), schedule.N[0]),
            level=base_level,
        )
        grad = _CountingGradient(gradient_evaluator(target, base_level))
        final = svgd_run(e0, grad, cfg)
        if collect is not None:
            collect("base", final)
        return estimate(final, phi), grad.count

    pair_levels = [] if schedule.single_level else list(
        range(schedule.ell0 + 1, schedule.L + 1)
    )
    pair_jobs = [
        (lambda lvl=lvl: _run_pair(target, phi, cfg, seed, lvl,
                                   schedule.size_at(lvl), collect))
        for lvl in pair_levels
    ]

    if parallel and parallel > 1 and pair_jobs:
        with ThreadPoolExecutor(max_workers=parallel) as pool:
            base_future = pool.submit(run_base)
            pair_futures = [pool.submit(job) for job in pair_jobs]
            base_value, base_count = base_future.result()
            pair_results = [f.result() for f in pair_futures]
    else:
        base_value, base_count = run_base()
        pair_results = [job() for job in pair_jobs]

    counts: dict[int, int] = {base_level: base_count}
    report = [{
        "level": base_level,
        "N": schedule.N[0],
        "estimate_fine": base_value,
        "estimate_aux": None,
        "difference": base_value,
        "cost_units": base_count * unit_cost(schedule.q, base_level - schedule.ell0),
    }]
    value = base_value
    for lvl, (est_fine, est_aux, fine_count, aux_count) in zip(pair_levels, pair_results):
        counts[lvl] = counts.get(lvl, 0) + fine_count
        counts[lvl - 1] = counts.get(lvl - 1, 0) + aux_count
        diff = est_fine - est_aux
        value += diff
        report.append({
            "level": lvl,
            "N": schedule.size_at(lvl),
            "estimate_fine": est_fine,
            "estimate_aux": est_aux,
            "difference": diff,
            "cost_units": fine_count * unit_cost(schedule.q, lvl - schedule.ell0)
            + aux_count * unit_cost(schedule.q, lvl - 1 - schedule.ell0),
        })
    ledger = CostLedger.from_counts(counts, schedule.q, schedule.ell0)
    return value, ledger, report


def ledger_costs(n_steps: int, schedule: MLSchedule):
    """Closed-form (cost_sl, cost_ml) for ``n_steps`` iterations of the schedule.

    cost_sl charges N_L particles at level L only; cost_ml additionally
    charges every pair's auxiliary run one level down.
    """
    q, ell0 = schedule.q, schedule.ell0
    cost_sl = n_steps * schedule.N[-1] * unit_cost(q, schedule.L - ell0)
    if schedule.single_level:
        return cost_sl, cost_sl
    fine = sum(
        schedule.size_at(lvl) * unit_cost(q, lvl - ell0) for lvl in schedule.levels()
    )
    aux = sum(
        schedule.size_at(lvl) * unit_cost(q, lvl - 1 - ell0)
        for lvl in range(ell0 + 1, schedule.L + 1)
    )
    return cost_sl, n_steps * (fine + aux)
