"""Benchmark harness: reference generation, SL/ML sweeps and rate estimation.

The harness wires the finite-element posterior to the single-level and
multilevel estimators, repeats both over a tolerance grid, measures RMSE
against a cached high-accuracy reference run, and writes the results as a
CSV with a fixed schema (consumed by the plotting frontend).  Everything
is deterministic given the config seed.
"""

from __future__ import annotations

import hashlib
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import fem, multilevel, targets
from .errors import ConfigError, NumericalFailureError
from .kernels import KernelSpec
from .seeding import STREAM_DATA, STREAM_REF, STREAM_TRUTH, rng_for
from .svgd import Ensemble, Functional, RunConfig, estimate, svgd_run

CSV_HEADER = "epsilon,n_steps,rmse_sl,cost_sl,rmse_ml,cost_ml,reps,failures,seed_base"

STREAM_RATE = (1 << 20) + 4


@dataclass(frozen=True)
class ExperimentConfig:
    """Desk-scale inverse-problem benchmark; every knob overridable.

    The proportionality constants are calibrated so that the largest
    scheduled ensemble stays below ``n_ref`` (reference dominance) and the
    coupled pairs remain dynamically stable at step size ``gamma``.
    """

    d: int = 4
    n_y: int = 15
    obs_points: tuple[float, ...] | None = None
    prior_variances: tuple[float, ...] | None = None
    sigma: float = 0.2
    gamma: float = 0.1
    n_steps: tuple[int, ...] = (10, 100)
    ell0: int = 2
    l_ref: int = 10
    n_ref: int = 3000
    data_level: int = 11
    epsilons: tuple[float, ...] = (0.25, 0.125, 0.0625, 0.03125)
    repetitions: int = 20
    seed: int = 42
    beta: float = 1.0
    q: float = 1.0
    c_sl: float = 0.9
    c_ml: float = 2.5e-4
    quad_level: int | None = None
    phi_kind: str = "l2_norm_of_field"
    phi_index: int = 0
    rate_levels: tuple[int, ...] = (4, 5, 6, 7, 8, 9)
    rate_samples: int = 50
    target_kind: str = targets.PDE_POSTERIOR

    def __post_init__(self):
        object.__setattr__(self, "n_steps", tuple(int(n) for n in self.n_steps))
        object.__setattr__(self, "epsilons", tuple(float(e) for e in self.epsilons))
        object.__setattr__(self, "rate_levels", tuple(int(l) for l in self.rate_levels))
        if self.obs_points is not None:
            object.__setattr__(self, "obs_points", tuple(float(s) for s in self.obs_points))
        if self.prior_variances is not None:
            object.__setattr__(
                self, "prior_variances", tuple(float(v) for v in self.prior_variances)
            )
        validate_config(self)

    # -- derived pieces ------------------------------------------------
    def observation_points(self) -> np.ndarray:
        if self.obs_points is not None:
            return np.asarray(self.obs_points, dtype=float)
        return fem.default_obs_points(self.n_y)

    def prior(self) -> targets.PriorSpec:
        return targets.PriorSpec(self.d, self.prior_variances)

    def kernel(self) -> KernelSpec:
        return KernelSpec(np.diag(1.0 / self.prior().variances), self.d)

    def functional(self) -> Functional:
        quad = self.quad_level if self.quad_level is not None else self.l_ref
        return Functional(self.phi_kind, index=self.phi_index, quad_level=quad)

    def run_config(self, n_steps: int) -> RunConfig:
        return RunConfig(gamma=self.gamma, n_steps=n_steps, kernel=self.kernel())

    def schedules(self, epsilon: float):
        sl = multilevel.schedule_sl(epsilon, self.beta, self.q, self.c_sl, self.ell0)
        ml = multilevel.schedule_ml(epsilon, self.beta, self.q, self.c_ml, self.ell0)
        return sl, ml


def validate_config(cfg: ExperimentConfig) -> None:
    """Reject configs the estimators cannot honestly serve (CLI exit code 2)."""
    checks = [
        (cfg.d >= 1, "d must be >= 1"),
        (cfg.n_y >= 1, "n_y must be >= 1"),
        (cfg.sigma > 0.0, "sigma must be positive"),
        (cfg.gamma > 0.0, "gamma must be positive"),
        (cfg.repetitions >= 2, "repetitions must be >= 2 (variance is estimated)"),
        (cfg.ell0 >= 1, "ell0 must be >= 1 (level 0 has no interior nodes)"),
        (len(cfg.epsilons) >= 1, "epsilon grid must be nonempty"),
        (all(0.0 < e < 1.0 for e in cfg.epsilons), "epsilons must lie in (0, 1)"),
        (all(n >= 0 for n in cfg.n_steps), "n_steps entries must be nonnegative"),
        (cfg.beta > 0.0 and cfg.q >= 0.0, "need beta > 0 and q >= 0"),
        (cfg.c_sl > 0.0 and cfg.c_ml > 0.0, "schedule constants must be positive"),
        (cfg.data_level > cfg.l_ref, "data_level must exceed l_ref (inverse crime)"),
    ]
    for ok, msg in checks:
        if not ok:
            raise ConfigError(msg)
    if cfg.obs_points is not None and (
        min(cfg.obs_points) <= 0.0 or max(cfg.obs_points) >= 1.0
    ):
        raise ConfigError("observation points must lie strictly inside (0, 1)")
    try:
        max_l = max(multilevel.max_level(e, cfg.beta) for e in cfg.epsilons)
        max_n = 0
        for eps in cfg.epsilons:
            sl = multilevel.schedule_sl(eps, cfg.beta, cfg.q, cfg.c_sl, cfg.ell0)
            ml = multilevel.schedule_ml(eps, cfg.beta, cfg.q, cfg.c_ml, cfg.ell0)
            max_n = max(max_n, max(sl.N), max(ml.N))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    if cfg.l_ref <= max_l:
        raise ConfigError(f"l_ref must exceed the largest scheduled level {max_l}")
    if cfg.n_ref < max_n:
        raise ConfigError(f"n_ref must dominate the largest scheduled ensemble {max_n}")


def config_from_dict(raw: dict) -> ExperimentConfig:
    known = set(ExperimentConfig.__dataclass_fields__)
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    try:
        return ExperimentConfig(**raw)
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from exc


def load_config(path) -> ExperimentConfig:
    try:
        raw = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return config_from_dict(raw)


def config_to_dict(cfg: ExperimentConfig) -> dict:
    out = asdict(cfg)
    for key, value in out.items():
        if isinstance(value, tuple):
            out[key] = list(value)
    return out


# ---------------------------------------------------------------------------
# target assembly


def needed_levels(cfg: ExperimentConfig) -> list[int]:
    levels = {cfg.l_ref, cfg.data_level}
    levels.update(cfg.rate_levels)
    levels.add(min(cfg.rate_levels) - 1)
    for eps in cfg.epsilons:
        levels.update(range(cfg.ell0, multilevel.max_level(eps, cfg.beta) + 1))
    return sorted(l for l in levels if l >= 1)


def build_target(cfg: ExperimentConfig) -> targets.LevelTargetSpec:
    """Forward matrices for every needed level plus synthesized data.

    Data is generated at ``data_level`` (above the reference level) from a
    prior-drawn ground truth, both on reserved substreams of the config
    seed.  The analytic kind serves the exact ``l_ref`` matrix at every
    level, which turns the hierarchy into a conjugate-Gaussian oracle.
    """
    obs = cfg.observation_points()
    prior = cfg.prior()
    noise = targets.NoiseSpec(obs.size, cfg.sigma**2)
    mats = {l: fem.forward_matrix(l, cfg.d, obs) for l in needed_levels(cfg)}
    x_true = prior.sample(rng_for(cfg.seed, STREAM_TRUTH), 1)[0]
    blank = targets.LevelTargetSpec(
        targets.PDE_POSTERIOR, prior, noise, np.zeros(obs.size), mats,
        q=cfg.q, beta=cfg.beta,
    )
    y = targets.synthesize_data(blank, x_true, cfg.data_level, (cfg.seed, STREAM_DATA))
    if cfg.target_kind == targets.ANALYTIC_GAUSSIAN:
        return targets.analytic_target(
            mats[cfg.l_ref].matrix, y, noise, prior, q=cfg.q, beta=cfg.beta
        )
    return replace(blank, data=y)


# ---------------------------------------------------------------------------
# reference solution


def _reference_key(cfg: ExperimentConfig, n_steps: int) -> str:
    relevant = config_to_dict(cfg)
    for key in ("epsilons", "repetitions", "c_sl", "c_ml", "rate_levels", "rate_samples"):
        relevant.pop(key)
    relevant["reference_n_steps"] = n_steps
    blob = json.dumps(relevant, sort_keys=True)
    return hashlib.sha256(blob.encode()).hexdigest()


def generate_reference(
    cfg: ExperimentConfig,
    n_steps: int,
    cache_dir=None,
    target: targets.LevelTargetSpec | None = None,
) -> float:
    """One SL run at (l_ref, n_ref) on the reference stream, cached by config hash."""
    key = _reference_key(cfg, n_steps)
    cache_path = Path(cache_dir) / "reference_cache.json" if cache_dir else None
    if cache_path and cache_path.exists():
        cache = json.loads(cache_path.read_text())
        if key in cache:
            return float(cache[key])
    if target is None:
        target = build_target(cfg)
    e0 = Ensemble(
        target.prior.sample(rng_for(cfg.seed, STREAM_REF), cfg.n_ref), level=cfg.l_ref
    )
    final = svgd_run(e0, targets.gradient_evaluator(target, cfg.l_ref),
                     cfg.run_config(n_steps))
    value = estimate(final, cfg.functional())
    if cache_path:
        cache = json.loads(cache_path.read_text()) if cache_path.exists() else {}
        cache[key] = value
        cache_path.parent.mkdir(parents=True, exist_ok=True)
        cache_path.write_text(json.dumps(cache, sort_keys=True, indent=1))
    return value


# ---------------------------------------------------------------------------
# sweep


@dataclass(frozen=True)
class SweepRow:
    epsilon: float
    n_steps: int
    rmse_sl: float
    cost_sl: float
    rmse_ml: float
    cost_ml: float
    reps: int
    failures: int
    seed_base: int

    def to_csv_line(self) -> str:
        return ",".join([
            repr(float(self.epsilon)),
            str(int(self.n_steps)),
            repr(float(self.rmse_sl)),
            repr(float(self.cost_sl)),
            repr(float(self.rmse_ml)),
            repr(float(self.cost_ml)),
            str(int(self.reps)),
            str(int(self.failures)),
            str(int(self.seed_base)),
        ])


def _ledger_mismatch(counted, formula, q) -> bool:
    # exact integer arithmetic whenever q makes the unit costs integral
    if float(q).is_integer():
        return counted != formula
    return not np.isclose(counted, formula, rtol=1e-12, atol=0.0)


def _sweep_cell(cfg, target, phi, eps_index, n_index, reference):
    """All repetitions of one (epsilon, n_steps) cell; returns a SweepRow."""
    eps = cfg.epsilons[eps_index]
    n = cfg.n_steps[n_index]
    sl_sched, ml_sched = cfg.schedules(eps)
    run_cfg = cfg.run_config(n)
    cost_sl, _ = multilevel.ledger_costs(n, sl_sched)
    _, cost_ml = multilevel.ledger_costs(n, ml_sched)
    sl_errors, ml_errors, failures = [], [], 0
    for rep in range(cfg.repetitions):
        try:
            value, ledger = multilevel.run_sl(
                sl_sched, target, phi, run_cfg, (cfg.seed, eps_index, n_index, rep, 0)
            )
            if _ledger_mismatch(ledger.total, cost_sl, cfg.q):
                raise RuntimeError(
                    f"SL ledger drift: counted {ledger.total}, formula {cost_sl}"
                )
            sl_errors.append(value - reference)
        except NumericalFailureError:
            failures += 1
        try:
            value, ledger, _ = multilevel.run_ml(
                ml_sched, target, phi, run_cfg, (cfg.seed, eps_index, n_index, rep, 1)
            )
            if _ledger_mismatch(ledger.total, cost_ml, cfg.q):
                raise RuntimeError(
                    f"ML ledger drift: counted {ledger.total}, formula {cost_ml}"
                )
            ml_errors.append(value - reference)
        except NumericalFailureError:
            failures += 1
    if not sl_errors or not ml_errors:
        raise NumericalFailureError(
            f"every repetition failed in cell epsilon={eps}, n_steps={n}"
        )
    return SweepRow(
        epsilon=eps,
        n_steps=n,
        rmse_sl=float(np.sqrt(np.mean(np.square(sl_errors)))),
        cost_sl=float(cost_sl),
        rmse_ml=float(np.sqrt(np.mean(np.square(ml_errors)))),
        cost_ml=float(cost_ml),
        reps=cfg.repetitions,
        failures=failures,
        seed_base=cfg.seed,
    )


def run_sweep(cfg: ExperimentConfig, cache_dir=None, parallel: int = 0) -> list[SweepRow]:
    """RMSE-vs-cost table over the (epsilon, n_steps) grid.

    Each repetition runs one SL and one ML estimate on its own substream;
    the RMSE is measured against the cached reference for the matching
    n_steps.  Cells are independent, so ``parallel`` worker threads may
    process them concurrently; rows are assembled in grid order either way.
    """
    target = build_target(cfg)
    phi = cfg.functional()
    references = {
        n: generate_reference(cfg, n, cache_dir=cache_dir, target=target)
        for n in cfg.n_steps
    }
    cells = [
        (i, j) for j in range(len(cfg.n_steps)) for i in range(len(cfg.epsilons))
    ]

    def work(cell):
        i, j = cell
        return _sweep_cell(cfg, target, phi, i, j, references[cfg.n_steps[j]])

    if parallel and parallel > 1:
        with ThreadPoolExecutor(max_workers=parallel) as pool:
            rows = list(pool.map(work, cells))
    else:
        rows = [work(cell) for cell in cells]
    return rows


def write_sweep_csv(rows: list[SweepRow], path) -> Path:
    """Fixed schema, LF line endings, round-trip-safe float formatting."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [CSV_HEADER] + [row.to_csv_line() for row in rows]
    path.write_text("\n".join(lines) + "\n", newline="\n")
    return path


def fit_cost_slopes(rows: list[SweepRow], n_steps: int):
    """|d log cost / d log rmse| for the SL and ML series at one n_steps."""
    sub = [r for r in rows if r.n_steps == n_steps and r.failures == 0]
    if len(sub) < 2:
        raise ValueError(f"need at least two clean rows at n_steps={n_steps}")
    sl = np.polyfit(np.log([r.rmse_sl for r in sub]), np.log([r.cost_sl for r in sub]), 1)
    ml = np.polyfit(np.log([r.rmse_ml for r in sub]), np.log([r.cost_ml for r in sub]), 1)
    return abs(float(sl[0])), abs(float(ml[0]))


# ---------------------------------------------------------------------------
# rate estimation


@dataclass(frozen=True)
class RateFit:
    """Least-squares slope of log2(value) against the level index."""

    slope: float
    r_squared: float
    degenerate: bool
    levels: tuple[int, ...]
    values: tuple[float, ...]


def fit_log2_rate(levels, values) -> RateFit:
    levels = tuple(int(l) for l in levels)
    values = tuple(float(v) for v in values)
    if len(levels) < 3:
        raise ValueError("rate fits need at least three levels")
    arr = np.asarray(values)
    if np.all(arr < 1e-300):
        return RateFit(float("nan"), float("nan"), True, levels, values)
    logs = np.log2(arr)
    slope, intercept = np.polyfit(levels, logs, 1)
    residual = logs - (slope * np.asarray(levels) + intercept)
    total = logs - logs.mean()
    r2 = 1.0 - float(residual @ residual) / float(total @ total)
    return RateFit(float(slope), r2, False, levels, values)


def gradient_difference_norms(
    target: targets.LevelTargetSpec, levels, samples: np.ndarray
) -> list[float]:
    """Mean || grad log pi_l - grad log pi_{l-1} || over the sample points."""
    norms = []
    for level in levels:
        fine = targets.gradient_evaluator(target, level)(samples)
        coarse = targets.gradient_evaluator(target, level - 1)(samples)
        norms.append(float(np.mean(np.linalg.norm(fine - coarse, axis=1))))
    return norms


def estimate_beta(cfg: ExperimentConfig, target: targets.LevelTargetSpec | None = None) -> RateFit:
    """Empirical decay rate of the level-difference gradients under the prior."""
    if len(cfg.rate_levels) < 3:
        raise ValueError("rate estimation needs at least three levels")
    if target is None:
        target = build_target(cfg)
    samples = target.prior.sample(rng_for(cfg.seed, STREAM_RATE), cfg.rate_samples)
    norms = gradient_difference_norms(target, cfg.rate_levels, samples)
    return fit_log2_rate(cfg.rate_levels, norms)
