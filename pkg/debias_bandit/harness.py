"""
Monte Carlo harness: experiment configs, seeded parallel replications, CSV/JSON output and
regret-curve statistics.
"""

# Import the necessary libraries.
import hashlib
import json
import logging
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import NamedTuple

import numpy as np
import pandas as pd
import statsmodels.api as sm
from joblib import Parallel, delayed
from scipy.stats import norm

from debias_bandit import baselines, geometry, instances
from debias_bandit.errors import SolverError, ValidationError
from debias_bandit.geometry import ActionSet
from debias_bandit.model import RNG_ALGORITHM, Environment, Parameter
from debias_bandit.utils import setup_logging

# Columns of the per-replication regret table.
REGRET_COLUMNS = ['rep', 'checkpoint', 'cum_regret']


@dataclass
class ExperimentConfig:
    """
    One Monte Carlo experiment: an instance, a policy and the replication plan.

    Attributes:
        instance (dict | str): Generator spec {"family": ..., ...}, inline {"actions": ..., "theta": ...},
            or the path of a directory written by the instance command.
        algorithm (str): Policy name, one of baselines.POLICIES.
        T (int): Horizon.
        delta (float | str): Confidence parameter, or "1/T".
        reps (int): Number of replications.
        seed (int): Master seed; replication r uses a seed derived from (seed, r).
        checkpoints (str): Checkpoint grid; only "pow2" is supported.
        noise_std (float): Standard deviation of the evaluation noise.
        tol (float): Tolerance of the G-optimal solver.
    """

    instance: dict | str
    algorithm: str
    T: int
    delta: float | str = '1/T'
    reps: int = 1
    seed: int = 0
    checkpoints: str = 'pow2'
    noise_std: float = 1.0
    tol: float = 1e-3

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.algorithm not in baselines.POLICIES:
            raise ValidationError(f"unknown algorithm {self.algorithm!r}; expected one of {sorted(baselines.POLICIES)}")
        if not isinstance(self.T, int) or self.T < 1:
            raise ValidationError(f"T must be a positive integer, got {self.T!r}")
        if not isinstance(self.reps, int) or self.reps < 1:
            raise ValidationError(f"reps must be a positive integer, got {self.reps!r}")
        if not isinstance(self.seed, int) or self.seed < 0:
            raise ValidationError(f"seed must be a nonnegative integer, got {self.seed!r}")
        if self.checkpoints != 'pow2':
            raise ValidationError(f"unsupported checkpoint grid {self.checkpoints!r}")
        if self.delta != '1/T' and not (isinstance(self.delta, (int, float)) and 0 < self.delta <= 1):
            raise ValidationError(f"delta must be '1/T' or a number in (0, 1], got {self.delta!r}")
        if not self.noise_std >= 0:
            raise ValidationError(f"noise_std must be nonnegative, got {self.noise_std!r}")
        if not isinstance(self.instance, (dict, str)):
            raise ValidationError("instance must be a generator spec, an inline instance or a directory path")

    @property
    def delta_value(self) -> float | None:
        return None if self.delta == '1/T' else float(self.delta)

    def to_dict(self) -> dict:
        return asdict(self)

    def config_hash(self) -> str:
        """
        SHA-256 of the canonical JSON of the config. Real-valued fields and instance numbers are
        written as floats, so 1 and 1.0 give the same hash.
        """
        document = self.to_dict()
        for key in ('delta', 'noise_std', 'tol'):
            document[key] = _as_floats(document[key])
        document['instance'] = _as_floats(document['instance'])
        canonical = json.dumps(document, sort_keys=True, separators=(',', ':'))
        return hashlib.sha256(canonical.encode()).hexdigest()

    @classmethod
    def from_dict(cls, data: dict, base_dir=None) -> 'ExperimentConfig':
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValidationError(f"unknown config keys: {sorted(unknown)}")
        missing = {'instance', 'algorithm', 'T'} - set(data)
        if missing:
            raise ValidationError(f"missing config keys: {sorted(missing)}")
        data = dict(data)
        if isinstance(data['instance'], str) and base_dir is not None and not Path(data['instance']).is_absolute():
            data['instance'] = str(Path(base_dir) / data['instance'])
        return cls(**data)

    @classmethod
    def from_json(cls, path) -> 'ExperimentConfig':
        path = Path(path)
        try:
            data = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ValidationError(f"{path} is not valid JSON: {exc}") from exc
        return cls.from_dict(data, base_dir=path.parent)


def build_instance(spec, horizon: int) -> instances.ProblemInstance:
    """
    Resolve the instance field of a config.
    """
    if isinstance(spec, str):
        return instances.ProblemInstance.load(spec)
    if 'family' in spec:
        params = {key: value for key, value in spec.items() if key != 'family'}
        try:
            if spec['family'] == 'worst-case':
                alternative = params.pop('alternative', 1)
                params.setdefault('T', horizon)
                return instances.worst_case_instance(**params)[alternative - 1]
            if spec['family'] == 'gap':
                return instances.gap_instance(**params)
            if spec['family'] == 'small-d':
                return instances.small_d_gap_instance(**params)
            if spec['family'] == 'biased-evaluation':
                return instances.biased_evaluation_instance(**params)
        except TypeError as exc:
            raise ValidationError(f"bad parameters for the {spec['family']} family: {exc}") from exc
        raise ValidationError(f"unknown instance family {spec['family']!r}")
    if set(spec) == {'actions', 'theta'}:
        actions = ActionSet.from_dict(spec['actions'])
        return instances.ProblemInstance(actions, Parameter.from_dict(spec['theta']), instances.InstanceMeta('inline', float('nan'), actions.d))
    raise ValidationError("instance spec needs a 'family' key or exactly the keys 'actions' and 'theta'")


def replication_seed(master_seed: int, rep: int) -> int:
    """
    Seed of replication `rep`, derived by hashing (master_seed, rep) through a SeedSequence.
    """
    return int(np.random.SeedSequence([master_seed, rep]).generate_state(1, dtype=np.uint64)[0])


def run_replication(instance: instances.ProblemInstance, cfg: ExperimentConfig, rep: int):
    """
    One seeded run of the configured policy.
    """
    env = Environment(instance.actions, instance.theta, noise_std=cfg.noise_std, seed=replication_seed(cfg.seed, rep))
    return baselines.run_policy(cfg.algorithm, instance.actions, env, cfg.T, cfg.delta_value, tol=cfg.tol)


def aggregate(rows: pd.DataFrame, confidence: float = 0.95) -> pd.DataFrame:
    """
    Mean regret per checkpoint with a normal-approximation confidence interval.

    Rows are sorted by (rep, checkpoint) first, so the result does not depend on the order in
    which replications finished.

    Args:
        rows (pd.DataFrame): Per-replication table with columns rep, checkpoint, cum_regret.
        confidence (float): Coverage of the interval.

    Returns:
        pd.DataFrame: Columns checkpoint, mean, sd, reps, ci_low, ci_high.
    """
    rows = rows.sort_values(['rep', 'checkpoint'], kind='mergesort').reset_index(drop=True)
    summary = rows.groupby('checkpoint', sort=True)['cum_regret'].agg(['mean', 'std', 'count']).reset_index()
    summary = summary.rename(columns={'std': 'sd', 'count': 'reps'})
    summary['sd'] = summary['sd'].fillna(0.0)

    # Half-width z * sd / sqrt(reps) with z the normal quantile.
    z = norm.ppf(0.5 + confidence / 2)
    half_width = z * summary['sd'] / np.sqrt(summary['reps'])
    summary['ci_low'] = summary['mean'] - half_width
    summary['ci_high'] = summary['mean'] + half_width
    return summary


@dataclass
class ExperimentResult:
    """
    Per-replication regret rows, their aggregate, the runs and the provenance of an experiment.
    """

    config: ExperimentConfig
    rows: pd.DataFrame
    summary: pd.DataFrame
    runs: list = field(repr=False, default_factory=list)
    provenance: dict = field(default_factory=dict)

    @classmethod
    def from_runs(cls, cfg: ExperimentConfig, runs) -> 'ExperimentResult':
        frames = [pd.DataFrame({'rep': rep, 'checkpoint': run.checkpoints, 'cum_regret': run.cum_regret}) for rep, run in enumerate(runs)]
        rows = pd.concat(frames, ignore_index=True)[REGRET_COLUMNS]
        provenance = {'config_hash': cfg.config_hash(), 'seed': cfg.seed, 'rng': RNG_ALGORITHM, 'replication_seeds': [run.seed for run in runs]}
        return cls(cfg, rows, aggregate(rows), list(runs), provenance)

    def check(self):
        """
        Recompute the mean from the per-replication rows and compare it with the stored one.
        """
        recomputed = aggregate(self.rows)['mean'].to_numpy()
        if not np.array_equal(recomputed, self.summary['mean'].to_numpy()):
            raise SolverError("stored mean regret disagrees with the per-replication rows")

    def final_mean(self) -> float:
        return float(self.summary['mean'].iloc[-1])

    def good_event_violation_rate(self) -> float:
        return float(np.mean([run.good_event_violated() for run in self.runs])) if self.runs else float('nan')

    def save(self, out_dir):
        """
        Write regret.csv, summary.csv and summary.json into a directory.
        """
        self.check()
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        self.rows.to_csv(out_dir / 'regret.csv', index=False)
        self.summary.to_csv(out_dir / 'summary.csv', index=False)
        document = {
            'config': self.config.to_dict(),
            'provenance': self.provenance,
            'final_mean_regret': self.final_mean(),
            'runs': [run.to_dict() for run in self.runs],
        }
        (out_dir / 'summary.json').write_text(json.dumps(document, indent=2))
        logging.info(f"Saved the regret trace to {out_dir / 'regret.csv'}.")


def read_regret_csv(path) -> pd.DataFrame:
    """
    Read a per-replication regret table back at full double precision.
    """
    rows = pd.read_csv(path, float_precision='round_trip')
    missing = set(REGRET_COLUMNS) - set(rows.columns)
    if missing:
        raise ValidationError(f"{path} lacks the columns {sorted(missing)}")
    return rows


def simulate(cfg: ExperimentConfig, out_dir=None, workers: int = 1, logging_enabled: bool = True) -> ExperimentResult:
    """
    Run cfg.reps independent replications and aggregate their regret traces.

    Args:
        cfg (ExperimentConfig): The experiment.
        out_dir (str | Path | None): If given, write the CSV tables and summary JSON there.
        workers (int): Number of joblib workers.
        logging_enabled (bool): Whether to log progress.

    Returns:
        ExperimentResult: Rows ordered by replication index regardless of scheduling.
    """
    # Set up logging.
    setup_logging(logging_enabled)

    # Build and check the instance.
    instance = build_instance(cfg.instance, cfg.T)
    geometry.require_valid(instance.actions)
    logging.info(f"Simulating {cfg.algorithm} on a {instance.meta.family} instance: T={cfg.T}, {cfg.reps} replications.")

    # Run the replications; joblib returns them in submission order.
    runs = Parallel(n_jobs=workers)(delayed(run_replication)(instance, cfg, rep) for rep in range(cfg.reps))
    logging.info(f"Finished {cfg.reps} replications of {cfg.algorithm}.")

    result = ExperimentResult.from_runs(cfg, runs)
    if out_dir is not None:
        result.save(out_dir)
    return result


class SlopeFit(NamedTuple):
    slope: float
    intercept: float
    r_squared: float


def fit_slope(horizons, regrets=None) -> SlopeFit:
    """
    Least-squares line through (log T, log R).

    Args:
        horizons (array-like): Horizons T_i, or a sequence of (T_i, R_i) pairs when regrets is None.
        regrets (array-like | None): Regrets R_i.

    Returns:
        SlopeFit: Slope, intercept and R^2 of the log-log fit.

    Raises:
        ValidationError: With fewer than three points, or a nonpositive value.
    """
    if regrets is None:
        pairs = np.asarray(horizons, dtype=float)
        horizons, regrets = pairs[:, 0], pairs[:, 1]
    horizons = np.asarray(horizons, dtype=float)
    regrets = np.asarray(regrets, dtype=float)
    if horizons.shape != regrets.shape or horizons.size < 3:
        raise ValidationError("fit_slope needs at least three (T, R) points")
    if np.any(horizons <= 0) or np.any(regrets <= 0):
        raise ValidationError("fit_slope needs positive horizons and regrets")
    if np.unique(horizons).size < 2:
        raise ValidationError("fit_slope needs at least two distinct horizons")

    model = sm.OLS(np.log(regrets), sm.add_constant(np.log(horizons))).fit()
    return SlopeFit(float(model.params[1]), float(model.params[0]), float(model.rsquared))


def _as_floats(value):
    """
    Copy of a JSON value with every number turned into a float.
    """
    if isinstance(value, bool):
        return value
    if isinstance(value, (int, float)):
        return float(value)
    if isinstance(value, dict):
        return {key: _as_floats(item) for key, item in value.items()}
    if isinstance(value, (list, tuple)):
        return [_as_floats(item) for item in value]
    return value


def _canonical(value) -> str:
    return json.dumps(_as_floats(value), sort_keys=True)


def compare(cfgs, out_path=None, workers: int = 1, logging_enabled: bool = True) -> pd.DataFrame:
    """
    Mean regret of several policies on the same instance, paired by replication seed.

    Args:
        cfgs (list[ExperimentConfig]): Configs sharing instance, horizon, seed and reps.
        out_path (str | Path | None): If given, write the table there as CSV.
        workers (int): Number of joblib workers per experiment.
        logging_enabled (bool): Whether to log progress.

    Returns:
        pd.DataFrame: One row per checkpoint, one mean-regret column per config.
    """
    # Set up logging.
    setup_logging(logging_enabled)

    if not cfgs:
        raise ValidationError("compare needs at least one config")
    reference = cfgs[0]
    for cfg in cfgs[1:]:
        if _canonical(cfg.instance) != _canonical(reference.instance) or cfg.T != reference.T:
            raise ValidationError("mismatched instances or horizons across the compared configs")
        if cfg.seed != reference.seed or cfg.reps != reference.reps or cfg.noise_std != reference.noise_std:
            raise ValidationError("paired comparison needs equal seed, reps and noise_std")

    table = None
    seen = {}
    for cfg in cfgs:
        result = simulate(cfg, workers=workers, logging_enabled=logging_enabled)
        seen[cfg.algorithm] = seen.get(cfg.algorithm, 0) + 1
        label = cfg.algorithm if seen[cfg.algorithm] == 1 else f"{cfg.algorithm}_{seen[cfg.algorithm]}"
        if table is None:
            table = result.summary[['checkpoint']].copy()
        table[label] = result.summary['mean'].to_numpy()
    logging.info(f"Compared {len(cfgs)} configs: {list(table.columns[1:])}.")

    if out_path is not None:
        table.to_csv(out_path, index=False)
        logging.info(f"Saved the comparison table to {out_path}.")
    return table


def worst_case_upper_rate(kappa: float, T: float) -> float:
    """
    kappa^{1/3} T^{2/3} log(T)^{1/3}, the order of the worst-case regret guarantee.
    """
    return kappa ** (1 / 3) * T ** (2 / 3) * math.log(T) ** (1 / 3)


def worst_case_lower_bound(kappa: float, T: float) -> float:
    """
    kappa^{1/3} T^{2/3} / (8e), valid for T >= 64 kappa.
    """
    return kappa ** (1 / 3) * T ** (2 / 3) / (8 * math.e)


def gap_lower_bound(d: int, kappa: float, delta_min: float, delta_neq: float, T: float) -> float:
    """
    Largest of the three gap-dependent lower-bound terms, clipped at zero; zero for T < 2.
    """
    if T < 2:
        return 0.0
    log_t = math.log(T)
    within = d / (10 * delta_min) * (log_t - math.log(8 * d * log_t / delta_min ** 2))
    between = (kappa + 1) / (4 * delta_neq ** 2) * (log_t - math.log(8 * kappa * log_t / delta_neq ** 3))
    bias = kappa / (4 * delta_neq ** 2) * min(1.0, math.log(T * delta_neq ** 3 / (8 * kappa)))
    return max(within, between, bias, 0.0)
