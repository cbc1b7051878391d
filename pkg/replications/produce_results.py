# Import the necessary libraries.
import logging
import time
from pathlib import Path

import pandas as pd

from debias_bandit import harness
from debias_bandit.harness import ExperimentConfig
from debias_bandit.utils import setup_logging

# Output directory of the tables.
RESULTS_DIR = Path(__file__).resolve().parent / 'results'

# Horizons of the scaling experiments.
SCALING_HORIZONS = [2 ** 12, 2 ** 14, 2 ** 16]

# Worst-case set with kappa* = 4 in dimension 2, rebuilt for every horizon.
WORST_CASE = {'family': 'worst-case', 'kappa': 4, 'd': 2, 'alternative': 1}

# The same action set with a fixed parameter whose evaluation argmax is suboptimal by about 1.27.
BIASED_EVALUATION = {'family': 'biased-evaluation', 'kappa': 4, 'd': 2}

GAP_CASE = {'family': 'gap', 'kappa': 4, 'd': 4, 'delta_min': 0.1, 'delta_neq': 0.2}

# Five actions in R^2: three in group +1, two in group -1.
COVERAGE_CASE = {
    'actions': {'d': 2, 'actions': [
        {'x': [1.0, 0.0], 'z': 1},
        {'x': [0.0, 1.0], 'z': -1},
        {'x': [0.5, 0.5], 'z': 1},
        {'x': [-0.5, 0.2], 'z': -1},
        {'x': [0.3, -0.6], 'z': 1},
    ]},
    'theta': {'gamma': [0.6, 0.3], 'omega': 0.2},
}


def final_regret_by_horizon(experiment: str, instance, algorithm: str, reps: int, seed: int, workers: int) -> pd.DataFrame:
    """
    Mean final regret of one policy at every scaling horizon.

    Args:
        experiment (str): Name of the experiment, used for the output directories.
        instance (dict): Instance spec of the configs; worst-case instances are rebuilt per horizon.
        algorithm (str): Policy name.
        reps (int): Replications per horizon.
        seed (int): Master seed.
        workers (int): Number of joblib workers.

    Returns:
        pd.DataFrame: Columns T, mean_regret, sd, ci_low, ci_high, violation_rate.
    """
    rows = []
    for T in SCALING_HORIZONS:
        cfg = ExperimentConfig(instance=instance, algorithm=algorithm, T=T, reps=reps, seed=seed)
        result = harness.simulate(cfg, out_dir=RESULTS_DIR / experiment / f"{algorithm}_T{T}", workers=workers)
        final = result.summary.iloc[-1]
        rows.append({'T': T, 'mean_regret': final['mean'], 'sd': final['sd'], 'ci_low': final['ci_low'], 'ci_high': final['ci_high'], 'violation_rate': result.good_event_violation_rate()})
    return pd.DataFrame(rows)


def worst_case_scaling(reps: int = 50, seed: int = 0, workers: int = 1) -> pd.DataFrame:
    """
    Fair Phased Elimination on the kappa=4, d=2 worst-case problem: fitted slope of log regret
    against log T, expected in [0.55, 0.82].
    """
    table = final_regret_by_horizon('worst_case_scaling', WORST_CASE, 'fpe', reps, seed, workers)
    fit = harness.fit_slope(table['T'], table['mean_regret'])
    table['slope'] = fit.slope
    table['upper_rate'] = [harness.worst_case_upper_rate(4, T) for T in table['T']]
    table['lower_bound'] = [harness.worst_case_lower_bound(4, T) for T in table['T']]
    logging.info(f"Worst-case slope {fit.slope:.3f} (R^2 {fit.r_squared:.3f}).")
    return table


def linear_regret_contrast(reps: int = 50, seed: int = 0, workers: int = 1) -> pd.DataFrame:
    """
    The unfair eliminator against Fair Phased Elimination on the biased-evaluation instance: the
    unfair slope should be at least 0.9 and its final regret at least three times larger.
    """
    tables = []
    for algorithm in ('fpe', 'unfair-pe'):
        table = final_regret_by_horizon('linear_regret_contrast', BIASED_EVALUATION, algorithm, reps, seed, workers)
        table['slope'] = harness.fit_slope(table['T'], table['mean_regret']).slope
        table.insert(0, 'algorithm', algorithm)
        tables.append(table)
    table = pd.concat(tables, ignore_index=True)
    final = table[table['T'] == SCALING_HORIZONS[-1]].set_index('algorithm')['mean_regret']
    logging.info(f"Final regret ratio unfair-pe / fpe = {final['unfair-pe'] / final['fpe']:.3f}.")
    return table


def gap_dependent_growth(reps: int = 50, seed: int = 0, workers: int = 1) -> pd.DataFrame:
    """
    Fair Phased Elimination on the gap problem (kappa=4, d=4, delta_min=0.1, delta_neq=0.2):
    regret at T=2^16 over regret at T=2^13 should stay below 2.
    """
    cfg = ExperimentConfig(instance=GAP_CASE, algorithm='fpe', T=2 ** 16, reps=reps, seed=seed)
    result = harness.simulate(cfg, out_dir=RESULTS_DIR / 'gap_dependent_growth', workers=workers)
    summary = result.summary.set_index('checkpoint')
    ratio = summary.loc[2 ** 16, 'mean'] / summary.loc[2 ** 13, 'mean']
    bounds = [harness.gap_lower_bound(4, 4, 0.1, 0.2, T) for T in summary.index]
    logging.info(f"Gap-dependent regret ratio R(2^16) / R(2^13) = {ratio:.3f}.")
    return summary.reset_index().assign(ratio_16_over_13=ratio, gap_lower_bound=bounds)


def good_event_coverage(reps: int = 200, seed: int = 0, workers: int = 1) -> pd.DataFrame:
    """
    Share of runs with delta=0.05 in which any phase estimate misses its accuracy eps_l; at
    most 2 delta plus sampling slack, i.e. 0.17.
    """
    cfg = ExperimentConfig(instance=COVERAGE_CASE, algorithm='fpe', T=2 ** 14, delta=0.05, reps=reps, seed=seed)
    result = harness.simulate(cfg, out_dir=RESULTS_DIR / 'good_event_coverage', workers=workers)
    rate = result.good_event_violation_rate()
    logging.info(f"Good-event violation rate {rate:.3f} over {reps} runs.")
    return pd.DataFrame([{'delta': 0.05, 'reps': reps, 'violation_rate': rate}])


def produce_results(workers: int = 1, logging_enabled: bool = True):
    """
    Run the regret-scaling experiments and write one CSV table per experiment.
    """

    # Set up logging.
    setup_logging(logging_enabled)
    RESULTS_DIR.mkdir(parents=True, exist_ok=True)

    # Worst-case scaling.
    start_time = time.time()
    worst_case_scaling(workers=workers).to_csv(RESULTS_DIR / 'worst_case_scaling.csv', index=False)
    print("Produced the worst-case scaling table.")
    print("Time Elapsed: ", time.time() - start_time)

    # Linear regret of the unfair eliminator.
    start_time = time.time()
    linear_regret_contrast(workers=workers).to_csv(RESULTS_DIR / 'linear_regret_contrast.csv', index=False)
    print("Produced the linear-regret contrast table.")
    print("Time Elapsed: ", time.time() - start_time)

    # Gap-dependent growth.
    start_time = time.time()
    gap_dependent_growth(workers=workers).to_csv(RESULTS_DIR / 'gap_dependent_growth.csv', index=False)
    print("Produced the gap-dependent growth table.")
    print("Time Elapsed: ", time.time() - start_time)

    # Good-event coverage.
    start_time = time.time()
    good_event_coverage(workers=workers).to_csv(RESULTS_DIR / 'good_event_coverage.csv', index=False)
    print("Produced the good-event coverage table.")
    print("Time Elapsed: ", time.time() - start_time)


if __name__ == "__main__":
    produce_results(workers=-1)
