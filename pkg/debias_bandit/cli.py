"""
Command-line interface of debias-bandit.

Subcommands:
    design {g-opt,c-opt,delta-opt}   Optimal designs for an action-set JSON file.
    kappa                            kappa*, its margin form and the alignment estimate.
    instance {worst-case,gap,small-d,biased-evaluation}
                                     Write a problem instance to a directory.
    simulate                         Run a Monte Carlo experiment from a config file.
    fit-slope                        Log-log slope of a regret trace CSV.
    compare                          Paired mean-regret table of several configs.

Exit code 0 on success, 2 on invalid input, 1 on any other failure.
"""

# Import the necessary libraries.
import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from debias_bandit import design, geometry, harness, instances
from debias_bandit.errors import ValidationError
from debias_bandit.geometry import ActionSet
from debias_bandit.utils import setup_logging


def _read_json(path):
    try:
        return json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path} is not valid JSON: {exc}") from exc


def _target(actions: ActionSet, spec: str) -> np.ndarray:
    """
    Parse --c-target: 'last' for the bias direction, or comma-separated coordinates.
    """
    if spec == 'last':
        return actions.bias_direction()
    try:
        c = np.array([float(part) for part in spec.split(',')])
    except ValueError as exc:
        raise ValidationError(f"cannot parse target {spec!r}") from exc
    if c.shape != (actions.d + 1,):
        raise ValidationError(f"target has {c.size} coordinates, expected {actions.d + 1}")
    return c


def _print_json(document):
    print(json.dumps(document, indent=2))


def cmd_design(args):
    actions = ActionSet.load(args.actions)
    if args.kind == 'g-opt':
        dsn, value = design.g_optimal_design(actions, tol=args.tol)
    elif args.kind == 'c-opt':
        dsn, value = design.c_optimal_design(actions, _target(actions, args.c_target))
    else:
        if args.gaps is None:
            raise ValidationError("delta-opt needs --gaps FILE")
        dsn, value = design.delta_optimal_design(actions, np.asarray(_read_json(args.gaps), dtype=float))
    _print_json(dsn.to_dict(value))


def cmd_kappa(args):
    actions = ActionSet.load(args.actions)
    kappa, dsn = geometry.kappa_star(actions)
    margin = geometry.separating_margin(actions)
    _print_json({
        'kappa_star': kappa,
        'kappa_star_margin_form': geometry.kappa_star_margin_form(actions),
        'margin_ratio': None if margin is None else margin[1],
        'alignment_estimate': geometry.alignment_constant_estimate(actions, directions=args.directions),
        'design': dsn.to_dict(kappa)['weights'],
    })


def cmd_instance(args):
    if args.family == 'worst-case':
        if args.T is None:
            raise ValidationError("worst-case instances need --T")
        pair = instances.worst_case_instance(args.kappa, args.d, args.T, omega=args.omega)
        if args.alt not in (1, 2):
            raise ValidationError(f"worst-case alternative must be 1 or 2, got {args.alt}")
        instance = pair[args.alt - 1]
    elif args.family == 'biased-evaluation':
        omega = -0.9 if args.omega is None else args.omega
        instance = instances.biased_evaluation_instance(args.kappa, args.d, omega=omega)
    else:
        if args.dmin is None or args.dneq is None:
            raise ValidationError(f"{args.family} instances need --dmin and --dneq")
        if args.family == 'gap':
            instance = instances.gap_instance(args.kappa, args.d, args.dmin, args.dneq, alternative=args.alt, omega=args.omega)
        else:
            instance = instances.small_d_gap_instance(args.d, args.case, args.kappa, args.dmin, args.dneq, alternative=args.alt)
    instance.save(args.out)
    logging.info(f"Saved the {args.family} instance to {args.out}.")


def cmd_simulate(args):
    cfg = harness.ExperimentConfig.from_json(args.config)
    result = harness.simulate(cfg, out_dir=args.out, workers=args.workers, logging_enabled=not args.quiet)
    _print_json({'config_hash': result.provenance['config_hash'], 'final_mean_regret': result.final_mean()})


def cmd_fit_slope(args):
    rows = harness.read_regret_csv(args.input)
    means = rows.groupby('checkpoint')['cum_regret'].mean()
    positive = means[means > 0]
    if len(positive) < len(means):
        logging.warning(f"Dropped {len(means) - len(positive)} checkpoints with nonpositive mean regret.")
    fit = harness.fit_slope(positive.index.to_numpy(dtype=float), positive.to_numpy())
    _print_json(fit._asdict())


def cmd_compare(args):
    cfgs = [harness.ExperimentConfig.from_json(path) for path in args.configs]
    table = harness.compare(cfgs, out_path=args.out, workers=args.workers, logging_enabled=not args.quiet)
    if args.out is None:
        print(table.to_csv(index=False), end='')


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog='debias-bandit', description='Biased linear bandits and Fair Phased Elimination.')
    parser.add_argument('--quiet', action='store_true', help='disable logging')
    commands = parser.add_subparsers(dest='command', required=True)

    p = commands.add_parser('design', help='optimal designs for an action set')
    p.add_argument('kind', choices=['g-opt', 'c-opt', 'delta-opt'])
    p.add_argument('--actions', required=True)
    p.add_argument('--c-target', default='last')
    p.add_argument('--gaps', help='JSON list with one positive gap per action')
    p.add_argument('--tol', type=float, default=1e-3)
    p.set_defaults(handler=cmd_design)

    p = commands.add_parser('kappa', help='minimal bias-estimation variance of an action set')
    p.add_argument('--actions', required=True)
    p.add_argument('--directions', type=int, default=1000)
    p.set_defaults(handler=cmd_kappa)

    p = commands.add_parser('instance', help='write a lower-bound instance')
    p.add_argument('family', choices=['worst-case', 'gap', 'small-d', 'biased-evaluation'])
    p.add_argument('--kappa', type=float, required=True)
    p.add_argument('--d', type=int, required=True)
    p.add_argument('--T', type=int)
    p.add_argument('--dmin', type=float)
    p.add_argument('--dneq', type=float)
    p.add_argument('--alt', type=int, default=1)
    p.add_argument('--case', type=int, default=1)
    p.add_argument('--omega', type=float)
    p.add_argument('--out', required=True)
    p.set_defaults(handler=cmd_instance)

    p = commands.add_parser('simulate', help='run a Monte Carlo experiment')
    p.add_argument('--config', required=True)
    p.add_argument('--out', required=True)
    p.add_argument('--workers', type=int, default=1)
    p.set_defaults(handler=cmd_simulate)

    p = commands.add_parser('fit-slope', help='log-log slope of a regret trace')
    p.add_argument('--in', dest='input', required=True)
    p.set_defaults(handler=cmd_fit_slope)

    p = commands.add_parser('compare', help='paired comparison of several configs')
    p.add_argument('--configs', nargs='+', required=True)
    p.add_argument('--out')
    p.add_argument('--workers', type=int, default=1)
    p.set_defaults(handler=cmd_compare)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    setup_logging(not args.quiet)
    try:
        args.handler(args)
    except ValidationError as exc:
        logging.error(f"Invalid input: {exc}")
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:
        logging.error(f"{type(exc).__name__}: {exc}")
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
