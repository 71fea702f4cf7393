# coding: utf8
"""Command line entry point: ``pathdiff <experiment> [--config FILE] [--out PATH] ...``."""
from __future__ import absolute_import, division, print_function

import argparse
import logging
import os
import sys

from .errors import ConfigError, InvertibilityFailure
from .experiments import EXPERIMENTS, ExperimentConfig, run_experiment
from .file_utils import read_json, write_json
from .trajectory import Trajectory

logger = logging.getLogger(__name__)

REPORT_EXPERIMENTS = ("counterexample", "conic-diff")


def _suffixed(path, suffix):
    root, ext = os.path.splitext(path)
    return "{}_{}{}".format(root, suffix, ext or ".csv")


def write_result(result, output):
    """Writes trajectories as CSV and reports as JSON; returns the written paths."""
    if isinstance(result, Trajectory):
        result.to_csv(output)
        return [output]
    if isinstance(result, list):
        paths = [_suffixed(output, "draw{:02d}".format(i)) for i in range(len(result))]
        for trajectory, path in zip(result, paths):
            trajectory.to_csv(path)
        return paths
    if isinstance(result, dict) and all(isinstance(v, Trajectory) for v in result.values()):
        paths = []
        for name, trajectory in sorted(result.items()):
            paths.append(_suffixed(output, name))
            trajectory.to_csv(paths[-1])
        return paths
    write_json(output, result)
    return [output]


def build_config(args):
    values = read_json(args.config) if args.config is not None else {}
    values["experiment"] = args.experiment
    if args.seed is not None:
        values["seed"] = args.seed
    if args.force_implicit is not None:
        values["force_implicit"] = args.force_implicit
    if args.out is not None:
        values["output"] = args.out
    return ExperimentConfig.from_dict(values)


def main(argv=None):
    parser = argparse.ArgumentParser(prog="pathdiff")
    parser.add_argument("experiment", choices=sorted(EXPERIMENTS),
                        help="Experiment to run.")
    parser.add_argument("--config", default=None, type=str,
                        help="JSON file overriding the experiment configuration.")
    parser.add_argument("--out", default=None, type=str,
                        help="Output file. Defaults to logs/<experiment>.csv (or .json for reports).")
    parser.add_argument("--seed", default=None, type=int,
                        help="Random seed.")
    parser.add_argument("--force-implicit", dest="force_implicit", action="store_const", const=True,
                        help="Differentiate through singular selections instead of failing the invertibility gate.")
    parser.add_argument("--gate", dest="force_implicit", action="store_const", const=False,
                        help="Stop with exit code 2 at the first selection failing the invertibility gate.")
    parser.add_argument("--verbose", action="store_true",
                        help="Log debug messages.")
    args = parser.parse_args(argv)

    logging.basicConfig(format='%(asctime)s - %(levelname)s - %(name)s -   %(message)s',
                        datefmt='%m/%d/%Y %H:%M:%S',
                        level=logging.DEBUG if args.verbose else logging.INFO)

    try:
        cfg = build_config(args)
    except (ConfigError, ValueError, IOError) as e:
        logger.error("Invalid configuration: %s", e)
        return 1
    logger.info("Running %s with config %s", cfg.experiment, cfg.to_json_string())

    output = cfg.output
    if output is None:
        ext = ".json" if cfg.experiment in REPORT_EXPERIMENTS else ".csv"
        output = os.path.join("logs", cfg.experiment + ext)
    try:
        result = run_experiment(cfg)
    except InvertibilityFailure as e:
        logger.error("%s at point %s; witness:\n%s", e, e.point, e.witness)
        return 2
    except (ValueError, IOError) as e:
        logger.error("Invalid input: %s", e)
        return 1
    for path in write_result(result, output):
        logger.info("Saved %s", path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
