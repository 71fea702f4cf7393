"""
Utilities for reading inputs and writing experiment outputs.
"""
from __future__ import (absolute_import, division, print_function, unicode_literals)

import csv
import json
import logging
import os
from io import open

import numpy as np

logger = logging.getLogger(__name__)

TRAJECTORY_SCHEMA = "pathdiff-trajectory/1"


def _is_number(cell):
    try:
        float(cell)
    except ValueError:
        return False
    return True


def read_csv_rows(input_file, delimiter=","):
    """Reads a comma separated value file, skipping blank lines."""
    with open(input_file, "r", encoding="utf-8") as f:
        reader = csv.reader(f, delimiter=delimiter)
        return [line for line in reader if line and not line[0].startswith("#")]


def read_csv_matrix(input_file, delimiter=","):
    """Returns ``(header, matrix)``; ``header`` is None when the first row is numeric."""
    rows = read_csv_rows(input_file, delimiter)
    if not rows:
        raise ValueError("{} is empty".format(input_file))
    header = None
    if not all(_is_number(cell) for cell in rows[0]):
        header, rows = rows[0], rows[1:]
    matrix = np.array([[float(cell) for cell in row] for row in rows])
    logger.info("Read a %s matrix from %s", matrix.shape, input_file)
    return header, matrix


def ensure_parent_dir(path):
    parent = os.path.dirname(os.path.abspath(path))
    if not os.path.exists(parent):
        os.makedirs(parent)


def write_csv(output_file, header, rows, comment=None):
    ensure_parent_dir(output_file)
    with open(output_file, "w", encoding="utf-8", newline="") as f:
        if comment is not None:
            f.write("# {}\n".format(comment))
        writer = csv.writer(f)
        writer.writerow(header)
        for row in rows:
            writer.writerow(["{:.17g}".format(v) if isinstance(v, float) else v for v in row])


def write_trajectory_csv(output_file, trajectory):
    comment = "schema={} experiment={}".format(TRAJECTORY_SCHEMA, trajectory.experiment or "none")
    write_csv(output_file, trajectory.columns, trajectory.rows(), comment=comment)
    logger.info("Wrote %d records to %s", len(trajectory), output_file)


def read_trajectory_csv(input_file):
    from .trajectory import Trajectory
    with open(input_file, "r", encoding="utf-8") as f:
        first = f.readline().strip()
    experiment = None
    if first.startswith("#"):
        fields = dict(item.split("=", 1) for item in first[1:].split() if "=" in item)
        if fields.get("schema") != TRAJECTORY_SCHEMA:
            raise ValueError("Unsupported trajectory schema: {}".format(fields.get("schema")))
        experiment = fields.get("experiment")
    header, matrix = read_csv_matrix(input_file)
    trajectory = Trajectory(header[1:], experiment=experiment)
    for row in matrix:
        trajectory.append(int(row[0]), **dict(zip(header[1:], row[1:])))
    return trajectory


def write_json(output_file, json_object):
    ensure_parent_dir(output_file)
    with open(output_file, "w", encoding="utf-8") as writer:
        writer.write(json.dumps(json_object, indent=2, sort_keys=True) + "\n")


def read_json(input_file):
    with open(input_file, "r", encoding="utf-8") as reader:
        return json.loads(reader.read())
