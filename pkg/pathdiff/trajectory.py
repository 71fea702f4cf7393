# coding=utf-8
"""Ordered records emitted by solvers, trainers and experiments."""
from __future__ import absolute_import, division, print_function

import numpy as np

from .file_utils import write_trajectory_csv


class Trajectory(object):
    """Rows ``(k, values...)`` with strictly increasing ``k``.

    Missing values are stored as NaN.
    """

    def __init__(self, columns, experiment=None):
        self.value_columns = list(columns)
        self.experiment = experiment
        self.steps = []
        self.values = []
        self.meta = {}

    @property
    def columns(self):
        return ["k"] + self.value_columns

    def append(self, k, **values):
        k = int(k)
        if self.steps and k <= self.steps[-1]:
            raise ValueError("Trajectory steps should increase: {} after {}".format(k, self.steps[-1]))
        unknown = set(values) - set(self.value_columns)
        if unknown:
            raise ValueError("Unknown trajectory columns: {}".format(sorted(unknown)))
        self.steps.append(k)
        self.values.append([float(values.get(c, np.nan)) for c in self.value_columns])

    def __len__(self):
        return len(self.steps)

    def column(self, name):
        if name == "k":
            return np.array(self.steps)
        return np.array([row[self.value_columns.index(name)] for row in self.values])

    def points(self, names):
        return np.column_stack([self.column(name) for name in names])

    def rows(self):
        for k, row in zip(self.steps, self.values):
            yield [k] + row

    def last(self, name):
        return self.values[-1][self.value_columns.index(name)]

    def to_csv(self, output_file):
        write_trajectory_csv(output_file, self)

    def __eq__(self, other):
        return (isinstance(other, Trajectory) and self.columns == other.columns and self.steps == other.steps
                and np.array_equal(np.array(self.values), np.array(other.values), equal_nan=True))

    def __ne__(self, other):
        return not self == other

    def __repr__(self):
        return "Trajectory(experiment={}, columns={}, records={})".format(
            self.experiment, self.columns, len(self))
