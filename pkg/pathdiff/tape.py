# coding=utf-8
"""Reverse-mode differentiation over path-differentiable primitives.

A :class:`Tape` records a straight-line program on vectors. Evaluating it
backwards with dense local Jacobians gives one element of a conservative
Jacobian of the program. The element depends on what each nonsmooth primitive
returns at its kink, which is decided by a :class:`SelectionPolicy`.
"""
from __future__ import absolute_import, division, print_function

import copy
import itertools
import json
import logging
from io import open

import numpy as np

from .errors import DomainError, InvalidSelection
from .linalg import as_vector

logger = logging.getLogger(__name__)

FD_STEP = 1e-6
LINE_CHECK_TOL = 1e-5


class SelectionPolicy(object):
    """Values used by nonsmooth primitives exactly at their kinks.

    Each field lives in the Clarke interval of the corresponding primitive at
    its kink. Tie weights of ``max``/``min`` are the weight put on the first
    operand. ``norm_at_zero = c`` selects ``c / sqrt(d) * 1`` for the gradient of
    the euclidean norm at the origin. ``soc_boundary_weight`` is used by cone
    projections: on the boundary of a second-order cone the selection is
    ``w * (limit from the cone or polar interior) + (1 - w) * (limit from outside)``.
    """

    # field: (lowest, highest, default)
    FIELDS = {
        "relu_at_zero": (0.0, 1.0, 0.0),
        "sign_at_zero": (-1.0, 1.0, 0.0),
        "abs_at_zero": (-1.0, 1.0, 0.0),
        "max_tie_weight": (0.0, 1.0, 1.0),
        "min_tie_weight": (0.0, 1.0, 1.0),
        "clamp_at_bound": (0.0, 1.0, 0.0),
        "soft_threshold_at_kink": (0.0, 1.0, 0.0),
        "norm_at_zero": (-1.0, 1.0, 0.0),
        "soc_boundary_weight": (0.0, 1.0, 1.0),
    }

    def __init__(self, randomized=False, seed=0, overrides=None, strict=True, name=None, **values):
        unknown = set(values) - set(self.FIELDS)
        if unknown:
            raise ValueError("Unknown selection fields: {}".format(sorted(unknown)))
        self.values = dict((field, float(values.get(field, spec[2]))) for field, spec in self.FIELDS.items())
        self.randomized = bool(randomized)
        self.seed = int(seed)
        self.strict = bool(strict)
        self.name = name
        self.overrides = {}
        for node, fields in (overrides or {}).items():
            self.overrides[int(node)] = dict((f, float(v)) for f, v in fields.items())
        if self.strict:
            for field, value in self.values.items():
                self._validate(field, value)
            for fields in self.overrides.values():
                for field, value in fields.items():
                    self._validate(field, value)

    def _validate(self, field, value):
        if field not in self.FIELDS:
            raise ValueError("Unknown selection field: {}".format(field))
        low, high, _ = self.FIELDS[field]
        if not low <= value <= high:
            raise InvalidSelection("Invalid {}: {} - should be in [{}, {}]".format(field, value, low, high))

    @property
    def policy_id(self):
        if self.name is not None:
            return self.name
        if self.randomized:
            return "randomized(seed={})".format(self.seed)
        changed = ["{}={:g}".format(f, v) for f, v in sorted(self.values.items()) if v != self.FIELDS[f][2]]
        if self.overrides:
            changed.append("overrides={}".format(len(self.overrides)))
        return "default" if not changed else ",".join(changed)

    def at_kink(self, field, node, count):
        """Values chosen for ``count`` kink elements of tape node ``node``."""
        node_overrides = self.overrides.get(node)
        if node_overrides is not None and field in node_overrides:
            return np.full(count, node_overrides[field])
        if self.randomized:
            low, high, _ = self.FIELDS[field]
            return np.random.RandomState([self.seed, node]).uniform(low, high, count)
        return np.full(count, self.values[field])

    def with_overrides(self, overrides, name=None):
        merged = copy.deepcopy(self.overrides)
        for node, fields in overrides.items():
            merged.setdefault(int(node), {}).update(fields)
        return SelectionPolicy(randomized=self.randomized, seed=self.seed, overrides=merged,
                               strict=self.strict, name=name, **self.values)

    @classmethod
    def lower(cls):
        return cls(name="lower", **dict((f, spec[0]) for f, spec in cls.FIELDS.items()))

    @classmethod
    def upper(cls):
        return cls(name="upper", **dict((f, spec[1]) for f, spec in cls.FIELDS.items()))

    @classmethod
    def variants(cls, num, seed=0):
        """``num`` policies: the interval endpoints first, then seeded random ones."""
        if num < 1:
            raise ValueError("Invalid number of policies: {}".format(num))
        if num == 1:
            return [cls()]
        policies = [cls.lower(), cls.upper()]
        for i in range(num - 2):
            policies.append(cls(randomized=True, seed=seed + i))
        return policies

    def to_dict(self):
        output = dict(self.values)
        output["randomized"] = self.randomized
        output["seed"] = self.seed
        output["strict"] = self.strict
        output["name"] = self.name
        output["overrides"] = dict((str(k), v) for k, v in self.overrides.items())
        return output

    @classmethod
    def from_dict(cls, json_object):
        return cls(**json_object)

    def __repr__(self):
        return "SelectionPolicy({})".format(self.policy_id)


DEFAULT_POLICY = SelectionPolicy(name="default")


def clarke_interval(field):
    """Closed-form Clarke interval at the kink for the primitive behind ``field``."""
    low, high, _ = SelectionPolicy.FIELDS[field]
    return low, high


def _elementwise_jacobian(d, arg_size, out_size):
    d = np.broadcast_to(np.asarray(d, dtype=float), (out_size,))
    if arg_size == out_size:
        return np.diag(d)
    return d.reshape(out_size, 1).copy()


def _pick(d, mask, policy, field, node):
    if np.any(mask):
        d = np.array(d, dtype=float)
        d[mask] = policy.at_kink(field, node, int(np.sum(mask)))
    return d


class Primitive(object):
    """Forward rule and selection-derivative rule of one kind of tape node."""
    kind = None
    arity = 1
    kink_field = None

    def output_size(self, sizes, params):
        return sizes[0]

    def forward(self, args, params, policy, node):
        raise NotImplementedError

    def jacobians(self, args, out, params, policy, node):
        raise NotImplementedError

    def kink_mask(self, args, params):
        return None


class _Unary(Primitive):
    def derivative(self, a, params):
        raise NotImplementedError

    def jacobians(self, args, out, params, policy, node):
        return [np.diag(self.derivative(args[0], params))]


class _Binary(Primitive):
    arity = 2

    def output_size(self, sizes, params):
        a, b = sizes
        if a != b and a != 1 and b != 1:
            raise ValueError("Cannot broadcast operands of sizes {} and {} in {}".format(a, b, self.kind))
        return max(a, b)

    def derivatives(self, a, b, params, policy, node):
        raise NotImplementedError

    def jacobians(self, args, out, params, policy, node):
        da, db = self.derivatives(args[0], args[1], params, policy, node)
        return [_elementwise_jacobian(da, args[0].size, out.size),
                _elementwise_jacobian(db, args[1].size, out.size)]


class Const(Primitive):
    kind = "const"
    arity = 0

    def output_size(self, sizes, params):
        return np.atleast_1d(params["value"]).size

    def forward(self, args, params, policy, node):
        return np.atleast_1d(np.asarray(params["value"], dtype=float)).copy()

    def jacobians(self, args, out, params, policy, node):
        return []


class Add(_Binary):
    kind = "add"

    def forward(self, args, params, policy, node):
        return args[0] + args[1]

    def derivatives(self, a, b, params, policy, node):
        return 1.0, 1.0


class Sub(_Binary):
    kind = "sub"

    def forward(self, args, params, policy, node):
        return args[0] - args[1]

    def derivatives(self, a, b, params, policy, node):
        return 1.0, -1.0


class Mul(_Binary):
    kind = "mul"

    def forward(self, args, params, policy, node):
        return args[0] * args[1]

    def derivatives(self, a, b, params, policy, node):
        return b, a


class Div(_Binary):
    kind = "div"

    def forward(self, args, params, policy, node):
        if np.any(args[1] == 0.0):
            raise DomainError("Division by zero at node {}".format(node))
        return args[0] / args[1]

    def derivatives(self, a, b, params, policy, node):
        return 1.0 / b, -a / (b * b)


class Max(_Binary):
    kind = "max"
    kink_field = "max_tie_weight"

    def forward(self, args, params, policy, node):
        return np.maximum(args[0], args[1])

    def kink_mask(self, args, params):
        return np.broadcast_to(args[0] == args[1], (max(args[0].size, args[1].size),))

    def derivatives(self, a, b, params, policy, node):
        a, b = np.broadcast_arrays(a, b)
        da = _pick((a > b).astype(float), a == b, policy, self.kink_field, node)
        return da, 1.0 - da


class Min(_Binary):
    kind = "min"
    kink_field = "min_tie_weight"

    def forward(self, args, params, policy, node):
        return np.minimum(args[0], args[1])

    def kink_mask(self, args, params):
        return np.broadcast_to(args[0] == args[1], (max(args[0].size, args[1].size),))

    def derivatives(self, a, b, params, policy, node):
        a, b = np.broadcast_arrays(a, b)
        da = _pick((a < b).astype(float), a == b, policy, self.kink_field, node)
        return da, 1.0 - da


class SoftThreshold(_Binary):
    """``sign(u) * max(|u| - t, 0)`` with threshold operand ``t >= 0``."""
    kind = "soft_threshold"
    kink_field = "soft_threshold_at_kink"

    def output_size(self, sizes, params):
        if sizes[1] != 1 and sizes[1] != sizes[0]:
            raise ValueError("Threshold should have size 1 or {}, got {}".format(sizes[0], sizes[1]))
        return sizes[0]

    def forward(self, args, params, policy, node):
        u, t = args
        if np.any(t < 0.0):
            raise DomainError("Negative soft-threshold level at node {}".format(node))
        return np.sign(u) * np.maximum(np.abs(u) - t, 0.0)

    def kink_mask(self, args, params):
        u, t = np.broadcast_arrays(*args)
        return np.abs(u) == t

    def derivatives(self, u, t, params, policy, node):
        u, t = np.broadcast_arrays(u, t)
        du = _pick((np.abs(u) > t).astype(float), np.abs(u) == t, policy, self.kink_field, node)
        return du, -np.sign(u) * du


class Neg(_Unary):
    kind = "neg"

    def forward(self, args, params, policy, node):
        return -args[0]

    def derivative(self, a, params):
        return -np.ones_like(a)


class Scale(_Unary):
    kind = "scale"

    def forward(self, args, params, policy, node):
        return float(params["factor"]) * args[0]

    def derivative(self, a, params):
        return np.full_like(a, float(params["factor"]))


class Power(_Unary):
    """``a ** exponent``; non-integer exponents need positive inputs."""
    kind = "power"

    def forward(self, args, params, policy, node):
        a, p = args[0], float(params["exponent"])
        if not (p.is_integer() and p >= 1.0) and np.any(a <= 0.0):
            raise DomainError("power with exponent {} needs positive inputs (node {})".format(p, node))
        return a ** p

    def derivative(self, a, params):
        p = float(params["exponent"])
        return p * a ** (p - 1.0)


class Exp(_Unary):
    kind = "exp"

    def forward(self, args, params, policy, node):
        return np.exp(args[0])

    def derivative(self, a, params):
        return np.exp(a)


class Log(_Unary):
    kind = "log"

    def forward(self, args, params, policy, node):
        if np.any(args[0] <= 0.0):
            raise DomainError("log of a nonpositive value at node {}".format(node))
        return np.log(args[0])

    def derivative(self, a, params):
        return 1.0 / a


class Tanh(_Unary):
    kind = "tanh"

    def forward(self, args, params, policy, node):
        return np.tanh(args[0])

    def derivative(self, a, params):
        return 1.0 - np.tanh(a) ** 2


class Relu(Primitive):
    kind = "relu"
    kink_field = "relu_at_zero"

    def forward(self, args, params, policy, node):
        return np.maximum(args[0], 0.0)

    def kink_mask(self, args, params):
        return args[0] == 0.0

    def jacobians(self, args, out, params, policy, node):
        a = args[0]
        return [np.diag(_pick((a > 0.0).astype(float), a == 0.0, policy, self.kink_field, node))]


class Abs(Primitive):
    kind = "abs"
    kink_field = "abs_at_zero"

    def forward(self, args, params, policy, node):
        return np.abs(args[0])

    def kink_mask(self, args, params):
        return args[0] == 0.0

    def jacobians(self, args, out, params, policy, node):
        a = args[0]
        return [np.diag(_pick(np.sign(a), a == 0.0, policy, self.kink_field, node))]


class Sign(Primitive):
    """Piecewise constant; the policy sets the value at 0, the derivative is 0."""
    kind = "sign"
    kink_field = "sign_at_zero"

    def forward(self, args, params, policy, node):
        a = args[0]
        return _pick(np.sign(a), a == 0.0, policy, self.kink_field, node)

    def kink_mask(self, args, params):
        return args[0] == 0.0

    def jacobians(self, args, out, params, policy, node):
        return [np.zeros((out.size, args[0].size))]


class Clamp(Primitive):
    kind = "clamp"
    kink_field = "clamp_at_bound"

    def forward(self, args, params, policy, node):
        return np.clip(args[0], params["lower"], params["upper"])

    def kink_mask(self, args, params):
        a = args[0]
        return (a == params["lower"]) | (a == params["upper"])

    def jacobians(self, args, out, params, policy, node):
        a = args[0]
        inside = ((a > params["lower"]) & (a < params["upper"])).astype(float)
        return [np.diag(_pick(inside, self.kink_mask(args, params), policy, self.kink_field, node))]


class Affine(Primitive):
    """``matrix @ a + bias``."""
    kind = "affine"

    def output_size(self, sizes, params):
        matrix = np.atleast_2d(params["matrix"])
        if matrix.shape[1] != sizes[0]:
            raise ValueError("Affine matrix has {} columns, operand has size {}".format(matrix.shape[1], sizes[0]))
        return matrix.shape[0]

    def forward(self, args, params, policy, node):
        out = np.atleast_2d(params["matrix"]).dot(args[0])
        if params.get("bias") is not None:
            out = out + params["bias"]
        return out

    def jacobians(self, args, out, params, policy, node):
        return [np.atleast_2d(np.asarray(params["matrix"], dtype=float)).copy()]


class Dot(Primitive):
    kind = "dot"
    arity = 2

    def output_size(self, sizes, params):
        if sizes[0] != sizes[1]:
            raise ValueError("dot operands have sizes {} and {}".format(*sizes))
        return 1

    def forward(self, args, params, policy, node):
        return np.atleast_1d(args[0].dot(args[1]))

    def jacobians(self, args, out, params, policy, node):
        return [args[1].reshape(1, -1).copy(), args[0].reshape(1, -1).copy()]


class Sum(Primitive):
    kind = "sum"

    def output_size(self, sizes, params):
        return 1

    def forward(self, args, params, policy, node):
        return np.atleast_1d(np.sum(args[0]))

    def jacobians(self, args, out, params, policy, node):
        return [np.ones((1, args[0].size))]


class Norm(Primitive):
    kind = "norm"
    kink_field = "norm_at_zero"

    def output_size(self, sizes, params):
        return 1

    def forward(self, args, params, policy, node):
        return np.atleast_1d(np.linalg.norm(args[0]))

    def kink_mask(self, args, params):
        return np.atleast_1d(not np.any(args[0]))

    def jacobians(self, args, out, params, policy, node):
        a = args[0]
        if out[0] > 0.0:
            return [(a / out[0]).reshape(1, -1)]
        c = policy.at_kink(self.kink_field, node, 1)[0]
        return [np.full((1, a.size), c / np.sqrt(a.size))]


class SquaredNorm(Primitive):
    kind = "squared_norm"

    def output_size(self, sizes, params):
        return 1

    def forward(self, args, params, policy, node):
        return np.atleast_1d(args[0].dot(args[0]))

    def jacobians(self, args, out, params, policy, node):
        return [2.0 * args[0].reshape(1, -1)]


class Slice(Primitive):
    kind = "slice"

    def output_size(self, sizes, params):
        start, stop = int(params["start"]), int(params["stop"])
        if not 0 <= start < stop <= sizes[0]:
            raise ValueError("Invalid slice [{}:{}] of an operand of size {}".format(start, stop, sizes[0]))
        return stop - start

    def forward(self, args, params, policy, node):
        return args[0][int(params["start"]):int(params["stop"])].copy()

    def jacobians(self, args, out, params, policy, node):
        return [np.eye(args[0].size)[int(params["start"]):int(params["stop"])]]


class Concat(Primitive):
    kind = "concat"
    arity = None

    def output_size(self, sizes, params):
        return int(sum(sizes))

    def forward(self, args, params, policy, node):
        return np.concatenate(args)

    def jacobians(self, args, out, params, policy, node):
        jacs, offset = [], 0
        for a in args:
            block = np.zeros((out.size, a.size))
            block[offset:offset + a.size] = np.eye(a.size)
            jacs.append(block)
            offset += a.size
        return jacs


PRIMITIVES = dict((cls.kind, cls()) for cls in (
    Const, Add, Sub, Mul, Div, Max, Min, SoftThreshold, Neg, Scale, Power, Exp, Log, Tanh,
    Relu, Abs, Sign, Clamp, Affine, Dot, Sum, Norm, SquaredNorm, Slice, Concat))

_ARRAY_PARAMS = ("value", "matrix", "bias", "lower", "upper")


class TapeNode(object):
    def __init__(self, kind, operands, params, size):
        self.kind = kind
        self.operands = tuple(operands)
        self.params = params
        self.size = size


class Var(object):
    """Handle on a tape node; arithmetic operators record new nodes."""
    # let numpy scalars on the left defer to the reflected operators
    __array_ufunc__ = None

    def __init__(self, tape, index):
        self.tape = tape
        self.index = index

    @property
    def size(self):
        return self.tape.nodes[self.index].size

    def __add__(self, other):
        return self.tape.add(self, other)

    def __radd__(self, other):
        return self.tape.add(other, self)

    def __sub__(self, other):
        return self.tape.sub(self, other)

    def __rsub__(self, other):
        return self.tape.sub(other, self)

    def __mul__(self, other):
        if np.isscalar(other):
            return self.tape.scale(self, other)
        return self.tape.mul(self, other)

    def __rmul__(self, other):
        if np.isscalar(other):
            return self.tape.scale(self, other)
        return self.tape.mul(other, self)

    def __truediv__(self, other):
        if np.isscalar(other):
            return self.tape.scale(self, 1.0 / other)
        return self.tape.div(self, other)

    def __rtruediv__(self, other):
        return self.tape.div(other, self)

    __div__ = __truediv__
    __rdiv__ = __rtruediv__

    def __neg__(self):
        return self.tape.neg(self)

    def __getitem__(self, key):
        if isinstance(key, slice):
            if key.step not in (None, 1):
                raise ValueError("Strided slices are not supported")
            start, stop, _ = key.indices(self.size)
            return self.tape.slice(self, start, stop)
        index = int(key) % self.size
        return self.tape.slice(self, index, index + 1)

    def __repr__(self):
        return "Var(node={}, kind={}, size={})".format(self.index, self.tape.nodes[self.index].kind, self.size)


class Tape(object):
    """A straight-line program from R^n to R^m.

    Node 0 is the input. Nodes only reference earlier nodes so the program is
    acyclic by construction. ``set_output`` picks the output node.
    """

    def __init__(self, input_size):
        if int(input_size) < 1:
            raise ValueError("Invalid input size: {}".format(input_size))
        self.input_size = int(input_size)
        self.nodes = [TapeNode("input", (), {}, self.input_size)]
        self.output_index = None

    # building

    def input(self):
        return Var(self, 0)

    def _lift(self, value):
        if isinstance(value, Var):
            if value.tape is not self:
                raise ValueError("Operand belongs to another tape")
            return value
        return self.const(value)

    def apply(self, kind, *operands, **params):
        if kind not in PRIMITIVES:
            raise ValueError("Primitive not found: %s" % kind)
        primitive = PRIMITIVES[kind]
        operands = [self._lift(op) for op in operands]
        if primitive.arity is not None and len(operands) != primitive.arity:
            raise ValueError("{} takes {} operands, got {}".format(kind, primitive.arity, len(operands)))
        for name in _ARRAY_PARAMS:
            if params.get(name) is not None:
                params[name] = np.asarray(params[name], dtype=float)
        size = primitive.output_size([op.size for op in operands], params)
        self.nodes.append(TapeNode(kind, [op.index for op in operands], params, size))
        return Var(self, len(self.nodes) - 1)

    def const(self, value):
        return self.apply("const", value=value)

    def add(self, a, b):
        return self.apply("add", a, b)

    def sub(self, a, b):
        return self.apply("sub", a, b)

    def mul(self, a, b):
        return self.apply("mul", a, b)

    def div(self, a, b):
        return self.apply("div", a, b)

    def neg(self, a):
        return self.apply("neg", a)

    def scale(self, a, factor):
        return self.apply("scale", a, factor=float(factor))

    def affine(self, a, matrix, bias=None):
        return self.apply("affine", a, matrix=matrix, bias=bias)

    def dot(self, a, b):
        return self.apply("dot", a, b)

    def sum(self, a):
        return self.apply("sum", a)

    def power(self, a, exponent):
        return self.apply("power", a, exponent=float(exponent))

    def exp(self, a):
        return self.apply("exp", a)

    def log(self, a):
        return self.apply("log", a)

    def tanh(self, a):
        return self.apply("tanh", a)

    def relu(self, a):
        return self.apply("relu", a)

    def abs(self, a):
        return self.apply("abs", a)

    def sign(self, a):
        return self.apply("sign", a)

    def max(self, a, b):
        return self.apply("max", a, b)

    def min(self, a, b):
        return self.apply("min", a, b)

    def clamp(self, a, lower, upper):
        if np.any(np.asarray(lower) > np.asarray(upper)):
            raise ValueError("clamp lower bound exceeds upper bound")
        return self.apply("clamp", a, lower=lower, upper=upper)

    def soft_threshold(self, u, t):
        return self.apply("soft_threshold", u, t)

    def norm(self, a):
        return self.apply("norm", a)

    def squared_norm(self, a):
        return self.apply("squared_norm", a)

    def slice(self, a, start, stop):
        return self.apply("slice", a, start=int(start), stop=int(stop))

    def concat(self, *parts):
        return self.apply("concat", *parts)

    def inline(self, subtape, var):
        """Records ``subtape`` applied to ``var`` and returns its output handle."""
        var = self._lift(var)
        if var.size != subtape.input_size:
            raise ValueError("Sub-tape expects input size {}, got {}".format(subtape.input_size, var.size))
        mapping = {0: var.index}
        for i, node in enumerate(subtape.nodes[1:], start=1):
            self.nodes.append(TapeNode(node.kind, [mapping[j] for j in node.operands],
                                       copy.deepcopy(node.params), node.size))
            mapping[i] = len(self.nodes) - 1
        return Var(self, mapping[subtape.output])

    def set_output(self, var):
        var = self._lift(var)
        self.output_index = var.index
        return self

    @property
    def output(self):
        if self.output_index is None:
            return len(self.nodes) - 1
        return self.output_index

    @property
    def output_size(self):
        return self.nodes[self.output].size

    # evaluation

    def forward(self, x, policy=None):
        """Evaluates the program. Returns ``(y, trace)`` with ``trace`` the per-node values."""
        policy = DEFAULT_POLICY if policy is None else policy
        x = as_vector(x, "tape input")
        if x.size != self.input_size:
            raise ValueError("Tape expects an input of size {}, got {}".format(self.input_size, x.size))
        trace = [x]
        for index, node in enumerate(self.nodes[1:], start=1):
            args = [trace[j] for j in node.operands]
            trace.append(np.atleast_1d(PRIMITIVES[node.kind].forward(args, node.params, policy, index)))
        return trace[self.output].copy(), trace

    def __call__(self, x, policy=None):
        return self.forward(x, policy)[0]

    def jacobian_selection(self, x, policy=None):
        policy = DEFAULT_POLICY if policy is None else policy
        y, trace = self.forward(x, policy)
        out = self.output
        adjoints = [None] * len(self.nodes)
        adjoints[out] = np.eye(self.nodes[out].size)
        for index in range(out, 0, -1):
            adjoint = adjoints[index]
            if adjoint is None:
                continue
            node = self.nodes[index]
            args = [trace[j] for j in node.operands]
            local = PRIMITIVES[node.kind].jacobians(args, trace[index], node.params, policy, index)
            for operand, jac in zip(node.operands, local):
                contribution = adjoint.dot(jac)
                if adjoints[operand] is None:
                    adjoints[operand] = contribution
                else:
                    adjoints[operand] = adjoints[operand] + contribution
        matrix = adjoints[0] if adjoints[0] is not None else np.zeros((y.size, self.input_size))
        return JacobianSelection(matrix, trace[0], policy.policy_id)

    def kink_nodes(self, x, policy=None):
        """``(node index, policy field)`` of nodes evaluated exactly at a kink."""
        _, trace = self.forward(x, policy)
        found = []
        for index, node in enumerate(self.nodes[1:], start=1):
            primitive = PRIMITIVES[node.kind]
            if primitive.kink_field is None:
                continue
            mask = primitive.kink_mask([trace[j] for j in node.operands], node.params)
            if mask is not None and np.any(mask):
                found.append((index, primitive.kink_field))
        return found

    def branch_policies(self, x, base=None, max_kinks=12):
        """Policies covering every endpoint combination of the kinks met at ``x``."""
        base = DEFAULT_POLICY if base is None else base
        kinks = self.kink_nodes(x, base)
        if len(kinks) > max_kinks:
            raise ValueError("{} kinks at this point, more than max_kinks={}".format(len(kinks), max_kinks))
        if not kinks:
            return [base]
        endpoints = [clarke_interval(field) for _, field in kinks]
        policies = []
        for combo in itertools.product(*endpoints):
            overrides = dict((node, {field: value}) for (node, field), value in zip(kinks, combo))
            policies.append(base.with_overrides(overrides, name="branch{}".format(len(policies))))
        return policies

    # serialization

    def to_dict(self):
        nodes = []
        for node in self.nodes[1:]:
            params = {}
            for key, value in node.params.items():
                params[key] = value.tolist() if isinstance(value, np.ndarray) else value
            nodes.append({"kind": node.kind, "operands": list(node.operands), "params": params})
        return {"input_size": self.input_size, "output": self.output, "nodes": nodes}

    @classmethod
    def from_dict(cls, json_object):
        tape = cls(json_object["input_size"])
        for entry in json_object["nodes"]:
            operands = []
            for j in entry["operands"]:
                if not 0 <= j < len(tape.nodes):
                    raise ValueError("Node {} references node {} which does not precede it".format(len(tape.nodes), j))
                operands.append(Var(tape, j))
            tape.apply(entry["kind"], *operands, **dict(entry.get("params", {})))
        if "output" in json_object:
            tape.output_index = int(json_object["output"])
        return tape

    def to_json_string(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def to_json_file(self, json_file_path):
        with open(json_file_path, "w", encoding="utf-8") as writer:
            writer.write(self.to_json_string())

    @classmethod
    def from_json_file(cls, json_file):
        with open(json_file, "r", encoding="utf-8") as reader:
            return cls.from_dict(json.loads(reader.read()))

    def __repr__(self):
        return "Tape(input_size={}, nodes={}, output_size={})".format(
            self.input_size, len(self.nodes), self.output_size)


class JacobianSelection(object):
    """One matrix of a conservative Jacobian, with the point and the policy that produced it."""

    def __init__(self, matrix, point, policy_id, **info):
        self.matrix = np.atleast_2d(matrix)
        self.point = np.asarray(point, dtype=float).copy()
        self.policy_id = policy_id
        self.info = info

    @property
    def shape(self):
        return self.matrix.shape

    def __getattr__(self, name):
        info = self.__dict__.get("info", {})
        if name in info:
            return info[name]
        raise AttributeError(name)

    def __repr__(self):
        return "JacobianSelection(shape={}, policy={})".format(self.matrix.shape, self.policy_id)


class LineCheckReport(object):
    def __init__(self, num_samples, num_agree, max_error):
        self.num_samples = num_samples
        self.num_agree = num_agree
        self.max_error = max_error

    @property
    def fraction(self):
        return self.num_agree / float(self.num_samples) if self.num_samples else 1.0

    def __repr__(self):
        return "LineCheckReport(agree={}/{}, max_error={:.3e})".format(
            self.num_agree, self.num_samples, self.max_error)


def forward(tape, x, policy=None):
    return tape.forward(x, policy)


def jacobian_selection(tape, x, policy=None):
    return tape.jacobian_selection(x, policy)


def finite_difference_jacobian(tape, x, step=FD_STEP, policy=None):
    """Central finite differences, one column per input coordinate."""
    x = as_vector(x)
    columns = []
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = step
        columns.append((tape(x + e, policy) - tape(x - e, policy)) / (2.0 * step))
    return np.array(columns).T


def residual_line_check(tape, x, v, num_samples=100, policy=None, step=FD_STEP, tol=LINE_CHECK_TOL, seed=0):
    """Compares ``J(x + t v) v`` with finite differences along the line for uniform ``t`` in [0, 1].

    For a conservative Jacobian the two agree for almost every ``t``.
    """
    x, v = as_vector(x), as_vector(v)
    if not np.any(v):
        raise ValueError("Direction v should be nonzero")
    rng = np.random.RandomState(seed)
    num_agree, max_error = 0, 0.0
    for t in rng.uniform(0.0, 1.0, num_samples):
        point = x + t * v
        fd = (tape(point + step * v, policy) - tape(point - step * v, policy)) / (2.0 * step)
        jv = tape.jacobian_selection(point, policy).matrix.dot(v)
        error = float(np.max(np.abs(fd - jv)))
        max_error = max(max_error, error)
        if error <= tol * max(1.0, float(np.max(np.abs(jv)))):
            num_agree += 1
    report = LineCheckReport(num_samples, num_agree, max_error)
    logger.debug("Line check: %s", report)
    return report
