"""Exact input derivatives of tanh MLPs and parameter gradients of losses.

Two pieces cooperate here:

* :class:`Jet2` carries a field value together with its first and second
  partial derivatives in ``x`` and ``t``.  :func:`jet_forward` pushes a batch
  of points through a network in forward mode, so every slot is exact (no
  finite differencing).
* :class:`Var` is a minimal reverse-mode tape over numpy arrays.  The jet
  propagation is written against plain array arithmetic, so running it with
  ``Var`` leaves instead of arrays records the whole jet-augmented forward
  pass, and :func:`loss_grad` differentiates any scalar loss built from it.

The tape lives only for one evaluation; nothing is cached between calls.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .exceptions import NumericError, StructuralError

SLOTS = ("v", "dx", "dt", "dxx", "dtt", "dxt")

_counter = itertools.count()


def _unbroadcast(grad, shape):
    """Sum ``grad`` down to ``shape`` after numpy broadcasting."""
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


class Var:
    """Array node on a reverse-mode tape.

    ``parents`` holds ``(node, vjp)`` pairs where ``vjp`` maps the adjoint of
    this node to the adjoint contribution of ``node``.
    """

    __slots__ = ("value", "parents", "op", "order", "grad")
    __array_ufunc__ = None  # make ndarray (op) Var defer to Var

    def __init__(self, value, parents=(), op="leaf"):
        self.value = np.asarray(value, dtype=np.float64)
        self.parents = parents
        self.op = op
        self.order = next(_counter)
        self.grad = None

    @property
    def shape(self):
        return self.value.shape

    def __repr__(self):
        return f"Var(op={self.op!r}, shape={self.value.shape})"

    # arithmetic -------------------------------------------------------
    def __add__(self, other):
        if not isinstance(other, Var):
            other_v = np.asarray(other, dtype=np.float64)
            sa = self.shape
            return Var(self.value + other_v, ((self, lambda g: _unbroadcast(g, sa)),), "add")
        sa, sb = self.shape, other.shape
        return Var(
            self.value + other.value,
            ((self, lambda g: _unbroadcast(g, sa)), (other, lambda g: _unbroadcast(g, sb))),
            "add",
        )

    __radd__ = __add__

    def __neg__(self):
        return Var(-self.value, ((self, lambda g: -g),), "neg")

    def __sub__(self, other):
        return self + (-other if isinstance(other, Var) else -np.asarray(other, dtype=np.float64))

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if not isinstance(other, Var):
            c = np.asarray(other, dtype=np.float64)
            sa = self.shape
            return Var(self.value * c, ((self, lambda g: _unbroadcast(g * c, sa)),), "mul")
        a, b = self.value, other.value
        sa, sb = self.shape, other.shape
        return Var(
            a * b,
            ((self, lambda g: _unbroadcast(g * b, sa)), (other, lambda g: _unbroadcast(g * a, sb))),
            "mul",
        )

    __rmul__ = __mul__

    def __matmul__(self, other):
        # only the (batch, k) @ (k, m) case is needed by the MLP
        a = self.value
        if isinstance(other, Var):
            b = other.value
            return Var(a @ b, ((self, lambda g: g @ b.T), (other, lambda g: a.T @ g)), "matmul")
        b = np.asarray(other, dtype=np.float64)
        return Var(a @ b, ((self, lambda g: g @ b.T),), "matmul")

    def __rmatmul__(self, other):
        a = np.asarray(other, dtype=np.float64)
        b = self.value
        return Var(a @ b, ((self, lambda g: a.T @ g),), "matmul")

    @property
    def T(self):
        return Var(self.value.T, ((self, lambda g: g.T),), "transpose")

    def __getitem__(self, idx):
        shape = self.shape

        def vjp(g):
            out = np.zeros(shape)
            np.add.at(out, idx, g)
            return out

        return Var(self.value[idx], ((self, vjp),), "getitem")

    def sum(self):
        shape = self.shape
        return Var(np.sum(self.value), ((self, lambda g: np.full(shape, g)),), "sum")

    def mean(self):
        shape = self.shape
        n = self.value.size
        return Var(np.mean(self.value), ((self, lambda g: np.full(shape, g / n)),), "mean")

    def backward(self):
        """Accumulate ``d self / d leaf`` into ``leaf.grad`` for every leaf."""
        if self.value.size != 1:
            raise StructuralError("backward() needs a scalar output")
        nodes = {}
        stack = [self]
        while stack:
            node = stack.pop()
            if id(node) in nodes:
                continue
            nodes[id(node)] = node
            stack.extend(p for p, _ in node.parents)
        adjoint = {id(self): np.ones_like(self.value)}
        for node in sorted(nodes.values(), key=lambda n: n.order, reverse=True):
            g = adjoint.pop(id(node), None)
            if g is None:
                continue
            if not node.parents:
                node.grad = g if node.grad is None else node.grad + g
                continue
            for parent, vjp in node.parents:
                contrib = vjp(g)
                key = id(parent)
                adjoint[key] = contrib if key not in adjoint else adjoint[key] + contrib
        return self


def tanh(z):
    if isinstance(z, Var):
        h = np.tanh(z.value)
        return Var(h, ((z, lambda g: g * (1.0 - h * h)),), "tanh")
    return np.tanh(z)


def square(z):
    return z * z


def value_of(z):
    return z.value if isinstance(z, Var) else z


def first_nonfinite_stage(root: Var) -> Optional[str]:
    """Name of the earliest tape node (in creation order) holding inf/NaN."""
    seen, stack, bad = set(), [root], []
    while stack:
        node = stack.pop()
        if id(node) in seen:
            continue
        seen.add(id(node))
        if not np.all(np.isfinite(node.value)):
            bad.append(node)
        stack.extend(p for p, _ in node.parents)
    if not bad:
        return None
    return min(bad, key=lambda n: n.order).op


@dataclass
class Jet2:
    """A field value with its partial derivatives up to second order.

    Slots are scalars or equally shaped arrays (one entry per point).
    """

    v: object
    dx: object = 0.0
    dt: object = 0.0
    dxx: object = 0.0
    dtt: object = 0.0
    dxt: object = 0.0

    def values(self):
        """Plain-array copy with tape nodes stripped."""
        return Jet2(*(np.asarray(value_of(getattr(self, s))) for s in SLOTS))


# slot -> slots it needs at the previous layer (besides itself)
_DEPENDS = {"v": (), "dx": (), "dt": (), "dxx": ("dx",), "dtt": ("dt",), "dxt": ("dx", "dt")}


def _closure(slots):
    need = set(slots) | {"v"}
    for s in list(need):
        need.update(_DEPENDS[s])
    return tuple(s for s in SLOTS if s in need)


def _tanh_jet(z):
    """Apply tanh slot-wise using the second-order chain rule."""
    zv = z["v"]
    h = tanh(zv)
    out = {"v": h}
    if len(z) == 1:
        return out
    s = 1.0 - h * h
    h2 = -2.0 * (h * s)  # tanh''
    for a in ("dx", "dt"):
        if a in z:
            out[a] = s * z[a]
    for name, a, b in (("dxx", "dx", "dx"), ("dtt", "dt", "dt"), ("dxt", "dx", "dt")):
        if name in z:
            za, zb = z[a], z[b]
            term = h2 * (za * za if a == b else za * zb)
            out[name] = term if z[name] is None else s * z[name] + term
    return out


def propagate(weights, biases, inputs, slots=SLOTS):
    """Jet forward pass over a batch.

    ``inputs`` is an (n, d) array whose first two columns are ``x`` and
    ``t``; further columns are treated as constants.  ``weights``/``biases``
    may be arrays or :class:`Var` nodes.  Returns a dict of slot -> (n,)
    output arrays (or Vars); second-order slots absent at the input layer are
    represented by ``None`` until they become nonzero.
    """
    slots = _closure(slots)
    d = inputs.shape[1]
    seeds = {}
    for name, col in (("dx", 0), ("dt", 1)):
        if name in slots:
            e = np.zeros((1, d))
            e[0, col] = 1.0
            seeds[name] = e
    n_layers = len(weights)
    a = {"v": inputs, **seeds}
    for s in ("dxx", "dtt", "dxt"):
        if s in slots:
            a[s] = None
    for i, (W, b) in enumerate(zip(weights, biases)):
        Wt = W.T
        z = {"v": a["v"] @ Wt + b}
        for s in slots[1:]:
            z[s] = None if a[s] is None else a[s] @ Wt
        if i < n_layers - 1:
            a = _tanh_jet(z)
        else:
            a = z
    out = {}
    for s in slots:
        val = a[s]
        out[s] = None if val is None else val[:, 0] if value_of(val).shape[0] == inputs.shape[0] else val[0, 0]
    return out


def _as_batch(x, t, extra):
    x = np.atleast_1d(np.asarray(x, dtype=np.float64))
    t = np.atleast_1d(np.asarray(t, dtype=np.float64))
    x, t = np.broadcast_arrays(x, t)
    cols = [x.ravel(), t.ravel()]
    if extra is not None:
        extra = np.asarray(extra, dtype=np.float64)
        if extra.ndim == 1:
            extra = np.broadcast_to(extra, (x.size, extra.size))
        cols.extend(extra.reshape(x.size, -1).T)
    return np.column_stack(cols), x.shape


def jet_forward(params, x, t, extra=None, slots=SLOTS) -> Jet2:
    """Evaluate the network and its (x, t) derivatives exactly.

    ``x`` and ``t`` may be scalars or arrays of matching shape; scalar
    inputs give scalar slots.  ``extra`` supplies the remaining input
    columns (delay taps), held constant for differentiation.
    """
    inputs, shape = _as_batch(x, t, extra)
    if inputs.shape[1] != params.layer_sizes[0]:
        raise StructuralError(
            f"network expects {params.layer_sizes[0]} inputs, got {inputs.shape[1]}"
        )
    raw = propagate(params.weights, params.biases, inputs, slots)
    n = inputs.shape[0]
    scalar = np.ndim(x) == 0 and np.ndim(t) == 0
    slot_vals = {}
    for s in SLOTS:
        val = raw.get(s)
        if val is None:
            val = np.zeros(n)
        elif np.ndim(val) == 0:
            val = np.full(n, float(val))
        val = np.asarray(val).reshape(shape)
        slot_vals[s] = float(val.ravel()[0]) if scalar else val
    return Jet2(**slot_vals)


def traced_jet(params, inputs, slots=SLOTS):
    """Jet pass over an (n, d) input batch on whatever leaves ``params`` holds.

    Missing slots come back as zero arrays so the caller can always do
    arithmetic on them.
    """
    if inputs.shape[1] != params.layer_sizes[0]:
        raise StructuralError(
            f"network expects {params.layer_sizes[0]} inputs, got {inputs.shape[1]}"
        )
    raw = propagate(params.weights, params.biases, inputs, slots)
    n = inputs.shape[0]
    out = {}
    for s in SLOTS:
        val = raw.get(s)
        if val is None:
            out[s] = np.zeros(n)
        elif np.ndim(value_of(val)) == 0:
            out[s] = val * np.ones(n)
        else:
            out[s] = val
    return Jet2(**out)


def loss_grad(loss: Callable, params):
    """Value and exact parameter gradient of ``loss(params)``.

    ``loss`` receives a copy of ``params`` whose weights and biases are tape
    leaves and must return a scalar built from them.  The gradient comes back
    flattened in the layout of ``params.flatten()``.
    """
    traced = params.traced()
    out = loss(traced)
    if not isinstance(out, Var):
        # loss does not depend on the parameters at all
        value = float(np.asarray(out))
        if not np.isfinite(value):
            raise NumericError("non-finite loss", "constant")
        return value, np.zeros(params.n_params)
    value = float(out.value)
    if not np.isfinite(value):
        raise NumericError("non-finite loss", first_nonfinite_stage(out))
    out.backward()
    grads = []
    for W, b in zip(traced.weights, traced.biases):
        grads.append(np.zeros(W.shape) if W.grad is None else W.grad)
        grads.append(np.zeros(b.shape) if b.grad is None else b.grad)
    grad = np.concatenate([g.ravel() for g in grads])
    if not np.all(np.isfinite(grad)):
        raise NumericError("non-finite gradient", "backward")
    return value, grad
