"""Minimal reverse-mode automatic differentiation over dense matrices.

A Tape records primitive operations in topological order; backward replays
them in exact reverse order and accumulates vector-Jacobian products.  The
primitive set is just large enough to express a graph-convolutional LSTM
cell with quantile heads and a pinball training loss.  Double precision
throughout.
"""

from __future__ import annotations

import json

import numpy as np
import scipy.sparse as sp

from .errors import LevelOutOfRange, NonFiniteGradient, NonScalarLoss, ShapeMismatch


class Param:
    """Named trainable array; shape is fixed at creation."""

    __slots__ = ("name", "values", "trainable")

    def __init__(self, name: str, values, trainable: bool = True):
        self.name = name
        self.values = np.array(values, dtype=float)
        self.trainable = trainable

    @property
    def shape(self):
        return self.values.shape

    def __repr__(self):
        return f"Param({self.name!r}, shape={self.values.shape})"


class Var:
    """Handle to a node on a tape."""

    __slots__ = ("tape", "idx")

    def __init__(self, tape, idx):
        self.tape = tape
        self.idx = idx

    @property
    def value(self):
        return self.tape._values[self.idx]

    @property
    def shape(self):
        return self.tape._values[self.idx].shape


class Tape:
    """Single-owner record of primitive operations; not shareable while recording."""

    def __init__(self):
        self._values = []
        self._parents = []
        self._vjps = []
        self._param_nodes: dict[int, int] = {}
        self._params: list[Param] = []

    def constant(self, values) -> Var:
        return self._push(np.asarray(values, dtype=float))

    def param(self, p: Param) -> Var:
        """Leaf node for a Param; repeated calls return the same node."""
        key = id(p)
        if key not in self._param_nodes:
            self._param_nodes[key] = self._push(p.values).idx
            self._params.append(p)
        return Var(self, self._param_nodes[key])

    def _push(self, value, parents=(), vjps=()) -> Var:
        self._values.append(value)
        self._parents.append(tuple(parents))
        self._vjps.append(tuple(vjps))
        return Var(self, len(self._values) - 1)


def _same_tape(*vs):
    tape = vs[0].tape
    for v in vs[1:]:
        if v.tape is not tape:
            raise ValueError("operands recorded on different tapes")
    return tape


# -- primitives ---------------------------------------------------------------

def matmul(a: Var, b: Var) -> Var:
    tape = _same_tape(a, b)
    av, bv = a.value, b.value
    if av.ndim != 2 or bv.ndim != 2 or av.shape[1] != bv.shape[0]:
        raise ShapeMismatch("matmul", av.shape, bv.shape)
    return tape._push(
        av @ bv,
        parents=(a.idx, b.idx),
        vjps=(lambda g: g @ bv.T, lambda g: av.T @ g),
    )


def sparse_dense_matmul(s, a: Var) -> Var:
    """Fixed sparse operator times a dense variable; only the dense side differentiates."""
    if not sp.issparse(s):
        raise TypeError("first operand must be a scipy sparse matrix")
    av = a.value
    if av.ndim != 2 or s.shape[1] != av.shape[0]:
        raise ShapeMismatch("sparse_dense_matmul", s.shape, av.shape)
    st = s.T.tocsr()
    return a.tape._push(s @ av, parents=(a.idx,), vjps=(lambda g: st @ g,))


def add(a: Var, b: Var) -> Var:
    tape = _same_tape(a, b)
    if a.value.shape != b.value.shape:
        raise ShapeMismatch("add", a.value.shape, b.value.shape)
    return tape._push(a.value + b.value, parents=(a.idx, b.idx),
                      vjps=(lambda g: g, lambda g: g))


def row_broadcast_add(a: Var, bias: Var) -> Var:
    """Add a length-c bias vector to every row of an (r, c) matrix."""
    tape = _same_tape(a, bias)
    av, bv = a.value, bias.value
    if av.ndim != 2 or bv.ndim != 1 or av.shape[1] != bv.shape[0]:
        raise ShapeMismatch("row_broadcast_add", av.shape, bv.shape)
    return tape._push(av + bv[None, :], parents=(a.idx, bias.idx),
                      vjps=(lambda g: g, lambda g: g.sum(axis=0)))


def sigmoid(a: Var) -> Var:
    out = 1.0 / (1.0 + np.exp(-a.value))
    return a.tape._push(out, parents=(a.idx,), vjps=(lambda g: g * out * (1.0 - out),))


def tanh(a: Var) -> Var:
    out = np.tanh(a.value)
    return a.tape._push(out, parents=(a.idx,), vjps=(lambda g: g * (1.0 - out * out),))


def hadamard(a: Var, b: Var) -> Var:
    tape = _same_tape(a, b)
    av, bv = a.value, b.value
    if av.shape != bv.shape:
        raise ShapeMismatch("hadamard", av.shape, bv.shape)
    return tape._push(av * bv, parents=(a.idx, b.idx),
                      vjps=(lambda g: g * bv, lambda g: g * av))


def concat_columns(a: Var, b: Var) -> Var:
    tape = _same_tape(a, b)
    av, bv = a.value, b.value
    if av.ndim != 2 or bv.ndim != 2 or av.shape[0] != bv.shape[0]:
        raise ShapeMismatch("concat_columns", av.shape, bv.shape)
    ca = av.shape[1]
    return tape._push(np.concatenate([av, bv], axis=1), parents=(a.idx, b.idx),
                      vjps=(lambda g: g[:, :ca], lambda g: g[:, ca:]))


def slice_rows(a: Var, start: int, stop: int) -> Var:
    av = a.value
    if av.ndim != 2 or not (0 <= start < stop <= av.shape[0]):
        raise ShapeMismatch("slice_rows", av.shape, (start, stop))

    def vjp(g):
        out = np.zeros_like(av)
        out[start:stop] = g
        return out

    return a.tape._push(av[start:stop].copy(), parents=(a.idx,), vjps=(vjp,))


def scalar_scale(a: Var, s: float) -> Var:
    s = float(s)
    return a.tape._push(a.value * s, parents=(a.idx,), vjps=(lambda g: g * s,))


def asum(a: Var) -> Var:
    av = a.value
    return a.tape._push(np.asarray(av.sum()), parents=(a.idx,),
                        vjps=(lambda g: np.full_like(av, float(g)),))


def amean(a: Var) -> Var:
    av = a.value
    scale = 1.0 / av.size
    return a.tape._push(np.asarray(av.mean()), parents=(a.idx,),
                        vjps=(lambda g: np.full_like(av, float(g) * scale),))


def pinball_elem(pred: Var, target, level: float) -> Var:
    """Elementwise pinball loss against a fixed target matrix.

    The subgradient at pred == target is taken as 0 (measure-zero kink).
    """
    if not 0.0 < level < 1.0:
        raise LevelOutOfRange(f"quantile level must be in (0, 1), got {level}")
    tv = np.asarray(target, dtype=float)
    pv = pred.value
    if pv.shape != tv.shape:
        raise ShapeMismatch("pinball_elem", pv.shape, tv.shape)
    out = np.where(pv <= tv, level * (tv - pv), (1.0 - level) * (pv - tv))
    slope = np.where(pv < tv, -level, np.where(pv > tv, 1.0 - level, 0.0))
    return pred.tape._push(out, parents=(pred.idx,), vjps=(lambda g: g * slope,))


# -- backward pass ---------------------------------------------------------------

def backward(tape: Tape, loss: Var, params=None) -> dict[str, np.ndarray]:
    """Gradients of a scalar loss for every trainable Param.

    Params never touched by the tape get exact zeros.  Shared subexpressions
    accumulate (sum) their gradient contributions.
    """
    if loss.tape is not tape:
        raise ValueError("loss was recorded on a different tape")
    if np.asarray(loss.value).size != 1:
        raise NonScalarLoss(f"loss node has shape {np.asarray(loss.value).shape}")
    grads: list[np.ndarray | None] = [None] * len(tape._values)
    grads[loss.idx] = np.ones_like(np.asarray(loss.value, dtype=float))
    for idx in range(loss.idx, -1, -1):
        g = grads[idx]
        if g is None:
            continue
        for parent, vjp in zip(tape._parents[idx], tape._vjps[idx]):
            contrib = vjp(g)
            if grads[parent] is None:
                grads[parent] = contrib
            else:
                grads[parent] = grads[parent] + contrib

    if params is None:
        params = tape._params
    out = {}
    for p in params:
        if not p.trainable:
            continue
        node = tape._param_nodes.get(id(p))
        g = grads[node] if node is not None else None
        out[p.name] = np.zeros_like(p.values) if g is None else np.asarray(g)
    return out


def grad_check(f, params, epsilon: float = 1e-5) -> float:
    """Worst relative error between backward() and central finite differences.

    f() must rebuild its computation on a fresh tape and return the loss Var.
    Falls back to absolute error when both magnitudes are below 1e-8.
    """
    if not 0.0 < epsilon <= 1e-2:
        raise ValueError("epsilon must be in (0, 1e-2]")
    loss = f()
    analytic = backward(loss.tape, loss, params)
    worst = 0.0
    for p in params:
        if not p.trainable:
            continue
        flat = p.values.reshape(-1)
        ana = analytic[p.name].reshape(-1)
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + epsilon
            f_plus = float(f().value)
            flat[j] = orig - epsilon
            f_minus = float(f().value)
            flat[j] = orig
            numeric = (f_plus - f_minus) / (2.0 * epsilon)
            a = ana[j]
            if abs(a) < 1e-8 and abs(numeric) < 1e-8:
                err = abs(a - numeric)
            else:
                err = abs(a - numeric) / max(abs(a), abs(numeric))
            worst = max(worst, err)
    return worst


# -- optimizer --------------------------------------------------------------------

def adamw_init(params) -> dict:
    state = {"step": 0}
    for p in params:
        state[p.name] = (np.zeros_like(p.values), np.zeros_like(p.values))
    return state


def adamw_step(params, grads, state, lr=1e-3, beta1=0.9, beta2=0.999,
               weight_decay=1e-4, eps=1e-8) -> None:
    """One AdamW update; weight decay is decoupled from the gradient moments."""
    state["step"] += 1
    t = state["step"]
    for p in params:
        if not p.trainable:
            continue
        g = grads[p.name]
        if not np.all(np.isfinite(g)):
            raise NonFiniteGradient(f"non-finite gradient for parameter {p.name!r}")
        m, v = state[p.name]
        m = beta1 * m + (1.0 - beta1) * g
        v = beta2 * v + (1.0 - beta2) * g * g
        state[p.name] = (m, v)
        m_hat = m / (1.0 - beta1**t)
        v_hat = v / (1.0 - beta2**t)
        p.values -= lr * (m_hat / (np.sqrt(v_hat) + eps) + weight_decay * p.values)
        if not np.all(np.isfinite(p.values)):
            raise NonFiniteGradient(f"parameter {p.name!r} became non-finite after update")


# -- checkpoint container -----------------------------------------------------------

CHECKPOINT_VERSION = 1


def save_params(path, params, extra_arrays=None) -> None:
    """Self-describing npz container: {name, shape, row-major values}, version-tagged."""
    names = [p.name for p in params]
    meta = {"version": CHECKPOINT_VERSION, "names": names,
            "trainable": {p.name: bool(p.trainable) for p in params}}
    arrays = {f"param/{p.name}": p.values for p in params}
    if extra_arrays:
        for k, v in extra_arrays.items():
            arrays[f"extra/{k}"] = np.asarray(v)
    arrays["__meta__"] = np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8)
    np.savez(path, **arrays)


def load_params(path):
    """Returns (params list, extra arrays dict)."""
    with np.load(path) as data:
        meta = json.loads(bytes(data["__meta__"].tobytes()).decode())
        if meta["version"] != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {meta['version']}")
        params = [
            Param(name, data[f"param/{name}"], trainable=meta["trainable"][name])
            for name in meta["names"]
        ]
        extra = {k[len("extra/"):]: data[k] for k in data.files if k.startswith("extra/")}
    return params, extra
