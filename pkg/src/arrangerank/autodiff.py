"""Minimal reverse-mode autodiff over float64 numpy arrays.

The ranker only needs a handful of primitives (matrix products, a few
elementwise maps, reductions, concatenation and a masked softmax), so the
engine is a flat tape: every primitive appends one backward closure, and
``Tape.backward`` replays the closures in exact reverse execution order.
There is no broadcasting beyond scalar-with-tensor; matrix-plus-row is its
own primitive (``add_rows``) so every backward rule stays auditable.
"""
from __future__ import annotations

from typing import Callable, Sequence

import numpy as np


class ShapeError(ValueError):
    """Operand shapes do not fit the operation."""


class DomainError(ValueError):
    """Input outside the mathematical domain of the operation (e.g. log of 0)."""


class EmptySupportError(ValueError):
    """Masked softmax called with no unmasked entry."""


class GraphError(RuntimeError):
    """Tape misuse, e.g. backward called twice on one forward."""


class Tensor:
    """Dense float64 array plus an optional gradient buffer."""

    __slots__ = ("values", "grad", "requires_grad")

    def __init__(self, values, requires_grad: bool = False):
        self.values = np.asarray(values, dtype=np.float64)
        self.grad = None
        self.requires_grad = requires_grad

    @property
    def shape(self) -> tuple:
        return self.values.shape

    def item(self) -> float:
        return float(self.values)

    def zero_grad(self) -> None:
        self.grad = None

    def _accum(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.array(g, dtype=np.float64, copy=True)
        else:
            self.grad += g

    def __repr__(self) -> str:
        return f"Tensor(shape={self.values.shape}, requires_grad={self.requires_grad})"


_ACTIVE: "Tape | None" = None


class Tape:
    """Ordered record of executed primitives for one forward pass.

    Use as a context manager; primitives executed inside the block whose
    inputs require grad are recorded. ``backward`` may run exactly once.
    """

    def __init__(self):
        self._steps: list[tuple[Tensor, Callable[[np.ndarray], None]]] = []
        self._spent = False

    def __enter__(self) -> "Tape":
        global _ACTIVE
        if _ACTIVE is not None:
            raise GraphError("a tape is already active; nested tapes are not supported")
        _ACTIVE = self
        return self

    def __exit__(self, *exc) -> None:
        global _ACTIVE
        _ACTIVE = None

    def backward(self, out: Tensor) -> None:
        """Seed d(out)/d(out) = 1 and replay the chain rule in reverse order."""
        if self._spent:
            raise GraphError("backward already ran on this tape; run a fresh forward")
        if out.values.shape != ():
            raise ShapeError(f"backward needs a scalar output, got shape {out.values.shape}")
        self._spent = True
        out.grad = np.ones((), dtype=np.float64)
        for result, pull in reversed(self._steps):
            if type(result) is tuple:  # multi-output primitive
                if any(r.grad is not None for r in result):
                    pull(tuple(r.grad for r in result))
                for r in result:
                    r.grad = None
            elif result.grad is not None:
                pull(result.grad)
                result.grad = None  # intermediate buffers are single-use
            else:
                result.grad = None


def _record(out: Tensor, pull: Callable[[np.ndarray], None]) -> None:
    out.requires_grad = True
    _ACTIVE._steps.append((out, pull))


def _tracing(*tensors: Tensor) -> bool:
    return _ACTIVE is not None and any(t.requires_grad for t in tensors)


# ---------------------------------------------------------------- primitives


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """2-D matrix product a[m,k] @ b[k,n]."""
    if a.values.ndim != 2 or b.values.ndim != 2 or a.values.shape[1] != b.values.shape[0]:
        raise ShapeError(f"matmul shapes do not agree: {a.values.shape} vs {b.values.shape}")
    out = Tensor(a.values @ b.values)
    if _tracing(a, b):
        av, bv = a.values, b.values

        def pull(g, a=a, b=b, av=av, bv=bv):
            if a.requires_grad:
                a._accum(g @ bv.T)
            if b.requires_grad:
                b._accum(av.T @ g)

        _record(out, pull)
    return out


def matvec(m: Tensor, v: Tensor) -> Tensor:
    """Matrix-vector product m[r,c] @ v[c] -> [r]."""
    if m.values.ndim != 2 or v.values.ndim != 1 or m.values.shape[1] != v.values.shape[0]:
        raise ShapeError(f"matvec shapes do not agree: {m.values.shape} vs {v.values.shape}")
    out = Tensor(m.values @ v.values)
    if _tracing(m, v):
        mv, vv = m.values, v.values

        def pull(g, m=m, v=v, mv=mv, vv=vv):
            if m.requires_grad:
                m._accum(np.outer(g, vv))
            if v.requires_grad:
                v._accum(mv.T @ g)

        _record(out, pull)
    return out


def add(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise sum; one operand may be a scalar (shape ()) tensor."""
    if a.values.shape != b.values.shape and a.values.shape != () and b.values.shape != ():
        raise ShapeError(f"add shapes do not agree: {a.values.shape} vs {b.values.shape}")
    out = Tensor(a.values + b.values)
    if _tracing(a, b):

        def pull(g, a=a, b=b):
            if a.requires_grad:
                a._accum(g if a.values.shape == g.shape else np.sum(g))
            if b.requires_grad:
                b._accum(g if b.values.shape == g.shape else np.sum(g))

        _record(out, pull)
    return out


def add_rows(m: Tensor, v: Tensor) -> Tensor:
    """Add vector v[k] to every row of m[n,k]."""
    if m.values.ndim != 2 or v.values.ndim != 1 or m.values.shape[1] != v.values.shape[0]:
        raise ShapeError(f"add_rows shapes do not agree: {m.values.shape} vs {v.values.shape}")
    out = Tensor(m.values + v.values)
    if _tracing(m, v):

        def pull(g, m=m, v=v):
            if m.requires_grad:
                m._accum(g)
            if v.requires_grad:
                v._accum(g.sum(axis=0))

        _record(out, pull)
    return out


def mul(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise product; one operand may be a scalar (shape ()) tensor."""
    if a.values.shape != b.values.shape and a.values.shape != () and b.values.shape != ():
        raise ShapeError(f"mul shapes do not agree: {a.values.shape} vs {b.values.shape}")
    out = Tensor(a.values * b.values)
    if _tracing(a, b):
        av, bv = a.values, b.values

        def pull(g, a=a, b=b, av=av, bv=bv):
            if a.requires_grad:
                ga = g * bv
                a._accum(ga if a.values.shape == ga.shape else np.sum(ga))
            if b.requires_grad:
                gb = g * av
                b._accum(gb if b.values.shape == gb.shape else np.sum(gb))

        _record(out, pull)
    return out


def scale_rows(m: Tensor, v: Tensor) -> Tensor:
    """Scale row i of m[n,k] by v[i]."""
    if m.values.ndim != 2 or v.values.ndim != 1 or m.values.shape[0] != v.values.shape[0]:
        raise ShapeError(f"scale_rows shapes do not agree: {m.values.shape} vs {v.values.shape}")
    out = Tensor(m.values * v.values[:, None])
    if _tracing(m, v):
        mv, vv = m.values, v.values

        def pull(g, m=m, v=v, mv=mv, vv=vv):
            if m.requires_grad:
                m._accum(g * vv[:, None])
            if v.requires_grad:
                v._accum((g * mv).sum(axis=1))

        _record(out, pull)
    return out


def scale(x: Tensor, c: float) -> Tensor:
    """Multiply by a python constant (no gradient for c)."""
    out = Tensor(x.values * c)
    if _tracing(x):

        def pull(g, x=x, c=c):
            x._accum(g * c)

        _record(out, pull)
    return out


def shift(x: Tensor, c: float) -> Tensor:
    """Add a python constant (no gradient for c)."""
    out = Tensor(x.values + c)
    if _tracing(x):

        def pull(g, x=x):
            x._accum(g)

        _record(out, pull)
    return out


def tanh(x: Tensor) -> Tensor:
    out_vals = np.tanh(x.values)
    out = Tensor(out_vals)
    if _tracing(x):

        def pull(g, x=x, out_vals=out_vals):
            x._accum(g * (1.0 - out_vals * out_vals))

        _record(out, pull)
    return out


def sigmoid(x: Tensor) -> Tensor:
    # expit via tanh keeps values exactly in (0, 1) for finite inputs
    out_vals = 0.5 * (np.tanh(0.5 * x.values) + 1.0)
    out = Tensor(out_vals)
    if _tracing(x):

        def pull(g, x=x, out_vals=out_vals):
            x._accum(g * out_vals * (1.0 - out_vals))

        _record(out, pull)
    return out


def exp(x: Tensor) -> Tensor:
    out_vals = np.exp(x.values)
    out = Tensor(out_vals)
    if _tracing(x):

        def pull(g, x=x, out_vals=out_vals):
            x._accum(g * out_vals)

        _record(out, pull)
    return out


def log(x: Tensor) -> Tensor:
    if np.any(x.values <= 0.0):
        raise DomainError("log requires strictly positive inputs")
    out = Tensor(np.log(x.values))
    if _tracing(x):
        xv = x.values

        def pull(g, x=x, xv=xv):
            x._accum(g / xv)

        _record(out, pull)
    return out


def dot(a: Tensor, b: Tensor) -> Tensor:
    """Inner product of two 1-D tensors -> scalar."""
    if a.values.ndim != 1 or b.values.ndim != 1 or a.values.shape != b.values.shape:
        raise ShapeError(f"dot shapes do not agree: {a.values.shape} vs {b.values.shape}")
    out = Tensor(a.values @ b.values)
    if _tracing(a, b):
        av, bv = a.values, b.values

        def pull(g, a=a, b=b, av=av, bv=bv):
            if a.requires_grad:
                a._accum(g * bv)
            if b.requires_grad:
                b._accum(g * av)

        _record(out, pull)
    return out


def concat(parts: Sequence[Tensor]) -> Tensor:
    """Concatenate 1-D tensors."""
    for p in parts:
        if p.values.ndim != 1:
            raise ShapeError(f"concat expects 1-D parts, got shape {p.values.shape}")
    out = Tensor(np.concatenate([p.values for p in parts]))
    if _ACTIVE is not None and any(p.requires_grad for p in parts):
        sizes = [p.values.shape[0] for p in parts]

        def pull(g, parts=tuple(parts), sizes=sizes):
            off = 0
            for p, s in zip(parts, sizes):
                if p.requires_grad:
                    p._accum(g[off : off + s])
                off += s

        _record(out, pull)
    return out


def sum_all(x: Tensor) -> Tensor:
    """Sum of every element -> scalar."""
    out = Tensor(np.sum(x.values))
    if _tracing(x):
        shp = x.values.shape

        def pull(g, x=x, shp=shp):
            x._accum(np.full(shp, float(g)))

        _record(out, pull)
    return out


def row(m: Tensor, index: int) -> Tensor:
    """Select row ``index`` of a 2-D tensor -> 1-D."""
    if m.values.ndim != 2:
        raise ShapeError(f"row expects a 2-D tensor, got shape {m.values.shape}")
    out = Tensor(m.values[index])
    if _tracing(m):
        shp = m.values.shape

        def pull(g, m=m, index=index, shp=shp):
            buf = np.zeros(shp)
            buf[index] = g
            m._accum(buf)

        _record(out, pull)
    return out


def pick(x: Tensor, index: int) -> Tensor:
    """Select element ``index`` of a 1-D tensor -> scalar."""
    if x.values.ndim != 1:
        raise ShapeError(f"pick expects a 1-D tensor, got shape {x.values.shape}")
    out = Tensor(x.values[index])
    if _tracing(x):
        n = x.values.shape[0]

        def pull(g, x=x, index=index, n=n):
            buf = np.zeros(n)
            buf[index] = float(g)
            x._accum(buf)

        _record(out, pull)
    return out


def softmax_masked(logits: Tensor, mask: np.ndarray) -> Tensor:
    """Softmax over the entries where ``mask`` is True; exact 0 elsewhere.

    Stabilized by max-subtraction over the unmasked support. Gradients flow
    only through unmasked entries.
    """
    if logits.values.ndim != 1 or mask.shape != logits.values.shape:
        raise ShapeError(f"softmax_masked shapes do not agree: {logits.values.shape} vs {mask.shape}")
    if not mask.any():
        raise EmptySupportError("softmax_masked needs at least one unmasked entry")
    z = logits.values[mask]
    e = np.exp(z - z.max())
    p = e / e.sum()
    out_vals = np.zeros_like(logits.values)
    out_vals[mask] = p
    out = Tensor(out_vals)
    if _tracing(logits):

        def pull(g, logits=logits, mask=mask, p=p):
            ga = g[mask]
            gz = p * (ga - ga @ p)
            buf = np.zeros_like(logits.values)
            buf[mask] = gz
            logits._accum(buf)

        _record(out, pull)
    return out


def pointer_logits(m: Tensor, ctx: Tensor, proj: Tensor, u: Tensor) -> Tensor:
    """Per-row pointer scores u . (proj^T tanh(m_row + ctx)), fused.

    m is (n, a); ctx (a,) is added to every row; proj is (a, e); u is (e,).
    Computed as tanh(m + ctx) @ (proj @ u), which is algebraically identical
    but avoids materializing the (n, e) projection. One tape entry.
    """
    if (m.values.ndim != 2 or ctx.values.shape != (m.values.shape[1],)
            or proj.values.shape[0] != m.values.shape[1]
            or u.values.shape != (proj.values.shape[1],)):
        raise ShapeError(
            f"pointer_logits shapes do not agree: m {m.values.shape}, ctx {ctx.values.shape}, "
            f"proj {proj.values.shape}, u {u.values.shape}")
    t = np.tanh(m.values + ctx.values)
    w = proj.values @ u.values
    out = Tensor(t @ w)
    if _tracing(m, ctx, proj, u):

        def pull(g, m=m, ctx=ctx, proj=proj, u=u, t=t, w=w):
            if m.requires_grad or ctx.requires_grad:
                gpre = (g[:, None] * w[None, :]) * (1.0 - t * t)
                if m.requires_grad:
                    m._accum(gpre)
                if ctx.requires_grad:
                    ctx._accum(gpre.sum(axis=0))
            if proj.requires_grad or u.requires_grad:
                tg = t.T @ g
                if proj.requires_grad:
                    proj._accum(np.outer(tg, u.values))
                if u.requires_grad:
                    u._accum(proj.values.T @ tg)

        _record(out, pull)
    return out


def gated_cell(w: Tensor, b: Tensor, z: Tensor, c: Tensor) -> tuple[Tensor, Tensor]:
    """One LSTM-style cell update, fused into a single tape entry.

    ``w @ z + b`` stacks the four gate pre-activations (input, forget,
    output, candidate – each ``len(c)`` rows, in that order)::

        c' = sigmoid(f)*c + sigmoid(i)*tanh(g),  h' = sigmoid(o)*tanh(c')

    Returns (h', c'). Fusing the cell keeps the tape an order of magnitude
    shorter than composing it from elementwise primitives; the hand-derived
    backward is covered by the finite-difference property tests.
    """
    hdim = c.values.shape[0]
    if w.values.shape[0] != 4 * hdim or w.values.shape[1] != z.values.shape[0]:
        raise ShapeError(f"gated_cell shapes do not agree: {w.values.shape} vs "
                         f"input {z.values.shape}, state {c.values.shape}")
    pre = w.values @ z.values + b.values
    gi = 0.5 * (np.tanh(0.5 * pre[:hdim]) + 1.0)
    gf = 0.5 * (np.tanh(0.5 * pre[hdim:2 * hdim]) + 1.0)
    go = 0.5 * (np.tanh(0.5 * pre[2 * hdim:3 * hdim]) + 1.0)
    gg = np.tanh(pre[3 * hdim:])
    c_new = gf * c.values + gi * gg
    tc = np.tanh(c_new)
    h_out = Tensor(go * tc)
    c_out = Tensor(c_new)
    if _tracing(w, b, z, c):
        cv, zv, wv = c.values, z.values, w.values

        def pull(grads, w=w, b=b, z=z, c=c, gi=gi, gf=gf, go=go, gg=gg, tc=tc,
                 cv=cv, zv=zv, wv=wv, hdim=hdim):
            gh, gcn = grads
            gc_new = gcn if gcn is not None else 0.0
            if gh is not None:
                gc_new = gc_new + gh * go * (1.0 - tc * tc)
            gpre = np.empty(4 * hdim)
            gpre[:hdim] = gc_new * gg * gi * (1.0 - gi)
            gpre[hdim:2 * hdim] = gc_new * cv * gf * (1.0 - gf)
            gpre[2 * hdim:3 * hdim] = ((gh * tc) if gh is not None else 0.0) * go * (1.0 - go)
            gpre[3 * hdim:] = gc_new * gi * (1.0 - gg * gg)
            if w.requires_grad:
                w._accum(np.outer(gpre, zv))
            if b.requires_grad:
                b._accum(gpre)
            if z.requires_grad:
                z._accum(wv.T @ gpre)
            if c.requires_grad:
                c._accum(gc_new * gf)

        h_out.requires_grad = True
        c_out.requires_grad = True
        _ACTIVE._steps.append(((h_out, c_out), pull))
    return h_out, c_out


def masked_log_prob(logits: Tensor, mask: np.ndarray, index: int) -> Tensor:
    """log softmax_masked(logits, mask)[index], fused for numerical safety.

    Equals ``log(pick(softmax_masked(logits, mask), index))`` but cannot
    underflow to log(0) for very spread-out logits.
    """
    if logits.values.ndim != 1 or mask.shape != logits.values.shape:
        raise ShapeError(f"masked_log_prob shapes do not agree: {logits.values.shape} vs {mask.shape}")
    if not mask.any():
        raise EmptySupportError("masked_log_prob needs at least one unmasked entry")
    if not mask[index]:
        raise ValueError(f"index {index} is masked out")
    z = logits.values[mask]
    m = z.max()
    e = np.exp(z - m)
    lse = m + np.log(e.sum())
    out = Tensor(logits.values[index] - lse)
    if _tracing(logits):
        p = e / e.sum()

        def pull(g, logits=logits, mask=mask, index=index, p=p):
            buf = np.zeros_like(logits.values)
            buf[mask] = -float(g) * p
            buf[index] += float(g)
            logits._accum(buf)

        _record(out, pull)
    return out


def dropout(x: Tensor, rate: float, rng: np.random.Generator) -> Tensor:
    """Inverted-scaling Bernoulli dropout; call only during training."""
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    if rate == 0.0:
        return x
    keep = (rng.random(x.values.shape) >= rate) / (1.0 - rate)
    out = Tensor(x.values * keep)
    if _tracing(x):

        def pull(g, x=x, keep=keep):
            x._accum(g * keep)

        _record(out, pull)
    return out


# -------------------------------------------------------------- grad checks


def grad_check(f, params, eps: float = 1e-5) -> float:
    """Compare analytic gradients of a scalar-valued forward against central differences.

    ``f(params)`` must be deterministic and return a scalar Tensor. Returns
    the max over all parameter entries of
    ``|analytic - numeric| / max(1, |numeric|)``.
    """
    if not 1e-7 <= eps <= 1e-3:
        raise ValueError(f"eps must be in [1e-7, 1e-3], got {eps}")
    params.zero_grads()
    with Tape() as t:
        out = f(params)
    if not np.isfinite(out.values):
        raise FloatingPointError("forward produced a non-finite value")
    t.backward(out)
    analytic = {name: (np.zeros_like(p.values) if p.grad is None else p.grad.copy())
                for name, p in params.items()}
    params.zero_grads()

    worst = 0.0
    for name, p in params.items():
        flat = p.values.reshape(-1)
        ana = analytic[name].reshape(-1)
        for i in range(flat.shape[0]):
            keep = flat[i]
            flat[i] = keep + eps
            hi = float(f(params).values)
            flat[i] = keep - eps
            lo = float(f(params).values)
            flat[i] = keep
            if not (np.isfinite(hi) and np.isfinite(lo)):
                raise FloatingPointError("forward produced a non-finite value")
            num = (hi - lo) / (2.0 * eps)
            err = abs(ana[i] - num) / max(1.0, abs(num))
            if err > worst:
                worst = err
    return worst
