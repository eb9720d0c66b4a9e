"""Dense float64 tensors with a reverse-mode tape, GRU cells, and AdamW.

Every neural component in the package is assembled from the primitives in
this module. Forward values are plain numpy arrays (row-major, 64-bit). When
a :class:`Tape` is active, each primitive appends one backward closure to it;
``Tape.backward`` replays the closures in reverse execution order, which is a
valid reverse topological order because operands always precede their
consumers. There is no operator fusion, so a backward pass can be audited
record by record.

Conventions:
  * vectors are 1-d arrays, matrices 2-d, scalars 0-d;
  * :class:`Parameter` gradients persist and accumulate across backward
    calls until :func:`zero_grads`;
  * tensors are never mutated after creation (parameters are mutated only
    by the optimizer and by checkpoint loading).
"""

from __future__ import annotations

import hashlib
import struct
from collections import OrderedDict

import numpy as np

from .errors import ConfigError, ContractError, DataError, MaskError, ShapeError
from .ioutil import atomic_open

INIT_STD = 0.02


# ---------------------------------------------------------------------------
# Seeding

def _tag_to_int(tag):
    if isinstance(tag, (int, np.integer)):
        return int(tag) & 0xFFFFFFFFFFFFFFFF
    digest = hashlib.sha256(str(tag).encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def derived_rng(seed, *tags):
    """Independent generator keyed by (seed, *tags). Same key, same stream."""
    entropy = [_tag_to_int(seed)] + [_tag_to_int(t) for t in tags]
    return np.random.default_rng(entropy)


# ---------------------------------------------------------------------------
# Tensors and the tape

class Tensor:
    """Immutable dense array of 64-bit floats plus an adjoint slot."""

    __slots__ = ("data", "grad", "requires_grad")

    def __init__(self, data, requires_grad=False):
        arr = np.asarray(data, dtype=np.float64)
        if arr.ndim > 0 and not arr.flags["C_CONTIGUOUS"]:
            arr = np.ascontiguousarray(arr)
        self.data = arr
        self.grad = None
        self.requires_grad = requires_grad

    @property
    def shape(self):
        return self.data.shape

    def item(self):
        return float(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"


class Parameter(Tensor):
    """Trainable leaf. Gradient is always allocated and accumulates in place."""

    __slots__ = ("name",)

    def __init__(self, value, name):
        super().__init__(np.array(value, dtype=np.float64), requires_grad=True)
        self.name = name
        self.grad = np.zeros_like(self.data)

    def __repr__(self):
        return f"Parameter({self.name!r}, shape={self.data.shape})"


def init_param(rng, shape, name):
    """Fresh trainable parameter, entries drawn from Normal(0, 0.02)."""
    return Parameter(rng.normal(0.0, INIT_STD, size=shape), name)


def zero_grads(params):
    for p in params:
        p.grad = np.zeros_like(p.data)


_ACTIVE_TAPE = None


class Tape:
    """Execution-ordered record of backward closures (a Wengert list)."""

    def __init__(self):
        self._ops = []
        self._out_ids = set()

    def __enter__(self):
        global _ACTIVE_TAPE
        if _ACTIVE_TAPE is not None:
            raise ContractError("nested tapes are not supported")
        _ACTIVE_TAPE = self
        return self

    def __exit__(self, exc_type, exc, tb):
        global _ACTIVE_TAPE
        _ACTIVE_TAPE = None
        return False

    def __len__(self):
        return len(self._ops)

    def backward(self, loss):
        """Populate gradients of every parameter reachable from ``loss``.

        Adjoints of intermediate tensors are reset per call; parameter
        gradients accumulate across calls until :func:`zero_grads`.
        """
        if not isinstance(loss, Tensor) or loss.data.shape != ():
            raise ContractError("backward expects a scalar loss tensor")
        if id(loss) not in self._out_ids:
            raise ContractError("loss was not produced under this tape")
        for out, _ in self._ops:
            out.grad = None
        loss.grad = np.ones((), dtype=np.float64)
        for out, backward_fn in reversed(self._ops):
            g = out.grad
            if g is not None:
                backward_fn(g)


def _record(out, backward_fn):
    tape = _ACTIVE_TAPE
    if tape is not None and out.requires_grad:
        tape._ops.append((out, backward_fn))
        tape._out_ids.add(id(out))


def _accum(t, g):
    if isinstance(t, Parameter):
        t.grad += g
    elif t.grad is None:
        t.grad = g
    else:
        t.grad = t.grad + g


def _requires(*tensors):
    return any(t.requires_grad for t in tensors)


def constant(data):
    return Tensor(data)


def zeros(n):
    return Tensor(np.zeros(n, dtype=np.float64))


# ---------------------------------------------------------------------------
# Primitives

def _check_same_shape(op, a, b):
    if a.data.shape != b.data.shape:
        raise ShapeError(f"{op}: shapes {a.data.shape} and {b.data.shape} differ")


def add(a, b):
    _check_same_shape("add", a, b)
    out = Tensor(a.data + b.data, requires_grad=_requires(a, b))

    def backward_fn(g):
        if a.requires_grad:
            _accum(a, g)
        if b.requires_grad:
            _accum(b, g)

    _record(out, backward_fn)
    return out


def sub(a, b):
    _check_same_shape("sub", a, b)
    out = Tensor(a.data - b.data, requires_grad=_requires(a, b))

    def backward_fn(g):
        if a.requires_grad:
            _accum(a, g)
        if b.requires_grad:
            _accum(b, -g)

    _record(out, backward_fn)
    return out


def mul(a, b):
    _check_same_shape("mul", a, b)
    out = Tensor(a.data * b.data, requires_grad=_requires(a, b))

    def backward_fn(g):
        if a.requires_grad:
            _accum(a, g * b.data)
        if b.requires_grad:
            _accum(b, g * a.data)

    _record(out, backward_fn)
    return out


def scale(a, c):
    c = float(c)
    out = Tensor(a.data * c, requires_grad=a.requires_grad)

    def backward_fn(g):
        _accum(a, g * c)

    _record(out, backward_fn)
    return out


def add_n(tensors):
    if not tensors:
        raise ContractError("add_n needs at least one tensor")
    first = tensors[0]
    for t in tensors[1:]:
        _check_same_shape("add_n", first, t)
    total = tensors[0].data.copy()
    for t in tensors[1:]:
        total += t.data
    out = Tensor(total, requires_grad=_requires(*tensors))

    def backward_fn(g):
        for t in tensors:
            if t.requires_grad:
                _accum(t, g)

    _record(out, backward_fn)
    return out


def matvec(W, x):
    if W.data.ndim != 2 or x.data.ndim != 1 or W.data.shape[1] != x.data.shape[0]:
        raise ShapeError(f"matvec: matrix {W.data.shape} incompatible with vector {x.data.shape}")
    out = Tensor(W.data @ x.data, requires_grad=_requires(W, x))

    def backward_fn(g):
        if W.requires_grad:
            _accum(W, np.outer(g, x.data))
        if x.requires_grad:
            _accum(x, W.data.T @ g)

    _record(out, backward_fn)
    return out


def affine(x, W, b):
    """W @ x + b with explicit dimension checking."""
    if W.data.ndim != 2 or x.data.ndim != 1 or b.data.ndim != 1:
        raise ShapeError(
            f"affine: expected matrix, vector, vector; got {W.data.shape}, {x.data.shape}, {b.data.shape}"
        )
    if W.data.shape[1] != x.data.shape[0]:
        raise ShapeError(f"affine: weight {W.data.shape} incompatible with input {x.data.shape}")
    if W.data.shape[0] != b.data.shape[0]:
        raise ShapeError(f"affine: weight {W.data.shape} incompatible with bias {b.data.shape}")
    return add(matvec(W, x), b)


def dot(a, b):
    if a.data.ndim != 1 or b.data.ndim != 1 or a.data.shape != b.data.shape:
        raise ShapeError(f"dot: shapes {a.data.shape} and {b.data.shape} incompatible")
    out = Tensor(np.dot(a.data, b.data), requires_grad=_requires(a, b))

    def backward_fn(g):
        if a.requires_grad:
            _accum(a, b.data * g)
        if b.requires_grad:
            _accum(b, a.data * g)

    _record(out, backward_fn)
    return out


def concat(parts):
    if not parts:
        raise ContractError("concat needs at least one tensor")
    arrs = [np.atleast_1d(p.data) for p in parts]
    sizes = [a.shape[0] for a in arrs]
    out = Tensor(np.concatenate(arrs), requires_grad=_requires(*parts))
    offsets = np.cumsum([0] + sizes)

    def backward_fn(g):
        for part, lo, hi in zip(parts, offsets[:-1], offsets[1:]):
            if part.requires_grad:
                piece = g[lo:hi]
                if part.data.ndim == 0:
                    piece = piece.reshape(())
                _accum(part, piece)

    _record(out, backward_fn)
    return out


def pick(x, index):
    if x.data.ndim != 1:
        raise ShapeError(f"pick: expected vector, got {x.data.shape}")
    index = int(index)
    out = Tensor(x.data[index], requires_grad=x.requires_grad)

    def backward_fn(g):
        if isinstance(x, Parameter):
            x.grad[index] += g
        else:
            z = np.zeros_like(x.data)
            z[index] = g
            _accum(x, z)

    _record(out, backward_fn)
    return out


def row(M, index):
    """Row lookup (embedding fetch). Gradient scatters into the row."""
    if M.data.ndim != 2:
        raise ShapeError(f"row: expected matrix, got {M.data.shape}")
    index = int(index)
    out = Tensor(M.data[index], requires_grad=M.requires_grad)

    def backward_fn(g):
        if isinstance(M, Parameter):
            M.grad[index] += g
        else:
            z = np.zeros_like(M.data)
            z[index] = g
            _accum(M, z)

    _record(out, backward_fn)
    return out


def col(M, index):
    if M.data.ndim != 2:
        raise ShapeError(f"col: expected matrix, got {M.data.shape}")
    index = int(index)
    out = Tensor(M.data[:, index].copy(), requires_grad=M.requires_grad)

    def backward_fn(g):
        if isinstance(M, Parameter):
            M.grad[:, index] += g
        else:
            z = np.zeros_like(M.data)
            z[:, index] = g
            _accum(M, z)

    _record(out, backward_fn)
    return out


def sigmoid(x):
    e = np.exp(-np.abs(x.data))
    val = np.where(x.data >= 0, 1.0 / (1.0 + e), e / (1.0 + e))
    out = Tensor(val, requires_grad=x.requires_grad)

    def backward_fn(g):
        _accum(x, g * val * (1.0 - val))

    _record(out, backward_fn)
    return out


def tanh(x):
    val = np.tanh(x.data)
    out = Tensor(val, requires_grad=x.requires_grad)

    def backward_fn(g):
        _accum(x, g * (1.0 - val * val))

    _record(out, backward_fn)
    return out


def elementwise_max(tensors):
    """Entrywise maximum over same-shaped vectors; ties go to the lowest index."""
    if not tensors:
        raise ContractError("elementwise_max needs at least one tensor")
    first = tensors[0]
    for t in tensors[1:]:
        _check_same_shape("elementwise_max", first, t)
    stacked = np.stack([t.data for t in tensors])
    argmax = np.argmax(stacked, axis=0)  # first maximal index wins
    val = np.take_along_axis(stacked, argmax[None, ...], axis=0)[0]
    out = Tensor(val, requires_grad=_requires(*tensors))

    def backward_fn(g):
        for k, t in enumerate(tensors):
            if t.requires_grad:
                sel = argmax == k
                if sel.any():
                    _accum(t, np.where(sel, g, 0.0))

    _record(out, backward_fn)
    return out


def _check_mask(logits, mask):
    mask = np.asarray(mask, dtype=bool)
    if logits.data.ndim != 1 or mask.shape != logits.data.shape:
        raise MaskError(f"mask shape {mask.shape} does not match logits {logits.data.shape}")
    if not mask.any():
        raise MaskError("mask excludes every entry")
    return mask


def masked_softmax(logits, mask):
    """Softmax restricted to ``mask``; excluded entries are exactly zero."""
    mask = _check_mask(logits, mask)
    x = logits.data
    shift = x[mask].max()
    e = np.zeros_like(x)
    e[mask] = np.exp(x[mask] - shift)
    val = e / e.sum()
    out = Tensor(val, requires_grad=logits.requires_grad)

    def backward_fn(g):
        inner = np.dot(g, val)
        _accum(logits, val * (g - inner))

    _record(out, backward_fn)
    return out


def masked_logsumexp(x, mask):
    """log(sum(exp(x[mask]))), numerically shifted; scalar output."""
    mask = _check_mask(x, mask)
    vals = x.data[mask]
    shift = vals.max()
    e = np.exp(vals - shift)
    total = e.sum()
    out = Tensor(np.float64(shift + np.log(total)), requires_grad=x.requires_grad)
    weights = np.zeros_like(x.data)
    weights[mask] = e / total

    def backward_fn(g):
        _accum(x, weights * g)

    _record(out, backward_fn)
    return out


def bce_with_logits(z, target):
    """Binary cross-entropy of sigmoid(z) against target, stably from the logit."""
    if z.data.shape != ():
        raise ShapeError(f"bce_with_logits: expected scalar logit, got {z.data.shape}")
    target = float(target)
    zv = float(z.data)
    val = max(zv, 0.0) - zv * target + np.log1p(np.exp(-abs(zv)))
    out = Tensor(np.float64(val), requires_grad=z.requires_grad)

    def backward_fn(g):
        s = 1.0 / (1.0 + np.exp(-zv)) if zv >= 0 else np.exp(zv) / (1.0 + np.exp(zv))
        _accum(z, np.float64((s - target) * g))

    _record(out, backward_fn)
    return out


def dropout(x, p, rng):
    """Inverted dropout; identity when p == 0. Only call in training mode."""
    if p < 0.0 or p >= 1.0:
        raise ConfigError(f"dropout probability must be in [0, 1), got {p}")
    if p == 0.0:
        return x
    keep = (rng.random(x.data.shape) >= p) / (1.0 - p)
    out = Tensor(x.data * keep, requires_grad=x.requires_grad)

    def backward_fn(g):
        _accum(x, g * keep)

    _record(out, backward_fn)
    return out


# ---------------------------------------------------------------------------
# GRU cell

class GruCell:
    """Standard gated recurrent unit: reset/update gates, tanh candidate.

    h' = (1 - z) * n + z * h  with
    r = sigmoid(W_r x + U_r h + b_r)
    z = sigmoid(W_z x + U_z h + b_z)
    n = tanh(W_n x + r * (U_n h) + b_n)
    """

    def __init__(self, input_dim, hidden_dim, rng, name):
        self.input_dim = int(input_dim)
        self.hidden_dim = int(hidden_dim)

        def p(shape, suffix):
            return init_param(rng, shape, f"{name}.{suffix}")

        h, i = self.hidden_dim, self.input_dim
        self.w_reset, self.u_reset, self.b_reset = p((h, i), "w_reset"), p((h, h), "u_reset"), p((h,), "b_reset")
        self.w_update, self.u_update, self.b_update = p((h, i), "w_update"), p((h, h), "u_update"), p((h,), "b_update")
        self.w_cand, self.u_cand, self.b_cand = p((h, i), "w_cand"), p((h, h), "u_cand"), p((h,), "b_cand")

    def parameters(self):
        return [
            self.w_reset, self.u_reset, self.b_reset,
            self.w_update, self.u_update, self.b_update,
            self.w_cand, self.u_cand, self.b_cand,
        ]

    def step(self, x, h_prev):
        if x.data.shape != (self.input_dim,):
            raise ShapeError(f"gru_step: input {x.data.shape} does not match cell input dim {self.input_dim}")
        if h_prev.data.shape != (self.hidden_dim,):
            raise ShapeError(f"gru_step: state {h_prev.data.shape} does not match hidden dim {self.hidden_dim}")
        r = sigmoid(add(add(matvec(self.w_reset, x), matvec(self.u_reset, h_prev)), self.b_reset))
        z = sigmoid(add(add(matvec(self.w_update, x), matvec(self.u_update, h_prev)), self.b_update))
        n = tanh(add(add(matvec(self.w_cand, x), mul(r, matvec(self.u_cand, h_prev))), self.b_cand))
        return add(sub(n, mul(z, n)), mul(z, h_prev))


def gru_step(cell, x, h_prev):
    return cell.step(x, h_prev)


# ---------------------------------------------------------------------------
# Optimizer

def global_grad_norm(params):
    total = 0.0
    for p in params:
        total += float(np.sum(p.grad * p.grad))
    return float(np.sqrt(total))


class AdamW:
    """Adam with decoupled weight decay, linear warmup and linear decay to 0.

    The schedule rises linearly from 0 to ``peak_lr`` over the first
    ``warmup_frac`` of ``total_steps`` and then decays linearly back to 0 at
    ``total_steps``. The global gradient norm is clipped to ``grad_clip``
    (if set) before each update. Biases are corrected as in standard Adam.
    """

    def __init__(self, params, peak_lr, total_steps, warmup_frac=0.1,
                 weight_decay=0.0, grad_clip=None, betas=(0.9, 0.999), eps=1e-8):
        if peak_lr < 0:
            raise ConfigError(f"learning rate must be non-negative, got {peak_lr}")
        if total_steps < 1:
            raise ConfigError(f"total_steps must be positive, got {total_steps}")
        if grad_clip is not None and grad_clip <= 0:
            raise ConfigError(f"gradient norm cap must be positive, got {grad_clip}")
        names = [p.name for p in params]
        if len(set(names)) != len(names):
            raise ConfigError("parameter names must be unique")
        self.params = list(params)
        self.peak_lr = float(peak_lr)
        self.total_steps = int(total_steps)
        self.warmup_steps = max(1, int(round(warmup_frac * total_steps)))
        self.weight_decay = float(weight_decay)
        self.grad_clip = grad_clip
        self.beta1, self.beta2 = betas
        self.eps = float(eps)
        self.t = 0
        self._m = [np.zeros_like(p.data) for p in self.params]
        self._v = [np.zeros_like(p.data) for p in self.params]

    def lr_at(self, step):
        w, total = self.warmup_steps, self.total_steps
        if step <= w:
            return self.peak_lr * step / w
        if step >= total:
            return 0.0
        return self.peak_lr * (total - step) / (total - w)

    def step(self):
        lr = self.lr_at(self.t)
        if self.grad_clip is not None:
            norm = global_grad_norm(self.params)
            if norm > self.grad_clip:
                factor = self.grad_clip / norm
                for p in self.params:
                    p.grad *= factor
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        for p, m, v in zip(self.params, self._m, self._v):
            g = p.grad
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            update = (m / bc1) / (np.sqrt(v / bc2) + self.eps)
            if self.weight_decay:
                update = update + self.weight_decay * p.data
            p.data -= lr * update


# ---------------------------------------------------------------------------
# Checkpoints

CHECKPOINT_MAGIC = b"KPLCKPT1"


def save_checkpoint(path, params, config_hash, step_count):
    """Binary container: name -> shape -> raw little-endian float64 values."""
    names = [p.name for p in params]
    if len(set(names)) != len(names):
        raise ConfigError("parameter names must be unique to checkpoint")
    config_hash = str(config_hash)
    with atomic_open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        hash_bytes = config_hash.encode("ascii")
        fh.write(struct.pack("<H", len(hash_bytes)))
        fh.write(hash_bytes)
        fh.write(struct.pack("<Q", int(step_count)))
        fh.write(struct.pack("<I", len(params)))
        for p in params:
            name_bytes = p.name.encode("utf-8")
            fh.write(struct.pack("<H", len(name_bytes)))
            fh.write(name_bytes)
            fh.write(struct.pack("<B", p.data.ndim))
            for dim in p.data.shape:
                fh.write(struct.pack("<I", dim))
            fh.write(np.ascontiguousarray(p.data, dtype="<f8").tobytes())


def load_checkpoint(path):
    """Returns (header dict, ordered name -> float64 array)."""
    with open(path, "rb") as fh:
        magic = fh.read(8)
        if magic != CHECKPOINT_MAGIC:
            raise FormatError("not a checkpoint file (bad magic)", path=path)

        def read(fmt):
            size = struct.calcsize(fmt)
            raw = fh.read(size)
            if len(raw) != size:
                raise FormatError("truncated checkpoint", path=path)
            return struct.unpack(fmt, raw)

        (hash_len,) = read("<H")
        config_hash = fh.read(hash_len).decode("ascii")
        (step_count,) = read("<Q")
        (n_params,) = read("<I")
        values = OrderedDict()
        for _ in range(n_params):
            (name_len,) = read("<H")
            name = fh.read(name_len).decode("utf-8")
            (ndim,) = read("<B")
            shape = tuple(read("<I")[0] for _ in range(ndim))
            count = int(np.prod(shape)) if shape else 1
            raw = fh.read(8 * count)
            if len(raw) != 8 * count:
                raise FormatError("truncated checkpoint payload", path=path, field=name)
            values[name] = np.frombuffer(raw, dtype="<f8").astype(np.float64).reshape(shape)
        return {"config_hash": config_hash, "step_count": int(step_count)}, values


def assign_parameters(params, values):
    """Load checkpoint values into live parameters by name, checking shapes."""
    by_name = {p.name: p for p in params}
    missing = set(by_name) - set(values)
    if missing:
        raise DataError(f"checkpoint is missing parameters: {sorted(missing)[:5]}")
    for name, arr in values.items():
        p = by_name.get(name)
        if p is None:
            raise DataError(f"checkpoint has unknown parameter {name!r}")
        if p.data.shape != arr.shape:
            raise ShapeError(f"checkpoint parameter {name!r} has shape {arr.shape}, expected {p.data.shape}")
        p.data = arr.copy()
