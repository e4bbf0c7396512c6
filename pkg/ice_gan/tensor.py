"""
Dense float64 tensors with reverse-mode automatic differentiation.

Every numeric quantity in ice_gan is a `Tensor`. A tensor holds a float64
`numpy.ndarray` (row-major), a `requires_grad` flag and, after a backward
pass, a gradient array of the same shape. Operations on tensors that require
gradients record an `Operation` on the output tensor; `backward` collects the
reachable operations into a `ComputationTape` in topological order and
replays their backward rules in reverse.

Gradients accumulate: calling `backward` twice without zeroing adds the two
gradients. Use `Tensor.zero_grad` or `ParamRegistry.zero_grad` between
training steps.
"""
import itertools
import numpy as np
from scipy.special import softmax as _softmax


_tensor_ids = itertools.count()


class Tensor:
    """Dense n-dimensional float64 value with an optional gradient."""

    def __init__(self, data, requires_grad=False, name=None):
        """Init Tensor.

        Parameters
        ----------
        data:
            Array-like. Copied and converted to float64.
        requires_grad: bool
            If True, backward passes assign a gradient to this tensor.
            Default is False.
        name: str
            Optional name, used in diagnostics only.
        """
        self.data = np.array(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self.name = name
        self.id = next(_tensor_ids)
        # Operation that produced this tensor. None for leaves.
        self.op = None

    @classmethod
    def _wrap(cls, data, requires_grad=False):
        """Create a tensor that owns `data` without copying it."""
        tensor = cls.__new__(cls)
        tensor.data = np.asarray(data, dtype=np.float64)
        tensor.requires_grad = bool(requires_grad)
        tensor.grad = None
        tensor.name = None
        tensor.id = next(_tensor_ids)
        tensor.op = None
        return tensor

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    @property
    def is_leaf(self):
        return self.op is None

    def __repr__(self):
        name = f", name={self.name!r}" if self.name else ""
        return (f"Tensor(shape={self.shape}, "
                f"requires_grad={self.requires_grad}{name})")

    def numpy(self):
        """Return a copy of the data."""
        return self.data.copy()

    def item(self):
        """Return the value of a single-element tensor as a float."""
        if self.size != 1:
            raise ValueError("item() requires a single-element tensor, got "
                             f"shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def detach(self):
        """Return a constant tensor sharing this tensor's values."""
        return Tensor._wrap(self.data, requires_grad=False)

    def zero_grad(self):
        self.grad = None

    def backward(self):
        """Run a backward pass from this scalar tensor. See `backward`."""
        return backward(self)

    # arithmetic operators
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, key):
        return getitem(self, key)

    # convenience methods
    def sum(self, axis=None, keepdims=False):
        return tensor_sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return transpose(self, axes if axes else None)


class Operation:
    """One recorded operation: inputs, output and backward rule.

    The backward rule maps the gradient of the output to a tuple with one
    entry per input; entries may be None for inputs that receive no
    gradient. Gradients returned for broadcast inputs are reduced to the
    input shape by the tape.
    """

    def __init__(self, name, inputs, output, backward_rule):
        self.name = name
        self.inputs = tuple(inputs)
        self.output = output
        self.backward_rule = backward_rule

    @property
    def input_ids(self):
        return tuple(t.id for t in self.inputs)

    @property
    def output_id(self):
        return self.output.id

    def __repr__(self):
        return (f"Operation({self.name}, inputs={self.input_ids}, "
                f"output={self.output_id})")


class ComputationTape:
    """Operations reachable from a loss, in topological order.

    An operation's inputs are always produced by operations recorded
    earlier on the tape.
    """

    def __init__(self, operations=None):
        self.operations = list(operations or [])

    def __len__(self):
        return len(self.operations)

    def __iter__(self):
        return iter(self.operations)

    @classmethod
    def from_loss(cls, loss):
        """Collect the operations reachable from `loss`.

        Uses an iterative depth-first traversal so that deep graphs do not
        hit the recursion limit.
        """
        order = []
        visited = set()
        stack = [(loss, False)]
        while stack:
            tensor, expanded = stack.pop()
            if tensor.op is None:
                continue
            if expanded:
                order.append(tensor.op)
                continue
            if tensor.id in visited:
                continue
            visited.add(tensor.id)
            stack.append((tensor, True))
            for parent in tensor.op.inputs:
                if parent.op is not None and parent.id not in visited:
                    stack.append((parent, False))
        return cls(order)

    def replay(self, loss, seed_grad=None):
        """Replay backward rules in reverse order starting from `loss`.

        Every reachable tensor with requires_grad=True gets its gradient
        accumulated into `.grad`.
        """
        if seed_grad is None:
            seed_grad = np.ones(loss.shape)
        pending = {loss.id: np.asarray(seed_grad, dtype=np.float64)}
        if loss.op is None:
            _accumulate(loss, pending[loss.id])
            return
        for op in reversed(self.operations):
            grad_out = pending.pop(op.output.id, None)
            if grad_out is None:
                continue
            _accumulate(op.output, grad_out)
            grad_inputs = op.backward_rule(grad_out)
            for tensor, grad in zip(op.inputs, grad_inputs):
                if grad is None or not tensor.requires_grad:
                    continue
                grad = unbroadcast(grad, tensor.shape)
                if tensor.op is None:
                    _accumulate(tensor, grad)
                elif tensor.id in pending:
                    pending[tensor.id] = pending[tensor.id] + grad
                else:
                    pending[tensor.id] = grad


def _accumulate(tensor, grad):
    if tensor.grad is None:
        tensor.grad = np.array(grad, dtype=np.float64).reshape(tensor.shape)
    else:
        tensor.grad = tensor.grad + grad


def backward(loss):
    """Assign dloss/dx to every tensor x reachable from a scalar `loss`.

    Parameters
    ----------
    loss: Tensor
        Single-element tensor.

    Returns
    -------
    The ComputationTape that was replayed, or None when the loss does not
    depend on any tensor requiring gradients (no gradient is assigned in
    that case).
    """
    if loss.size != 1:
        raise ValueError("backward requires a scalar loss, got a tensor of "
                         f"shape {loss.shape}")
    if not loss.requires_grad:
        return None
    tape = ComputationTape.from_loss(loss)
    tape.replay(loss)
    return tape


def apply_op(name, data, inputs, backward_rule):
    """Create the output tensor of an operation and record it.

    This is the hook used by every differentiable function of the package
    (including the ones defined outside this module, like convolutions
    and capsule squashing).
    """
    requires_grad = any(t.requires_grad for t in inputs)
    out = Tensor._wrap(data, requires_grad=requires_grad)
    if requires_grad:
        out.op = Operation(name, inputs, out, backward_rule)
    return out


def as_tensor(value):
    """Wrap non-tensor values as constant tensors."""
    if isinstance(value, Tensor):
        return value
    return Tensor(value)


def unbroadcast(grad, shape):
    """Sum `grad` down to `shape`, undoing numpy broadcasting."""
    grad = np.asarray(grad)
    if grad.shape == tuple(shape):
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape)
                 if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def broadcast_shape(a, b):
    """Broadcast shape of two tensors, with an error naming both shapes."""
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ValueError(f"Shape mismatch: cannot broadcast {a.shape} "
                         f"with {b.shape}") from None


# Elementwise operations
def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    broadcast_shape(a, b)
    return apply_op("add", a.data + b.data, (a, b),
                    lambda g: (g, g))


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)
    broadcast_shape(a, b)
    return apply_op("sub", a.data - b.data, (a, b),
                    lambda g: (g, -g))


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    broadcast_shape(a, b)
    a_data, b_data = a.data, b.data
    return apply_op("mul", a_data * b_data, (a, b),
                    lambda g: (g * b_data, g * a_data))


def div(a, b):
    a, b = as_tensor(a), as_tensor(b)
    broadcast_shape(a, b)
    a_data, b_data = a.data, b.data
    return apply_op("div", a_data / b_data, (a, b),
                    lambda g: (g / b_data, -g * a_data / b_data**2))


def neg(a):
    a = as_tensor(a)
    return apply_op("neg", -a.data, (a,), lambda g: (-g,))


def relu(a):
    """Rectified linear unit. The subgradient at 0 is 0."""
    a = as_tensor(a)
    mask = a.data > 0
    return apply_op("relu", np.where(mask, a.data, 0.0), (a,),
                    lambda g: (g * mask,))


def leaky_relu(a, slope=0.2):
    a = as_tensor(a)
    scale = np.where(a.data > 0, 1.0, slope)
    return apply_op("leaky_relu", a.data * scale, (a,),
                    lambda g: (g * scale,))


def sigmoid(a):
    a = as_tensor(a)
    # numerically stable for large |a|
    out = np.where(a.data >= 0,
                   1.0 / (1.0 + np.exp(-np.abs(a.data))),
                   np.exp(-np.abs(a.data)) / (1.0 + np.exp(-np.abs(a.data))))
    return apply_op("sigmoid", out, (a,),
                    lambda g: (g * out * (1.0 - out),))


def tanh(a):
    a = as_tensor(a)
    out = np.tanh(a.data)
    return apply_op("tanh", out, (a,), lambda g: (g * (1.0 - out**2),))


def square(a):
    a = as_tensor(a)
    a_data = a.data
    return apply_op("square", a_data**2, (a,), lambda g: (2.0 * g * a_data,))


def tensor_abs(a):
    """Absolute value. The subgradient at 0 is 0."""
    a = as_tensor(a)
    sign = np.sign(a.data)
    return apply_op("abs", np.abs(a.data), (a,), lambda g: (g * sign,))


def exp(a):
    a = as_tensor(a)
    out = np.exp(a.data)
    return apply_op("exp", out, (a,), lambda g: (g * out,))


def log(a):
    a = as_tensor(a)
    a_data = a.data
    return apply_op("log", np.log(a_data), (a,), lambda g: (g / a_data,))


def sqrt(a):
    a = as_tensor(a)
    out = np.sqrt(a.data)
    return apply_op("sqrt", out, (a,), lambda g: (g / (2.0 * out),))


def clip(a, low, high):
    """Clamp values to [low, high]; no gradient flows outside the range."""
    a = as_tensor(a)
    inside = (a.data >= low) & (a.data <= high)
    return apply_op("clip", np.clip(a.data, low, high), (a,),
                    lambda g: (g * inside,))


_binary_ops = {"add": add, "sub": sub, "mul": mul, "div": div}
_unary_ops = {"relu": relu, "sigmoid": sigmoid, "tanh": tanh,
              "square": square, "abs": tensor_abs, "neg": neg, "exp": exp,
              "log": log, "sqrt": sqrt, "leaky_relu": leaky_relu}


def get_available_elementwise_ops(return_dict=False):
    """Get the op-tags accepted by `elementwise`."""
    ops = {**_binary_ops, **_unary_ops}
    return ops if return_dict else list(ops.keys())


def elementwise(op_tag, a, b=None):
    """Apply the elementwise operation named `op_tag`.

    Parameters
    ----------
    op_tag: str
        One of `get_available_elementwise_ops()`. Binary ops are add, sub,
        mul and div; they broadcast their operands.
    a, b:
        Operands. `b` is required for binary ops and must be None for
        unary ops.
    """
    if op_tag in _binary_ops:
        if b is None:
            raise ValueError(f"Binary op {op_tag} requires two operands.")
        return _binary_ops[op_tag](a, b)
    if op_tag in _unary_ops:
        if b is not None:
            raise ValueError(f"Unary op {op_tag} takes one operand.")
        return _unary_ops[op_tag](a)
    raise ValueError(f"Unknown op-tag {op_tag}. Must be one of "
                     f"{get_available_elementwise_ops()}")


# Linear algebra
def matmul(a, b):
    """Matrix product of the last two axes; leading axes broadcast.

    For rank-2 operands (m x k)(k x n) -> (m x n) with
    grad_a = g b^T and grad_b = a^T g.
    """
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ValueError("matmul requires operands of rank >= 2, got shapes "
                         f"{a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ValueError(f"Inner dimension mismatch in matmul: {a.shape} x "
                         f"{b.shape}")
    a_data, b_data = a.data, b.data

    def backward_rule(g):
        return (np.matmul(g, np.swapaxes(b_data, -1, -2)),
                np.matmul(np.swapaxes(a_data, -1, -2), g))
    return apply_op("matmul", np.matmul(a_data, b_data), (a, b),
                    backward_rule)


def einsum(subscripts, a, b):
    """Two-operand einsum with gradients.

    Every index of an operand must appear either in the output or in the
    other operand, and no index may repeat within one operand.
    """
    a, b = as_tensor(a), as_tensor(b)
    inputs, out_sub = subscripts.replace(" ", "").split("->")
    a_sub, b_sub = inputs.split(",")
    for sub_, other in ((a_sub, b_sub), (b_sub, a_sub)):
        if len(set(sub_)) != len(sub_):
            raise ValueError(f"Repeated index in operand {sub_!r} of "
                             f"{subscripts!r} is not supported.")
        if not set(sub_) <= set(out_sub) | set(other):
            raise ValueError(f"Operand {sub_!r} of {subscripts!r} has an "
                             "index summed out on its own; not supported.")
    a_data, b_data = a.data, b.data

    def backward_rule(g):
        return (np.einsum(f"{out_sub},{b_sub}->{a_sub}", g, b_data,
                          optimize=True),
                np.einsum(f"{out_sub},{a_sub}->{b_sub}", g, a_data,
                          optimize=True))
    out = np.einsum(subscripts, a_data, b_data, optimize=True)
    return apply_op("einsum", out, (a, b), backward_rule)


# Reductions
def _normalize_axes(axis, ndim):
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(ax % ndim for ax in axis)


def tensor_sum(a, axis=None, keepdims=False):
    a = as_tensor(a)
    axes = _normalize_axes(axis, a.ndim)
    shape = a.shape

    def backward_rule(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g, shape).copy(),)
    return apply_op("sum", a.data.sum(axis=axes, keepdims=keepdims), (a,),
                    backward_rule)


def mean(a, axis=None, keepdims=False):
    a = as_tensor(a)
    axes = _normalize_axes(axis, a.ndim)
    count = int(np.prod([a.shape[ax] for ax in axes])) if axes else 1
    return tensor_sum(a, axis=axes, keepdims=keepdims) * (1.0 / count)


def softmax(a, axis=-1):
    a = as_tensor(a)
    out = _softmax(a.data, axis=axis)

    def backward_rule(g):
        return (out * (g - np.sum(g * out, axis=axis, keepdims=True)),)
    return apply_op("softmax", out, (a,), backward_rule)


def norm(a, axis=-1, keepdims=False):
    """Euclidean norm along `axis`. The gradient at a zero vector is 0."""
    a = as_tensor(a)
    a_data = a.data
    # rescaled by the largest entry so that squaring cannot overflow
    peak = np.max(np.abs(a_data), axis=axis, keepdims=True)
    peak = np.where(peak > 0, peak, 1.0)
    out = peak * np.sqrt(np.sum((a_data / peak)**2, axis=axis,
                                keepdims=True))

    def backward_rule(g):
        if not keepdims:
            g = np.expand_dims(g, axis)
        safe = np.where(out > 0, out, 1.0)
        return (np.where(out > 0, g * a_data / safe, 0.0),)
    value = out if keepdims else np.squeeze(out, axis=axis)
    return apply_op("norm", value, (a,), backward_rule)


# Shape manipulation
def reshape(a, shape):
    a = as_tensor(a)
    old_shape = a.shape
    return apply_op("reshape", a.data.reshape(shape), (a,),
                    lambda g: (g.reshape(old_shape),))


def transpose(a, axes=None):
    a = as_tensor(a)
    if axes is None:
        axes = tuple(reversed(range(a.ndim)))
    inverse = tuple(np.argsort(axes))
    return apply_op("transpose", np.transpose(a.data, axes), (a,),
                    lambda g: (np.transpose(g, inverse),))


def concat(tensors, axis=0):
    tensors = [as_tensor(t) for t in tensors]
    ref = tensors[0].shape
    ax = axis % len(ref)
    for t in tensors[1:]:
        if (t.ndim != len(ref)
                or t.shape[:ax] + t.shape[ax + 1:] != ref[:ax] + ref[ax + 1:]):
            raise ValueError("Shape mismatch in concat along axis "
                             f"{axis}: {[t.shape for t in tensors]}")
    splits = np.cumsum([t.shape[ax] for t in tensors])[:-1]

    def backward_rule(g):
        return tuple(np.split(g, splits, axis=ax))
    return apply_op("concat", np.concatenate([t.data for t in tensors],
                                             axis=ax),
                    tensors, backward_rule)


def getitem(a, key):
    a = as_tensor(a)
    shape = a.shape

    def backward_rule(g):
        full = np.zeros(shape)
        np.add.at(full, key, g)
        return (full,)
    return apply_op("getitem", a.data[key], (a,), backward_rule)


# Serialization
def tensor_to_bytes(tensor):
    """Little-endian binary: u32 rank, u32 extents, then f64 data."""
    data = tensor.data if isinstance(tensor, Tensor) else np.asarray(
        tensor, dtype=np.float64)
    header = np.array([data.ndim, *data.shape], dtype="<u4")
    return header.tobytes() + np.ascontiguousarray(
        data, dtype="<f8").tobytes()


def tensor_from_bytes(buffer, offset=0):
    """Inverse of `tensor_to_bytes`.

    Returns
    -------
    (Tensor, new offset)
    """
    buffer = memoryview(buffer)
    if len(buffer) < offset + 4:
        raise ValueError("Truncated tensor header.")
    rank = int(np.frombuffer(buffer, dtype="<u4", count=1, offset=offset)[0])
    offset += 4
    if len(buffer) < offset + 4 * rank:
        raise ValueError("Truncated tensor extents.")
    shape = tuple(int(n) for n in np.frombuffer(
        buffer, dtype="<u4", count=rank, offset=offset))
    offset += 4 * rank
    count = int(np.prod(shape)) if rank else 1
    if len(buffer) < offset + 8 * count:
        raise ValueError(f"Truncated tensor data for shape {shape}.")
    data = np.frombuffer(buffer, dtype="<f8", count=count, offset=offset)
    offset += 8 * count
    return Tensor(data.reshape(shape)), offset


def index_select(a, indices, axis=0):
    """Select entries `indices` along `axis`; repeated indices allowed."""
    a = as_tensor(a)
    indices = np.asarray(indices, dtype=int)
    key = (slice(None),) * (axis % a.ndim) + (indices,)
    return getitem(a, key)
