"""Parameter registry and the trainable layers built on it."""
from collections import OrderedDict
import numpy as np
from .tensor import Tensor, matmul, reshape
from .convolution import ConvSpec, conv2d, conv_transpose2d
from .utils import get_rng


class ParamRegistry:
    """Named trainable tensors plus their Adam state.

    Every trainable tensor of a model is registered exactly once under a
    slash-separated path, e.g. "encoder/conv3/weight". The registry also
    carries the first and second Adam moments of every parameter and the
    optimizer step count.
    """

    def __init__(self, name="model", trainable=True):
        self.name = name
        self.trainable = trainable
        self.params = OrderedDict()
        self.adam_m = OrderedDict()
        self.adam_v = OrderedDict()
        self.step = 0

    def __contains__(self, path):
        return path in self.params

    def __getitem__(self, path):
        return self.params[path]

    def __iter__(self):
        return iter(self.params.items())

    def __len__(self):
        return len(self.params)

    def register(self, path, data):
        """Register a new parameter initialized with `data`."""
        if path in self.params:
            raise ValueError(f"Parameter {path} already registered in "
                             f"{self.name}.")
        tensor = Tensor(data, requires_grad=self.trainable, name=path)
        self.params[path] = tensor
        self.adam_m[path] = np.zeros(tensor.shape)
        self.adam_v[path] = np.zeros(tensor.shape)
        return tensor

    def zero_grad(self):
        for tensor in self.params.values():
            tensor.grad = None

    def count_parameters(self):
        return int(sum(t.size for t in self.params.values()))

    def snapshot(self):
        """Copies of all parameter values, keyed by path."""
        return OrderedDict((path, t.data.copy())
                           for path, t in self.params.items())

    def state_dict(self):
        """Parameters and Adam state as a flat dict of arrays.

        Adam moments are stored under "<path>#adam_m" and "<path>#adam_v",
        the step count under "#adam_step".
        """
        state = OrderedDict()
        for path, tensor in self.params.items():
            state[path] = tensor.data.copy()
            state[f"{path}#adam_m"] = self.adam_m[path].copy()
            state[f"{path}#adam_v"] = self.adam_v[path].copy()
        state["#adam_step"] = np.array(float(self.step))
        return state

    def load_state_dict(self, state, strict=True):
        """Restore parameters (and Adam state when present) from `state`.

        With strict=True, all problems (missing parameters, shape
        mismatches, unknown entries) are collected and raised together.
        """
        problems = []
        for path, tensor in self.params.items():
            if path not in state:
                problems.append(f"missing parameter {path}")
                continue
            if np.shape(state[path]) != tensor.shape:
                problems.append(f"shape mismatch for {path}: checkpoint "
                                f"{np.shape(state[path])}, model "
                                f"{tensor.shape}")
        if strict:
            known = set(self.params)
            for key in state:
                base = key.split("#")[0]
                if base and base not in known:
                    problems.append(f"unknown entry {key}")
        if problems:
            raise ValueError(f"Cannot restore {self.name}:\n  "
                             + "\n  ".join(problems))
        for path, tensor in self.params.items():
            tensor.data = np.array(state[path], dtype=np.float64)
            tensor.grad = None
            if f"{path}#adam_m" in state:
                self.adam_m[path] = np.array(state[f"{path}#adam_m"])
                self.adam_v[path] = np.array(state[f"{path}#adam_v"])
        if "#adam_step" in state:
            self.step = int(np.asarray(state["#adam_step"]).item())


def kaiming_normal(shape, fan_in, rng):
    """Draw weights from N(0, 2 / fan_in)."""
    return rng.normal(0.0, np.sqrt(2.0 / fan_in), size=shape)


class Conv2d:
    """Convolution layer with Kaiming fan-in initialization."""

    def __init__(self, registry, path, spec, rng=None, bias=True):
        rng = get_rng(rng)
        self.spec = spec
        fan_in = spec.in_channels * spec.kernel**2
        self.weight = registry.register(
            f"{path}/weight", kaiming_normal(spec.weight_shape(), fan_in,
                                             rng))
        self.bias = (registry.register(f"{path}/bias",
                                       np.zeros(spec.out_channels))
                     if bias else None)

    def __call__(self, x):
        return conv2d(x, self.weight, self.spec, self.bias)

    def output_size(self, size):
        return self.spec.output_size(size)


class ConvTranspose2d:
    """Transposed convolution layer with Kaiming fan-in initialization.

    The fan-in of a transposed convolution is the number of input values
    contributing to one output, in_channels * (kernel / stride)**2.
    """

    def __init__(self, registry, path, spec, rng=None, bias=True):
        rng = get_rng(rng)
        self.spec = spec
        fan_in = max(1, spec.in_channels
                     * (spec.kernel // spec.stride) ** 2)
        self.weight = registry.register(
            f"{path}/weight",
            kaiming_normal(spec.weight_shape(transposed=True), fan_in, rng))
        self.bias = (registry.register(f"{path}/bias",
                                       np.zeros(spec.out_channels))
                     if bias else None)

    def __call__(self, x):
        return conv_transpose2d(x, self.weight, self.spec, self.bias)

    def output_size(self, size):
        return self.spec.transposed_output_size(size)


class Linear:
    """Fully connected layer acting on the last axis of a (N, F) input."""

    def __init__(self, registry, path, in_features, out_features, rng=None,
                 bias=True):
        rng = get_rng(rng)
        self.in_features = in_features
        self.out_features = out_features
        self.weight = registry.register(
            f"{path}/weight",
            kaiming_normal((in_features, out_features), in_features, rng))
        self.bias = (registry.register(f"{path}/bias",
                                       np.zeros(out_features))
                     if bias else None)

    def __call__(self, x):
        if x.shape[-1] != self.in_features:
            raise ValueError(f"Linear layer expects {self.in_features} input "
                             f"features, got shape {x.shape}")
        out = matmul(x, self.weight)
        if self.bias is not None:
            out = out + self.bias
        return out


def flatten(x):
    """Flatten all but the leading (batch) axis."""
    return reshape(x, (x.shape[0], -1))


def conv_spec(in_channels, out_channels, kernel=4, stride=2, padding=1):
    """ConvSpec with the halving convention k=4, s=2, p=1 as default."""
    return ConvSpec(in_channels, out_channels, kernel, stride, padding)
