"""2d convolution and transposed convolution on (N, C, H, W) tensors."""
from dataclasses import dataclass
import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from .tensor import apply_op, as_tensor


@dataclass(frozen=True)
class ConvSpec:
    """Geometry of a square-kernel convolution."""
    in_channels: int
    out_channels: int
    kernel: int
    stride: int = 1
    padding: int = 0

    def __post_init__(self):
        for field in ["in_channels", "out_channels", "kernel", "stride"]:
            if getattr(self, field) < 1:
                raise ValueError(f"ConvSpec.{field} must be >= 1, got "
                                 f"{getattr(self, field)}")
        if self.padding < 0:
            raise ValueError(f"ConvSpec.padding must be >= 0, got "
                             f"{self.padding}")

    def output_size(self, size):
        """Spatial extent of conv2d output for an input extent `size`."""
        out = (size + 2 * self.padding - self.kernel) // self.stride + 1
        if size + 2 * self.padding < self.kernel or out < 1:
            raise ValueError(f"Degenerate output extent for input extent "
                             f"{size} with {self}")
        return out

    def transposed_output_size(self, size):
        """Spatial extent of conv_transpose2d output."""
        out = (size - 1) * self.stride - 2 * self.padding + self.kernel
        if out < 1:
            raise ValueError(f"Degenerate output extent for input extent "
                             f"{size} with {self}")
        return out

    def weight_shape(self, transposed=False):
        if transposed:
            return (self.in_channels, self.out_channels,
                    self.kernel, self.kernel)
        return (self.out_channels, self.in_channels,
                self.kernel, self.kernel)


def _check_input(x, spec):
    if x.ndim != 4:
        raise ValueError(f"Expected a (N, C, H, W) feature map, got shape "
                         f"{x.shape}")
    if x.shape[1] != spec.in_channels:
        raise ValueError(f"Channel mismatch: input has {x.shape[1]} channels"
                         f", spec expects {spec.in_channels}")


def _windows(xp, kernel, stride, out_h, out_w):
    """(N, C, out_h, out_w, k, k) view of the strided kernel windows."""
    win = sliding_window_view(xp, (kernel, kernel), axis=(2, 3))
    return win[:, :, ::stride, ::stride][:, :, :out_h, :out_w]


def _col2im(cols, stride, full_h, full_w):
    """Scatter-add (N, C, h, w, k, k) windows into a (N, C, H, W) map."""
    n, c, h, w, k, _ = cols.shape
    out = np.zeros((n, c, full_h, full_w))
    for i in range(k):
        for j in range(k):
            out[:, :, i:i + stride * h:stride, j:j + stride * w:stride] += \
                cols[:, :, :, :, i, j]
    return out


def conv2d(x, weight, spec, bias=None):
    """Cross-correlation of `x` with `weight`.

    Parameters
    ----------
    x: Tensor
        Input of shape (N, in_channels, H, W).
    weight: Tensor
        Kernel of shape (out_channels, in_channels, k, k).
    spec: ConvSpec
    bias: Tensor
        Optional, shape (out_channels,).
    """
    x, weight = as_tensor(x), as_tensor(weight)
    _check_input(x, spec)
    if weight.shape != spec.weight_shape():
        raise ValueError(f"Weight shape {weight.shape} does not match "
                         f"{spec.weight_shape()} for {spec}")
    n, _, h, w = x.shape
    out_h, out_w = spec.output_size(h), spec.output_size(w)
    p, s, k = spec.padding, spec.stride, spec.kernel
    xp = np.pad(x.data, ((0, 0), (0, 0), (p, p), (p, p)))
    win = _windows(xp, k, s, out_h, out_w)
    w_data = weight.data
    out = np.einsum("nchwij,ocij->nohw", win, w_data, optimize=True)

    def backward_rule(g):
        grad_w = np.einsum("nohw,nchwij->ocij", g, win, optimize=True)
        cols = np.einsum("nohw,ocij->nchwij", g, w_data, optimize=True)
        grad_xp = _col2im(cols, s, xp.shape[2], xp.shape[3])
        grad_x = grad_xp[:, :, p:p + h, p:p + w]
        if bias is None:
            return grad_x, grad_w
        return grad_x, grad_w, g.sum(axis=(0, 2, 3))

    inputs = (x, weight)
    if bias is not None:
        bias = as_tensor(bias)
        out = out + bias.data.reshape(1, -1, 1, 1)
        inputs = (x, weight, bias)
    return apply_op("conv2d", out, inputs, backward_rule)


def conv_transpose2d(x, weight, spec, bias=None):
    """Transposed convolution, the adjoint of `conv2d` w.r.t. its input.

    Parameters
    ----------
    x: Tensor
        Input of shape (N, in_channels, H, W).
    weight: Tensor
        Kernel of shape (in_channels, out_channels, k, k). Using the weight
        of a `conv2d` with the roles of the channel counts swapped gives
        the exact adjoint of that convolution.
    spec: ConvSpec
    bias: Tensor
        Optional, shape (out_channels,).

    Output spatial extent is (H - 1) * stride - 2 * padding + kernel.
    """
    x, weight = as_tensor(x), as_tensor(weight)
    _check_input(x, spec)
    if weight.shape != spec.weight_shape(transposed=True):
        raise ValueError(f"Weight shape {weight.shape} does not match "
                         f"{spec.weight_shape(transposed=True)} for {spec}")
    n, _, h, w = x.shape
    out_h = spec.transposed_output_size(h)
    out_w = spec.transposed_output_size(w)
    p, s, k = spec.padding, spec.stride, spec.kernel
    full_h, full_w = (h - 1) * s + k, (w - 1) * s + k
    x_data, w_data = x.data, weight.data
    cols = np.einsum("nchw,coij->nohwij", x_data, w_data, optimize=True)
    out = _col2im(cols, s, full_h, full_w)[:, :, p:p + out_h, p:p + out_w]

    def backward_rule(g):
        g_full = np.zeros((n, spec.out_channels, full_h, full_w))
        g_full[:, :, p:p + out_h, p:p + out_w] = g
        win = _windows(g_full, k, s, h, w)
        grad_x = np.einsum("nohwij,coij->nchw", win, w_data, optimize=True)
        grad_w = np.einsum("nchw,nohwij->coij", x_data, win, optimize=True)
        if bias is None:
            return grad_x, grad_w
        return grad_x, grad_w, g.sum(axis=(0, 2, 3))

    inputs = (x, weight)
    if bias is not None:
        bias = as_tensor(bias)
        out = out + bias.data.reshape(1, -1, 1, 1)
        inputs = (x, weight, bias)
    return apply_op("conv_transpose2d", out, inputs, backward_rule)


def receptive_field(layers):
    """Receptive field of the last layer in a stack of convolutions.

    Parameters
    ----------
    layers:
        Iterable of ConvSpec, or of (kernel, stride) pairs, from input to
        output.

    Returns
    -------
    Side length, in input pixels, of the receptive field of one output
    unit.
    """
    field, jump = 1, 1
    for layer in layers:
        kernel, stride = ((layer.kernel, layer.stride)
                          if isinstance(layer, ConvSpec) else layer)
        field += (kernel - 1) * jump
        jump *= stride
    return field
