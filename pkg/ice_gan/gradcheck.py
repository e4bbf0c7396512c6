"""
Finite-difference verification of the backward rules.

`gradcheck` compares the gradients assigned by `tensor.backward` with
central differences (f(x + h) - f(x - h)) / 2h on sampled coordinates of
every input. Non-scalar outputs are reduced with a fixed random projection
first, so that every output entry contributes to the checked gradient.

The registered suites cover the tensor operations, the layers, the graph
reasoning module, the capsule routing path and the losses. They use small
shapes and inputs drawn away from the kinks of relu, abs and the hinges.
"""
from dataclasses import dataclass, field, asdict
import numpy as np
import pandas as pd
from .capsules import CapsuleBank, RoutingCaps, PrimaryCaps, squash
from .convolution import ConvSpec, conv2d, conv_transpose2d
from .graph_reasoning import GraphReasoningModule
from .layers import Linear, ParamRegistry
from .losses import (PerceptualNet, gan_discriminator_term,
                     gan_generator_term, l_cls, l_margin, l_perceptual,
                     l_pixel, l_rec)
from .skipFusionUsingSqueezeExcitation import skipFusionUsingSqueezeExcitation
from .tensor import (Tensor, apply_op, as_tensor, backward, concat, einsum,
                     elementwise, get_available_elementwise_ops, getitem,
                     index_select, matmul, mean, mul, norm, reshape, softmax,
                     tensor_sum, transpose)
from .utils import get_rng

# Relative errors are divided by max(|analytic|, |numeric|, REL_FLOOR).
REL_FLOOR = 1e-6


@dataclass
class GradcheckReport:
    """Outcome of one gradient check.

    max_rel_error is the largest relative error over all checked
    coordinates; worst names the input and flat index where it occurred.
    """
    name: str
    max_rel_error: float
    num_checked: int
    tol: float
    worst: tuple = None
    per_input: list = field(default_factory=list)

    @property
    def passed(self):
        return self.max_rel_error < self.tol

    def to_dict(self):
        out = asdict(self)
        out["passed"] = self.passed
        return out


def _projected_value(f, inputs, projection):
    out = f(*inputs)
    value = float(np.sum(out.data * projection))
    if not np.isfinite(value):
        raise FloatingPointError(f"Non-finite function value {value} "
                                 "during gradcheck.")
    return value


def gradcheck(f, inputs, h=1e-5, tol=1e-4, max_checks=None, seed=0,
              name="f"):
    """Compare analytic and central-difference gradients of `f`.

    parameters:
    -----------
    f: callable
        f(*inputs) -> Tensor.
    inputs: list of Tensor
        Tensors to differentiate with respect to. They are switched to
        requires_grad and perturbed in place (values are restored).
    h: float
        Finite-difference step.
    tol: float
        Pass threshold on the relative error.
    max_checks: int
        Coordinates checked per input; None checks all of them.
    seed: int
        Seed of the output projection and of the coordinate sampling.
    name: str
        Name of the report.

    returns:
    --------
    GradcheckReport

    Raises FloatingPointError when the function or a gradient is not
    finite.
    """
    rng = get_rng(seed)
    for t in inputs:
        t.requires_grad = True
        t.grad = None
        t.data = np.array(t.data, dtype=np.float64)
    out = f(*inputs)
    projection = (rng.standard_normal(out.shape) if out.size > 1
                  else np.ones(out.shape))
    backward(tensor_sum(mul(out, projection)))

    max_err = 0.0
    worst = None
    per_input = []
    num_checked = 0
    for i, t in enumerate(inputs):
        analytic = t.grad if t.grad is not None else np.zeros(t.shape)
        if not np.all(np.isfinite(analytic)):
            raise FloatingPointError(f"Non-finite analytic gradient for "
                                     f"input {i} ({t.name}) of {name}.")
        coords = np.arange(t.size)
        if max_checks is not None and t.size > max_checks:
            coords = np.sort(rng.choice(t.size, max_checks, replace=False))
        input_err = 0.0
        for c in coords:
            original = t.data.flat[c]
            t.data.flat[c] = original + h
            plus = _projected_value(f, inputs, projection)
            t.data.flat[c] = original - h
            minus = _projected_value(f, inputs, projection)
            t.data.flat[c] = original
            numeric = (plus - minus) / (2.0 * h)
            a = analytic.flat[c]
            err = abs(a - numeric) / max(abs(a), abs(numeric), REL_FLOOR)
            input_err = max(input_err, err)
            if err >= max_err:
                max_err = err
                worst = (t.name or f"input{i}", int(c))
        num_checked += len(coords)
        per_input.append({"input": t.name or f"input{i}",
                          "max_rel_error": float(input_err),
                          "num_checked": int(len(coords))})
        t.grad = None
    return GradcheckReport(name, float(max_err), num_checked, tol, worst,
                           per_input)


def buggy_square(a):
    """x**2 with the backward rule g * x (the factor 2 is missing)."""
    a = as_tensor(a)
    return apply_op("buggy_square", a.data**2, (a,), lambda g: (g * a.data,))


def _away_from_zero(rng, shape, low=0.1, high=1.0):
    return rng.uniform(low, high, shape) * rng.choice([-1.0, 1.0], shape)


def _named(data, name):
    return Tensor(data, requires_grad=True, name=name)


def _elementwise_case(op_tag):
    def build(rng):
        if op_tag in ["log", "sqrt"]:
            a = rng.uniform(0.5, 2.0, (3, 4))
        else:
            a = _away_from_zero(rng, (3, 4))
        if op_tag in ["add", "sub", "mul", "div"]:
            b = rng.uniform(0.5, 2.0, (4,))
            return (lambda x, y: elementwise(op_tag, x, y),
                    [_named(a, "a"), _named(b, "b")])
        return lambda x: elementwise(op_tag, x), [_named(a, "a")]
    return build


def _matmul_case(rng):
    return matmul, [_named(rng.standard_normal((2, 3, 4)), "a"),
                    _named(rng.standard_normal((4, 5)), "b")]


def _einsum_case(rng):
    return (lambda a, b: einsum("ijdk,nik->nijd", a, b),
            [_named(rng.standard_normal((3, 2, 4, 5)), "w"),
             _named(rng.standard_normal((2, 3, 5)), "u")])


def _reduction_case(rng):
    return (lambda a: concat([reshape(tensor_sum(a, axis=1), (-1,)),
                              reshape(mean(a, axis=(0, 2)), (-1,)),
                              reshape(tensor_sum(a), (1,))], axis=0),
            [_named(rng.standard_normal((2, 3, 4)), "a")])


def _softmax_case(rng):
    return (lambda a: softmax(a, axis=-1),
            [_named(rng.standard_normal((3, 4)), "a")])


def _norm_case(rng):
    return (lambda a: norm(a, axis=-1),
            [_named(rng.standard_normal((3, 4)), "a")])


def _shape_ops_case(rng):
    def f(a, b):
        h = transpose(reshape(a, (3, 2, 4)), (1, 0, 2))
        h = concat([h, b], axis=1)
        return index_select(getitem(h, (slice(None), slice(1, None))),
                            [0, 2, 2], axis=1)
    return f, [_named(rng.standard_normal((6, 4)), "a"),
               _named(rng.standard_normal((2, 1, 4)), "b")]


def _conv2d_case(rng):
    spec = ConvSpec(2, 3, 4, 2, 1)
    return ((lambda x, w, b: conv2d(x, w, spec, b)),
            [_named(rng.standard_normal((2, 2, 8, 8)), "x"),
             _named(rng.standard_normal(spec.weight_shape()), "weight"),
             _named(rng.standard_normal(3), "bias")])


def _deconv2d_case(rng):
    spec = ConvSpec(3, 2, 4, 2, 1)
    return ((lambda x, w, b: conv_transpose2d(x, w, spec, b)),
            [_named(rng.standard_normal((2, 3, 4, 4)), "x"),
             _named(rng.standard_normal(spec.weight_shape(True)), "weight"),
             _named(rng.standard_normal(2), "bias")])


def _registry_inputs(registry):
    return [t for _, t in registry]


def _linear_case(rng):
    registry = ParamRegistry("gradcheck")
    layer = Linear(registry, "linear", 5, 3, rng)
    x = _named(rng.standard_normal((4, 5)), "x")
    return (lambda x, *params: layer(x)), [x] + _registry_inputs(registry)


def _grm_case(projection):
    def build(rng):
        registry = ParamRegistry("gradcheck")
        module = GraphReasoningModule(
            registry, "grm", 4, rng, {"inverse_projection": projection,
                                      "adjacency_std": 0.3})
        if projection == "channel_attention":
            module.attention_scale.data = rng.uniform(0.5, 1.0, (4, 1, 1))
        f = _named(rng.standard_normal((2, 4, 8, 8)), "f")
        return (lambda f, *params: module(f)), ([f]
                                                + _registry_inputs(registry))
    return build


def _se_case(rng):
    registry = ParamRegistry("gradcheck")
    fusion = skipFusionUsingSqueezeExcitation(registry, "se", 8, rng,
                                              {"reduction": 2})
    f = _named(rng.standard_normal((2, 8, 4, 4)), "f")
    return (lambda f, *params: fusion(f)), [f] + _registry_inputs(registry)


def _squash_case(rng):
    return (lambda s: squash(s),
            [_named(rng.standard_normal((3, 2, 5)), "s")])


def _routing_case(rng):
    # Couplings are constants of the tape, so the analytic gradient is the
    # full derivative only for a single routing iteration.
    registry = ParamRegistry("gradcheck")
    primary = PrimaryCaps(registry, "primary", 2, num_types=2, dim=3,
                          rng=rng)
    routing = RoutingCaps(registry, "route", primary.num_capsules(4), 3, 3,
                          4, iterations=1, rng=rng)
    x = _named(rng.standard_normal((2, 2, 4, 4)), "x")

    def f(x, *params):
        return routing(primary(x)).lengths()
    return f, [x] + _registry_inputs(registry)


def _routing_predictions_case(rng):
    registry = ParamRegistry("gradcheck")
    routing = RoutingCaps(registry, "route", 4, 3, 3, 2, iterations=3,
                          rng=rng)
    poses = _named(rng.standard_normal((2, 4, 3)), "poses")
    return ((lambda p, *params: routing.predictions(CapsuleBank("lower", p))),
            [poses] + _registry_inputs(registry))


def _l_pixel_case(rng):
    return (lambda a, b: l_pixel(a, b),
            [_named(rng.uniform(-1, 1, (2, 1, 4, 4)), "x_syn"),
             _named(rng.uniform(-1, 1, (2, 1, 4, 4)), "target")])


def _l_perceptual_case(rng):
    net = PerceptualNet(seed=7, widths=(2, 2, 2, 2))
    target = rng.uniform(-1, 1, (2, 1, 16, 16))
    return (lambda x: l_perceptual(target, x, net),
            [_named(rng.uniform(-1, 1, (2, 1, 16, 16)), "x_syn")])


def _margin_lengths(rng):
    # lengths away from the hinges at m- = 0.1 and m+ = 0.9
    lengths = rng.uniform(0.15, 0.85, (4, 3))
    labels = rng.integers(0, 3, 4)
    return lengths, labels


def _l_margin_case(rng):
    lengths, labels = _margin_lengths(rng)
    return (lambda v: l_margin(v, labels), [_named(lengths, "lengths")])


def _l_cls_case(rng):
    lengths, labels = _margin_lengths(rng)
    x = rng.uniform(-1, 1, (4, 1, 3, 3))
    return ((lambda v, r: l_cls(l_margin(v, labels), l_rec(r, x), 0.5)),
            [_named(lengths, "lengths"),
             _named(rng.uniform(0, 1, (4, 1, 3, 3)), "recon")])


def _l_gan_case(rng):
    return ((lambda real, fake: concat(
        [reshape(gan_discriminator_term(real, fake), (1,)),
         reshape(gan_generator_term(fake), (1,))], axis=0)),
            [_named(rng.uniform(0.2, 0.8, 4), "d_real"),
             _named(rng.uniform(0.2, 0.8, 4), "d_fake")])


def _buggy_square_case(rng):
    return buggy_square, [_named(rng.uniform(0.5, 2.0, (3,)), "a")]


def get_available_suites(return_dict=False, inject_bug=False):
    """Get the registered gradient-check suites.

    Each suite maps a numpy Generator to (f, inputs). With inject_bug,
    the suite "injected_bug" (a square op with a wrong backward rule) is
    added; it is expected to fail.
    """
    suites = {f"elementwise:{tag}": _elementwise_case(tag)
              for tag in get_available_elementwise_ops()}
    suites.update({
        "matmul": _matmul_case,
        "einsum": _einsum_case,
        "reductions": _reduction_case,
        "softmax": _softmax_case,
        "norm": _norm_case,
        "shape_ops": _shape_ops_case,
        "conv2d": _conv2d_case,
        "deconv2d": _deconv2d_case,
        "linear": _linear_case,
        "grm:deconv": _grm_case("deconv"),
        "grm:channel_attention": _grm_case("channel_attention"),
        "se_fusion": _se_case,
        "squash": _squash_case,
        "routing": _routing_case,
        "routing_predictions": _routing_predictions_case,
        "l_pixel": _l_pixel_case,
        "l_perceptual": _l_perceptual_case,
        "l_margin": _l_margin_case,
        "l_cls": _l_cls_case,
        "l_gan": _l_gan_case,
    })
    if inject_bug:
        suites["injected_bug"] = _buggy_square_case
    return suites if return_dict else list(suites.keys())


def run_suites(names=None, h=1e-5, tol=1e-4, max_checks=30, seed=0,
               inject_bug=False):
    """Run gradient-check suites.

    parameters:
    -----------
    names: list of str
        Suites to run; None runs all of `get_available_suites`.
    h, tol, max_checks, seed:
        See `gradcheck`. Every suite draws its inputs from its own
        generator seeded with (seed, suite index).
    inject_bug: bool
        Also run the "injected_bug" suite.

    returns:
    --------
    List of GradcheckReport, in suite order.
    """
    suites = get_available_suites(return_dict=True, inject_bug=inject_bug)
    if names is None:
        names = list(suites.keys())
    elif inject_bug and "injected_bug" not in names:
        names = list(names) + ["injected_bug"]
    unknown = [n for n in names if n not in suites]
    if unknown:
        raise ValueError(f"Unknown gradcheck suite(s) {unknown}. Must be "
                         f"among {list(suites.keys())}")
    reports = []
    for index, name in enumerate(names):
        rng = np.random.default_rng([seed, index])
        f, inputs = suites[name](rng)
        reports.append(gradcheck(f, inputs, h=h, tol=tol,
                                 max_checks=max_checks, seed=seed,
                                 name=name))
    return reports


def reports_table(reports):
    """pandas DataFrame with one row per report."""
    return pd.DataFrame([{"suite": r.name,
                          "max_rel_error": r.max_rel_error,
                          "checked": r.num_checked,
                          "passed": r.passed} for r in reports])
