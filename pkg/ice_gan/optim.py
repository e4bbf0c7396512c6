"""Adam optimizer and cosine-annealing learning-rate schedule."""
from dataclasses import dataclass
import numpy as np
from .utils import debug_message


def get_default_adam_kwargs():
    """Defaults for `adam_step`."""
    return {"beta1": 0.9,
            "beta2": 0.999,
            "eps": 1e-8}


def adam_step(registry, lr, beta1=0.9, beta2=0.999, eps=1e-8,
              debug_level=0):
    """Apply one Adam update to every parameter of `registry`.

    Parameters
    ----------
    registry: ParamRegistry
        Parameters with gradients populated by a backward pass.
    lr: float
        Learning rate.
    beta1, beta2, eps:
        Adam constants.
    debug_level: int
        Parameters without a gradient are skipped and reported through
        `utils.debug_message` with this level. See its documentation.

    Returns
    -------
    List of parameter paths that had no gradient.
    """
    registry.step += 1
    t = registry.step
    bias1 = 1.0 - beta1**t
    bias2 = 1.0 - beta2**t
    missing = []
    for path, tensor in registry:
        if tensor.grad is None:
            missing.append(path)
            continue
        g = tensor.grad
        m = beta1 * registry.adam_m[path] + (1.0 - beta1) * g
        v = beta2 * registry.adam_v[path] + (1.0 - beta2) * g**2
        registry.adam_m[path] = m
        registry.adam_v[path] = v
        # assign a new array so that tensors recorded on an old tape keep
        # the values they were computed with
        tensor.data = tensor.data - lr * (m / bias1) / (np.sqrt(v / bias2)
                                                        + eps)
    if missing:
        debug_message(f"{len(missing)} parameter(s) of {registry.name} "
                      f"have no gradient and were not updated: {missing}",
                      debug_level, important=False)
    return missing


@dataclass(frozen=True)
class LrSchedule:
    """Cosine annealing from `base_lr` at epoch 0 to `min_lr` at `t_max`."""
    base_lr: float = 1e-3
    t_max: int = 100
    min_lr: float = 0.0

    def __post_init__(self):
        if self.t_max < 0:
            raise ValueError(f"t_max must be >= 0, got {self.t_max}")
        if self.min_lr > self.base_lr:
            raise ValueError(f"min_lr {self.min_lr} exceeds base_lr "
                             f"{self.base_lr}")

    def __call__(self, epoch):
        return cosine_lr(epoch, self)


def cosine_lr(epoch, sched):
    """Learning rate at `epoch` for the schedule `sched`.

    lr = min + 0.5 (base - min) (1 + cos(pi epoch / t_max)). A schedule with
    t_max = 0 is constant at base_lr.
    """
    if epoch < 0 or epoch > sched.t_max:
        raise ValueError(f"epoch {epoch} out of range [0, {sched.t_max}]")
    if sched.t_max == 0:
        return sched.base_lr
    return sched.min_lr + 0.5 * (sched.base_lr - sched.min_lr) * (
        1.0 + np.cos(np.pi * epoch / sched.t_max))
