import numpy as np
from dataclasses import dataclass


@dataclass(frozen=True)
class RMSPropConfig:
    learning_rate: float = 0.001
    rho: float = 0.9
    epsilon: float = 1e-7


def rmsprop_step(params, grads, state, cfg: RMSPropConfig = RMSPropConfig()):
    """One in-place RMSProp update.

    For each parameter with a gradient::

        v <- rho * v + (1 - rho) * g**2
        p <- p - lr * g / (sqrt(v) + eps)

    ``state`` maps parameter names to their running mean square and is
    filled with zeros on first use.  Returns ``(params, state)``.
    """
    for name, g in grads.items():
        v = state.get(name)
        if v is None:
            v = state[name] = np.zeros_like(params[name])
        v *= cfg.rho
        v += (1.0 - cfg.rho) * (g * g)
        params[name] -= cfg.learning_rate * g / (np.sqrt(v) + cfg.epsilon)
    return params, state
