"""Adam optimizer as a pure (weights, grads, state) -> (weights, state) step."""

from dataclasses import dataclass

import numpy as np

from .weights import ModelWeights, ShapeMismatchError


@dataclass
class OptimizerState:
    first_moment: dict  # name -> float32 ndarray
    second_moment: dict
    step_count: int
    learning_rate: float
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8


def init_state(weights: ModelWeights, learning_rate: float = 1e-3,
               beta1: float = 0.9, beta2: float = 0.999,
               epsilon: float = 1e-8) -> OptimizerState:
    zeros = {k: np.zeros_like(v) for k, v in weights.layers.items()}
    return OptimizerState(first_moment=zeros,
                          second_moment={k: v.copy() for k, v in zeros.items()},
                          step_count=0, learning_rate=learning_rate,
                          beta1=beta1, beta2=beta2, epsilon=epsilon)


def adam_step(weights: ModelWeights, grads: ModelWeights,
              state: OptimizerState):
    """One bias-corrected Adam update; inputs are left untouched."""
    if weights.spec.layer_shapes() != grads.spec.layer_shapes():
        raise ShapeMismatchError("gradient layout does not match weights")
    for name, tensor in weights.layers.items():
        if state.first_moment[name].shape != tensor.shape:
            raise ShapeMismatchError(f"optimizer moment shape mismatch at {name}")

    t = state.step_count + 1
    b1, b2 = state.beta1, state.beta2
    c1 = np.float32(1.0 - b1 ** t)
    c2 = np.float32(1.0 - b2 ** t)
    lr = np.float32(state.learning_rate)
    eps = np.float32(state.epsilon)

    new_w, new_m, new_v = {}, {}, {}
    for name, w in weights.layers.items():
        g = grads.layers[name]
        m = (b1 * state.first_moment[name] + (1 - b1) * g).astype(np.float32)
        v = (b2 * state.second_moment[name] + (1 - b2) * g * g).astype(np.float32)
        m_hat = m / c1
        v_hat = v / c2
        new_w[name] = (w - lr * m_hat / (np.sqrt(v_hat) + eps)).astype(np.float32)
        new_m[name] = m
        new_v[name] = v

    updated = ModelWeights(weights.spec, new_w)
    updated.assert_finite()
    new_state = OptimizerState(first_moment=new_m, second_moment=new_v,
                               step_count=t, learning_rate=state.learning_rate,
                               beta1=b1, beta2=b2, epsilon=state.epsilon)
    return updated, new_state
