"""
Classifier Service
Shared relu trunk plus task head, weighted cross-entropy and binary cross-entropy losses with
analytic gradients, a decoupled-weight-decay adaptive-moment optimizer, and trunk transfer
"""

import logging
import math
from typing import Dict, FrozenSet, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.special import expit, softmax

from models import (
    MULTICLASS, MULTILABEL, ClassWeights, ModelCheckpoint, ModelParams, ModelShapeError,
    OptimizerState, PredictionVector, TrainingError,
)

logger = logging.getLogger(__name__)

PROB_FLOOR = 1e-12


def _glorot(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


def init_model(dim_in: int, hidden: Optional[int], label_count: int, mode: str, seed: int) -> ModelParams:
    """Glorot-uniform weights, zero biases; trunk drawn before head from one seeded generator."""
    if dim_in < 1 or label_count < 1 or (hidden is not None and hidden < 1):
        raise ModelShapeError(f"Invalid dimensions: dim_in={dim_in}, hidden={hidden}, labels={label_count}")
    rng = np.random.default_rng(seed)
    trunk_w = trunk_b = None
    head_in = dim_in
    if hidden is not None:
        trunk_w = _glorot(rng, dim_in, hidden)
        trunk_b = np.zeros(hidden)
        head_in = hidden
    return ModelParams(head_w=_glorot(rng, head_in, label_count), head_b=np.zeros(label_count),
                       mode=mode, trunk_w=trunk_w, trunk_b=trunk_b)


def _as_matrix(params: ModelParams, X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[None, :]
    if X.shape[1] != params.dim_in:
        raise ModelShapeError(f"Input dimension {X.shape[1]} does not match model input {params.dim_in}")
    return X


def _forward_cache(params: ModelParams, X: np.ndarray) -> Tuple[np.ndarray, Optional[np.ndarray], np.ndarray]:
    """Return (hidden pre-activations or None, hidden activations, logits)."""
    if params.has_trunk:
        pre = X @ params.trunk_w + params.trunk_b
        hidden = np.maximum(pre, 0.0)
    else:
        pre = None
        hidden = X
    return pre, hidden, hidden @ params.head_w + params.head_b


def _activate(logits: np.ndarray, mode: str) -> np.ndarray:
    if mode == MULTICLASS:
        return softmax(logits, axis=-1)
    return expit(logits)


def forward_batch(params: ModelParams, X: np.ndarray) -> np.ndarray:
    """Probabilities for every row of X."""
    _, _, logits = _forward_cache(params, _as_matrix(params, X))
    return _activate(logits, params.mode)


def forward(params: ModelParams, x) -> PredictionVector:
    values = getattr(x, "values", x)
    return PredictionVector(probs=forward_batch(params, values)[0], mode=params.mode)


def _class_weight_array(cw: Union[ClassWeights, Sequence[float], np.ndarray, None], size: int) -> np.ndarray:
    if cw is None:
        return np.ones(size)
    array = cw.as_array() if isinstance(cw, ClassWeights) else np.asarray(cw, dtype=np.float64)
    if array.shape != (size,):
        raise ModelShapeError(f"Got {array.shape[0]} class weights for {size} labels")
    return array


def weighted_ce_loss(pred: PredictionVector, target: np.ndarray,
                     cw: Union[ClassWeights, Sequence[float], None] = None) -> Tuple[float, np.ndarray]:
    """
    L = sum_j -cw_j * y_j * log(p_j) for a one-hot target; the gradient is taken
    with respect to the pre-softmax logits.
    """
    if pred.mode != MULTICLASS:
        raise ModelShapeError("Weighted cross-entropy needs multiclass predictions")
    target = np.asarray(target, dtype=np.float64)
    if target.shape != pred.probs.shape or not np.all((target == 0) | (target == 1)) or target.sum() != 1:
        raise ModelShapeError("Target must be a one-hot vector matching the prediction")
    weights = _class_weight_array(cw, target.shape[0])
    probs = np.clip(pred.probs, PROB_FLOOR, 1.0)
    loss = float(-np.sum(weights * target * np.log(probs)))
    true_class = int(np.argmax(target))
    grad = weights[true_class] * (pred.probs - target)
    return loss, grad


def bce_loss(pred: PredictionVector, target: np.ndarray) -> Tuple[float, np.ndarray]:
    """Mean over labels of the binary cross-entropy; gradient with respect to the pre-sigmoid logits."""
    if pred.mode != MULTILABEL:
        raise ModelShapeError("Binary cross-entropy needs multilabel predictions")
    target = np.asarray(target, dtype=np.float64)
    if target.shape != pred.probs.shape or not np.all((target == 0) | (target == 1)):
        raise ModelShapeError("Target must be a multi-hot vector matching the prediction")
    probs = np.clip(pred.probs, PROB_FLOOR, 1.0 - PROB_FLOOR)
    loss = float(np.mean(-(target * np.log(probs) + (1.0 - target) * np.log(1.0 - probs))))
    grad = (pred.probs - target) / target.shape[0]
    return loss, grad


def loss_and_grads(params: ModelParams, X: np.ndarray, Y: np.ndarray,
                   cw: Union[ClassWeights, Sequence[float], None] = None) -> Tuple[float, Dict[str, np.ndarray]]:
    """
    Batch-mean loss and parameter gradients. Y holds class indices (multiclass)
    or a multi-hot matrix (multilabel).
    """
    X = _as_matrix(params, X)
    batch = X.shape[0]
    pre, hidden, logits = _forward_cache(params, X)
    probs = _activate(logits, params.mode)

    if params.mode == MULTICLASS:
        y = np.asarray(Y, dtype=np.int64).reshape(-1)
        weights = _class_weight_array(cw, params.label_count)[y]
        picked = np.clip(probs[np.arange(batch), y], PROB_FLOOR, 1.0)
        loss = float(np.mean(-weights * np.log(picked)))
        delta = probs.copy()
        delta[np.arange(batch), y] -= 1.0
        delta *= weights[:, None] / batch
    else:
        Y = np.asarray(Y, dtype=np.float64)
        clipped = np.clip(probs, PROB_FLOOR, 1.0 - PROB_FLOOR)
        loss = float(np.mean(-(Y * np.log(clipped) + (1.0 - Y) * np.log(1.0 - clipped))))
        delta = (probs - Y) / (batch * params.label_count)

    grads = {"head_w": hidden.T @ delta, "head_b": delta.sum(axis=0)}
    if params.has_trunk:
        back = (delta @ params.head_w.T) * (pre > 0)
        grads["trunk_w"] = X.T @ back
        grads["trunk_b"] = back.sum(axis=0)
    return loss, grads


def grad_step(params: ModelParams, grads: Dict[str, np.ndarray],
              state: OptimizerState) -> Tuple[ModelParams, OptimizerState]:
    """
    One bias-corrected adaptive-moment update followed by decoupled weight decay.
    Decay acts on weight matrices only; biases are exempt.
    """
    arrays = params.arrays()
    if set(grads) != set(arrays):
        raise ModelShapeError(f"Gradient keys {sorted(grads)} do not match parameters {sorted(arrays)}")

    t = state.step + 1
    correction1 = 1.0 - state.beta1 ** t
    correction2 = 1.0 - state.beta2 ** t
    updated, first, second = {}, {}, {}
    for name, value in arrays.items():
        grad = grads[name]
        if grad.shape != value.shape:
            raise ModelShapeError(f"Gradient for {name} has shape {grad.shape}, expected {value.shape}")
        if not np.all(np.isfinite(grad)):
            raise TrainingError(f"Non-finite gradient for {name} at optimizer step {t}")

        m = state.beta1 * state.m.get(name, np.zeros_like(value)) + (1.0 - state.beta1) * grad
        v = state.beta2 * state.v.get(name, np.zeros_like(value)) + (1.0 - state.beta2) * grad * grad
        step = state.lr * (m / correction1) / (np.sqrt(v / correction2) + state.eps)
        new_value = value - step
        if name.endswith("_w") and state.weight_decay:
            new_value = new_value - state.lr * state.weight_decay * value
        updated[name], first[name], second[name] = new_value, m, v

    new_params = ModelParams(mode=params.mode, nonlinearity=params.nonlinearity, **updated)
    new_state = OptimizerState(step=t, m=first, v=second, lr=state.lr, beta1=state.beta1, beta2=state.beta2,
                               eps=state.eps, weight_decay=state.weight_decay)
    return new_params, new_state


def decide(probs: np.ndarray, mode: str, threshold: float = 0.5,
           none_index: Optional[int] = None) -> Union[int, FrozenSet[int]]:
    """Argmax (lowest index on ties) or thresholded label set with the None label suppressed."""
    if mode == MULTICLASS:
        return int(np.argmax(probs))
    return frozenset(int(j) for j in np.flatnonzero(probs > threshold) if j != none_index)


def predict(params: ModelParams, x, mode: Optional[str] = None, threshold: float = 0.5,
            none_index: Optional[int] = None) -> Union[int, FrozenSet[int]]:
    if mode is not None and mode != params.mode:
        raise ModelShapeError(f"Model is {params.mode}, prediction requested as {mode}")
    return decide(forward(params, x).probs, params.mode, threshold, none_index)


def predict_batch(params: ModelParams, X: np.ndarray, threshold: float = 0.5,
                  none_index: Optional[int] = None) -> List[Union[int, FrozenSet[int]]]:
    probs = forward_batch(params, X)
    return [decide(row, params.mode, threshold, none_index) for row in probs]


def transfer_trunk(source: ModelCheckpoint, new_label_count: int, new_mode: str, seed: int,
                   dim_in: Optional[int] = None) -> ModelParams:
    """Copy the source trunk exactly and draw a fresh head for the next task."""
    params = source.params
    if not params.has_trunk:
        raise ModelShapeError("Task-dependent transfer needs a model with a shared trunk")
    if dim_in is not None and dim_in != params.dim_in:
        raise ModelShapeError(f"Source trunk expects {params.dim_in} features, got {dim_in}")
    fresh = init_model(params.dim_in, params.trunk_w.shape[1], new_label_count, new_mode, seed)
    logger.debug("Transferred %s trunk (fold %d, epoch %d) to a %d-label %s head",
                 source.task, source.fold, source.epoch, new_label_count, new_mode)
    return ModelParams(head_w=fresh.head_w, head_b=fresh.head_b, mode=new_mode,
                       trunk_w=params.trunk_w.copy(), trunk_b=params.trunk_b.copy(),
                       nonlinearity=params.nonlinearity)
