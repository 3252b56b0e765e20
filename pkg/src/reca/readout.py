"""Softmax readout: logits, loss, gradients, Adam, training, least squares.

The model acts on raw integer reservoir features. Training internally works
on features multiplied by ``feature_scale`` (1/255 by default) so that the
Adam learning rate is expressed in sensible units; the returned model has
the scale folded back into its weights.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .quant import QuantizedWeights, quantize_matrix

logger = logging.getLogger(__name__)

CE_FLOOR = 1e-12

__all__ = [
    "ReadoutModel",
    "LabeledBatch",
    "AdamState",
    "TrainParams",
    "TrainLog",
    "TrainingError",
    "SingularMatrixError",
    "one_hot",
    "logits",
    "integer_logits",
    "predict",
    "error_rate",
    "softmax",
    "cross_entropy",
    "loss",
    "grad_loss",
    "adam_init",
    "adam_step",
    "train",
    "pseudoinverse_fit",
    "ridge_fit",
    "quantize_weights",
    "dequantize",
]


class TrainingError(RuntimeError):
    pass


class SingularMatrixError(np.linalg.LinAlgError):
    def __init__(self, rank: int, size: int):
        super().__init__(f"X^T X is singular: rank {rank} < {size}")
        self.rank = rank
        self.size = size


@dataclass
class ReadoutModel:
    """Linear readout ``y = x @ weights + bias``.

    ``quantized`` (when present) takes precedence in the forward pass.
    """

    weights: np.ndarray  # (D, Q)
    bias: np.ndarray | None = None  # (Q,)
    quantized: QuantizedWeights | None = None
    bias_input: int = 255

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        if self.weights.ndim != 2:
            raise ValueError("weights must be a (D, Q) matrix")
        if self.bias is not None:
            self.bias = np.asarray(self.bias, dtype=np.float64)
            if self.bias.shape != (self.weights.shape[1],):
                raise ValueError("bias must have one entry per category")

    @property
    def num_features(self) -> int:
        return self.weights.shape[0]

    @property
    def num_classes(self) -> int:
        return self.weights.shape[1]

    def effective(self) -> tuple[np.ndarray, np.ndarray | None]:
        if self.quantized is not None:
            return self.quantized.dequantize()
        return self.weights, self.bias


@dataclass
class LabeledBatch:
    features: np.ndarray  # (L, D)
    labels: np.ndarray  # (L, Q) one-hot

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=np.float64)
        if self.labels.ndim != 2 or not np.all(self.labels.sum(axis=1) == 1):
            raise ValueError("labels must be one-hot rows")
        if len(self.features) != len(self.labels):
            raise ValueError("features and labels disagree on the sample count")


def one_hot(labels, num_classes: int = 10) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.int64)
    out = np.zeros((labels.size, num_classes))
    out[np.arange(labels.size), labels] = 1.0
    return out


def _features_2d(model: ReadoutModel, features) -> tuple[np.ndarray, bool]:
    x = np.asarray(features)
    single = x.ndim == 1
    x = np.atleast_2d(x)
    if x.shape[1] != model.num_features:
        raise ValueError(f"feature length {x.shape[1]} != model dimension {model.num_features}")
    return x, single


def logits(model: ReadoutModel, features) -> np.ndarray:
    x, single = _features_2d(model, features)
    w, b = model.effective()
    y = x.astype(np.float64) @ w
    if b is not None:
        y = y + b
    return y[0] if single else y


def integer_logits(model: ReadoutModel, features) -> np.ndarray:
    """Exact integer accumulators ``sum_d x_d * q_dq`` (plus bias row).

    Requires quantized weights and integer features. The float64 matmul is
    exact here because every partial sum stays far below 2**53.
    """
    if model.quantized is None:
        raise ValueError("model is not quantized")
    x, single = _features_2d(model, features)
    if not np.issubdtype(x.dtype, np.integer):
        raise TypeError("integer path needs integer features")
    q = model.quantized
    bound = (int(np.abs(x).max(initial=0)) * 127) * (q.values.shape[0]) + q.bias_input * 127
    if bound >= 2**31:
        raise OverflowError("accumulator could exceed 32 bits")
    acc = x.astype(np.float64) @ q.values[: q.num_features].astype(np.float64)
    if q.has_bias:
        acc += float(q.bias_input) * q.values[-1].astype(np.float64)
    acc = acc.astype(np.int64)
    return acc[0] if single else acc


def predict(model: ReadoutModel, features) -> np.ndarray:
    """Argmax of the logits; ties go to the lowest index."""
    return np.argmax(logits(model, features), axis=-1)


def error_rate(model: ReadoutModel, features, labels, chunk: int = 8192) -> float:
    labels = np.asarray(labels)
    wrong = 0
    for s in range(0, len(labels), chunk):
        wrong += int(np.sum(predict(model, features[s:s + chunk]) != labels[s:s + chunk]))
    return wrong / max(len(labels), 1)


def softmax(y) -> np.ndarray:
    y = np.asarray(y, dtype=np.float64)
    z = np.exp(y - y.max(axis=-1, keepdims=True))
    return z / z.sum(axis=-1, keepdims=True)


def cross_entropy(p, labels) -> np.ndarray:
    """``-sum_q l_q log p_q``; probabilities are floored at 1e-12."""
    p = np.asarray(p, dtype=np.float64)
    return -(np.asarray(labels) * np.log(np.maximum(p, CE_FLOOR))).sum(axis=-1)


def _frobenius(w: np.ndarray) -> float:
    return float(np.sqrt(np.sum(np.square(w))))


def loss(model: ReadoutModel, batch: LabeledBatch, reg: float = 0.0, squared: bool = False) -> float:
    """Mean cross-entropy plus ``reg * ||W||_F`` (``||W||_F**2`` if ``squared``).

    The bias is not regularized.
    """
    p = softmax(logits(model, batch.features))
    ce = float(np.mean(cross_entropy(p, batch.labels)))
    w, _ = model.effective()
    norm = _frobenius(w)
    return ce + reg * (norm**2 if squared else norm)


def _reg_grad(w: np.ndarray, reg: float, squared: bool) -> np.ndarray:
    if reg == 0:
        return np.zeros_like(w)
    if squared:
        return 2.0 * reg * w
    norm = _frobenius(w)
    # subgradient 0 at the origin
    return reg * w / norm if norm > 0 else np.zeros_like(w)


def grad_loss(
    model: ReadoutModel, batch: LabeledBatch, reg: float = 0.0, squared: bool = False
) -> tuple[np.ndarray, np.ndarray | None]:
    """Analytic gradient of ``loss`` w.r.t. (weights, bias)."""
    x = np.asarray(batch.features, dtype=np.float64)
    err = softmax(logits(model, x)) - batch.labels
    n = len(x)
    gw = x.T @ err / n
    w, b = model.effective()
    gw += _reg_grad(w, reg, squared)
    gb = err.sum(axis=0) / n if b is not None else None
    return gw, gb


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0
    alpha: float = 0.008
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


def adam_init(shape, alpha=0.008, beta1=0.9, beta2=0.999, eps=1e-8) -> AdamState:
    if not (0 <= beta1 < 1 and 0 <= beta2 < 1):
        raise ValueError("decay rates must lie in [0, 1)")
    return AdamState(np.zeros(shape), np.zeros(shape), 0, alpha, beta1, beta2, eps)


def adam_step(state: AdamState, weights: np.ndarray, grad: np.ndarray) -> tuple[AdamState, np.ndarray]:
    """One Adam update; returns a new state and new weights.

    The moving averages are stored uncorrected and the bias correction is
    applied when forming the step. ``eps`` sits inside the square root.
    """
    t = state.t + 1
    m = state.beta1 * state.m + (1.0 - state.beta1) * grad
    v = state.beta2 * state.v + (1.0 - state.beta2) * np.square(grad)
    m_hat = m / (1.0 - state.beta1**t)
    v_hat = v / (1.0 - state.beta2**t)
    new_weights = weights - state.alpha * m_hat / np.sqrt(v_hat + state.eps)
    return replace(state, m=m, v=v, t=t), new_weights


@dataclass
class TrainParams:
    """Readout training hyperparameters; defaults follow the quantized model setup."""

    learning_rate: float = 0.008
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    reg: float = 0.00012
    squared_norm: bool = False
    batch_size: int = 17000
    max_steps: int = 4000
    eval_every: int = 25
    target_val_error: float = 0.016
    quantize: bool = True
    quant_mode: str = "per_column"
    bias: bool = True
    feature_scale: float = 1.0 / 255.0
    num_classes: int = 10
    seed: int = 0


@dataclass
class TrainLog:
    step: list[int] = field(default_factory=list)
    batch_loss: list[float] = field(default_factory=list)
    batch_error: list[float] = field(default_factory=list)
    val_error: list[float] = field(default_factory=list)
    best_step: int = 0
    best_val_error: float = math.nan
    stopped_early: bool = False

    def rows(self):
        yield from zip(self.step, self.batch_loss, self.batch_error, self.val_error)


def _to_model(theta: np.ndarray, params: TrainParams) -> ReadoutModel:
    """Fold the feature scale back in: raw weights act on unscaled features."""
    d = theta.shape[0] - int(params.bias)
    weights = theta[:d] * params.feature_scale
    bias = theta[d].copy() if params.bias else None
    model = ReadoutModel(weights, bias, bias_input=int(round(1.0 / params.feature_scale)))
    if params.quantize:
        model = quantize_weights(model, params.quant_mode)
    return model


def train(
    features: np.ndarray,
    labels: np.ndarray,
    val_features: np.ndarray | None = None,
    val_labels: np.ndarray | None = None,
    params: TrainParams | None = None,
    callback=None,
) -> tuple[ReadoutModel, TrainLog]:
    """Mini-batch Adam on the softmax loss, optionally with fake quantization.

    Mini-batches are drawn uniformly with replacement at every step. With
    ``params.quantize`` the forward pass uses the 8-bit weights while Adam
    updates the real-valued shadow weights (straight-through gradient).
    Training stops once the validation error drops below
    ``params.target_val_error``; the returned model is the snapshot with the
    lowest validation error seen (the last one if no validation set).
    """
    params = params or TrainParams()
    features = np.asarray(features)
    labels = np.asarray(labels, dtype=np.int64)
    if features.ndim != 2 or len(features) == 0:
        raise TrainingError("empty training set")
    if len(labels) != len(features):
        raise TrainingError("features and labels disagree on the sample count")
    n, d = features.shape
    q = params.num_classes
    rng = np.random.default_rng(params.seed)
    theta = np.zeros((d + int(params.bias), q))
    state = adam_init(theta.shape, params.learning_rate, params.beta1, params.beta2, params.eps)
    has_val = val_features is not None and len(val_features) > 0
    log = TrainLog()
    best_theta, best_err = theta.copy(), math.inf
    batch = min(params.batch_size, n)

    for step in range(1, params.max_steps + 1):
        idx = rng.integers(0, n, size=batch)
        xb = features[idx].astype(np.float32) * np.float32(params.feature_scale)
        yb = labels[idx]

        if params.quantize:
            qmodel = _to_model(theta, params)
            w_eff, b_eff = qmodel.effective()
            w_fwd = (w_eff / params.feature_scale).astype(np.float32)
            b_fwd = b_eff
        else:
            w_fwd, b_fwd = theta[:d].astype(np.float32), (theta[d] if params.bias else None)
        z = (xb @ w_fwd).astype(np.float64)
        if b_fwd is not None:
            z += b_fwd
        p = softmax(z)
        ce = float(np.mean(-np.log(np.maximum(p[np.arange(batch), yb], CE_FLOOR))))
        w_shadow = theta[:d]
        norm = _frobenius(w_shadow)
        batch_loss = ce + params.reg * (norm**2 if params.squared_norm else norm)
        if not math.isfinite(batch_loss):
            raise TrainingError(f"non-finite loss at step {step} (|W|_F={norm:.3g})")
        batch_err = float(np.mean(np.argmax(z, axis=1) != yb))

        err = p
        err[np.arange(batch), yb] -= 1.0
        err /= batch
        grad = np.empty_like(theta)
        grad[:d] = (xb.T @ err.astype(np.float32)).astype(np.float64)
        grad[:d] += _reg_grad(w_shadow, params.reg, params.squared_norm)
        if params.bias:
            grad[d] = err.sum(axis=0)
        state, theta = adam_step(state, theta, grad)
        if not np.all(np.isfinite(theta)):
            raise TrainingError(f"non-finite weights after step {step}")

        val_err = math.nan
        last = step == params.max_steps
        if has_val and (step % params.eval_every == 0 or last):
            val_err = error_rate(_to_model(theta, params), val_features, val_labels)
            if val_err < best_err:
                best_err, best_theta = val_err, theta.copy()
                log.best_step = step
        log.step.append(step)
        log.batch_loss.append(batch_loss)
        log.batch_error.append(batch_err)
        log.val_error.append(val_err)
        if callback is not None:
            callback(step, batch_loss, batch_err, val_err)
        if has_val and val_err < params.target_val_error:
            log.stopped_early = True
            logger.info("validation error %.4f below target at step %d", val_err, step)
            break

    if not has_val:
        best_theta = theta
        log.best_step = log.step[-1]
    log.best_val_error = best_err if has_val else math.nan
    return _to_model(best_theta, params), log


def pseudoinverse_fit(x, y) -> np.ndarray:
    """Least-squares readout ``W = (X^T X)^-1 X^T Y`` via the normal equations."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    gram = x.T @ x
    rank = np.linalg.matrix_rank(gram)
    if rank < gram.shape[0]:
        raise SingularMatrixError(int(rank), gram.shape[0])
    return np.linalg.solve(gram, x.T @ y)


def ridge_fit(x, y, lam: float) -> np.ndarray:
    """Regularized least squares ``(X^T X + lam I)^-1 X^T Y`` (Cholesky)."""
    x = np.asarray(x, dtype=np.float64)
    gram = x.T @ x
    gram[np.diag_indices_from(gram)] += lam
    return cho_solve(cho_factor(gram), x.T @ np.asarray(y, dtype=np.float64))


def quantize_weights(model: ReadoutModel, mode: str = "per_column") -> ReadoutModel:
    """Attach int8 weights; the bias becomes a row on the constant ``bias_input``."""
    rows = model.weights
    if model.bias is not None:
        rows = np.vstack([rows, model.bias / model.bias_input])
    values, scales = quantize_matrix(rows, mode)
    q = QuantizedWeights(values, scales, has_bias=model.bias is not None, bias_input=model.bias_input)
    return replace(model, quantized=q)


def dequantize(q: QuantizedWeights) -> tuple[np.ndarray, np.ndarray | None]:
    return q.dequantize()
