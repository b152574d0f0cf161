"""Task heads, objectives and metrics."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np

from . import tensor as T
from .tensor import Tensor

TASKS = {
    # name: (kind, n_classes)
    "sst2": ("classify", 2),
    "sicke": ("pair-classify", 3),
    "mrpc": ("pair-classify", 2),
    "sickr": ("relatedness", 5),
    "planted": ("classify", 4),
}


class MetricError(ValueError):
    pass


@dataclass(frozen=True)
class HeadConfig:
    kind: str = "classify"  # classify | pair-classify | relatedness
    n_classes: int = 2      # number of score levels K for relatedness
    hidden: int = 50

    def __post_init__(self):
        if self.kind not in ("classify", "pair-classify", "relatedness"):
            raise ValueError(f"unknown head kind {self.kind!r}")
        if self.n_classes < 2:
            raise ValueError("a head needs at least 2 classes / score levels")

    @property
    def pair(self) -> bool:
        return self.kind != "classify"

    @classmethod
    def for_task(cls, task: str, **overrides) -> "HeadConfig":
        try:
            kind, n = TASKS[task]
        except KeyError:
            raise ValueError(f"unknown task {task!r}; expected one of {sorted(TASKS)}") from None
        return cls(**{"kind": kind, "n_classes": n, **overrides})

    def to_json(self) -> dict:
        return asdict(self)


def head_parameter_shapes(cfg: HeadConfig, d_model: int) -> dict[str, tuple[int, ...]]:
    c = cfg.n_classes
    if cfg.kind == "classify":
        return {"head.w": (d_model, c), "head.b": (c,)}
    if cfg.kind == "pair-classify":
        return {"head.w_mul": (d_model, c), "head.w_abs": (d_model, c), "head.b": (c,)}
    return {
        "head.w_mul": (d_model, cfg.hidden),
        "head.w_abs": (d_model, cfg.hidden),
        "head.b_hidden": (cfg.hidden,),
        "head.w_out": (cfg.hidden, c),
        "head.b_out": (c,),
    }


@dataclass
class PairFeatures:
    h_mul: Tensor
    h_abs: Tensor


def pair_features(h_left: Tensor, h_right: Tensor) -> PairFeatures:
    """Angle (elementwise product) and distance (absolute difference) features."""
    if h_left.shape != h_right.shape:
        raise T.ShapeError(f"pair representations differ in shape: {h_left.shape} vs {h_right.shape}")
    return PairFeatures(h_left * h_right, T.absolute(h_left - h_right))


def classification_head(x: Tensor | PairFeatures, params) -> Tensor:
    """Affine logits from a sentence representation or from pair features."""
    if isinstance(x, PairFeatures):
        return (T.matmul(x.h_mul, params["head.w_mul"]) + T.matmul(x.h_abs, params["head.w_abs"])
                + params["head.b"])
    return T.matmul(x, params["head.w"]) + params["head.b"]


@dataclass
class RelatednessOutput:
    log_probs: Tensor  # B x K
    score: Tensor      # B, expected score in [1, K]

    @property
    def probs(self) -> np.ndarray:
        return np.exp(self.log_probs.data)


def relatedness_head(features: PairFeatures, params) -> RelatednessOutput:
    """Sigmoid hidden layer over the pair features, softmax over scores 1..K."""
    hidden = T.sigmoid(T.matmul(features.h_mul, params["head.w_mul"])
                       + T.matmul(features.h_abs, params["head.w_abs"]) + params["head.b_hidden"])
    logp = T.log_softmax(T.matmul(hidden, params["head.w_out"]) + params["head.b_out"])
    k = logp.shape[-1]
    levels = np.arange(1, k + 1, dtype=np.float64)
    score = T.matmul(T.exp(logp), Tensor(levels.reshape(k, 1))).reshape(-1)
    return RelatednessOutput(logp, score)


def target_distribution(y: float, k: int = 5) -> np.ndarray:
    """Sparse two-bin distribution over 1..k whose expectation is exactly ``y``."""
    if not 1.0 <= y <= k:
        raise ValueError(f"relatedness score {y} outside [1, {k}]")
    p = np.zeros(k)
    lo = math.floor(y)
    if lo == k:
        p[k - 1] = 1.0
        return p
    p[lo] = y - lo          # bin floor(y) + 1
    p[lo - 1] = lo - y + 1  # bin floor(y)
    return p


# objectives ---------------------------------------------------------------------------


def cross_entropy(logits: Tensor, targets: Sequence[int]) -> Tensor:
    """Mean of -log softmax(logits)[target]."""
    targets = np.asarray(targets, dtype=np.int64)
    logp = T.log_softmax(logits)
    onehot = np.zeros(logits.shape)
    onehot[np.arange(len(targets)), targets] = 1.0
    return -(logp * onehot).sum() * (1.0 / len(targets))


def kl_divergence(target: np.ndarray, log_probs: Tensor) -> Tensor:
    """Mean over rows of sum_k t_k (log t_k - log p_k), with 0 log 0 = 0."""
    target = np.asarray(target, dtype=np.float64)
    safe = np.where(target > 0, target, 1.0)
    entropy_term = float((target * np.log(safe)).sum())
    cross = (log_probs * target).sum()
    return (cross * -1.0 + entropy_term) * (1.0 / target.shape[0])


# metrics --------------------------------------------------------------------------------


def _check(pred, gold):
    pred, gold = np.asarray(pred, dtype=np.float64), np.asarray(gold, dtype=np.float64)
    if pred.size == 0:
        raise MetricError("metric over empty input")
    if pred.shape != gold.shape:
        raise MetricError(f"prediction/target length mismatch: {pred.shape} vs {gold.shape}")
    return pred, gold


def accuracy(pred, gold) -> float:
    pred, gold = _check(pred, gold)
    return float((pred == gold).mean())


def pearson(pred, gold) -> float:
    """Sample correlation; NaN when either series is constant."""
    pred, gold = _check(pred, gold)
    a, b = pred - pred.mean(), gold - gold.mean()
    denom = math.sqrt(float((a * a).sum()) * float((b * b).sum()))
    return float((a * b).sum() / denom) if denom > 0 else float("nan")


def mse(pred, gold) -> float:
    pred, gold = _check(pred, gold)
    return float(((pred - gold) ** 2).mean())


# task glue ---------------------------------------------------------------------------------


@dataclass
class HeadResult:
    loss: Tensor
    predictions: np.ndarray


def head_loss(cfg: HeadConfig, params, reps: Tensor, targets, pair: bool) -> HeadResult:
    """Loss and predictions for a batch of ROOT representations.

    In pair mode ``reps`` holds the left sentences followed by the right ones.
    """
    if cfg.pair != pair:
        raise ValueError(f"head kind {cfg.kind!r} does not match a {'pair' if pair else 'single'} batch")
    if pair:
        n = reps.shape[0] // 2
        x = pair_features(reps[:n], reps[n:])
    else:
        x = reps
    if cfg.kind == "relatedness":
        out = relatedness_head(x, params)
        dist = np.stack([target_distribution(float(y), cfg.n_classes) for y in targets])
        return HeadResult(kl_divergence(dist, out.log_probs), out.score.data.copy())
    logits = classification_head(x, params)
    return HeadResult(cross_entropy(logits, targets), logits.data.argmax(axis=-1))


def task_metrics(cfg: HeadConfig, predictions, targets) -> dict[str, float]:
    if cfg.kind == "relatedness":
        return {"pearson": pearson(predictions, targets), "mse": mse(predictions, targets)}
    return {"accuracy": accuracy(predictions, targets)}
