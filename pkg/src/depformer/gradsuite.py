"""Finite-difference gradient suite shared by the CLI and the acceptance tests."""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import tensor as T
from .data import collate, encode_tree
from .encoder import ModelConfig, ParameterSet, encode
from .heads import HeadConfig, head_loss
from .relation import build_relation_vocab
from .tensor import Tensor, grad_check
from .trainer import expected_shapes
from .treebank import DependencyTree, build_vocab

TOLERANCE = 1e-4
EPS = 1e-5


@dataclass
class CheckResult:
    name: str
    max_rel_error: float
    seconds: float

    @property
    def ok(self) -> bool:
        return self.max_rel_error < TOLERANCE


# op level ---------------------------------------------------------------------------


def _op_losses(rng: np.random.Generator) -> dict[str, tuple[list[np.ndarray], Callable]]:
    x = rng.normal(size=(3, 4))
    mask = np.array([[True, True, False, True]] * 3)
    return {
        "matmul": ([x, rng.normal(size=(4, 2))], lambda a, b: T.matmul(a, b)),
        "tanh": ([x], T.tanh),
        "sigmoid": ([x], T.sigmoid),
        "relu": ([x + 0.01], T.relu),
        "exp": ([x], T.exp),
        "log": ([np.abs(x) + 0.5], T.log),
        "absolute": ([x + 0.01], T.absolute),
        "log_softmax": ([x], T.log_softmax),
        "masked_softmax": ([x], lambda a: T.masked_softmax(a, mask)),
        "layer_norm": ([x, rng.normal(size=4), rng.normal(size=4)], T.layer_norm),
        "gather": ([x], lambda a: T.gather(a, np.array([[0, 2], [2, 1]]))),
    }


def op_suite(seed: int = 0) -> list[CheckResult]:
    rng = np.random.default_rng(seed)
    results = []
    for name, (arrays, fn) in _op_losses(rng).items():
        params = [Tensor(a.copy(), requires_grad=True) for a in arrays]
        probe = rng.normal(size=fn(*params).shape)
        start = time.perf_counter()
        err = grad_check(lambda: (fn(*params) * probe).sum(), params, eps=EPS)
        results.append(CheckResult(f"op:{name}", float(err), time.perf_counter() - start))
    return results


# full model -----------------------------------------------------------------------------

# "the dog saw a cat" and "a cat saw the dog", five tokens each
SENTENCES = (
    DependencyTree.from_heads([2, 3, 0, 5, 3], ["det", "nsubj", "root", "det", "obj"],
                              ["the", "dog", "saw", "a", "cat"]),
    DependencyTree.from_heads([2, 3, 0, 5, 3], ["det", "nsubj", "root", "det", "obj"],
                              ["a", "cat", "saw", "the", "dog"]),
)

HEADS = {
    "classify": (HeadConfig("classify", 3), [2]),
    "pair-classify": (HeadConfig("pair-classify", 3), [1]),
    "relatedness": (HeadConfig("relatedness", 5), [3.6]),
}


def small_config(variant: str = "dt_full", **overrides) -> ModelConfig:
    base = dict(n_layers=2, n_heads=2, d_model=12, d_r=6, d_ff=12, max_position=8, tau=2)
    base.update(overrides)
    return ModelConfig.variant(variant, **base)


def full_model_check(head_kind: str, variant: str = "dt_full", seed: int = 0,
                     **overrides) -> CheckResult:
    """Encoder plus one head on five-token sentences, every parameter coordinate checked."""
    config = small_config(variant, **overrides)
    head, targets = HEADS[head_kind]
    vocab = build_vocab(SENTENCES)
    rel_vocab = build_relation_vocab(SENTENCES, config.tau)
    params = ParameterSet.from_shapes(expected_shapes(config, head, len(vocab), len(rel_vocab)),
                                      seed, config.init_std)
    encoded = [encode_tree(t, vocab, rel_vocab, config.tau) for t in SENTENCES]
    sents = encoded if head.pair else encoded[:1]
    batch = collate(sents, config.max_level, targets=targets, pair=head.pair)

    def loss():
        _, reps = encode(batch, params, config)
        return head_loss(head, params, reps, targets, head.pair).loss

    start = time.perf_counter()
    err = grad_check(loss, list(params.values()), eps=EPS)
    return CheckResult(f"model:{variant}:{head_kind}", float(err), time.perf_counter() - start)


def full_suite(seed: int = 0) -> list[CheckResult]:
    return [full_model_check(kind, seed=seed) for kind in HEADS]


def run_suite(full: bool = False, seed: int = 0) -> list[CheckResult]:
    results = op_suite(seed)
    if full:
        results += full_suite(seed)
    return results
