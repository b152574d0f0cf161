"""Training and evaluation loops, AdaGrad, batching, checkpoints and the ablation runner."""

from __future__ import annotations

import json
import logging
import math
import queue
import threading
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np

from . import checkpoint as ckpt
from .data import (Example, collate_examples, load_split, make_examples,
                   shuffle_relation_ids)
from .encoder import (Batch, ModelConfig, ParameterSet, encode, parameter_shapes,
                      VARIANTS)
from .heads import HeadConfig, head_loss, head_parameter_shapes, task_metrics
from .relation import RelationVocab, build_relation_vocab
from .tensor import backward, no_grad
from .treebank import Vocab, build_vocab, load_embeddings

log = logging.getLogger(__name__)


# optimiser ---------------------------------------------------------------------------


class AdaGrad:
    """Per-coordinate step ``lr * g / (sqrt(G) + eps)`` with ``G`` the running sum of g^2."""

    def __init__(self, params: ParameterSet, lr: float = 1e-3, eps: float = 1e-8,
                 clip_norm: float | None = None):
        self.params = params
        self.lr = lr
        self.eps = eps
        self.clip_norm = clip_norm
        self.accum = {n: np.zeros(p.shape) for n, p in params.items()}

    def step(self) -> None:
        grads = {}
        for name, p in self.params.items():
            g = np.zeros(p.shape) if p.grad is None else p.grad
            if not np.all(np.isfinite(g)):
                raise FloatingPointError(f"non-finite gradient in parameter {name!r}")
            grads[name] = g
        if self.clip_norm is not None:
            total = math.sqrt(sum(float((g * g).sum()) for g in grads.values()))
            if total > self.clip_norm:
                scale = self.clip_norm / total
                grads = {n: g * scale for n, g in grads.items()}
        for name, p in self.params.items():
            adagrad_step(p.data, grads[name], self.accum[name], self.lr, self.eps)

    def state(self) -> dict[str, np.ndarray]:
        return self.accum


def adagrad_step(theta: np.ndarray, grad: np.ndarray, accum: np.ndarray, lr: float,
                 eps: float = 1e-8) -> None:
    """In-place update of ``theta`` and ``accum``."""
    accum += grad * grad
    theta -= lr * grad / (np.sqrt(accum) + eps)


# batching ------------------------------------------------------------------------------


def make_batches(items: Sequence, batch_size: int, seed: int | None = None) -> list[list]:
    """Chunk ``items`` into batches, shuffled by ``seed`` (kept in order when ``None``)."""
    if not items:
        raise ValueError("cannot batch an empty dataset")
    order = np.arange(len(items))
    if seed is not None:
        order = np.random.default_rng(seed).permutation(len(items))
    return [[items[k] for k in order[s:s + batch_size]] for s in range(0, len(items), batch_size)]


def prefetch(source: Iterable, depth: int = 2) -> Iterator:
    """Produce items from ``source`` on a helper thread through a bounded queue."""
    q: queue.Queue = queue.Queue(maxsize=depth)
    done = object()
    failure: list[BaseException] = []

    def work():
        try:
            for item in source:
                q.put(item)
        except BaseException as exc:  # re-raised on the consumer side
            failure.append(exc)
        finally:
            q.put(done)

    threading.Thread(target=work, daemon=True).start()
    while True:
        item = q.get()
        if item is done:
            break
        yield item
    if failure:
        raise failure[0]


# model bundle ----------------------------------------------------------------------------


@dataclass
class Model:
    config: ModelConfig
    head: HeadConfig
    params: ParameterSet
    vocab: Vocab
    rel_vocab: RelationVocab
    task: str = "custom"

    @classmethod
    def create(cls, config: ModelConfig, head: HeadConfig, vocab: Vocab, rel_vocab: RelationVocab,
               seed: int = 0, task: str = "custom") -> "Model":
        params = ParameterSet.from_shapes(expected_shapes(config, head, len(vocab), len(rel_vocab)),
                                          seed, config.init_std)
        return cls(config, head, params, vocab, rel_vocab, task)

    def loss(self, batch: Batch, rng: np.random.Generator | None = None, training: bool = False):
        _, reps = encode(batch, self.params, self.config, rng=rng, training=training)
        return head_loss(self.head, self.params, reps, batch.targets, batch.pair)

    def save(self, path: str | Path) -> None:
        header = {
            "config": self.config.to_json(),
            "head": self.head.to_json(),
            "task": self.task,
            "vocab": self.vocab.to_json(),
            "relations": self.rel_vocab.to_json(),
        }
        ckpt.save_arrays(path, self.params.arrays(), header)

    @classmethod
    def load(cls, path: str | Path) -> "Model":
        arrays, meta = ckpt.load_arrays(path)
        config = ModelConfig.from_json(meta["config"])
        head = HeadConfig(**meta["head"])
        vocab = Vocab.from_json(meta["vocab"])
        rel_vocab = RelationVocab.from_json(meta["relations"])
        ckpt.check_shapes(arrays, expected_shapes(config, head, len(vocab), len(rel_vocab)))
        return cls(config, head, ParameterSet.from_arrays(arrays), vocab, rel_vocab, meta.get("task", "custom"))


def expected_shapes(config: ModelConfig, head: HeadConfig, n_words: int, n_relations: int):
    shapes = parameter_shapes(config, n_words, n_relations)
    shapes.update(head_parameter_shapes(head, config.d_model))
    return shapes


# run configuration ------------------------------------------------------------------------


@dataclass
class RunConfig:
    task: str = "planted"
    train: dict = field(default_factory=dict)   # {"conllu": path, "labels": path}
    dev: dict = field(default_factory=dict)
    embeddings: str | None = None
    seed: int = 0
    epochs: int = 10
    batch_size: int = 32
    lr: float = 1e-3
    adagrad_eps: float = 1e-8
    clip_norm: float | None = None
    variant: str | None = "dt_full"
    model: dict = field(default_factory=dict)   # ModelConfig field overrides
    head: dict = field(default_factory=dict)    # HeadConfig field overrides
    eval_every: int = 1
    out_dir: str = "runs/default"
    strict: bool = True
    lowercase: bool = True
    shuffle_relations: bool = False
    target_metric: float | None = None          # stop once the dev metric reaches this
    seeds: list[int] | None = None

    @classmethod
    def from_json(cls, obj: dict, base_dir: str | Path | None = None) -> "RunConfig":
        names = {f.name for f in fields(cls)}
        unknown = set(obj) - names
        if unknown:
            raise ValueError(f"unknown run config fields: {sorted(unknown)}")
        cfg = cls(**obj)
        if base_dir is not None:
            cfg = cfg.resolve_paths(Path(base_dir))
        return cfg

    @classmethod
    def from_file(cls, path: str | Path) -> "RunConfig":
        path = Path(path)
        return cls.from_json(json.loads(path.read_text(encoding="utf-8")), base_dir=path.parent)

    def resolve_paths(self, base: Path) -> "RunConfig":
        def fix(p):
            return None if p is None else str(p if Path(p).is_absolute() else base / p)
        return replace(
            self,
            train={k: fix(v) for k, v in self.train.items()},
            dev={k: fix(v) for k, v in self.dev.items()},
            embeddings=fix(self.embeddings),
        )

    def model_config(self) -> ModelConfig:
        if self.variant is None:
            return ModelConfig(**self.model)
        return ModelConfig.variant(self.variant, **self.model)

    def head_config(self) -> HeadConfig:
        return HeadConfig.for_task(self.task, **self.head)

    def check_paths(self) -> None:
        for split in ("train", "dev"):
            entry = getattr(self, split)
            for key in ("conllu", "labels"):
                if key not in entry:
                    raise FileNotFoundError(f"run config has no {split}.{key} path")
                if not Path(entry[key]).is_file():
                    raise FileNotFoundError(entry[key])
        if self.embeddings and not Path(self.embeddings).is_file():
            raise FileNotFoundError(self.embeddings)

    def to_json(self) -> dict:
        return asdict(self)


# loops --------------------------------------------------------------------------------------


@dataclass
class Prepared:
    model: Model
    train: list[Example]
    dev: list[Example]


def prepare(run: RunConfig) -> Prepared:
    """Load, validate and encode everything up front so data errors surface before step 1."""
    run.check_paths()
    config, head = run.model_config(), run.head_config()
    tr = load_split(run.train["conllu"], run.train["labels"], head.pair, run.strict)
    dv = load_split(run.dev["conllu"], run.dev["labels"], head.pair, run.strict)
    vocab = build_vocab(tr.trees, lowercase=run.lowercase)
    rel_vocab = build_relation_vocab(tr.trees, config.tau)
    model = Model.create(config, head, vocab, rel_vocab, seed=run.seed, task=run.task)
    if run.embeddings:
        table = load_embeddings(run.embeddings, vocab, config.d_model, seed=run.seed)
        model.params["embed.word"].data[...] = table.matrix
        log.info("embeddings: %d found, %d OOV (coverage %.3f)", table.found, table.oov, table.coverage)
    train_ex = make_examples(tr, vocab, rel_vocab, config.tau, head.pair)
    dev_ex = make_examples(dv, vocab, rel_vocab, config.tau, head.pair)
    if head.kind == "relatedness":
        for ex in train_ex + dev_ex:
            if not 1 <= ex.target <= head.n_classes:
                raise ValueError(f"relatedness target {ex.target} outside [1, {head.n_classes}]")
    else:
        for ex in train_ex + dev_ex:
            if ex.target != int(ex.target) or not 0 <= ex.target < head.n_classes:
                raise ValueError(f"class target {ex.target} outside 0..{head.n_classes - 1}")
    if run.shuffle_relations:
        n_rel = len(rel_vocab)
        rng = np.random.default_rng([run.seed, 7919])
        for ex in train_ex + dev_ex:
            ex.sentences = tuple(shuffle_relation_ids(s, n_rel, rng) for s in ex.sentences)
    return Prepared(model, train_ex, dev_ex)


def evaluate(model: Model, examples: Sequence[Example], batch_size: int = 32) -> dict:
    """Loss and metrics over ``examples``; parameters are only read."""
    total, preds, gold = 0.0, [], []
    with no_grad():
        for chunk in make_batches(examples, batch_size):
            batch = collate_examples(chunk, model.config.max_level, model.head.pair)
            res = model.loss(batch)
            total += res.loss.item() * len(chunk)
            preds.extend(res.predictions.tolist())
            gold.extend(batch.targets)
    out = {"loss": total / len(examples)}
    out.update(task_metrics(model.head, preds, gold))
    return out


def selection_score(metrics: dict) -> float:
    value = metrics.get("accuracy", metrics.get("pearson"))
    return -math.inf if value is None or math.isnan(value) else value


def _jsonable(record: dict) -> dict:
    return {k: (None if isinstance(v, float) and math.isnan(v) else v) for k, v in record.items()}


@dataclass
class TrainResult:
    model: Model
    log: list[dict]
    best_path: Path
    last_path: Path
    best_metrics: dict


def train(run: RunConfig, prepared: Prepared | None = None) -> TrainResult:
    """Fixed epoch budget with best-on-dev checkpointing; writes metrics.jsonl, best.ckpt, last.ckpt."""
    prep = prepared or prepare(run)
    model = prep.model
    out = Path(run.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    opt = AdaGrad(model.params, lr=run.lr, eps=run.adagrad_eps, clip_norm=run.clip_norm)
    drop_rng = np.random.default_rng([run.seed, 104729])
    records: list[dict] = []
    best, best_metrics = -math.inf, {}
    best_path, last_path = out / "best.ckpt", out / "last.ckpt"
    metrics_path = out / "metrics.jsonl"
    metrics_path.write_text("")
    pair, max_level = model.head.pair, model.config.max_level

    for epoch in range(1, run.epochs + 1):
        chunks = make_batches(prep.train, run.batch_size, seed=run.seed * 100003 + epoch)
        batches = prefetch(collate_examples(c, max_level, pair) for c in chunks)
        total, preds, gold = 0.0, [], []
        for batch in batches:
            model.params.zero_grad()
            res = model.loss(batch, rng=drop_rng, training=True)
            backward(res.loss)
            opt.step()
            total += res.loss.item() * batch.size
            preds.extend(res.predictions.tolist())
            gold.extend(batch.targets)
        train_rec = {"task": run.task, "split": "train", "epoch": epoch,
                     "loss": total / len(prep.train), **task_metrics(model.head, preds, gold)}
        new = [train_rec]
        if epoch % run.eval_every == 0 or epoch == run.epochs:
            dev = evaluate(model, prep.dev, run.batch_size)
            new.append({"task": run.task, "split": "dev", "epoch": epoch, **dev})
            score = selection_score(dev)
            if score > best:
                best, best_metrics = score, dev
                model.save(best_path)
        with open(metrics_path, "a", encoding="utf-8") as fh:
            for rec in new:
                fh.write(json.dumps(_jsonable(rec), sort_keys=True) + "\n")
        records.extend(new)
        log.info("epoch %d: %s", epoch, " ".join(f"{r['split']}={r['loss']:.4f}/{r.get('accuracy', 0):.3f}" for r in new))
        if run.target_metric is not None and best >= run.target_metric:
            break
    model.save(last_path)
    if not best_path.exists():
        model.save(best_path)
    return TrainResult(model, records, best_path, last_path, best_metrics)


# ablation ------------------------------------------------------------------------------------


ABLATION_ORDER = ("transformer", "dt_lr", "dt_rg", "dt_full")


def run_ablation(run: RunConfig, variants: Sequence[str] = ABLATION_ORDER) -> list[dict]:
    """Train each variant with the same seed and data and tabulate final dev metrics."""
    rows = []
    for name in variants:
        if name not in VARIANTS:
            raise ValueError(f"unknown variant {name!r}")
        sub = replace(run, variant=name, out_dir=str(Path(run.out_dir) / name))
        result = train(sub)
        final_dev = [r for r in result.log if r["split"] == "dev"][-1]
        rows.append({"variant": name, "parameters": result.model.params.count(),
                     "epochs": final_dev["epoch"],
                     **{k: v for k, v in final_dev.items() if k not in ("task", "split", "epoch")}})
    return rows
