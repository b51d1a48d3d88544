"""Causal transformer that scores every road point with an OOB probability.

Each point enters as ``(curvature, arc-length increment)``; a causal mask
keeps ``p_i`` a function of points ``0..i`` only.  The per-road fitness is the
sum of the point probabilities.
"""

from __future__ import annotations

import io
import json
import logging
import math
import zipfile
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from roadgen.geometry import BLOCK_SIZE, GenomeError, RoadGenome, distance_matrix
from roadgen.simulator import LabeledRoad

log = logging.getLogger(__name__)

CHECKPOINT_VERSION = 1
MAX_POS_WEIGHT = 20.0


class TrainingError(RuntimeError):
    pass


@dataclass(frozen=True)
class DiscriminatorConfig:
    d_model: int = 128
    n_layers: int = 6
    n_heads: int = 8
    block_size: int = BLOCK_SIZE
    dropout: float = 0.2
    learning_rate: float = 3e-4
    batch_size: int = 256
    epochs: int = 30
    curvature_scale: float = 10.0  # brings |c| <= 0.1 to unit range
    seed: int = 0

    def __post_init__(self):
        if self.d_model % self.n_heads:
            raise ValueError(f"d_model={self.d_model} not divisible by n_heads={self.n_heads}")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must lie in [0, 1)")

    @classmethod
    def six_heads(cls, **overrides) -> "DiscriminatorConfig":
        """Six heads need a width divisible by six."""
        return cls(**{"d_model": 132, "n_heads": 6, **overrides})


TINY = DiscriminatorConfig(d_model=8, n_layers=1, n_heads=2, block_size=5, dropout=0.0)


@dataclass(frozen=True)
class Scores:
    p: np.ndarray

    @property
    def f1(self) -> float:
        return float(np.sum(self.p))


class CausalSelfAttention(nn.Module):
    def __init__(self, d_model: int, n_heads: int):
        super().__init__()
        self.n_heads = n_heads
        self.qkv = nn.Linear(d_model, 3 * d_model)
        self.proj = nn.Linear(d_model, d_model)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        b, t, c = x.shape
        h = self.n_heads
        q, k, v = self.qkv(x).split(c, dim=2)
        q = q.view(b, t, h, c // h).transpose(1, 2)
        k = k.view(b, t, h, c // h).transpose(1, 2)
        v = v.view(b, t, h, c // h).transpose(1, 2)
        att = (q @ k.transpose(-2, -1)) / math.sqrt(c // h)
        future = torch.triu(torch.ones(t, t, dtype=torch.bool, device=x.device), diagonal=1)
        att = att.masked_fill(future, float("-inf")).softmax(dim=-1)
        y = (att @ v).transpose(1, 2).reshape(b, t, c)
        return self.proj(y)


class Block(nn.Module):
    def __init__(self, cfg: DiscriminatorConfig):
        super().__init__()
        self.ln1 = nn.LayerNorm(cfg.d_model)
        self.attn = CausalSelfAttention(cfg.d_model, cfg.n_heads)
        self.ln2 = nn.LayerNorm(cfg.d_model)
        self.ff = nn.Sequential(
            nn.Linear(cfg.d_model, 4 * cfg.d_model),
            nn.GELU(),
            nn.Dropout(cfg.dropout),
            nn.Linear(4 * cfg.d_model, cfg.d_model),
            nn.Dropout(cfg.dropout),
        )

    def forward(self, x):
        x = x + self.attn(self.ln1(x))
        return x + self.ff(self.ln2(x))


class Discriminator(nn.Module):
    def __init__(self, cfg: DiscriminatorConfig = DiscriminatorConfig()):
        super().__init__()
        self.cfg = cfg
        self.input_projection = nn.Linear(2, cfg.d_model)
        self.input_dropout = nn.Dropout(cfg.dropout)
        self.positional_embeddings = nn.Parameter(torch.zeros(cfg.block_size, cfg.d_model))
        self.layers = nn.ModuleList(Block(cfg) for _ in range(cfg.n_layers))
        self.ln_f = nn.LayerNorm(cfg.d_model)
        self.output_head = nn.Linear(cfg.d_model, 1)
        self.reset_parameters()

    def reset_parameters(self):
        for module in self.modules():
            if isinstance(module, nn.Linear):
                nn.init.normal_(module.weight, 0.0, 0.02)
                nn.init.zeros_(module.bias)
            elif isinstance(module, nn.LayerNorm):
                nn.init.ones_(module.weight)
                nn.init.zeros_(module.bias)
        nn.init.normal_(self.positional_embeddings, 0.0, 0.02)
        for block in self.layers:
            nn.init.normal_(block.ff[3].weight, 0.0, 0.02 / math.sqrt(2 * self.cfg.n_layers))
            nn.init.normal_(block.attn.proj.weight, 0.0, 0.02 / math.sqrt(2 * self.cfg.n_layers))

    def features(self, genomes: Sequence[RoadGenome]) -> torch.Tensor:
        n = self.cfg.block_size
        for g in genomes:
            if len(g) != n:
                raise GenomeError(f"genome length {len(g)} != block size {n}")
        arr = np.stack([np.column_stack([g.curvatures * self.cfg.curvature_scale, g.steps])
                        for g in genomes])
        return torch.as_tensor(arr, dtype=self.dtype)

    @property
    def dtype(self) -> torch.dtype:
        return self.output_head.weight.dtype

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        """Per-point logits, shape ``(batch, block)``."""
        t = x.shape[1]
        h = self.input_dropout(self.input_projection(x)) + self.positional_embeddings[:t]
        for block in self.layers:
            h = block(h)
        return self.output_head(self.ln_f(h)).squeeze(-1)

    @torch.no_grad()
    def probabilities(self, genomes: Sequence[RoadGenome], batch_size: int = 512) -> np.ndarray:
        was_training = self.training
        self.eval()
        try:
            out = [torch.sigmoid(self(self.features(genomes[i:i + batch_size])))
                   for i in range(0, len(genomes), batch_size)]
        finally:
            self.train(was_training)
        if not out:
            return np.empty((0, self.cfg.block_size))
        return torch.cat(out).double().numpy()

    def score(self, genome: RoadGenome) -> Scores:
        return Scores(self.probabilities([genome])[0])

    def fitness(self, genomes: Sequence[RoadGenome]) -> np.ndarray:
        """F1 for each genome: summed per-point OOB probability."""
        return self.probabilities(genomes).sum(axis=1)


def build(cfg: DiscriminatorConfig = DiscriminatorConfig(), dtype=torch.float32) -> Discriminator:
    torch.manual_seed(cfg.seed)
    return Discriminator(cfg).to(dtype)


# -- objective ----------------------------------------------------------------


def positive_weight(roads: Sequence[LabeledRoad], cap: float = MAX_POS_WEIGHT) -> float:
    labels = np.concatenate([r.labels for r in roads])
    n_pos = int(labels.sum())
    if n_pos == 0:
        raise TrainingError("training set has no positive (OOB) labels")
    return float(min(cap, (labels.size - n_pos) / n_pos))


def weighted_bce(logits: torch.Tensor, labels: torch.Tensor, pos_weight: float = 1.0) -> torch.Tensor:
    """Mean per-point binary cross-entropy with positives weighted by ``pos_weight``."""
    weight = torch.as_tensor(pos_weight, dtype=logits.dtype)
    return F.binary_cross_entropy_with_logits(logits, labels.to(logits.dtype), pos_weight=weight)


def loss(model: Discriminator, batch: Sequence[LabeledRoad], pos_weight: float = 1.0) -> torch.Tensor:
    if not batch:
        raise ValueError("empty batch")
    x = model.features([r.genome for r in batch])
    y = torch.as_tensor(np.stack([r.labels for r in batch]))
    return weighted_bce(model(x), y, pos_weight)


# -- training -----------------------------------------------------------------


@dataclass
class EpochRecord:
    epoch: int
    loss: float
    sensitivity: float
    specificity: float


@dataclass
class TrainingReport:
    history: list[EpochRecord] = field(default_factory=list)
    best_epoch: int = -1
    pos_weight: float = 1.0

    @property
    def best(self) -> EpochRecord:
        return self.history[self.best_epoch - 1]

    @property
    def losses(self) -> list[float]:
        return [r.loss for r in self.history]


def confusion_rates(p: np.ndarray, labels: np.ndarray, threshold: float = 0.5) -> tuple[float, float]:
    """``(sensitivity, specificity)``; an empty class scores 0."""
    pred = np.asarray(p) >= threshold
    labels = np.asarray(labels, dtype=bool)
    pos, neg = labels.sum(), (~labels).sum()
    sens = float((pred & labels).sum() / pos) if pos else 0.0
    spec = float((~pred & ~labels).sum() / neg) if neg else 0.0
    return sens, spec


def evaluate(model: Discriminator, roads: Sequence[LabeledRoad], threshold: float = 0.5) -> tuple[float, float]:
    p = model.probabilities([r.genome for r in roads])
    return confusion_rates(p.ravel(), np.concatenate([r.labels for r in roads]), threshold)


def split(roads: Sequence[LabeledRoad], val_fraction: float = 0.1,
          seed: int = 0) -> tuple[list[LabeledRoad], list[LabeledRoad]]:
    order = np.random.default_rng(seed).permutation(len(roads))
    n_val = max(1, int(round(val_fraction * len(roads))))
    return [roads[i] for i in order[n_val:]], [roads[i] for i in order[:n_val]]


def train(model: Discriminator, train_set: Sequence[LabeledRoad], val_set: Sequence[LabeledRoad],
          epochs: Optional[int] = None, batch_size: Optional[int] = None,
          pos_weight: Optional[float] = None, callback=None) -> TrainingReport:
    """Adam on weighted BCE; restores the epoch maximising sensitivity + specificity."""
    cfg = model.cfg
    epochs = cfg.epochs if epochs is None else epochs
    batch_size = cfg.batch_size if batch_size is None else batch_size
    if pos_weight is None:
        pos_weight = positive_weight(train_set)
    torch.manual_seed(cfg.seed)
    order_rng = torch.Generator().manual_seed(cfg.seed)
    opt = torch.optim.Adam(model.parameters(), lr=cfg.learning_rate, betas=(0.9, 0.999), eps=1e-8)

    x_all = model.features([r.genome for r in train_set])
    y_all = torch.as_tensor(np.stack([r.labels for r in train_set])).to(model.dtype)
    report = TrainingReport(pos_weight=pos_weight)
    best_score, best_state = -1.0, None
    n = len(train_set)
    for epoch in range(1, epochs + 1):
        model.train()
        perm = torch.randperm(n, generator=order_rng)
        total = 0.0
        for i in range(0, n, batch_size):
            idx = perm[i:i + batch_size]
            batch_loss = weighted_bce(model(x_all[idx]), y_all[idx], pos_weight)
            if not torch.isfinite(batch_loss):
                raise TrainingError(f"non-finite loss at epoch {epoch}, batch {i // batch_size}")
            opt.zero_grad(set_to_none=True)
            batch_loss.backward()
            opt.step()
            total += float(batch_loss.detach()) * len(idx)
        sens, spec = evaluate(model, val_set) if val_set else (0.0, 0.0)
        record = EpochRecord(epoch, total / n, sens, spec)
        report.history.append(record)
        if sens + spec > best_score:
            best_score = sens + spec
            report.best_epoch = epoch
            best_state = {k: v.detach().clone() for k, v in model.state_dict().items()}
        log.info("epoch %d loss=%.5f sens=%.3f spec=%.3f", epoch, record.loss, sens, spec)
        if callback is not None:
            callback(record)
    if best_state is not None:
        model.load_state_dict(best_state)
    model.eval()
    return report


# -- verification -------------------------------------------------------------


def gradient_check(cfg: DiscriminatorConfig = TINY, seed: int = 0, h: float = 1e-4,
                   batch: int = 3, zero_input: bool = False, pos_weight: float = 2.0) -> float:
    """Max relative error between autograd and central differences, float64."""
    cfg = DiscriminatorConfig(**{**asdict(cfg), "dropout": 0.0, "seed": seed})
    model = build(cfg, torch.float64)
    gen = torch.Generator().manual_seed(seed)
    with torch.no_grad():
        # non-trivial layer-norm parameters exercise every gradient path
        for p in model.parameters():
            p.add_(0.1 * torch.randn(p.shape, generator=gen, dtype=torch.float64))
    model.eval()
    x = torch.randn(batch, cfg.block_size, 2, generator=gen, dtype=torch.float64)
    if zero_input:
        x.zero_()
    y = (torch.rand(batch, cfg.block_size, generator=gen) < 0.3).double()

    def objective() -> torch.Tensor:
        return weighted_bce(model(x), y, pos_weight)

    model.zero_grad()
    objective().backward()
    worst = 0.0
    with torch.no_grad():
        for p in model.parameters():
            analytic = p.grad.detach().clone().ravel()
            flat = p.view(-1)
            for i in range(flat.numel()):
                old = flat[i].item()
                flat[i] = old + h
                up = objective().item()
                flat[i] = old - h
                down = objective().item()
                flat[i] = old
                numeric = (up - down) / (2 * h)
                a = analytic[i].item()
                denom = max(abs(a) + abs(numeric), 1e-6)
                worst = max(worst, abs(a - numeric) / denom)
    return worst


# -- diversity ----------------------------------------------------------------


def diversity_f2(genome: RoadGenome, pool: Sequence[RoadGenome]) -> float:
    """Median distance from ``genome`` to every other member of ``pool``."""
    others = [g for g in pool if g is not genome]
    if not others:
        raise ValueError("pool holds no genome other than the one scored")
    d = distance_matrix([genome], others)[0]
    return float(np.median(d))


# -- persistence --------------------------------------------------------------


def save_checkpoint(path, model: Discriminator, report: Optional[TrainingReport] = None) -> None:
    """Write a zip container: ``meta.json`` plus one float64 ``.npy`` per tensor."""
    meta = {
        "version": CHECKPOINT_VERSION,
        "config": asdict(model.cfg),
        "seed": model.cfg.seed,
        "tensors": {},
        "history": [asdict(r) for r in report.history] if report else [],
        "best_epoch": report.best_epoch if report else None,
        "pos_weight": report.pos_weight if report else None,
    }
    with zipfile.ZipFile(path, "w", compression=zipfile.ZIP_DEFLATED) as zf:
        for name, tensor in model.state_dict().items():
            arr = np.ascontiguousarray(tensor.detach().double().numpy())
            meta["tensors"][name] = list(arr.shape)
            buf = io.BytesIO()
            np.save(buf, arr, allow_pickle=False)
            zf.writestr(zipfile.ZipInfo(f"tensors/{name}.npy"), buf.getvalue())
        zf.writestr(zipfile.ZipInfo("meta.json"), json.dumps(meta, indent=2, sort_keys=True))


def load_checkpoint(path, dtype=torch.float32) -> tuple[Discriminator, dict]:
    with zipfile.ZipFile(path) as zf:
        meta = json.loads(zf.read("meta.json"))
        if meta.get("version") != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {meta.get('version')}")
        cfg = DiscriminatorConfig(**meta["config"])
        model = Discriminator(cfg).to(dtype)
        state = {}
        for name, shape in meta["tensors"].items():
            arr = np.load(io.BytesIO(zf.read(f"tensors/{name}.npy")), allow_pickle=False)
            if list(arr.shape) != shape:
                raise ValueError(f"tensor {name} has shape {arr.shape}, declared {shape}")
            state[name] = torch.as_tensor(arr, dtype=dtype)
    model.load_state_dict(state)
    model.eval()
    return model, meta
