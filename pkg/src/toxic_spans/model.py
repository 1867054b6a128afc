"""Per-token toxicity scorer: encoder + single-unit sigmoid head.

Training minimises a clipped binary cross-entropy averaged over every
position of the fixed-length sequence, with Adam and early stopping on the
validation loss.  The best-validation checkpoint is restored at the end.
"""

from __future__ import annotations

import copy
import json
import logging
import math
import os
import random
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import torch
from torch import nn

from .encoding import ENCODER_CHECKPOINTS, MAX_LEN, EncodedSample

log = logging.getLogger(__name__)

ENCODERS = tuple(ENCODER_CHECKPOINTS) + ("tiny-test-encoder",)
EPSILON = 1e-7


class ConfigError(ValueError):
    pass


class ProbsFormatError(ValueError):
    pass


@dataclass
class TrainConfig:
    encoder_name: str = "roberta-base"
    max_len: int = MAX_LEN
    learning_rate: float = 1e-5
    max_epochs: int = 30
    patience: int = 4
    batch_size: int = 16
    grad_accumulation: int = 1
    seed: int = 0
    epsilon: float = EPSILON
    masked_loss: bool = False
    device: str = "cpu"

    def __post_init__(self):
        if self.encoder_name not in ENCODERS:
            raise ConfigError(f"unknown encoder {self.encoder_name!r}; choose from {ENCODERS}")
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be positive")
        if not 0 < self.patience < self.max_epochs:
            raise ConfigError("patience must be positive and smaller than max_epochs")
        if self.batch_size < 1 or self.grad_accumulation < 1:
            raise ConfigError("batch_size and grad_accumulation must be >= 1")

    @property
    def tokenizer_name(self) -> str:
        return "hashing" if self.encoder_name == "tiny-test-encoder" else self.encoder_name


def seed_everything(seed: int) -> None:
    random.seed(seed)
    np.random.seed(seed)
    torch.manual_seed(seed)


def _tiny_encoder(seed: int) -> nn.Module:
    from transformers import BertConfig, BertModel

    config = BertConfig(
        vocab_size=4096,
        hidden_size=64,
        num_hidden_layers=2,
        num_attention_heads=2,
        intermediate_size=128,
        max_position_embeddings=128,
        hidden_dropout_prob=0.1,
        attention_probs_dropout_prob=0.1,
    )
    torch.manual_seed(seed)
    return BertModel(config, add_pooling_layer=False)


class TokenScorer(nn.Module):
    """Encoder followed by a dense layer with one sigmoid unit per token."""

    def __init__(self, encoder: nn.Module, hidden_size: int):
        super().__init__()
        self.encoder = encoder
        self.head = nn.Linear(hidden_size, 1)

    def forward(self, input_ids: torch.Tensor, attention_mask: torch.Tensor) -> torch.Tensor:
        hidden = self.encoder(input_ids=input_ids, attention_mask=attention_mask).last_hidden_state
        return torch.sigmoid(self.head(hidden).squeeze(-1))


def build_scorer(config: TrainConfig) -> TokenScorer:
    if config.encoder_name not in ENCODERS:
        raise ConfigError(f"unknown encoder {config.encoder_name!r}")
    seed_everything(config.seed)
    if config.encoder_name == "tiny-test-encoder":
        encoder = _tiny_encoder(config.seed)
    else:
        from transformers import AutoModel

        encoder = AutoModel.from_pretrained(
            ENCODER_CHECKPOINTS[config.encoder_name],
            cache_dir=os.environ.get("TOXIC_SPANS_CACHE"),
        )
    torch.manual_seed(config.seed)
    scorer = TokenScorer(encoder, encoder.config.hidden_size)
    return scorer.to(config.device)


def clipped_bce(
    pred: torch.Tensor,
    target: torch.Tensor,
    epsilon: float = EPSILON,
    mask: torch.Tensor | None = None,
) -> torch.Tensor:
    """``-[t log clip(p + eps) + (1 - t) log clip(1 - p + eps)]`` averaged.

    ``clip`` keeps its argument in ``[eps, 1]``, so the loss stays finite at
    ``p`` in {0, 1}.  Without ``mask`` every position counts, padding included.
    """
    target = target.to(pred.dtype)
    pos = torch.clamp(pred + epsilon, epsilon, 1.0)
    neg = torch.clamp(1.0 - pred + epsilon, epsilon, 1.0)
    losses = -(target * torch.log(pos) + (1.0 - target) * torch.log(neg))
    if mask is None:
        return losses.mean()
    mask = mask.to(pred.dtype)
    return (losses * mask).sum() / mask.sum().clamp_min(1.0)


@dataclass
class EarlyStopping:
    """Stop once the monitored loss has not improved for ``patience`` epochs."""

    patience: int
    best: float = math.inf
    best_epoch: int = 0
    wait: int = 0
    epoch: int = 0

    def update(self, value: float) -> bool:
        """Record one epoch's loss; return True when training should stop."""
        self.epoch += 1
        if value < self.best:
            self.best = value
            self.best_epoch = self.epoch
            self.wait = 0
            return False
        self.wait += 1
        return self.wait >= self.patience


@dataclass
class TrainHistory:
    train_loss: list[float] = field(default_factory=list)
    val_loss: list[float] = field(default_factory=list)
    stopped_epoch: int = 0
    best_epoch: int = 0


def _tensors(samples: Sequence[EncodedSample], device: str):
    ids = torch.tensor([s.input_ids for s in samples], dtype=torch.long, device=device)
    mask = torch.tensor([s.attention_mask for s in samples], dtype=torch.long, device=device)
    target = torch.tensor([s.target for s in samples], dtype=torch.float32, device=device)
    valid = torch.tensor([s.valid for s in samples], dtype=torch.bool, device=device)
    return ids, mask, target, valid


def _loss_for(scorer, batch, config: TrainConfig) -> torch.Tensor:
    ids, mask, target, valid = batch
    probs = scorer(ids, mask)
    return clipped_bce(probs, target, config.epsilon, valid if config.masked_loss else None)


@torch.no_grad()
def evaluate_loss(scorer: TokenScorer, samples: Sequence[EncodedSample], config: TrainConfig) -> float:
    scorer.eval()
    total, count = 0.0, 0
    for start in range(0, len(samples), config.batch_size):
        chunk = samples[start : start + config.batch_size]
        total += _loss_for(scorer, _tensors(chunk, config.device), config).item() * len(chunk)
        count += len(chunk)
    return total / count


def train(
    scorer: TokenScorer,
    train_set: Sequence[EncodedSample],
    val_set: Sequence[EncodedSample],
    config: TrainConfig,
) -> tuple[TokenScorer, TrainHistory]:
    if not train_set:
        raise ConfigError("empty training set")
    if not val_set:
        raise ConfigError("empty validation set")
    seed_everything(config.seed)
    optimizer = torch.optim.Adam(scorer.parameters(), lr=config.learning_rate)
    monitor = EarlyStopping(config.patience)
    history = TrainHistory()
    best_state = copy.deepcopy(scorer.state_dict())
    rng = random.Random(config.seed)
    order = list(range(len(train_set)))

    for epoch in range(1, config.max_epochs + 1):
        scorer.train()
        rng.shuffle(order)
        running, seen = 0.0, 0
        optimizer.zero_grad()
        batches = [order[i : i + config.batch_size] for i in range(0, len(order), config.batch_size)]
        for step, idx in enumerate(batches, start=1):
            batch = _tensors([train_set[i] for i in idx], config.device)
            loss = _loss_for(scorer, batch, config)
            (loss / config.grad_accumulation).backward()
            if step % config.grad_accumulation == 0 or step == len(batches):
                optimizer.step()
                optimizer.zero_grad()
            running += loss.item() * len(idx)
            seen += len(idx)
        history.train_loss.append(running / seen)
        val = evaluate_loss(scorer, val_set, config)
        history.val_loss.append(val)
        stop = monitor.update(val)
        if monitor.best_epoch == epoch:
            best_state = copy.deepcopy(scorer.state_dict())
        log.info("epoch %d train %.5f val %.5f", epoch, history.train_loss[-1], val)
        history.stopped_epoch = epoch
        if stop:
            break

    history.best_epoch = monitor.best_epoch
    scorer.load_state_dict(best_state)
    scorer.eval()
    return scorer, history


@torch.no_grad()
def predict(
    scorer: TokenScorer, samples: Sequence[EncodedSample], batch_size: int = 32, device: str = "cpu"
) -> list["ProbabilityVector"]:
    scorer.eval()
    out = []
    for start in range(0, len(samples), batch_size):
        chunk = samples[start : start + batch_size]
        ids, mask, _, _ = _tensors(chunk, device)
        probs = scorer(ids, mask).double().cpu().numpy()
        out.extend(ProbabilityVector(s.sample_id, p) for s, p in zip(chunk, probs))
    return out


@dataclass
class ProbabilityVector:
    sample_id: str
    values: np.ndarray


def dump_probs(vectors: Sequence[ProbabilityVector], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for v in vectors:
            # repr of a Python float round-trips exactly
            fh.write(json.dumps({"sample_id": v.sample_id, "values": [float(x) for x in v.values]}) + "\n")


def load_probs(path: str | Path, length: int = MAX_LEN) -> list[ProbabilityVector]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            row = json.loads(line)
            values = np.asarray(row["values"], dtype=float)
            if values.shape != (length,):
                raise ProbsFormatError(f"{path}:{line_no}: expected {length} values, got {values.size}")
            if np.any((values < 0) | (values > 1)):
                raise ProbsFormatError(f"{path}:{line_no}: probabilities outside [0, 1]")
            out.append(ProbabilityVector(str(row["sample_id"]), values))
    return out


# -- checkpoints -----------------------------------------------------------------


def save_checkpoint(scorer: TokenScorer, config: TrainConfig, directory: str | Path) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    (directory / "config.json").write_text(json.dumps(asdict(config), indent=2))
    (directory / "tokenizer.json").write_text(json.dumps({"name": config.tokenizer_name}))
    torch.save(scorer.state_dict(), directory / "weights.pt")
    return directory


def load_checkpoint(directory: str | Path) -> tuple[TokenScorer, TrainConfig]:
    directory = Path(directory)
    config = TrainConfig(**json.loads((directory / "config.json").read_text()))
    scorer = build_scorer(config)
    state = torch.load(directory / "weights.pt", map_location=config.device, weights_only=True)
    scorer.load_state_dict(state)
    scorer.eval()
    return scorer, config
