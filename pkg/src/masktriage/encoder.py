"""A miniature bidirectional transformer encoder with word-level vocabulary.

The classifier fine-tunes from a local pretrained checkpoint directory. The
checkpoint is produced here: `pretrain_encoder` builds the vocabulary from a
token corpus, initializes the network from a seed, and runs a short
self-supervised masked-token pass so the encoder starts from contextual
weights rather than noise. No network access is involved at any point.
"""

from __future__ import annotations

import json
import random
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Sequence

import torch
from torch import nn

from .errors import SchemaError

PAD, UNK, CLS, MASK = "[PAD]", "[UNK]", "[CLS]", "[MASK]"
SPECIALS = (PAD, UNK, CLS, MASK)


@dataclass
class EncoderConfig:
    vocab_size: int = 0
    hidden_size: int = 64
    num_layers: int = 2
    num_heads: int = 4
    ffn_size: int = 128
    max_positions: int = 512
    dropout: float = 0.1
    seed: int = 0
    pretrain_epochs: int = 2
    pretrain_mask_rate: float = 0.15
    pretrain_learning_rate: float = 1e-3
    pretrain_batch_size: int = 32


class Vocab:
    """Word-level vocabulary; one lemma maps to one id, [MASK] included."""

    def __init__(self, tokens: Sequence[str]):
        self.tokens = list(tokens)
        if self.tokens[: len(SPECIALS)] != list(SPECIALS):
            raise SchemaError("vocabulary must start with the special tokens")
        self.index = {t: i for i, t in enumerate(self.tokens)}
        self.pad_id = self.index[PAD]
        self.unk_id = self.index[UNK]
        self.cls_id = self.index[CLS]
        self.mask_id = self.index[MASK]

    def __len__(self) -> int:
        return len(self.tokens)

    @classmethod
    def build(cls, docs: Sequence[Sequence[str]]) -> "Vocab":
        seen = sorted({tok for doc in docs for tok in doc if tok not in SPECIALS})
        return cls(list(SPECIALS) + seen)

    def encode(self, words: Sequence[str], max_len: int) -> list[int]:
        """[CLS] plus word ids, tail-truncated to max_len positions."""
        ids = [self.cls_id]
        for w in words[: max_len - 1]:
            ids.append(self.index.get(w, self.unk_id))
        return ids


class MiniEncoder(nn.Module):
    """Token + position embeddings feeding a stack of bidirectional
    self-attention layers."""

    def __init__(self, config: EncoderConfig):
        super().__init__()
        self.config = config
        self.token_embedding = nn.Embedding(config.vocab_size, config.hidden_size)
        self.position_embedding = nn.Embedding(config.max_positions, config.hidden_size)
        self.input_norm = nn.LayerNorm(config.hidden_size)
        self.dropout = nn.Dropout(config.dropout)
        layer = nn.TransformerEncoderLayer(
            d_model=config.hidden_size,
            nhead=config.num_heads,
            dim_feedforward=config.ffn_size,
            dropout=config.dropout,
            batch_first=True,
            activation="gelu",
        )
        # the nested-tensor fast path is batch-size dependent; keep it off so
        # batched and single-instance inference produce identical numbers
        self.layers = nn.TransformerEncoder(layer, num_layers=config.num_layers,
                                            enable_nested_tensor=False)

    def forward(self, ids: torch.Tensor, pad_mask: torch.Tensor) -> torch.Tensor:
        positions = torch.arange(ids.size(1), device=ids.device).unsqueeze(0)
        h = self.token_embedding(ids) + self.position_embedding(positions)
        h = self.dropout(self.input_norm(h))
        return self.layers(h, src_key_padding_mask=pad_mask)


def pad_batch(id_lists: Sequence[list[int]], pad_id: int) -> tuple[torch.Tensor, torch.Tensor]:
    width = max(len(ids) for ids in id_lists)
    ids = torch.full((len(id_lists), width), pad_id, dtype=torch.long)
    for row, seq in enumerate(id_lists):
        ids[row, : len(seq)] = torch.tensor(seq, dtype=torch.long)
    pad_mask = ids == pad_id
    return ids, pad_mask


def pretrain_encoder(
    docs: Sequence[Sequence[str]],
    config: EncoderConfig,
    out_dir: str | Path,
) -> Path:
    """Create a pretrained encoder checkpoint from a token corpus.

    Randomly masks a fraction of each document's tokens and trains the
    encoder (plus a throwaway vocabulary head) to recover them, then saves
    encoder weights, vocabulary, and config to `out_dir`.
    """
    if not docs:
        raise ValueError("pretraining needs at least one document")
    vocab = Vocab.build(docs)
    config.vocab_size = len(vocab)

    torch.manual_seed(config.seed)
    encoder = MiniEncoder(config)
    losses: list[float] = []

    if config.pretrain_epochs > 0:
        vocab_head = nn.Linear(config.hidden_size, len(vocab))
        params = list(encoder.parameters()) + list(vocab_head.parameters())
        optimizer = torch.optim.AdamW(params, lr=config.pretrain_learning_rate)
        ce = nn.CrossEntropyLoss()
        rng = random.Random(config.seed)
        encoded = [vocab.encode(doc, config.max_positions) for doc in docs]

        encoder.train()
        for _ in range(config.pretrain_epochs):
            order = list(range(len(encoded)))
            rng.shuffle(order)
            epoch_losses = []
            for start in range(0, len(order), config.pretrain_batch_size):
                chunk = [encoded[i] for i in order[start : start + config.pretrain_batch_size]]
                targets: list[int] = []
                rows: list[int] = []
                cols: list[int] = []
                masked = [list(seq) for seq in chunk]
                for r, seq in enumerate(chunk):
                    for c in range(1, len(seq)):  # position 0 is [CLS]
                        if rng.random() < config.pretrain_mask_rate:
                            targets.append(seq[c])
                            rows.append(r)
                            cols.append(c)
                            masked[r][c] = vocab.mask_id
                if not targets:
                    continue
                ids, pad_mask = pad_batch(masked, vocab.pad_id)
                hidden = encoder(ids, pad_mask)
                logits = vocab_head(hidden[rows, cols])
                loss = ce(logits, torch.tensor(targets, dtype=torch.long))
                optimizer.zero_grad()
                loss.backward()
                optimizer.step()
                epoch_losses.append(loss.item())
            losses.append(sum(epoch_losses) / max(len(epoch_losses), 1))

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    torch.save(encoder.state_dict(), out / "encoder.pt")
    (out / "vocab.txt").write_text("\n".join(vocab.tokens) + "\n", encoding="utf-8")
    (out / "config.json").write_text(
        json.dumps({"encoder": asdict(config), "pretrain_losses": losses}, indent=2),
        encoding="utf-8",
    )
    return out


def load_encoder(checkpoint_dir: str | Path) -> tuple[MiniEncoder, Vocab, EncoderConfig]:
    path = Path(checkpoint_dir)
    if not (path / "config.json").exists():
        raise SchemaError(f"{checkpoint_dir} is not an encoder checkpoint (config.json missing)")
    doc = json.loads((path / "config.json").read_text("utf-8"))
    config = EncoderConfig(**doc["encoder"])
    vocab = Vocab((path / "vocab.txt").read_text("utf-8").splitlines())
    if len(vocab) != config.vocab_size:
        raise SchemaError("vocabulary size disagrees with encoder config")
    encoder = MiniEncoder(config)
    encoder.load_state_dict(torch.load(path / "encoder.pt", weights_only=True))
    encoder.eval()
    return encoder, vocab, config
