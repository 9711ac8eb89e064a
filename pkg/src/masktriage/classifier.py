"""Fine-tuning and inference for the masked-keyword classifier.

A pretrained encoder checkpoint plus one shared linear head over the two
classes: the head reads every [MASK] position (pseudo-label targets) and the
[CLS] position (sequence-label target) during training. At inference the
per-mask argmax votes decide the label by majority, with a mean-probability
then [CLS] tie-break; an instance with no masks falls back to the [CLS] head
against the decision threshold.
"""

from __future__ import annotations

import hashlib
import json
import random
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Iterable, Optional, Sequence

import torch
from torch import nn

from .encoder import EncoderConfig, MiniEncoder, Vocab, load_encoder, pad_batch
from .errors import PipelineError, SchemaError
from .labels import LABEL_ORDER, LABEL_TO_INDEX, NON_SECURITY, SECURITY
from .masking import MaskedInstance

DECISION_MASK_VOTE = "mask_vote"
DECISION_CLS_FALLBACK = "cls_fallback"


@dataclass
class TrainConfig:
    epochs: int = 6
    batch_size: int = 32
    learning_rate: float = 2e-5
    max_sequence_length: int = 512
    seed: int = 0
    encoder_id: str = ""
    data_workers: int = 2
    cls_loss_weight: float = 1.0
    weight_decay: float = 0.01
    gradient_clip: float = 1.0

    def validate(self, encoder_config: Optional[EncoderConfig] = None) -> None:
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.cls_loss_weight < 0:
            raise ValueError("cls_loss_weight must be non-negative")
        if encoder_config is not None and self.max_sequence_length > encoder_config.max_positions:
            raise ValueError(
                f"max_sequence_length {self.max_sequence_length} exceeds encoder "
                f"positional capacity {encoder_config.max_positions}"
            )


@dataclass
class PredictionOutcome:
    issue_id: str
    per_mask_probabilities: list[list[float]]
    cls_probabilities: list[float]
    vote_tally: dict[str, int]
    final_label: str
    decision_path: str
    max_confidence: float

    def to_json(self) -> str:
        return json.dumps(asdict(self), ensure_ascii=False)

    @classmethod
    def from_json(cls, line: str) -> "PredictionOutcome":
        return cls(**json.loads(line))


def parameter_digest(modules: dict[str, nn.Module]) -> str:
    """Content hash of all parameters, stable across runs and machines."""
    h = hashlib.sha256()
    for prefix in sorted(modules):
        state = modules[prefix].state_dict()
        for name in sorted(state):
            h.update(f"{prefix}.{name}".encode())
            tensor = state[name].detach().cpu().contiguous().to(torch.float32)
            h.update(tensor.numpy().tobytes())
    return h.hexdigest()


class ClassifierModel:
    """Encoder plus shared two-way linear head, with label order pinned."""

    def __init__(self, encoder: MiniEncoder, head: nn.Linear, vocab: Vocab,
                 config_snapshot: dict, initial_weights_digest: str,
                 history: Optional[dict] = None):
        if head.out_features != len(LABEL_ORDER):
            raise ValueError("classification head must emit one logit per class")
        self.encoder = encoder
        self.head = head
        self.vocab = vocab
        self.label_order = list(LABEL_ORDER)
        self.config_snapshot = dict(config_snapshot)
        self.initial_weights_digest = initial_weights_digest
        self.history = dict(history or {})

    def eval_mode(self) -> None:
        self.encoder.eval()
        self.head.eval()

    def current_digest(self) -> str:
        return parameter_digest({"encoder": self.encoder, "head": self.head})


def _encode_instance(instance: MaskedInstance, vocab: Vocab, max_len: int
                     ) -> tuple[list[int], list[int], list[int]]:
    """Returns (ids, kept mask sequence-positions, kept mask indices).

    Word position i sits at sequence position i+1 behind [CLS]; masks beyond
    the truncation limit are dropped.
    """
    ids = vocab.encode(instance.tokens, max_len)
    kept_positions: list[int] = []
    kept_indices: list[int] = []
    for j, pos in enumerate(instance.mask_positions):
        seq_pos = pos + 1
        if seq_pos < len(ids):
            kept_positions.append(seq_pos)
            kept_indices.append(j)
    return ids, kept_positions, kept_indices


def _encode_all(instances: Sequence[MaskedInstance], vocab: Vocab, max_len: int,
                workers: int) -> list[tuple[list[int], list[int], list[int]]]:
    if workers > 1 and len(instances) > 64:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(lambda inst: _encode_instance(inst, vocab, max_len), instances))
    return [_encode_instance(inst, vocab, max_len) for inst in instances]


def fine_tune(train_set: Sequence[MaskedInstance], config: TrainConfig) -> ClassifierModel:
    """Fine-tune every learnable parameter against per-mask pseudo-labels.

    Cross-entropy is taken at each surviving [MASK] position against the
    instance's pseudo-label and, scaled by cls_loss_weight, at the [CLS]
    position against the truth label; the batch loss is the mean over all
    contributing positions. Training is seeded: same checkpoint, same seed,
    same data gives the same trajectory on fixed kernels.
    """
    if not train_set:
        raise ValueError("training set is empty")
    for inst in train_set:
        if inst.truth_label not in LABEL_TO_INDEX:
            raise ValueError(f"instance {inst.issue_id} has no valid truth label")
        if any(p != inst.truth_label for p in inst.pseudo_labels):
            raise ValueError(f"instance {inst.issue_id} has pseudo-labels inconsistent with truth")
    if not config.encoder_id:
        raise ValueError("config.encoder_id must name an encoder checkpoint directory")

    encoder, vocab, encoder_config = load_encoder(config.encoder_id)
    config.validate(encoder_config)

    torch.manual_seed(config.seed)
    head = nn.Linear(encoder_config.hidden_size, len(LABEL_ORDER))
    initial_digest = parameter_digest({"encoder": encoder, "head": head})

    encoded = _encode_all(train_set, vocab, config.max_sequence_length, config.data_workers)
    params = list(encoder.parameters()) + list(head.parameters())
    optimizer = torch.optim.AdamW(params, lr=config.learning_rate,
                                  weight_decay=config.weight_decay)
    steps_per_epoch = (len(train_set) + config.batch_size - 1) // config.batch_size
    total_steps = max(1, steps_per_epoch * config.epochs)
    scheduler = torch.optim.lr_scheduler.LambdaLR(
        optimizer, lambda step: max(0.0, 1.0 - step / total_steps)
    )
    ce = nn.CrossEntropyLoss(reduction="sum")
    rng = random.Random(config.seed)

    epoch_losses: list[float] = []
    first_epoch_batches: list[float] = []
    encoder.train()
    head.train()
    for epoch in range(config.epochs):
        order = list(range(len(train_set)))
        rng.shuffle(order)
        running, contributing = 0.0, 0
        for start in range(0, len(order), config.batch_size):
            batch_idx = order[start : start + config.batch_size]
            id_lists = [encoded[i][0] for i in batch_idx]
            ids, pad_mask = pad_batch(id_lists, vocab.pad_id)
            hidden = encoder(ids, pad_mask)

            rows: list[int] = []
            cols: list[int] = []
            targets: list[int] = []
            for r, i in enumerate(batch_idx):
                inst = train_set[i]
                _, seq_positions, _ = encoded[i]
                for pos in seq_positions:
                    rows.append(r)
                    cols.append(pos)
                    targets.append(LABEL_TO_INDEX[inst.truth_label])
            n_mask = len(rows)

            cls_logits = head(hidden[:, 0])
            cls_targets = torch.tensor(
                [LABEL_TO_INDEX[train_set[i].truth_label] for i in batch_idx], dtype=torch.long
            )
            loss_sum = config.cls_loss_weight * ce(cls_logits, cls_targets)
            if n_mask:
                mask_logits = head(hidden[rows, cols])
                loss_sum = loss_sum + ce(mask_logits, torch.tensor(targets, dtype=torch.long))
            positions = n_mask + len(batch_idx)
            loss = loss_sum / positions

            optimizer.zero_grad()
            loss.backward()
            nn.utils.clip_grad_norm_(params, config.gradient_clip)
            optimizer.step()
            scheduler.step()

            running += loss.item() * positions
            contributing += positions
            if epoch == 0:
                first_epoch_batches.append(loss.item())
        epoch_losses.append(running / contributing)

    model = ClassifierModel(
        encoder=encoder,
        head=head,
        vocab=vocab,
        config_snapshot=asdict(config),
        initial_weights_digest=initial_digest,
        history={"epoch_losses": epoch_losses, "first_epoch_batch_losses": first_epoch_batches},
    )
    model.eval_mode()
    return model


def decide(per_mask_probabilities: Sequence[Sequence[float]],
           cls_probabilities: Sequence[float],
           threshold: float = 0.5) -> tuple[str, str, dict[str, int], float]:
    """Pure decision rule: majority vote over per-mask probabilities with the
    mean-probability then [CLS] tie-break chain; [CLS] thresholding when no
    masks exist. Returns (final_label, decision_path, vote_tally, max_confidence)."""
    if not per_mask_probabilities:
        final = SECURITY if cls_probabilities[0] > threshold else NON_SECURITY
        tally = {label: 0 for label in LABEL_ORDER}
        return final, DECISION_CLS_FALLBACK, tally, cls_probabilities[LABEL_TO_INDEX[final]]

    tally = {label: 0 for label in LABEL_ORDER}
    for probs in per_mask_probabilities:
        winner = LABEL_ORDER[0] if probs[0] >= probs[1] else LABEL_ORDER[1]
        tally[winner] += 1
    if tally[SECURITY] != tally[NON_SECURITY]:
        final = SECURITY if tally[SECURITY] > tally[NON_SECURITY] else NON_SECURITY
    else:
        n = len(per_mask_probabilities)
        mean = [sum(p[i] for p in per_mask_probabilities) / n for i in range(len(LABEL_ORDER))]
        if mean[0] != mean[1]:
            final = SECURITY if mean[0] > mean[1] else NON_SECURITY
        else:
            final = SECURITY if cls_probabilities[0] >= cls_probabilities[1] else NON_SECURITY
    idx = LABEL_TO_INDEX[final]
    confidence = max(p[idx] for p in per_mask_probabilities)
    return final, DECISION_MASK_VOTE, tally, confidence


def _outcome_from_forward(instance: MaskedInstance, mask_probs: list[list[float]],
                          cls_probs: list[float], threshold: float) -> PredictionOutcome:
    final, path, tally, confidence = decide(mask_probs, cls_probs, threshold)
    return PredictionOutcome(
        issue_id=instance.issue_id,
        per_mask_probabilities=mask_probs,
        cls_probabilities=cls_probs,
        vote_tally=tally,
        final_label=final,
        decision_path=path,
        max_confidence=confidence,
    )


def predict_batch(model: ClassifierModel, instances: Sequence[MaskedInstance],
                  threshold: float = 0.5, batch_size: int = 32) -> list[PredictionOutcome]:
    """Element-wise identical to predict, order preserved."""
    model.eval_mode()
    max_len = int(model.config_snapshot.get("max_sequence_length", 512))
    outcomes: list[PredictionOutcome] = []
    with torch.no_grad():
        for start in range(0, len(instances), batch_size):
            chunk = list(instances[start : start + batch_size])
            if not chunk:
                continue
            encoded = [_encode_instance(inst, model.vocab, max_len) for inst in chunk]
            ids, pad_mask = pad_batch([e[0] for e in encoded], model.vocab.pad_id)
            try:
                hidden = model.encoder(ids, pad_mask)
            except Exception as exc:
                ids_in_chunk = ", ".join(inst.issue_id for inst in chunk)
                raise PipelineError(f"inference failed for instances [{ids_in_chunk}]: {exc}") from exc
            probs = torch.softmax(model.head(hidden), dim=-1)
            for r, (inst, (_, seq_positions, _)) in enumerate(zip(chunk, encoded)):
                mask_probs = [probs[r, pos].tolist() for pos in seq_positions]
                cls_probs = probs[r, 0].tolist()
                outcomes.append(_outcome_from_forward(inst, mask_probs, cls_probs, threshold))
    return outcomes


def predict(model: ClassifierModel, instance: MaskedInstance,
            threshold: float = 0.5) -> PredictionOutcome:
    return predict_batch(model, [instance], threshold=threshold, batch_size=1)[0]


def save_model(model: ClassifierModel, out_dir: str | Path) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    torch.save(model.encoder.state_dict(), out / "encoder.pt")
    torch.save(model.head.state_dict(), out / "head.pt")
    (out / "vocab.txt").write_text("\n".join(model.vocab.tokens) + "\n", encoding="utf-8")
    meta = {
        "label_order": model.label_order,
        "config": model.config_snapshot,
        "encoder": asdict(model.encoder.config),
        "initial_weights_digest": model.initial_weights_digest,
        "weights_digest": model.current_digest(),
        "history": model.history,
    }
    (out / "model.json").write_text(json.dumps(meta, indent=2, sort_keys=True), encoding="utf-8")
    return out


def load_model(checkpoint_dir: str | Path) -> ClassifierModel:
    path = Path(checkpoint_dir)
    meta_path = path / "model.json"
    if not meta_path.exists():
        raise SchemaError(f"{checkpoint_dir} is not a classifier checkpoint (model.json missing)")
    meta = json.loads(meta_path.read_text("utf-8"))
    if meta.get("label_order") != list(LABEL_ORDER):
        raise SchemaError("checkpoint label order does not match this build")
    encoder_config = EncoderConfig(**meta["encoder"])
    encoder = MiniEncoder(encoder_config)
    encoder.load_state_dict(torch.load(path / "encoder.pt", weights_only=True))
    head = nn.Linear(encoder_config.hidden_size, len(LABEL_ORDER))
    head.load_state_dict(torch.load(path / "head.pt", weights_only=True))
    vocab = Vocab((path / "vocab.txt").read_text("utf-8").splitlines())
    model = ClassifierModel(
        encoder=encoder,
        head=head,
        vocab=vocab,
        config_snapshot=meta["config"],
        initial_weights_digest=meta["initial_weights_digest"],
        history=meta.get("history", {}),
    )
    recomputed = model.current_digest()
    if recomputed != meta["weights_digest"]:
        raise SchemaError(
            f"checkpoint digest mismatch: recorded {meta['weights_digest'][:12]}..., "
            f"recomputed {recomputed[:12]}..."
        )
    model.eval_mode()
    return model


def write_predictions(path: str | Path, outcomes: Iterable[PredictionOutcome]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for outcome in outcomes:
            fh.write(outcome.to_json() + "\n")


def read_predictions(path: str | Path) -> list[PredictionOutcome]:
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                out.append(PredictionOutcome.from_json(line))
    return out
