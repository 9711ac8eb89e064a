"""Cross-validation harness: stratified folds, precision/recall/F1 with
means and deviations, confusion decomposition by decision path, and the
paired significance battery over fold metrics.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import NamedTuple, Optional, Sequence, Union

import numpy as np

from .classifier import (DECISION_CLS_FALLBACK, DECISION_MASK_VOTE, PredictionOutcome,
                         TrainConfig, fine_tune, predict_batch)
from .errors import DegenerateSampleError, PipelineError, SchemaError
from .labels import LABEL_ORDER, LABEL_TO_INDEX, SECURITY
from .masking import MaskedInstance, apply_masks, apply_masks_label_free, apply_random_masks
from .preprocess import PreprocessedIssue
from .stats import (WILCOXON_EXACT, WILCOXON_EXACT_LIMIT, WILCOXON_NORMAL,
                    bonferroni_threshold, paired_t, shapiro_wilk, variance_ratio,
                    wilcoxon_signed_rank)
from .surrogates import RandomKeywordLists, SurrogateLexicon

BINARY_POSITIVE = "binary_positive"
CLASS_WEIGHTED = "class_weighted"


class PrfResult(NamedTuple):
    precision: float
    recall: float
    f1: float
    degenerate: bool = False


def confusion_from_pairs(pairs: Sequence[tuple[str, str]]) -> np.ndarray:
    """2x2 integer confusion matrix, rows = truth, columns = prediction,
    class order (security, non_security)."""
    matrix = np.zeros((2, 2), dtype=np.int64)
    for predicted, truth in pairs:
        matrix[LABEL_TO_INDEX[truth], LABEL_TO_INDEX[predicted]] += 1
    return matrix


def _prf_for_class(matrix: np.ndarray, idx: int) -> tuple[float, float, float, bool]:
    tp = float(matrix[idx, idx])
    fp = float(matrix[1 - idx, idx])
    fn = float(matrix[idx, 1 - idx])
    degenerate = False
    if tp + fp == 0:
        precision, degenerate = 0.0, True
    else:
        precision = tp / (tp + fp)
    if tp + fn == 0:
        recall, degenerate = 0.0, True
    else:
        recall = tp / (tp + fn)
    if precision + recall == 0:
        f1, degenerate = 0.0, True
    else:
        f1 = 2 * precision * recall / (precision + recall)
    return precision, recall, f1, degenerate


def prf_from_confusion(matrix: np.ndarray, positive_class: str = SECURITY,
                       weighting: str = BINARY_POSITIVE) -> PrfResult:
    if weighting == BINARY_POSITIVE:
        p, r, f, degenerate = _prf_for_class(matrix, LABEL_TO_INDEX[positive_class])
        return PrfResult(float(p), float(r), float(f), bool(degenerate))
    if weighting == CLASS_WEIGHTED:
        supports = [float(matrix[idx].sum()) for idx in range(2)]
        total = sum(supports)
        if total == 0:
            raise ValueError("empty confusion matrix")
        acc_p = acc_r = acc_f = 0.0
        degenerate = False
        for idx in range(2):
            p, r, f, bad = _prf_for_class(matrix, idx)
            weight = supports[idx] / total
            acc_p += weight * p
            acc_r += weight * r
            acc_f += weight * f
            degenerate = degenerate or (bad and supports[idx] > 0)
        return PrfResult(float(acc_p), float(acc_r), float(acc_f), bool(degenerate))
    raise ValueError(f"unknown weighting {weighting!r}")


def compute_prf(pairs: Sequence[tuple[str, str]], positive_class: str = SECURITY,
                weighting: str = BINARY_POSITIVE) -> PrfResult:
    """Precision/recall/F1 over (predicted, truth) label pairs.

    Zero denominators yield 0 for the affected metric with the degenerate
    flag set rather than NaN.
    """
    if not pairs:
        raise ValueError("compute_prf needs at least one outcome")
    return prf_from_confusion(confusion_from_pairs(pairs), positive_class, weighting)


@dataclass
class FoldMetrics:
    fold_index: int
    confusion: list[list[int]]
    precision: float
    recall: float
    f1: float
    binary_precision: float
    binary_recall: float
    binary_f1: float

    @classmethod
    def from_pairs(cls, fold_index: int, pairs: Sequence[tuple[str, str]]) -> "FoldMetrics":
        matrix = confusion_from_pairs(pairs)
        weighted = prf_from_confusion(matrix, weighting=CLASS_WEIGHTED)
        binary = prf_from_confusion(matrix, weighting=BINARY_POSITIVE)
        return cls(
            fold_index=fold_index,
            confusion=matrix.tolist(),
            precision=weighted.precision,
            recall=weighted.recall,
            f1=weighted.f1,
            binary_precision=binary.precision,
            binary_recall=binary.recall,
            binary_f1=binary.f1,
        )


def decompose_by_decision_path(
    outcomes: Sequence[PredictionOutcome], truths: Sequence[str]
) -> dict:
    """Split the confusion matrix by how each prediction was decided.

    The mask-vote and fallback subset matrices sum to the overall matrix
    element-wise; each subset also reports weighted metrics.
    """
    if len(outcomes) != len(truths):
        raise ValueError("one truth label per outcome required")
    partitions = {"overall": [], "mask_subset": [], "cls_subset": []}
    for outcome, truth in zip(outcomes, truths):
        pair = (outcome.final_label, truth)
        partitions["overall"].append(pair)
        if outcome.decision_path == DECISION_MASK_VOTE:
            partitions["mask_subset"].append(pair)
        elif outcome.decision_path == DECISION_CLS_FALLBACK:
            partitions["cls_subset"].append(pair)
        else:
            raise ValueError(f"unknown decision path {outcome.decision_path!r}")
    result = {}
    for name, pairs in partitions.items():
        matrix = confusion_from_pairs(pairs)
        if pairs:
            weighted = prf_from_confusion(matrix, weighting=CLASS_WEIGHTED)
            metrics = {"precision": weighted.precision, "recall": weighted.recall,
                       "f1": weighted.f1, "degenerate": weighted.degenerate}
        else:
            metrics = {"precision": 0.0, "recall": 0.0, "f1": 0.0, "degenerate": True}
        result[name] = {"confusion": matrix.tolist(), "count": len(pairs), **metrics}
    return result


METRIC_NAMES = ("precision", "recall", "f1")


def paired_battery(metric_pairs: dict[str, tuple[Sequence[float], Sequence[float]]],
                   alpha: float = 0.05) -> dict:
    """Significance protocol over paired fold metrics.

    Shapiro-Wilk decides per metric whether the paired differences look
    normal; normal differences get the paired t test, non-normal ones the
    exact Wilcoxon signed-rank test. Every p faces the Bonferroni-corrected
    threshold alpha/k. Variance ratios of the two samples ride along.
    """
    threshold = bonferroni_threshold(alpha, len(metric_pairs))
    results: dict = {"alpha": alpha, "k": len(metric_pairs), "threshold": threshold,
                     "metrics": {}}
    for name, (a, b) in metric_pairs.items():
        entry: dict = {}
        diffs = [x - y for x, y in zip(a, b)]
        try:
            w, shapiro_p = shapiro_wilk(diffs)
            entry["shapiro"] = {"W": w, "p": shapiro_p}
            normal = shapiro_p > alpha
        except DegenerateSampleError:
            entry["shapiro"] = {"degenerate": True}
            normal = False
        except ValueError as exc:
            # sample size outside the W test's range: fall back to the
            # distribution-free branch
            entry["shapiro"] = {"skipped": str(exc)}
            normal = False
        try:
            if normal:
                stat, p = paired_t(a, b)
                entry["test"] = "paired_t"
            else:
                mode = WILCOXON_EXACT if len(diffs) <= WILCOXON_EXACT_LIMIT else WILCOXON_NORMAL
                stat, p = wilcoxon_signed_rank(a, b, mode=mode)
                entry["test"] = f"wilcoxon_{mode}"
            entry["statistic"] = stat
            entry["p_value"] = p
            entry["significant"] = p < threshold
        except DegenerateSampleError as exc:
            entry["test"] = "degenerate"
            entry["error"] = str(exc)
            entry["significant"] = False
        try:
            f_stat, f_p = variance_ratio(b, a)
            entry["variance_ratio"] = {"F": f_stat, "p": f_p}
        except DegenerateSampleError as exc:
            entry["variance_ratio"] = {"degenerate": True, "error": str(exc)}
        results["metrics"][name] = entry
    return results


@dataclass
class EvalReport:
    folds: list[FoldMetrics]
    means: dict[str, float]
    stds: dict[str, float]
    decomposition: dict
    initial_weights_digest: str = ""
    stats: dict = field(default_factory=dict)
    provenance: dict = field(default_factory=dict)

    @classmethod
    def from_folds(cls, folds: list[FoldMetrics], decomposition: dict,
                   initial_weights_digest: str = "", stats: Optional[dict] = None,
                   provenance: Optional[dict] = None) -> "EvalReport":
        means: dict[str, float] = {}
        stds: dict[str, float] = {}
        for name in ("precision", "recall", "f1",
                     "binary_precision", "binary_recall", "binary_f1"):
            values = [getattr(f, name) for f in folds]
            means[name] = float(np.mean(values))
            # sample standard deviation over folds
            stds[name] = float(np.std(values, ddof=1)) if len(values) > 1 else 0.0
        return cls(folds=folds, means=means, stds=stds, decomposition=decomposition,
                   initial_weights_digest=initial_weights_digest,
                   stats=dict(stats or {}), provenance=dict(provenance or {}))

    def to_dict(self) -> dict:
        return {
            "folds": [asdict(f) for f in self.folds],
            "means": self.means,
            "stds": self.stds,
            "decomposition": self.decomposition,
            "initial_weights_digest": self.initial_weights_digest,
            "stats": self.stats,
            "provenance": self.provenance,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "EvalReport":
        try:
            return cls(
                folds=[FoldMetrics(**f) for f in doc["folds"]],
                means=dict(doc["means"]),
                stds=dict(doc["stds"]),
                decomposition=dict(doc["decomposition"]),
                initial_weights_digest=doc.get("initial_weights_digest", ""),
                stats=dict(doc.get("stats", {})),
                provenance=dict(doc.get("provenance", {})),
            )
        except KeyError as exc:
            raise SchemaError(f"evaluation report missing field {exc}") from exc


def write_report(path: str | Path, report: EvalReport) -> None:
    Path(path).write_text(json.dumps(report.to_dict(), indent=2, sort_keys=True),
                          encoding="utf-8")


def read_report(path: str | Path) -> EvalReport:
    return EvalReport.from_dict(json.loads(Path(path).read_text("utf-8")))


def stratified_folds(labels: Sequence[str], folds: int, seed: int) -> list[int]:
    """Seeded stratified fold assignment: per-class round-robin after a
    shuffle, keeping class proportions within one issue per fold."""
    if folds < 2 or folds > len(labels):
        raise ValueError(f"fold count {folds} must lie in [2, {len(labels)}]")
    import random as _random

    rng = _random.Random(seed)
    assignment = [0] * len(labels)
    for label in LABEL_ORDER:
        indices = [i for i, lab in enumerate(labels) if lab == label]
        rng.shuffle(indices)
        for j, idx in enumerate(indices):
            assignment[idx] = j % folds
    return assignment


MaskingSource = Union[SurrogateLexicon, RandomKeywordLists]


def mask_instances(preprocessed: Sequence[PreprocessedIssue],
                   source: MaskingSource, label_free: bool = False) -> list[MaskedInstance]:
    """Mask a preprocessed issue list with the lexicon or the random lists.

    Training instances consult the issue's own class list (pseudo-labels
    needed); with label_free=True the union of both class lists is masked
    instead, the way unlabeled input is treated at inference time.
    """
    if label_free:
        return [apply_masks_label_free(issue, source) for issue in preprocessed]
    if isinstance(source, SurrogateLexicon):
        return [apply_masks(issue, source) for issue in preprocessed]
    if isinstance(source, RandomKeywordLists):
        return [apply_random_masks(issue, source) for issue in preprocessed]
    raise TypeError(f"unsupported masking source {type(source).__name__}")


def run_cross_validation(
    data,
    masking_source: MaskingSource,
    config: TrainConfig,
    folds: int = 10,
    fold_seed: int = 0,
    threshold: float = 0.5,
    provenance: Optional[dict] = None,
) -> EvalReport:
    """K-fold cross-validation of the masked-keyword classifier.

    `data` is either a labeled corpus (preprocessed here with defaults) or an
    already-preprocessed issue list. Fold assignment is stratified and
    seeded. Every fold starts from the pristine pretrained checkpoint; the
    initial weight digests must agree across folds, otherwise the run
    aborts. Training folds are masked with the issue's own class list;
    held-out instances are masked label-free (union of class lists), the
    same way deployed inference treats an unlabeled issue, then predicted
    with the standard vote/fallback rule and aggregated into per-fold
    metrics, overall means and deviations, and a decision-path decomposition
    over the union of held-out predictions.
    """
    from .ingest import LabeledCorpus
    from .preprocess import preprocess_corpus

    if isinstance(data, LabeledCorpus):
        preprocessed: Sequence[PreprocessedIssue] = preprocess_corpus(data.issues)
    else:
        preprocessed = data
    instances = mask_instances(preprocessed, masking_source)
    eval_instances = mask_instances(preprocessed, masking_source, label_free=True)
    labels = [inst.truth_label for inst in instances]
    assignment = stratified_folds(labels, folds, fold_seed)

    fold_metrics: list[FoldMetrics] = []
    digests: list[str] = []
    all_outcomes: list[PredictionOutcome] = []
    all_truths: list[str] = []
    for fold in range(folds):
        train = [inst for inst, f in zip(instances, assignment) if f != fold]
        held_out = [inst for inst, f in zip(eval_instances, assignment) if f == fold]
        model = fine_tune(train, config)
        digests.append(model.initial_weights_digest)
        outcomes = predict_batch(model, held_out, threshold=threshold,
                                 batch_size=config.batch_size)
        truths = [inst.truth_label for inst in held_out]
        pairs = [(o.final_label, t) for o, t in zip(outcomes, truths)]
        fold_metrics.append(FoldMetrics.from_pairs(fold, pairs))
        all_outcomes.extend(outcomes)
        all_truths.extend(truths)

    if len(set(digests)) != 1:
        raise PipelineError("initial weight digests differ across folds; "
                            "the model was not reset to pristine weights")

    decomposition = decompose_by_decision_path(all_outcomes, all_truths)
    prov = dict(provenance or {})
    prov.update({
        "folds": folds,
        "fold_seed": fold_seed,
        "threshold": threshold,
        "config": dict(config.__dict__),
        "masking_source": type(masking_source).__name__,
    })
    return EvalReport.from_folds(fold_metrics, decomposition,
                                 initial_weights_digest=digests[0], provenance=prov)


def plot_decomposition(decomposition: dict, out_dir: str | Path,
                       prefix: str = "confusion") -> list[Path]:
    """Render the three decomposition confusion matrices to PNG files.

    Plotting is optional; matplotlib is imported lazily.
    """
    try:
        import matplotlib
        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except ImportError as exc:
        raise PipelineError("matplotlib is required for plot emission") from exc

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []
    for name in ("overall", "mask_subset", "cls_subset"):
        part = decomposition[name]
        matrix = np.array(part["confusion"])
        fig, ax = plt.subplots(figsize=(3.2, 3.2))
        ax.imshow(matrix, cmap="Blues")
        for (i, j), value in np.ndenumerate(matrix):
            ax.text(j, i, str(value), ha="center", va="center")
        ax.set_xticks([0, 1], LABEL_ORDER)
        ax.set_yticks([0, 1], LABEL_ORDER)
        ax.set_xlabel("prediction")
        ax.set_ylabel("label")
        ax.set_title(name.replace("_", " "))
        fig.tight_layout()
        path = out / f"{prefix}_{name}.png"
        fig.savefig(path, dpi=120)
        plt.close(fig)
        written.append(path)
    return written
