"""Evaluation metrics, latent export, and the loss-ablation harness.

UAR (unweighted average recall) is the mean of the per-class recalls, so a
majority-class predictor on an imbalanced test set scores 1/C rather than
the majority share.  The ablation harness retrains the model with named
subsets of the auxiliary losses disabled, holding everything else (data,
seeds, architecture) fixed, and reports one UAR per (spec, seed).
"""

from __future__ import annotations

import csv
import io
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .corpus import Corpus
from .encoder import EncoderConfig, forward
from .errors import DataError

LATENT_CSV_PREFIX = "h_"


@dataclass(frozen=True)
class ConfusionMatrix:
    """Rows are true classes, columns predicted classes."""

    counts: np.ndarray

    def __post_init__(self):
        counts = np.asarray(self.counts, dtype=np.int64)
        object.__setattr__(self, "counts", counts)
        if counts.ndim != 2 or counts.shape[0] != counts.shape[1]:
            raise DataError(f"confusion matrix must be square, got {counts.shape}")
        if np.any(counts < 0):
            raise DataError("confusion matrix counts must be nonnegative")

    @classmethod
    def from_predictions(cls, y_true, y_pred, num_classes: int) -> "ConfusionMatrix":
        counts = np.zeros((num_classes, num_classes), dtype=np.int64)
        for t, p in zip(y_true, y_pred):
            counts[int(t), int(p)] += 1
        return cls(counts)

    @property
    def num_samples(self) -> int:
        return int(self.counts.sum())


def per_class_recall(cm: ConfusionMatrix) -> np.ndarray:
    row_sums = cm.counts.sum(axis=1)
    empty = np.where(row_sums == 0)[0]
    if empty.size:
        raise DataError(f"recall undefined: no samples of class {int(empty[0])}")
    return np.diag(cm.counts) / row_sums


def uar(cm: ConfusionMatrix) -> float:
    """Mean per-class recall."""
    return float(per_class_recall(cm).mean())


def accuracy(cm: ConfusionMatrix) -> float:
    if cm.num_samples == 0:
        raise DataError("accuracy undefined on an empty confusion matrix")
    return float(np.trace(cm.counts) / cm.num_samples)


def predictions(
    params: dict[str, np.ndarray],
    config: EncoderConfig,
    corpus: Corpus,
    domain: str,
    split: str,
) -> tuple[list[int], list[int]]:
    """Argmax emotion predictions on unaugmented clips of one split."""
    rows = corpus.split_rows(domain, split)
    if not rows:
        raise DataError(f"empty split: domain={domain} split={split}")
    y_true, y_pred = [], []
    for i in rows:
        out = forward(corpus.waveform(i), params, config)
        y_true.append(corpus.manifest.rows[i].emotion)
        y_pred.append(int(np.argmax(out.emo_logits.data)))
    return y_true, y_pred


def evaluate_uar(
    params: dict[str, np.ndarray],
    config: EncoderConfig,
    corpus: Corpus,
    domain: str,
    split: str,
) -> dict:
    """UAR report for one split: confusion matrix, per-class recall, UAR."""
    y_true, y_pred = predictions(params, config, corpus, domain, split)
    cm = ConfusionMatrix.from_predictions(y_true, y_pred, corpus.manifest.num_classes)
    return {
        "domain": domain,
        "split": split,
        "num_samples": cm.num_samples,
        "confusion_matrix": cm.counts.tolist(),
        "per_class_recall": [float(r) for r in per_class_recall(cm)],
        "uar": uar(cm),
    }


# ---------------------------------------------------------------------------
# latent export


def export_latents(
    params: dict[str, np.ndarray],
    config: EncoderConfig,
    corpus: Corpus,
    domain: str,
    split: str,
) -> list[tuple[np.ndarray, int, str]]:
    """One (embedding, emotion, domain) row per clip of the chosen split."""
    rows = corpus.split_rows(domain, split)
    if not rows:
        raise DataError(f"empty split: domain={domain} split={split}")
    out = []
    for i in rows:
        enc = forward(corpus.waveform(i), params, config)
        row = corpus.manifest.rows[i]
        out.append((enc.pooled.data.copy(), row.emotion, row.domain))
    return out


def latents_to_csv(rows: list[tuple[np.ndarray, int, str]]) -> str:
    dim = rows[0][0].size
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow([f"{LATENT_CSV_PREFIX}{i}" for i in range(dim)] + ["emotion", "domain"])
    for vec, emotion, domain in rows:
        writer.writerow([repr(float(x)) for x in vec] + [emotion, domain])
    return buf.getvalue()


# ---------------------------------------------------------------------------
# ablation harness


@dataclass(frozen=True)
class AblationSpec:
    """One named training variant: which losses are active, labels or not."""

    name: str
    target_labeled: bool
    lambda_aug: float | None = None  # None keeps the base config value
    lambda_cont: float | None = None
    lambda_im: float | None = None

    def overrides(self, base) -> dict:
        ov = {"target_labeled": self.target_labeled}
        for key in ("lambda_aug", "lambda_cont", "lambda_im"):
            value = getattr(self, key)
            if value is not None:
                ov[key] = value
        return ov


STANDARD_ABLATIONS = (
    AblationSpec("full", target_labeled=True),
    AblationSpec("no_labels", target_labeled=False),
    AblationSpec("no_aug", target_labeled=False, lambda_aug=0.0),
    AblationSpec("no_im_and_aug", target_labeled=False, lambda_aug=0.0, lambda_im=0.0),
    AblationSpec("no_cont_and_aug", target_labeled=False, lambda_aug=0.0, lambda_cont=0.0),
)


def ablation_spec(name: str) -> AblationSpec:
    for spec in STANDARD_ABLATIONS:
        if spec.name == name:
            return spec
    raise DataError(f"unknown ablation spec {name!r}; known: "
                    f"{[s.name for s in STANDARD_ABLATIONS]}")


def _run_one(args):
    corpus, encoder_config, base_train, augment_config, spec, seed = args
    from .trainer import Trainer

    cfg = base_train.replace(seed=seed, **spec.overrides(base_train))
    result = Trainer(corpus, encoder_config, cfg, augment_config).fit()
    return {"spec": spec.name, "seed": seed, "uar": result.uar_report["uar"]}


def run_ablation(
    corpora: Corpus | dict[bool, Corpus],
    encoder_config: EncoderConfig,
    base_train,
    specs=STANDARD_ABLATIONS,
    seeds=(0, 1, 2, 3, 4),
    augment_config=None,
    jobs: int = 1,
) -> list[dict]:
    """Train every (spec, seed) combination; collect one UAR per run.

    Within each labeling mode all specs see identical data and seeds; only
    the disabled losses differ.  ``corpora`` may be a single corpus or a
    {target_labeled: corpus} pair, since the protocol splits the target
    domain differently in the two modes.  Rows come back ordered by
    (spec order, seed) regardless of ``jobs``.
    """
    def corpus_for(spec: AblationSpec) -> Corpus:
        if isinstance(corpora, dict):
            return corpora[spec.target_labeled]
        return corpora

    tasks = [
        (corpus_for(spec), encoder_config, base_train, augment_config, spec, seed)
        for spec in specs
        for seed in seeds
    ]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_run_one, tasks))
    else:
        rows = [_run_one(t) for t in tasks]
    return rows


def ablation_to_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["spec", "seed", "uar"])
    for r in rows:
        writer.writerow([r["spec"], r["seed"], repr(float(r["uar"]))])
    return buf.getvalue()


def ablation_means(rows: list[dict]) -> dict[str, float]:
    by_spec: dict[str, list[float]] = {}
    for r in rows:
        by_spec.setdefault(r["spec"], []).append(r["uar"])
    return {name: float(np.mean(vals)) for name, vals in by_spec.items()}


def ablation_audit(specs, base_train) -> dict:
    """Exactly which config fields each spec overrides, for the output dir."""
    return {spec.name: spec.overrides(base_train) for spec in specs}
