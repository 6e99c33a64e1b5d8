"""The four training objectives and their weighted combination.

All losses are differentiable scalars over batch tensors:

* emotion cross-entropy over emotion logits and labels,
* augmentation-pipeline cross-entropy over all augmented views,
* symmetric InfoNCE between the two views' projections, using cosine
  similarity divided by a temperature, and
* an information-maximization term: mean per-sample prediction entropy
  plus the (negated) entropy of the batch-average prediction, so confident
  predictions are rewarded only while the batch marginal stays spread out.

Probabilities are clamped at 1e-12 inside every log, which bounds the
losses and makes reported values reproducible bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .errors import ConfigError, DataError, DegenerateInputError

PROB_FLOOR = 1e-12

# InfoNCE denominator modes: "all-pairs" keeps every other-view similarity
# including the positive (the default); "exclude-positive" drops the
# positive term from the denominator.
NEGATIVE_MODES = ("all-pairs", "exclude-positive")


@dataclass(frozen=True)
class LossBreakdown:
    """component losses and the weighted total for one batch."""

    l_emo: float | None
    l_aug: float
    l_cont: float
    l_im: float
    total: float
    lambda_aug: float
    lambda_cont: float
    lambda_im: float
    batch_size: int

    def record(self, step: int, phase: str) -> dict:
        """JSON-lines record; l_emo is omitted whenever it was disabled."""
        rec = {"step": step, "phase": phase}
        if self.l_emo is not None:
            rec["l_emo"] = self.l_emo
        rec.update(l_aug=self.l_aug, l_cont=self.l_cont, l_im=self.l_im, total=self.total)
        return rec


def _check_labels(labels: Sequence[int], num_classes: int) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.int64)
    for i, lab in enumerate(labels):
        if not (0 <= lab < num_classes):
            raise DataError(f"label {lab} out of range [0, {num_classes}) at sample {i}")
    return labels


def _softmax_ce(logits: ad.Tensor, labels: Sequence[int]) -> ad.Tensor:
    n, c = logits.shape
    labels = _check_labels(labels, c)
    if len(labels) != n:
        raise DataError(f"{n} logit rows but {len(labels)} labels")
    onehot = np.zeros((n, c))
    onehot[np.arange(n), labels] = 1.0
    log_probs = ad.log(ad.clamp_min(ad.softmax(logits, axis=-1), PROB_FLOOR))
    return ad.scale(ad.mul(log_probs, ad.Tensor(onehot)).sum(), -1.0 / n)


def emotion_ce(emo_logits: ad.Tensor, labels: Sequence[int]) -> ad.Tensor:
    """Mean cross-entropy of emotion predictions against labels."""
    return _softmax_ce(emo_logits, labels)


def aug_ce(aug_logits: ad.Tensor, pipeline_labels: Sequence[int]) -> ad.Tensor:
    """Mean cross-entropy of pipeline predictions over all augmented views."""
    return _softmax_ce(aug_logits, pipeline_labels)


def info_nce(
    z: ad.Tensor,
    z_prime: ad.Tensor,
    temperature: float,
    symmetric: bool = True,
    negatives: str = "all-pairs",
) -> ad.Tensor:
    """Contrastive loss between paired projections of two augmented views.

    Row i of ``z`` and row i of ``z_prime`` are the positive pair; all other
    rows of the opposite view are the negatives.  Cosine similarities are
    divided by ``temperature`` before the softmax.  With ``symmetric`` both
    attraction directions are averaged.
    """
    if temperature <= 0:
        raise ConfigError(f"temperature must be positive, got {temperature}")
    if negatives not in NEGATIVE_MODES:
        raise ConfigError(f"negatives mode {negatives!r} not one of {NEGATIVE_MODES}")
    if z.ndim != 2 or z.shape != z_prime.shape:
        raise DataError(f"paired projections must share shape, got {z.shape}, {z_prime.shape}")
    n = z.shape[0]
    if n < 2:
        raise DataError(f"contrastive loss needs a batch of at least 2, got {n}")
    for name, t in (("z", z), ("z_prime", z_prime)):
        norms = np.linalg.norm(t.data, axis=1)
        bad = np.where(norms == 0.0)[0]
        if bad.size:
            raise DegenerateInputError(f"zero-norm embedding in {name} at row {int(bad[0])}")

    sims = ad.l2_normalize(z, axis=-1) @ ad.transpose(ad.l2_normalize(z_prime, axis=-1))
    logits = ad.scale(sims, 1.0 / temperature)
    eye = ad.Tensor(np.eye(n))

    def one_direction(mat: ad.Tensor) -> ad.Tensor:
        if negatives == "all-pairs":
            log_probs = ad.log(ad.clamp_min(ad.softmax(mat, axis=-1), PROB_FLOOR))
            return ad.scale(ad.mul(log_probs, eye).sum(), -1.0 / n)
        off = ad.Tensor(1.0 - np.eye(n))
        denom = ad.log(ad.mul(ad.exp(mat), off).sum(axis=1))
        diag = ad.mul(mat, eye).sum(axis=1)
        return ad.scale(ad.sub(denom, diag).sum(), 1.0 / n)

    loss = one_direction(logits)
    if symmetric:
        loss = ad.scale(ad.add(loss, one_direction(ad.transpose(logits))), 0.5)
    return loss


def im_loss(emo_logits: ad.Tensor) -> ad.Tensor:
    """Information-maximization loss; needs no labels.

    Mean per-sample entropy of softmax(logits), plus sum_c p_bar(c) *
    log p_bar(c) where p_bar is the batch-average prediction.  Bounded in
    [-log C, log C]; minimized by confident predictions whose batch
    marginal is uniform.
    """
    if emo_logits.ndim != 2:
        raise DataError(f"expected [batch, classes] logits, got {emo_logits.shape}")
    n = emo_logits.shape[0]
    probs = ad.softmax(emo_logits, axis=-1)
    log_probs = ad.log(ad.clamp_min(probs, PROB_FLOOR))
    mean_entropy = ad.scale(ad.mul(probs, log_probs).sum(), -1.0 / n)
    marginal = probs.mean(axis=0)
    marginal_term = ad.mul(marginal, ad.log(ad.clamp_min(marginal, PROB_FLOOR))).sum()
    return ad.add(mean_entropy, marginal_term)


def total_loss(
    l_aug: ad.Tensor,
    l_cont: ad.Tensor,
    l_im: ad.Tensor,
    lambda_aug: float,
    lambda_cont: float,
    lambda_im: float,
    l_emo: ad.Tensor | None = None,
    emo_enabled: bool = True,
) -> ad.Tensor:
    """Weighted sum of the enabled losses.

    When ``emo_enabled`` is false the emotion term contributes exactly
    zero; callers in label-free mode simply never compute it.
    """
    for name, lam in (("lambda_aug", lambda_aug), ("lambda_cont", lambda_cont), ("lambda_im", lambda_im)):
        if lam < 0:
            raise ConfigError(f"{name} must be nonnegative, got {lam}")
    total = ad.add(
        ad.scale(l_aug, lambda_aug),
        ad.add(ad.scale(l_cont, lambda_cont), ad.scale(l_im, lambda_im)),
    )
    if emo_enabled:
        if l_emo is None:
            raise ConfigError("emo_enabled but no emotion loss was provided")
        total = ad.add(l_emo, total)
    return total


def breakdown(
    l_emo: ad.Tensor | None,
    l_aug: ad.Tensor,
    l_cont: ad.Tensor,
    l_im: ad.Tensor,
    total: ad.Tensor,
    lambda_aug: float,
    lambda_cont: float,
    lambda_im: float,
    batch_size: int,
) -> LossBreakdown:
    return LossBreakdown(
        l_emo=None if l_emo is None else l_emo.item(),
        l_aug=l_aug.item(),
        l_cont=l_cont.item(),
        l_im=l_im.item(),
        total=total.item(),
        lambda_aug=lambda_aug,
        lambda_cont=lambda_cont,
        lambda_im=lambda_im,
        batch_size=batch_size,
    )
