"""Alternating source/target training with early stopping and LR decay.

One *epoch pair* is one source epoch followed by one target epoch.  Source
epochs always use emotion labels; target epochs use them only in labeled
mode.  In label-free mode the target epoch never touches labels (the batch
withholds them outright) and runs for as many batches as a source epoch.
After every pair, plain accuracy on the source validation split drives both
early stopping (halt after `early_stop_patience` pairs without improvement)
and plateau LR decay.  The best-validation parameters, not the last, are
restored before the final UAR evaluation on the target test split.

Given (configs, corpus, seed) the whole run is deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from . import metrics
from .augment import AugmentConfig, make_pair
from .corpus import SOURCE, TARGET, Corpus, batch_iter
from .encoder import EncoderConfig, forward, forward_with_leaves, init_params, make_leaves
from .errors import ConfigError, DataError, NumericalError
from .losses import LossBreakdown, aug_ce, breakdown, emotion_ce, im_loss, info_nce, total_loss
from .rng import derive_rng


@dataclass(frozen=True)
class TrainConfig:
    """Every training hyperparameter, with protocol defaults."""

    lambda_aug: float = 0.1
    lambda_cont: float = 0.5
    lambda_im: float = 0.5
    lr: float = 1e-4
    lr_decay_factor: float = 0.1
    lr_patience: int = 5
    source_epoch_batches: int = 100
    target_epoch_batches: int = 25
    early_stop_patience: int = 1
    batch_size: int = 4
    temperature: float = 0.5
    seed: int = 0
    target_labeled: bool = True
    source_only: bool = False  # baseline mode: skip target epochs entirely
    max_epoch_pairs: int = 200
    contrastive_symmetric: bool = True
    contrastive_negatives: str = "all-pairs"
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8

    def validate(self) -> None:
        if self.lr < 0 or self.lr_decay_factor <= 0 or self.lr_decay_factor > 1:
            raise ConfigError("lr must be >= 0 and decay factor in (0, 1]")
        if min(self.lambda_aug, self.lambda_cont, self.lambda_im) < 0:
            raise ConfigError("loss weights must be nonnegative")
        if self.lr_patience < 1 or self.early_stop_patience < 1:
            raise ConfigError("patience values must be >= 1")
        if self.batch_size < 2:
            raise ConfigError("batch_size must be >= 2 (contrastive loss needs pairs)")
        if self.source_epoch_batches < 1 or self.target_epoch_batches < 1:
            raise ConfigError("epoch batch counts must be >= 1")
        if self.max_epoch_pairs < 1:
            raise ConfigError("max_epoch_pairs must be >= 1")
        if self.temperature <= 0:
            raise ConfigError("temperature must be positive")

    def replace(self, **kw) -> "TrainConfig":
        from dataclasses import replace as dc_replace

        return dc_replace(self, **kw)


@dataclass
class TrainState:
    """Mutable optimizer/progress state for one run."""

    params: dict[str, np.ndarray]
    adam_m: dict[str, np.ndarray]
    adam_v: dict[str, np.ndarray]
    adam_t: int = 0
    current_lr: float = 0.0
    num_lr_decays: int = 0
    best_val_accuracy: float = float("-inf")
    best_params: dict[str, np.ndarray] | None = None
    best_epoch_pair: int = -1
    epochs_since_improvement: int = 0
    plateau_counter: int = 0
    epoch_pair_index: int = 0
    global_step: int = 0


@dataclass
class FitResult:
    state: TrainState
    uar_report: dict
    val_history: list[float]
    stopped_after_pair: int
    log_records: list = field(repr=False, default_factory=list)


class Trainer:
    """Owns parameters, optimizer state, and the alternating-epoch loop."""

    def __init__(
        self,
        corpus: Corpus,
        encoder_config: EncoderConfig,
        train_config: TrainConfig,
        augment_config: AugmentConfig | None = None,
        log_sink=None,
    ):
        encoder_config.validate()
        train_config.validate()
        self.corpus = corpus
        self.encoder_config = encoder_config
        self.train_config = train_config
        self.augment_config = augment_config or AugmentConfig()
        self.log_sink = log_sink
        self.log_records: list[dict] = []
        params = init_params(encoder_config, train_config.seed)
        self.state = TrainState(
            params=params,
            adam_m={k: np.zeros_like(v) for k, v in params.items()},
            adam_v={k: np.zeros_like(v) for k, v in params.items()},
            current_lr=train_config.lr,
        )

    # ------------------------------------------------------------------
    def _log(self, record: dict) -> None:
        self.log_records.append(record)
        if self.log_sink is not None:
            self.log_sink(record)

    def _epoch_aug_seed(self, phase: str) -> int:
        """Augmentation seed for this (epoch pair, phase); order-independent."""
        phase_key = 0 if phase == SOURCE else 1
        rng = derive_rng(self.train_config.seed, 0xE90C4, self.state.epoch_pair_index, phase_key)
        return int(rng.integers(2**63))

    def train_step(self, batch, emo_enabled: bool, aug_seed: int) -> LossBreakdown:
        """Forward both augmented views of every sample, backward, Adam step."""
        cfg = self.train_config
        leaves = make_leaves(self.state.params)
        proj_a, proj_b, emo_rows, aug_rows, aug_labels = [], [], [], [], []
        for origin, w in zip(batch.origin_indices, batch.waveforms):
            pair = make_pair(w, origin, aug_seed, self.augment_config)
            out_a = forward_with_leaves(pair.view_a, leaves, self.encoder_config)
            out_b = forward_with_leaves(pair.view_b, leaves, self.encoder_config)
            proj_a.append(out_a.projection)
            proj_b.append(out_b.projection)
            emo_rows.extend((out_a.emo_logits, out_b.emo_logits))
            aug_rows.extend((out_a.aug_logits, out_b.aug_logits))
            aug_labels.extend((pair.pipeline_label_a, pair.pipeline_label_b))

        emo_mat = ad.stack_rows(emo_rows)
        l_cont = info_nce(
            ad.stack_rows(proj_a),
            ad.stack_rows(proj_b),
            cfg.temperature,
            symmetric=cfg.contrastive_symmetric,
            negatives=cfg.contrastive_negatives,
        )
        l_aug = aug_ce(ad.stack_rows(aug_rows), aug_labels)
        l_im = im_loss(emo_mat)
        l_emo = None
        if emo_enabled:
            doubled = [lab for lab in batch.labels for _ in (0, 1)]
            l_emo = emotion_ce(emo_mat, doubled)
        total = total_loss(
            l_aug,
            l_cont,
            l_im,
            cfg.lambda_aug,
            cfg.lambda_cont,
            cfg.lambda_im,
            l_emo=l_emo,
            emo_enabled=emo_enabled,
        )
        if not np.isfinite(total.data):
            raise NumericalError(
                f"non-finite loss at step {self.state.global_step + 1} "
                f"(phase {batch.domain}, pair {self.state.epoch_pair_index})"
            )
        ad.backward(total)
        self._adam_update(leaves)
        return breakdown(
            l_emo, l_aug, l_cont, l_im, total,
            cfg.lambda_aug, cfg.lambda_cont, cfg.lambda_im, len(batch),
        )

    def _adam_update(self, leaves) -> None:
        cfg = self.train_config
        st = self.state
        st.adam_t += 1
        bc1 = 1.0 - cfg.adam_beta1**st.adam_t
        bc2 = 1.0 - cfg.adam_beta2**st.adam_t
        for name, leaf in leaves.items():
            g = leaf.grad if leaf.grad is not None else np.zeros_like(leaf.data)
            m, v = st.adam_m[name], st.adam_v[name]
            m *= cfg.adam_beta1
            m += (1.0 - cfg.adam_beta1) * g
            v *= cfg.adam_beta2
            v += (1.0 - cfg.adam_beta2) * (g * g)
            st.params[name] -= st.current_lr * (m / bc1) / (np.sqrt(v / bc2) + cfg.adam_eps)

    def run_epoch(self, domain: str) -> dict:
        """One epoch on the given domain; returns a small summary."""
        cfg = self.train_config
        if domain == SOURCE:
            num_batches, with_labels = cfg.source_epoch_batches, True
        elif domain == TARGET:
            with_labels = cfg.target_labeled
            num_batches = cfg.target_epoch_batches if cfg.target_labeled else cfg.source_epoch_batches
        else:
            raise ConfigError(f"unknown domain {domain!r}")
        aug_seed = self._epoch_aug_seed(domain)
        steps = 0
        total_sum = 0.0
        for batch in batch_iter(
            self.corpus,
            domain,
            "train",
            cfg.batch_size,
            num_batches,
            cfg.seed,
            self.state.epoch_pair_index,
            with_labels,
        ):
            bd = self.train_step(batch, emo_enabled=with_labels, aug_seed=aug_seed)
            self.state.global_step += 1
            steps += 1
            total_sum += bd.total
            self._log(bd.record(self.state.global_step, domain))
        return {"domain": domain, "steps": steps, "mean_total": total_sum / steps}

    def validate(self) -> float:
        """Plain accuracy on unaugmented source-validation clips."""
        rows = self.corpus.split_rows(SOURCE, "val")
        if not rows:
            raise DataError("source validation split is empty")
        correct = 0
        for i in rows:
            out = forward(self.corpus.waveform(i), self.state.params, self.encoder_config)
            if int(np.argmax(out.emo_logits.data)) == self.corpus.manifest.rows[i].emotion:
                correct += 1
        return correct / len(rows)

    def fit(self) -> FitResult:
        """Run epoch pairs until validation stops improving, then evaluate.

        Early stopping compares each validation accuracy against the best
        seen so far; LR decays by the configured factor whenever the metric
        plateaus for `lr_patience` consecutive pairs.
        """
        cfg = self.train_config
        st = self.state
        history: list[float] = []
        stopped_after = cfg.max_epoch_pairs
        for pair_idx in range(cfg.max_epoch_pairs):
            st.epoch_pair_index = pair_idx
            self.run_epoch(SOURCE)
            if not cfg.source_only:
                self.run_epoch(TARGET)
            acc = self.validate()
            history.append(acc)
            if acc > st.best_val_accuracy:
                st.best_val_accuracy = acc
                st.best_params = {k: v.copy() for k, v in st.params.items()}
                st.best_epoch_pair = pair_idx
                st.epochs_since_improvement = 0
                st.plateau_counter = 0
            else:
                st.epochs_since_improvement += 1
                st.plateau_counter += 1
                if st.plateau_counter >= cfg.lr_patience:
                    st.current_lr *= cfg.lr_decay_factor
                    st.num_lr_decays += 1
                    st.plateau_counter = 0
            stopping = (
                st.epochs_since_improvement >= cfg.early_stop_patience
                or pair_idx == cfg.max_epoch_pairs - 1
            )
            self._log(
                {
                    "epoch_pair": pair_idx,
                    "val_accuracy": acc,
                    "current_lr": st.current_lr,
                    "stopped": stopping,
                }
            )
            if stopping:
                stopped_after = pair_idx + 1
                break
        if st.best_params is not None:
            st.params = {k: v.copy() for k, v in st.best_params.items()}
        report = metrics.evaluate_uar(
            st.params, self.encoder_config, self.corpus, TARGET, "test"
        )
        return FitResult(
            state=st,
            uar_report=report,
            val_history=history,
            stopped_after_pair=stopped_after,
            log_records=self.log_records,
        )


def overfit_single_batch(
    corpus: Corpus,
    encoder_config: EncoderConfig,
    train_config: TrainConfig,
    steps: int,
) -> list[LossBreakdown]:
    """Sanity harness: repeat one labeled source batch for `steps` updates."""
    trainer = Trainer(corpus, encoder_config, train_config)
    batch = next(
        batch_iter(
            corpus, SOURCE, "train", train_config.batch_size, 1, train_config.seed, 0, True
        )
    )
    aug_seed = trainer._epoch_aug_seed(SOURCE)
    return [trainer.train_step(batch, True, aug_seed) for _ in range(steps)]
