"""Epoch loops for the encoder-decoder and the LM."""

import csv
import logging
import math
import time
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np
from pydantic import BaseModel

from autodiff import Graph, NonFiniteError, derive_rng
from config.models import LmConfig, RecipeSwitches, TrainingConfig
from features.augment import FeaturePipeline
from network.base import EVAL, ForwardContext
from network.lm import LstmLm, Segment, group_utterances, perplexity, save_lm, stream_loss_tensor
from network.model import Batch, LossResult, Seq2Seq, save_model, sequence_loss, sequence_loss_tensor
from orchestration.errors import DataError
from training.batching import collate, make_batches
from training.models import EpochRecord, LmEpochRecord, ScheduleState, TrainingExample
from training.noise import noisy_weights
from training.optimizer import clip_gradients, create_optimizer, nesterov_step
from training.recipe import weight_decay_for_recipe
from training.schedule import schedule_at

logger = logging.getLogger(__name__)


def append_log(path: Union[str, Path], record: BaseModel) -> None:
    """Append one record as a CSV row, writing the header for a new file."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    row = record.model_dump()
    new = not path.exists()
    with open(path, "a", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=list(row))
        if new:
            writer.writeheader()
        writer.writerow(row)


class Trainer:
    """
    Staged training of a Seq2Seq model.

    Every stochastic draw comes from streams derived from the training seed
    and (epoch, batch) or (epoch, utterance), so runs are reproducible.
    """

    def __init__(
        self,
        model: Seq2Seq,
        config: TrainingConfig,
        pipeline: FeaturePipeline,
        recipe: Optional[RecipeSwitches] = None,
        checkpoint_dir: Optional[Path] = None,
        log_path: Optional[Path] = None,
    ) -> None:
        self.model = model
        self.config = config
        self.pipeline = pipeline
        self.recipe = recipe or RecipeSwitches()
        self.checkpoint_dir = checkpoint_dir
        self.log_path = log_path
        self.params = model.named_parameters()
        self.optimizer = create_optimizer(self.params, config.momentum, weight_decay_for_recipe(config, self.recipe))

    def schedule(self, epoch: int) -> ScheduleState:
        return schedule_at(epoch, self.config, recipe=self.recipe)

    def train_step(self, batch: Batch, schedule: ScheduleState, rng: np.random.Generator) -> LossResult:
        """
        Forward/backward on one batch and a Nesterov update.

        Raises:
            NonFiniteError: If the loss or a gradient is not finite
        """
        if schedule.weight_noise_on:
            with noisy_weights(self.params, self.config.weight_noise_variance, rng):
                result = sequence_loss(self.model, batch, schedule, rng)
        else:
            result = sequence_loss(self.model, batch, schedule, rng)
        if not math.isfinite(result.loss):
            raise NonFiniteError(f"Non-finite training loss at epoch {schedule.epoch} ({batch.utterance_ids[:3]}...)")
        grads = clip_gradients(result.grads, self.config.clip_norm)
        nesterov_step(self.params, grads, self.optimizer, schedule.lr)
        return result

    def run_epoch(self, epoch: int, train: Sequence[TrainingExample]) -> tuple[float, ScheduleState]:
        """One pass over the training set; returns the token-weighted mean loss."""
        schedule = self.schedule(epoch)
        self.model.freeze_batch_norm(schedule.bn_frozen)
        seed = self.config.seed
        batches = make_batches([ex.n_frames for ex in train], schedule, seed)
        loss_sum, token_sum = 0.0, 0
        for b, indices in enumerate(batches):
            examples = [train[i] for i in indices]
            frames = [self.pipeline.augment(ex.sequence, derive_rng(seed, "augment", epoch, ex.utterance_id)) for ex in examples]
            result = self.train_step(collate(frames, examples), schedule, derive_rng(seed, "batch", epoch, b))
            loss_sum += result.loss * result.n_tokens
            token_sum += result.n_tokens
            logger.debug(f"epoch {epoch} batch {b + 1}/{len(batches)} loss {result.loss:.4f}")
        return loss_sum / max(token_sum, 1), schedule

    def evaluate(self, examples: Sequence[TrainingExample], batch_size: int = 32) -> tuple[float, float]:
        """
        Teacher-forced cross-entropy and argmax token error rate in eval mode.

        Returns:
            (mean loss per token, token error rate)
        """
        order = np.argsort([ex.n_frames for ex in examples], kind="stable")
        loss_sum, errors, tokens = 0.0, 0, 0
        for start in range(0, len(order), batch_size):
            chunk = [examples[i] for i in order[start : start + batch_size]]
            batch = collate([self.pipeline.prepare(ex.sequence) for ex in chunk], chunk)
            loss, n_tokens, n_errors = sequence_loss_tensor(self.model, batch, 0.0, 1.0, EVAL)
            loss_sum += loss.item() * n_tokens
            errors += n_errors
            tokens += n_tokens
        return loss_sum / max(tokens, 1), errors / max(tokens, 1)

    def fit(
        self,
        train: Sequence[TrainingExample],
        heldout: Sequence[TrainingExample] = (),
        epochs: Optional[int] = None,
    ) -> list[EpochRecord]:
        """Train for the configured budget, logging and checkpointing per epoch."""
        if not train:
            raise DataError("Training set is empty")
        epochs = epochs or self.config.epochs
        records: list[EpochRecord] = []
        for epoch in range(1, epochs + 1):
            started = time.perf_counter()
            train_loss, schedule = self.run_epoch(epoch, train)
            heldout_loss, ter = self.evaluate(heldout) if heldout else (None, None)
            record = EpochRecord(
                epoch=epoch,
                lr=schedule.lr,
                batch_size=schedule.batch_size,
                curriculum_mode=schedule.curriculum_mode,
                weight_noise_on=schedule.weight_noise_on,
                bn_frozen=schedule.bn_frozen,
                label_smoothing=schedule.label_smoothing,
                train_loss=train_loss,
                heldout_loss=heldout_loss,
                token_error_rate=ter,
                seconds=round(time.perf_counter() - started, 3),
            )
            records.append(record)
            held = f", held-out {heldout_loss:.4f}, TER {ter:.2%}" if heldout_loss is not None and ter is not None else ""
            logger.info(f"Epoch {epoch}/{epochs} [{schedule.phase}] lr {schedule.lr:.5f} loss {train_loss:.4f}{held}")
            if self.log_path is not None:
                append_log(self.log_path, record)
            if self.checkpoint_dir is not None and (epoch % self.config.checkpoint_every == 0 or epoch == epochs):
                save_model(self.checkpoint_dir / f"epoch_{epoch:03d}.ckpt", self.model, {"epoch": epoch})
        return records


class LmTrainer:
    """Trains the LSTM LM on grouped transcript streams."""

    def __init__(
        self,
        lm: LstmLm,
        config: LmConfig,
        checkpoint_dir: Optional[Path] = None,
        log_path: Optional[Path] = None,
    ) -> None:
        self.lm = lm
        self.config = config
        self.checkpoint_dir = checkpoint_dir
        self.log_path = log_path
        self.params = lm.named_parameters()
        self.optimizer = create_optimizer(self.params, config.momentum, 0.0)

    def label_smoothing(self, epoch: int) -> float:
        """Initial smoothing for the first half of the budget, none afterwards."""
        return self.config.label_smoothing_initial if epoch <= self.config.epochs // 2 else 0.0

    def run_epoch(self, epoch: int, groups: Sequence[Sequence[Segment]]) -> float:
        seed = self.config.seed
        order = derive_rng(seed, "lm_batches", epoch).permutation(len(groups))
        size = self.config.batch_size
        smoothing = self.label_smoothing(epoch)
        loss_sum, token_sum = 0.0, 0
        for b, start in enumerate(range(0, len(order), size)):
            batch = [groups[k] for k in order[start : start + size]]
            ctx = ForwardContext(train=True, rng=derive_rng(seed, "lm_batch", epoch, b))
            with Graph() as graph:
                loss, n_scored = stream_loss_tensor(self.lm, batch, smoothing, ctx)
            if not math.isfinite(loss.item()):
                raise NonFiniteError(f"Non-finite LM loss at epoch {epoch}")
            grads = clip_gradients(graph.gradient(loss, self.params), self.config.clip_norm)
            nesterov_step(self.params, grads, self.optimizer, self.config.lr)
            loss_sum += loss.item() * n_scored
            token_sum += n_scored
        return loss_sum / max(token_sum, 1)

    def fit(self, train: Sequence[Segment], heldout: Sequence[Segment] = ()) -> list[LmEpochRecord]:
        """Train for `config.epochs`; held-out perplexity uses the configured cross-utterance mode."""
        if not train:
            raise DataError("LM training set is empty")
        c = self.config
        groups = group_utterances(train, c.max_group_seconds) if c.cross_utterance else [[s] for s in train]
        records: list[LmEpochRecord] = []
        for epoch in range(1, c.epochs + 1):
            started = time.perf_counter()
            train_loss = self.run_epoch(epoch, groups)
            ppl = perplexity(self.lm, heldout, c.cross_utterance).ppl if heldout else None
            record = LmEpochRecord(
                epoch=epoch,
                lr=c.lr,
                label_smoothing=self.label_smoothing(epoch),
                train_loss=train_loss,
                heldout_ppl=ppl,
                seconds=round(time.perf_counter() - started, 3),
            )
            records.append(record)
            shown = f", held-out PPL {ppl:.2f}" if ppl is not None else ""
            logger.info(f"LM epoch {epoch}/{c.epochs} loss {train_loss:.4f}{shown}")
            if self.log_path is not None:
                append_log(self.log_path, record)
        if self.checkpoint_dir is not None:
            save_lm(self.checkpoint_dir / "lm.ckpt", self.lm, {"epoch": c.epochs})
        return records
