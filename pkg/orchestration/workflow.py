"""Orchestration workflows: one function per CLI command over a resolved RunConfig."""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from autodiff import NonFiniteError
from config.models import FusionWeights, ModelConfig, RunConfig
from config.settings import write_resolved_config
from datagen import generate, write_corpus
from features.augment import FeaturePipeline
from features.io import load_feature_corpus
from features.models import FeatureSequence
from features.normalize import load_speaker_stats, save_speaker_stats, speaker_statistics
from network.attention import export_attention_csv
from network.lm import LstmLm, Segment, load_lm
from network.model import Seq2Seq, count_parameters, load_model, save_model
from network.models import ParameterCount
from orchestration.errors import ConfigError, DataError, NumericError
from scoring import ScoreReport, score_corpus, write_report
from search.beam import DecodeItem, decode_corpus
from search.io import nbest_entries, read_hypotheses, write_hypotheses, write_nbest
from search.models import Hypothesis
from search.sweep import SweepRow, best_texts, sweep_beam, write_sweep_csv
from text.bpe import BpeEncoder, train_bpe
from text.filters import apply_preset, filter_preset
from text.io import load_bpe, read_transcripts, save_bpe, write_transcripts
from text.models import BpeModel, FilterSettings, TranscriptCorpus
from training.models import EpochRecord, LmEpochRecord, TrainingExample
from training.recipe import augment_for_recipe, model_for_recipe
from training.trainer import LmTrainer, Trainer

logger = logging.getLogger(__name__)

SPLITS = ("train", "dev", "test")
PREPARED_TRAIN = "train.prep.txt"
BPE_FILE = "bpe.model"
CMVN_FILE = "cmvn.stats"
MODEL_FILE = "model.ckpt"
LM_FILE = "lm.ckpt"


@dataclass
class RunLayout:
    """Fixed output layout of a run directory; `data` may live elsewhere."""

    root: Path
    data: Path

    @classmethod
    def from_config(cls, config: RunConfig) -> "RunLayout":
        return cls(root=config.paths.run_dir, data=config.paths.resolved_data_dir())

    @property
    def configs(self) -> Path:
        return self.root / "configs"

    @property
    def checkpoints(self) -> Path:
        return self.root / "checkpoints"

    @property
    def logs(self) -> Path:
        return self.root / "logs"

    @property
    def reports(self) -> Path:
        return self.root / "reports"

    def create(self) -> "RunLayout":
        for directory in (self.configs, self.checkpoints, self.logs, self.reports, self.data):
            directory.mkdir(parents=True, exist_ok=True)
        return self

    def checkpoint_dir(self, tag: str = "") -> Path:
        return self.checkpoints / tag if tag else self.checkpoints


def _suffix(tag: str) -> str:
    return f"_{tag}" if tag else ""


def _require(path: Path, hint: str) -> Path:
    if not path.exists():
        raise DataError(f"{path} not found; {hint}")
    return path


def start_run(config: RunConfig, command: str, tag: str = "") -> RunLayout:
    """Create the layout and record the resolved config of `command`."""
    layout = RunLayout.from_config(config).create()
    write_resolved_config(config, layout.configs / f"{command}{_suffix(tag)}.yaml")
    return layout


def generate_data(config: RunConfig, workers: int = 1) -> dict[str, Path]:
    """Write the synthetic corpus into the data directory."""
    layout = start_run(config, "gen-data")
    corpus = generate(config.synth, workers)
    return write_corpus(corpus, layout.data)


def filter_settings(config: RunConfig) -> FilterSettings:
    t = config.text
    if t.preset is None:
        return FilterSettings(drop_fragments=t.drop_fragments, drop_noise=t.drop_noise, dedup_max=t.dedup_max)
    try:
        return filter_preset(t.preset)
    except ValueError as e:
        raise ConfigError(f"text.preset: {e}") from e


def load_features(layout: RunLayout, split: str) -> list[FeatureSequence]:
    manifest = _require(layout.data / f"{split}.manifest.tsv", "run gen-data first")
    try:
        return load_feature_corpus(manifest)
    except (OSError, ValueError) as e:
        raise DataError(f"Loading {split} features failed: {e}") from e


def load_transcripts(layout: RunLayout, name: str, hint: str = "run gen-data first") -> TranscriptCorpus:
    path = _require(layout.data / name, hint)
    try:
        return read_transcripts(path)
    except ValueError as e:
        raise DataError(f"Reading {path} failed: {e}") from e


def prepare_data(config: RunConfig) -> Path:
    """
    Filter the training transcripts and compute speaker CMVN statistics over
    the un-augmented frames of every split.

    Returns:
        Path of the prepared training transcripts
    """
    layout = start_run(config, "prep")
    settings = filter_settings(config)
    train = load_transcripts(layout, "train.txt")
    prepared = apply_preset(train, settings)
    logger.info(f"Kept {len(prepared)}/{len(train)} training transcripts ({settings.model_dump()})")
    path = write_transcripts(layout.data / PREPARED_TRAIN, prepared)

    frames = [seq for split in SPLITS for seq in load_features(layout, split)]
    try:
        stats = speaker_statistics(frames)
    except ValueError as e:
        raise DataError(f"CMVN failed: {e}") from e
    save_speaker_stats(layout.data / CMVN_FILE, stats)
    logger.info(f"Saved CMVN statistics of {len(stats)} speakers")
    return path


def train_bpe_model(config: RunConfig) -> BpeModel:
    layout = start_run(config, "train-bpe")
    texts = load_transcripts(layout, PREPARED_TRAIN, "run prep first").texts()
    try:
        model = train_bpe(texts, config.text.bpe_vocab_size, config.text.min_frequency)
    except ValueError as e:
        raise DataError(f"BPE training failed: {e}") from e
    save_bpe(layout.data / BPE_FILE, model)
    return model


def load_encoder(layout: RunLayout) -> BpeEncoder:
    return BpeEncoder(load_bpe(_require(layout.data / BPE_FILE, "run train-bpe first")))


def with_vocabulary(config: RunConfig, encoder: BpeEncoder) -> RunConfig:
    """Set the model and LM output sizes to the trained BPE inventory."""
    size = encoder.model.vocab_size
    if size != config.model.vocab_size or size != config.lm.vocab_size:
        logger.info(f"Using BPE vocabulary size {size} (config had {config.model.vocab_size}/{config.lm.vocab_size})")
    return config.model_copy(
        update={
            "model": config.model.model_copy(update={"vocab_size": size}),
            "lm": config.lm.model_copy(update={"vocab_size": size}),
        }
    )


def training_examples(
    features: Sequence[FeatureSequence], transcripts: TranscriptCorpus, encoder: BpeEncoder
) -> list[TrainingExample]:
    """Pair features with their (filtered) transcripts; utterances without one are skipped."""
    by_id = transcripts.by_id()
    examples = []
    for seq in features:
        utt = by_id.get(seq.utterance_id)
        if utt is None or not utt.text.strip():
            continue
        examples.append(TrainingExample(sequence=seq, tokens=np.array(encoder.encode(utt.text), dtype=np.int64), text=utt.text))
    return examples


def feature_pipeline(config: RunConfig, layout: RunLayout, noise_pool: Sequence[FeatureSequence] = ()) -> FeaturePipeline:
    stats = load_speaker_stats(_require(layout.data / CMVN_FILE, "run prep first"))
    return FeaturePipeline(augment_for_recipe(config.augment, config.recipe), stats, config.recipe.deltas, noise_pool)


def train_model(config: RunConfig, tag: str = "") -> list[EpochRecord]:
    """
    Train the encoder-decoder; `tag` namespaces checkpoints, logs and the
    resolved config (used by the ablation harness).

    Raises:
        NumericError: If the loss or a gradient becomes non-finite
    """
    layout = RunLayout.from_config(config)
    encoder = load_encoder(layout)
    config = with_vocabulary(config, encoder)
    layout = start_run(config, "train", tag)

    train_features = load_features(layout, "train")
    train = training_examples(train_features, load_transcripts(layout, PREPARED_TRAIN, "run prep first"), encoder)
    heldout = training_examples(load_features(layout, "dev"), load_transcripts(layout, "dev.txt"), encoder)
    if not train:
        raise DataError("No training utterances with transcripts")

    dtype = np.dtype(config.training.dtype)
    model = Seq2Seq(model_for_recipe(config.model, config.recipe), dtype)
    logger.info(f"Training {model.num_parameters():,} parameters on {len(train)} utterances")
    checkpoints = layout.checkpoint_dir(tag)
    trainer = Trainer(
        model,
        config.training,
        feature_pipeline(config, layout, train_features),
        config.recipe,
        checkpoint_dir=checkpoints,
        log_path=layout.logs / f"train{_suffix(tag)}.csv",
    )
    try:
        records = trainer.fit(train, heldout)
    except NonFiniteError as e:
        raise NumericError(f"Training failed: {e}") from e
    save_model(checkpoints / MODEL_FILE, model, {"epochs": len(records)})
    return records


def lm_segments(features: Sequence[FeatureSequence], transcripts: TranscriptCorpus, encoder: BpeEncoder) -> list[Segment]:
    """Transcripts positioned in their recordings (timing from the feature manifest)."""
    by_id = transcripts.by_id()
    segments = []
    for seq in features:
        utt = by_id.get(seq.utterance_id)
        if utt is None:
            continue
        segments.append(
            Segment(
                utterance_id=seq.utterance_id,
                recording_id=seq.recording_id,
                start=seq.start_time,
                end=seq.end_time,
                tokens=encoder.encode(utt.text),
                n_words=len(utt.words),
            )
        )
    return segments


def train_language_model(config: RunConfig) -> list[LmEpochRecord]:
    layout = RunLayout.from_config(config)
    encoder = load_encoder(layout)
    config = with_vocabulary(config, encoder)
    layout = start_run(config, "train-lm")
    train = lm_segments(load_features(layout, "train"), load_transcripts(layout, PREPARED_TRAIN, "run prep first"), encoder)
    heldout = lm_segments(load_features(layout, "dev"), load_transcripts(layout, "dev.txt"), encoder)
    if not train:
        raise DataError("No LM training utterances with transcripts")
    lm = LstmLm(config.lm)
    logger.info(f"Training LM with {lm.num_parameters():,} parameters on {len(train)} utterances")
    trainer = LmTrainer(lm, config.lm, checkpoint_dir=layout.checkpoints, log_path=layout.logs / "train_lm.csv")
    try:
        return trainer.fit(train, heldout)
    except NonFiniteError as e:
        raise NumericError(f"LM training failed: {e}") from e


def load_trained_model(layout: RunLayout, tag: str = "") -> Seq2Seq:
    path = _require(layout.checkpoint_dir(tag) / MODEL_FILE, "run train first")
    try:
        model, _ = load_model(path)
    except (OSError, ValueError, KeyError) as e:
        raise DataError(f"Loading {path} failed: {e}") from e
    return model


def load_trained_lm(layout: RunLayout) -> Optional[LstmLm]:
    path = layout.checkpoints / LM_FILE
    if not path.exists():
        logger.warning(f"No LM checkpoint at {path}; decoding without LM")
        return None
    lm, _ = load_lm(path)
    return lm


def decode_items(config: RunConfig, layout: RunLayout, split: str) -> list[DecodeItem]:
    pipeline = feature_pipeline(config, layout)
    try:
        return [DecodeItem(sequence=seq, frames=pipeline.prepare(seq)) for seq in load_features(layout, split)]
    except KeyError as e:
        raise DataError(f"No CMVN statistics for speaker {e}; rerun prep") from e


def decode_weights(fusion: FusionWeights, greedy: bool = False, beam: Optional[int] = None, no_lm: bool = False) -> FusionWeights:
    """
    Search settings of a decode call.

    Greedy decoding is beam 1 without the LM; with beam 1 the length and
    coverage terms are equal for all candidates, so they do not change the
    output.
    """
    updates: dict[str, object] = {}
    if greedy:
        updates.update(beam_width=1, lm_weight=0.0, nbest=1)
    if beam is not None:
        updates["beam_width"] = beam
    if no_lm:
        updates["lm_weight"] = 0.0
    try:
        return FusionWeights.model_validate({**fusion.model_dump(), **updates})
    except ValueError as e:
        raise ConfigError(f"fusion: {e}") from e


def decode(
    config: RunConfig,
    split: str = "test",
    greedy: bool = False,
    beam: Optional[int] = None,
    no_lm: bool = False,
    export_attention: bool = False,
    tag: str = "",
    workers: int = 1,
) -> dict[str, list[Hypothesis]]:
    """
    Decode a split and write `decode_<split>.nbest` and `decode_<split>.hyp`
    under reports/ (plus one attention CSV per utterance when asked).
    """
    layout = start_run(config, f"decode_{split}", tag)
    weights = decode_weights(config.fusion, greedy, beam, no_lm)
    model = load_trained_model(layout, tag)
    lm = None if weights.lm_weight == 0.0 else load_trained_lm(layout)
    encoder = load_encoder(layout)
    items = decode_items(config, layout, split)

    decoded = decode_corpus(
        model, items, weights, lm, config.lm.cross_utterance, config.lm.max_group_seconds, workers
    )
    name = f"decode_{split}{_suffix(tag)}"
    entries = [entry for u, nbest in decoded.items() for entry in nbest_entries(u, nbest, weights, encoder)]
    write_nbest(layout.reports / f"{name}.nbest", entries)
    write_hypotheses(layout.reports / f"{name}.hyp", best_texts(decoded, encoder))
    if export_attention:
        for utterance_id, nbest in decoded.items():
            if nbest[0].attention:
                export_attention_csv(layout.reports / f"attention{_suffix(tag)}" / f"{utterance_id}.csv", np.stack(nbest[0].attention))
    unfinished = sum(not nbest[0].finished for nbest in decoded.values())
    if unfinished:
        logger.warning(f"{unfinished} utterances hit the output length cap without EOS")
    return decoded


def score(config: RunConfig, split: str = "test", hypotheses: Optional[Path] = None, tag: str = "", workers: int = 1) -> ScoreReport:
    layout = start_run(config, f"score_{split}", tag)
    references = load_transcripts(layout, f"{split}.txt")
    path = hypotheses or layout.reports / f"decode_{split}{_suffix(tag)}.hyp"
    try:
        hyps = read_hypotheses(_require(path, "run decode first"))
    except ValueError as e:
        raise DataError(f"Reading {path} failed: {e}") from e
    report = score_corpus({u.utterance_id: u.text for u in references.utterances}, hyps, workers)
    write_report(report, layout.reports, f"score_{split}{_suffix(tag)}")
    return report


def sweep(config: RunConfig, beams: Sequence[int], split: str = "test", workers: int = 1) -> list[SweepRow]:
    """Beam-width sweep written to reports/sweep_beam.csv."""
    layout = start_run(config, "sweep-beam")
    model = load_trained_model(layout)
    lm = load_trained_lm(layout)
    encoder = load_encoder(layout)
    references = {u.utterance_id: u.text for u in load_transcripts(layout, f"{split}.txt").utterances}
    try:
        rows = sweep_beam(
            model, decode_items(config, layout, split), references, encoder, beams, config.fusion, lm,
            config.lm.max_group_seconds, workers,
        )
    except ValueError as e:
        raise ConfigError(f"sweep-beam: {e}") from e
    write_sweep_csv(layout.reports / "sweep_beam.csv", rows)
    return rows


def count_params(model: ModelConfig) -> ParameterCount:
    return count_parameters(model)
