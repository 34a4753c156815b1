"""Configuration records for every stage of the recognizer."""

from pathlib import Path
from typing import Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationInfo, field_validator, model_validator


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", validate_assignment=True)


def _check_rate(name: str, value: float) -> float:
    if not 0.0 <= value <= 1.0:
        raise ValueError(f"{name} must be in [0, 1], got {value}")
    return value


class ModelConfig(_Section):
    """Encoder-decoder architecture and its regularization rates."""

    input_dim: int = Field(240, gt=0, description="Feature dimension presented to the encoder")
    n_layers: int = Field(8, gt=0, description="Number of bidirectional encoder blocks")
    lstm_width: int = Field(1536, gt=0, description="Encoder LSTM units per direction")
    reduction_dim: int = Field(1024, gt=0, description="Linear reduction size of each encoder block")
    pyramid_layers: int = Field(2, ge=0, description="Leading blocks that halve the frame rate")
    pyramid_mode: Literal["average", "concat"] = Field(
        "average", description="Frame pairing: mean of the two frames or their concatenation"
    )
    encoder_output_dim: int = Field(256, gt=0, description="Encoder bottleneck size")
    encoder_dropout: float = Field(0.3, description="Dropout on encoder LSTM outputs")
    encoder_dropconnect: float = Field(0.3, description="DropConnect on encoder recurrent weights")
    dropout_before_reduction: bool = Field(
        True, description="Apply encoder dropout before (True) or after the linear reduction"
    )
    residual: bool = Field(True, description="Linear bypass around every encoder LSTM")
    bn_momentum: float = Field(0.1, description="Running statistics update rate")
    bn_epsilon: float = Field(1e-5, gt=0, description="Batch-norm variance floor")

    embed_dim: int = Field(256, gt=0, description="Token embedding size")
    lm_lstm_width: int = Field(512, gt=0, description="Symbol-only decoder LSTM units")
    fusion_lstm_width: int = Field(768, gt=0, description="Acoustic decoder LSTM units")
    bottleneck_dim: int = Field(256, gt=0, description="Decoder bottleneck size")
    attention_dim: int = Field(256, gt=0, description="Additive attention score space")
    location_kernels: int = Field(256, gt=0, description="Number of location filters")
    location_kernel_width: int = Field(5, gt=0, description="Width of location filters (odd)")
    weight_dropout: float = Field(0.15, description="DropConnect on decoder recurrent weights")
    embed_dropout: float = Field(0.05, description="Dropout on token embeddings")
    output_dropout: float = Field(0.15, description="Dropout on the decoder bottleneck output")
    zoneout_cell: float = Field(0.15, description="Zoneout on the acoustic LSTM cell state")
    zoneout_output: float = Field(0.05, description="Zoneout on the acoustic LSTM output")

    vocab_size: int = Field(603, gt=3, description="Output units including <s>, </s>, <unk>")
    seed: int = Field(0, ge=0, description="Initialization seed")

    @field_validator(
        "encoder_dropout",
        "encoder_dropconnect",
        "bn_momentum",
        "weight_dropout",
        "embed_dropout",
        "output_dropout",
        "zoneout_cell",
        "zoneout_output",
    )
    @classmethod
    def validate_rates(cls, v: float, info: ValidationInfo) -> float:
        """Ensure probabilities and rates lie in [0, 1]."""
        return _check_rate(str(info.field_name), v)

    @field_validator("location_kernel_width")
    @classmethod
    def validate_kernel_width(cls, v: int) -> int:
        """Ensure location kernels are centred."""
        if v % 2 == 0:
            raise ValueError(f"location_kernel_width must be odd, got {v}")
        return v

    @model_validator(mode="after")
    def validate_pyramid(self) -> "ModelConfig":
        """Ensure the pyramid fits inside the encoder."""
        if self.pyramid_layers > self.n_layers:
            raise ValueError(
                f"pyramid_layers ({self.pyramid_layers}) cannot exceed n_layers ({self.n_layers})"
            )
        return self


class LmConfig(_Section):
    """External LSTM language model."""

    vocab_size: int = Field(603, gt=3, description="Output units including specials")
    embed_dim: int = Field(512, gt=0, description="Token embedding size")
    width: int = Field(2048, gt=0, description="LSTM units per layer")
    n_layers: int = Field(2, gt=0, description="Number of LSTM layers")
    projection: Optional[int] = Field(None, gt=0, description="Bottleneck before the softmax, or none")
    dropout: float = Field(0.15, description="Dropout on embeddings and LSTM outputs")
    dropconnect: float = Field(0.15, description="DropConnect on recurrent weights")
    label_smoothing_initial: float = Field(0.15, description="Label smoothing in the first half of training")
    cross_utterance: bool = Field(True, description="Carry state across utterances of a group")
    max_group_seconds: float = Field(40.0, gt=0, description="Maximum summed duration of a group")
    epochs: int = Field(40, gt=0, description="Training epochs")
    lr: float = Field(0.5, gt=0, description="Learning rate")
    momentum: float = Field(0.9, ge=0, lt=1, description="Nesterov momentum")
    batch_size: int = Field(16, gt=0, description="Streams per batch")
    clip_norm: Optional[float] = Field(5.0, gt=0, description="Global gradient norm clip")
    seed: int = Field(0, ge=0, description="Initialization and training seed")

    @field_validator("dropout", "dropconnect", "label_smoothing_initial")
    @classmethod
    def validate_rates(cls, v: float, info: ValidationInfo) -> float:
        """Ensure probabilities and rates lie in [0, 1]."""
        return _check_rate(str(info.field_name), v)


class AugmentPolicy(_Section):
    """Input-level perturbations applied to training utterances."""

    speed_tempo_prob: float = Field(5 / 6, description="Probability of time-axis resampling")
    tempo_factors: list[float] = Field(default_factory=lambda: [0.9, 1.0, 1.1], description="Resampling rates")
    seqnoise_prob: float = Field(0.4, description="Probability of sequence noise injection")
    seqnoise_weight: float = Field(0.3, ge=0, description="Weight of the injected noise mixture")
    seqnoise_max_utts: int = Field(4, ge=1, description="Maximum utterances mixed into the noise")
    freq_mask_param: int = Field(15, ge=0, description="Maximum frequency mask width F")
    n_freq_masks: int = Field(2, ge=0, description="Frequency masks per utterance")
    time_mask_param: int = Field(70, ge=0, description="Maximum time mask width")
    n_time_masks: int = Field(2, ge=0, description="Time masks per utterance")
    time_mask_ratio: float = Field(0.3, description="Time mask width cap as a fraction of T")

    @field_validator("speed_tempo_prob", "seqnoise_prob", "time_mask_ratio")
    @classmethod
    def validate_probabilities(cls, v: float, info: ValidationInfo) -> float:
        """Ensure probabilities lie in [0, 1]."""
        return _check_rate(str(info.field_name), v)

    @field_validator("tempo_factors")
    @classmethod
    def validate_factors(cls, v: list[float]) -> list[float]:
        """Ensure resampling rates are positive."""
        if not v or any(f <= 0 for f in v):
            raise ValueError("tempo_factors must be a non-empty list of positive rates")
        return v


class FusionWeights(_Section):
    """Shallow-fusion beam search settings."""

    lm_weight: float = Field(0.0, ge=0, description="Weight of the external LM log-probability")
    length_reward: float = Field(0.0, description="Reward per emitted token")
    coverage_weight: float = Field(0.0, description="Weight of the attention coverage count")
    coverage_threshold: float = Field(0.5, ge=0, description="Mass needed for a frame to count as covered")
    beam_width: int = Field(8, ge=1, description="Live hypotheses kept per step")
    max_output_factor: float = Field(1.5, gt=0, description="Output length cap relative to encoder frames")
    max_length: Optional[int] = Field(None, ge=1, description="Explicit output length cap (overrides the factor)")
    nbest: int = Field(5, ge=1, description="Hypotheses written per utterance")


class SynthConfig(_Section):
    """Synthetic corpus generator."""

    n_words: int = Field(20, ge=2, description="Pseudo-word vocabulary size")
    syllables_per_word: tuple[int, int] = Field((1, 3), description="Syllable count range per word")
    tokens_per_utterance: tuple[int, int] = Field((2, 6), description="Words per utterance range")
    frames_per_token: tuple[int, int] = Field((4, 7), description="Frames emitted per word range")
    feature_dim: int = Field(8, gt=0, description="Feature dimension")
    prototype_scale: float = Field(3.0, gt=0, description="Scale of per-word prototype vectors")
    noise_sigma: float = Field(0.1, ge=0, description="Gaussian frame noise")
    bigram_concentration: float = Field(0.3, gt=0, description="Dirichlet concentration of the word bigram")
    n_train: int = Field(500, ge=1, description="Training utterances")
    n_dev: int = Field(50, ge=1, description="Development utterances")
    n_test: int = Field(50, ge=1, description="Test utterances")
    n_speakers: int = Field(10, ge=1, description="Speakers per split")
    utterances_per_recording: int = Field(5, ge=1, description="Consecutive utterances per recording")
    speaker_scale: tuple[float, float] = Field((0.5, 2.0), description="Per-dimension speaker gain range")
    speaker_shift: tuple[float, float] = Field((-2.0, 2.0), description="Per-dimension speaker offset range")
    frame_shift: float = Field(0.01, gt=0, description="Seconds per frame")
    gap_seconds: float = Field(0.5, ge=0, description="Silence between utterances of a recording")
    repeat_prob: float = Field(0.0, description="Probability an utterance repeats the previous one")
    seed: int = Field(0, ge=0, description="Generator seed")

    @field_validator("syllables_per_word", "tokens_per_utterance", "frames_per_token")
    @classmethod
    def validate_int_range(cls, v: tuple[int, int]) -> tuple[int, int]:
        """Ensure ranges are ordered and positive."""
        if v[0] < 1 or v[1] < v[0]:
            raise ValueError(f"invalid range {v}")
        return v

    @field_validator("speaker_scale", "speaker_shift")
    @classmethod
    def validate_real_range(cls, v: tuple[float, float]) -> tuple[float, float]:
        """Ensure real ranges are ordered."""
        if v[1] < v[0]:
            raise ValueError(f"invalid range {v}")
        return v

    @field_validator("repeat_prob")
    @classmethod
    def validate_repeat(cls, v: float) -> float:
        """Ensure the repeat probability lies in [0, 1]."""
        return _check_rate("repeat_prob", v)


class TrainingConfig(_Section):
    """Optimizer and staged schedule of the encoder-decoder."""

    epochs: int = Field(250, ge=1, description="Epoch budget; breakpoints scale with it")
    base_lr: float = Field(0.03, gt=0, description="Peak learning rate")
    momentum: float = Field(0.9, ge=0, lt=1, description="Nesterov momentum")
    weight_decay: float = Field(4e-6, ge=0, description="L2 coefficient (weights only)")
    label_smoothing: float = Field(0.35, ge=0, lt=1, description="Label smoothing before the anneal point")
    teacher_forcing: float = Field(0.8, description="Probability of feeding the gold previous token")
    weight_noise_variance: float = Field(0.015, ge=0, description="Variance of the Gaussian weight noise")
    batch_start: int = Field(8, ge=1, description="Batch size at the first epoch")
    batch_end: int = Field(32, ge=1, description="Batch size after warmup")
    lr_decay: float = Field(0.9, gt=0, le=1, description="Per-epoch annealing factor")
    warmup_at: int = Field(3, ge=1, description="End of warmup for a 250-epoch budget")
    curriculum_until: int = Field(35, ge=0, description="End of sorted batches for a 250-epoch budget")
    weight_noise_after: int = Field(70, ge=0, description="Weight noise starts after this epoch (250 budget)")
    bn_freeze_after: int = Field(110, ge=0, description="Batch norm freezes after this epoch (250 budget)")
    anneal_after: int = Field(180, ge=0, description="Annealing starts after this epoch (250 budget)")
    reference_epochs: int = Field(250, ge=1, description="Budget the breakpoints are expressed in")
    clip_norm: Optional[float] = Field(None, gt=0, description="Global gradient norm clip, off by default")
    checkpoint_every: int = Field(5, ge=1, description="Epochs between checkpoints")
    dtype: Literal["float32", "float64"] = Field("float32", description="Training precision")
    seed: int = Field(0, ge=0, description="Batch order, augmentation and regularizer seed")

    @field_validator("teacher_forcing")
    @classmethod
    def validate_teacher_forcing(cls, v: float) -> float:
        """Ensure teacher forcing is a probability."""
        return _check_rate("teacher_forcing", v)

    @model_validator(mode="after")
    def validate_breakpoints(self) -> "TrainingConfig":
        """Ensure breakpoints are ordered and the batch ramp grows."""
        points = [self.warmup_at, self.curriculum_until, self.weight_noise_after, self.bn_freeze_after, self.anneal_after]
        if any(b > self.reference_epochs for b in points):
            raise ValueError("schedule breakpoints must not exceed reference_epochs")
        if self.batch_end < self.batch_start:
            raise ValueError("batch_end must be at least batch_start")
        return self


class TextConfig(_Section):
    """Transcript filtering and subword segmentation."""

    preset: Optional[str] = Field(None, description="Named filter preset; overrides the three switches below")
    drop_fragments: bool = Field(True, description="Remove word fragments (trailing hyphen)")
    drop_noise: bool = Field(True, description="Remove bracketed noise tokens")
    dedup_max: Optional[int] = Field(None, ge=1, description="Keep at most this many identical transcripts")
    bpe_vocab_size: int = Field(603, gt=3, description="Target vocabulary size including specials")
    min_frequency: int = Field(2, ge=1, description="Minimum pair frequency for a merge")


class RecipeSwitches(_Section):
    """One flag per training ingredient; turning one off disables exactly that ingredient."""

    specaugment: bool = True
    tempo_perturbation: bool = True
    dropout: bool = True
    label_smoothing: bool = True
    sequence_noise: bool = True
    weight_noise: bool = True
    weight_decay: bool = True
    dropconnect: bool = True
    bn_freezing: bool = True
    scheduled_sampling: bool = True
    zoneout: bool = True
    residual: bool = True
    random_batches: bool = True
    deltas: bool = True
    curriculum: bool = True


class PathsConfig(_Section):
    """Locations of the run directory and its inputs."""

    run_dir: Path = Field(Path("runs/default"), description="Root of all outputs")
    data_dir: Optional[Path] = Field(None, description="Corpus directory (defaults to <run_dir>/data)")

    def resolved_data_dir(self) -> Path:
        return self.data_dir if self.data_dir is not None else self.run_dir / "data"


class RunConfig(_Section):
    """Everything a command needs; serialized next to its outputs."""

    seed: int = Field(0, ge=0, description="Global seed")
    workers: int = Field(1, ge=1, description="Worker threads for decoding")
    model: ModelConfig = Field(default_factory=ModelConfig)
    lm: LmConfig = Field(default_factory=LmConfig)
    augment: AugmentPolicy = Field(default_factory=AugmentPolicy)
    fusion: FusionWeights = Field(default_factory=FusionWeights)
    synth: SynthConfig = Field(default_factory=SynthConfig)
    training: TrainingConfig = Field(default_factory=TrainingConfig)
    text: TextConfig = Field(default_factory=TextConfig)
    recipe: RecipeSwitches = Field(default_factory=RecipeSwitches)
    paths: PathsConfig = Field(default_factory=PathsConfig)
