"""
Synthetic speech-like corpus.

Utterances are word sequences drawn from a Dirichlet-sampled bigram over
pseudo-words. Every word emits a run of copies of its prototype vector plus
Gaussian noise, and each speaker applies a fixed per-dimension affine
distortion. Utterances are laid out consecutively in recordings; with
`repeat_prob` > 0 an utterance repeats its predecessor in the same recording,
which gives a cross-utterance LM something to exploit.
"""

import logging
import math
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Sequence, Union

import numpy as np

from autodiff import derive_rng
from config.models import SynthConfig
from datagen.models import Lexicon, SpeakerTransform, SyntheticCorpus, SyntheticSplit, SyntheticUtterance
from features.io import save_feature_corpus
from features.models import FeatureSequence
from text.io import write_transcripts
from text.models import Transcript, TranscriptCorpus

logger = logging.getLogger(__name__)

CONSONANTS = "bdgklmnprstvz"
VOWELS = "aeiou"
MAX_WORD_ATTEMPTS = 10_000


def make_lexicon(config: SynthConfig) -> Lexicon:
    """
    Pseudo-words, prototypes and bigram shared by all splits.

    Raises:
        ValueError: If the syllable range cannot yield `n_words` distinct words
    """
    rng = derive_rng(config.seed, "lexicon")
    words: list[str] = []
    seen: set[str] = set()
    low, high = config.syllables_per_word
    for _ in range(MAX_WORD_ATTEMPTS):
        if len(words) == config.n_words:
            break
        n = int(rng.integers(low, high + 1))
        word = "".join(CONSONANTS[rng.integers(len(CONSONANTS))] + VOWELS[rng.integers(len(VOWELS))] for _ in range(n))
        if word not in seen:
            seen.add(word)
            words.append(word)
    if len(words) < config.n_words:
        raise ValueError(f"Could not draw {config.n_words} distinct words with {low}-{high} syllables")

    prototypes = derive_rng(config.seed, "prototypes").normal(0.0, config.prototype_scale, (config.n_words, config.feature_dim))
    alpha = np.full(config.n_words, config.bigram_concentration)
    bigram = derive_rng(config.seed, "bigram").dirichlet(alpha, size=config.n_words + 1)
    return Lexicon(words=words, prototypes=prototypes, bigram=bigram)


def make_speaker(config: SynthConfig, speaker_id: str) -> SpeakerTransform:
    rng = derive_rng(config.seed, "speaker", speaker_id)
    scale = rng.uniform(*config.speaker_scale, size=config.feature_dim)
    shift = rng.uniform(*config.speaker_shift, size=config.feature_dim)
    return SpeakerTransform(speaker_id=speaker_id, scale=scale, shift=shift)


def sample_words(lexicon: Lexicon, config: SynthConfig, rng: np.random.Generator) -> list[int]:
    length = int(rng.integers(config.tokens_per_utterance[0], config.tokens_per_utterance[1] + 1))
    words: list[int] = []
    row = 0
    for _ in range(length):
        word = int(rng.choice(len(lexicon), p=lexicon.bigram[row]))
        words.append(word)
        row = word + 1
    return words


def render_frames(word_ids: Sequence[int], lexicon: Lexicon, config: SynthConfig, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """
    Undistorted frames and their per-frame word labels.

    Returns:
        (frames (T, D), labels (T,))
    """
    low, high = config.frames_per_token
    runs = rng.integers(low, high + 1, size=len(word_ids))
    labels = np.repeat(np.asarray(word_ids, dtype=np.int64), runs)
    frames = lexicon.prototypes[labels] + rng.normal(0.0, 1.0, (labels.size, config.feature_dim)) * config.noise_sigma
    return frames, labels


def nearest_prototype(frames: np.ndarray, prototypes: np.ndarray) -> np.ndarray:
    """Index of the closest prototype (Euclidean) for every frame."""
    distances = ((frames[:, None, :] - prototypes[None, :, :]) ** 2).sum(axis=-1)
    return np.argmin(distances, axis=1)


def plan_split(name: str, n_utterances: int, lexicon: Lexicon, config: SynthConfig) -> list[SyntheticUtterance]:
    """Texts, speakers and recordings of a split; repeats only within a recording."""
    per_recording = config.utterances_per_recording
    plan: list[SyntheticUtterance] = []
    for rec in range(math.ceil(n_utterances / per_recording)):
        rng = derive_rng(config.seed, name, "text", rec)
        recording_id = f"{name}_rec{rec:04d}"
        speaker_id = f"{name}_spk{rec % config.n_speakers:02d}"
        previous: list[int] = []
        for k in range(min(per_recording, n_utterances - rec * per_recording)):
            repeat = bool(previous) and rng.random() < config.repeat_prob
            words = list(previous) if repeat else sample_words(lexicon, config, rng)
            plan.append(SyntheticUtterance(f"{recording_id}_{k:02d}", speaker_id, recording_id, words))
            previous = words
    return plan


def generate_split(
    name: str,
    n_utterances: int,
    lexicon: Lexicon,
    speakers: dict[str, SpeakerTransform],
    config: SynthConfig,
    workers: int = 1,
) -> SyntheticSplit:
    plan = plan_split(name, n_utterances, lexicon, config)
    for utt in plan:
        if utt.speaker_id not in speakers:
            speakers[utt.speaker_id] = make_speaker(config, utt.speaker_id)

    def render(utt: SyntheticUtterance) -> tuple[np.ndarray, np.ndarray]:
        frames, labels = render_frames(utt.word_ids, lexicon, config, derive_rng(config.seed, name, "frames", utt.utterance_id))
        return speakers[utt.speaker_id].apply(frames), labels

    with ThreadPoolExecutor(max_workers=workers) as pool:
        rendered = list(pool.map(render, plan))

    features: list[FeatureSequence] = []
    labels: dict[str, np.ndarray] = {}
    clock: dict[str, float] = {}
    for utt, (frames, frame_labels) in zip(plan, rendered):
        start = clock.get(utt.recording_id, 0.0)
        end = start + frames.shape[0] * config.frame_shift
        clock[utt.recording_id] = end + config.gap_seconds
        utt.start_time = start
        features.append(
            FeatureSequence(
                frames=frames.astype(np.float32),
                utterance_id=utt.utterance_id,
                speaker_id=utt.speaker_id,
                recording_id=utt.recording_id,
                start_time=round(start, 3),
                end_time=round(end, 3),
                frame_shift=config.frame_shift,
            )
        )
        labels[utt.utterance_id] = frame_labels
    transcripts = TranscriptCorpus(
        utterances=[Transcript(utterance_id=u.utterance_id, speaker_id=u.speaker_id, text=lexicon.text(u.word_ids)) for u in plan]
    )
    return SyntheticSplit(name=name, features=features, transcripts=transcripts, labels=labels)


def generate(config: SynthConfig, workers: int = 1) -> SyntheticCorpus:
    """Train, dev and test splits; bit-identical for the same config regardless of `workers`."""
    lexicon = make_lexicon(config)
    speakers: dict[str, SpeakerTransform] = {}
    splits = {
        name: generate_split(name, n, lexicon, speakers, config, workers)
        for name, n in (("train", config.n_train), ("dev", config.n_dev), ("test", config.n_test))
    }
    logger.info(
        f"Generated {sum(len(s.features) for s in splits.values())} utterances over {len(lexicon)} words and {len(speakers)} speakers"
    )
    return SyntheticCorpus(lexicon=lexicon, speakers=speakers, splits=splits)


def write_corpus(corpus: SyntheticCorpus, directory: Union[str, Path]) -> dict[str, Path]:
    """
    Write `<split>.feats`, `<split>.manifest.tsv` and `<split>.txt` per split,
    plus `lexicon.txt`.

    Returns:
        Manifest path per split
    """
    directory = Path(directory)
    manifests = {}
    for name, split in corpus.splits.items():
        manifests[name] = save_feature_corpus(directory, name, split.features)
        write_transcripts(directory / f"{name}.txt", split.transcripts)
    (directory / "lexicon.txt").write_text("\n".join(corpus.lexicon.words) + "\n", encoding="utf-8")
    return manifests


def cross_utterance_entropy(texts: Sequence[Sequence[str]]) -> float:
    """
    Plug-in conditional entropy (bits) of a word given the word at the same
    position in the preceding utterance.

    Args:
        texts: Utterance transcripts of each recording, in recording order
    """
    pairs: Counter[tuple[str, str]] = Counter()
    for recording in texts:
        for previous, current in zip(recording, recording[1:]):
            pairs.update(zip(previous.split(), current.split()))
    total = sum(pairs.values())
    if total == 0:
        return 0.0
    contexts: Counter[str] = Counter()
    for (context, _), n in pairs.items():
        contexts[context] += n
    return -sum(n / total * math.log2(n / contexts[context]) for (context, _), n in pairs.items())
