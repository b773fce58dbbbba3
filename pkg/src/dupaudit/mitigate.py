"""Caption and conditioning randomization transforms.

Six strategies diversify the text signal attached to training images:

* ``mc``  - sample one caption uniformly from a per-image pool
* ``gn``  - add scaled Gaussian noise to text embeddings
* ``rc``  - replace the whole caption with a random 6-token sequence
* ``rt``  - per round, replace one token or insert a random token
* ``cwr`` - per round, duplicate one existing token at a random spot
* ``rna`` - per round, insert a random decimal number

Every transform is a pure function of (input, parameters, seed).  All
randomness flows through NumPy's PCG64 generator; batch application derives
one child seed per record from (base seed, record index), so outputs are
independent of scheduling and reproducible bit-for-bit.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .store import CaptionRecord, EmbeddingMatrix

STRATEGIES = ("mc", "gn", "rc", "rt", "cwr", "rna")
RANDOM_SEQUENCE_LENGTH = 6

DEFAULT_NOISE_SCALE = 0.1
DEFAULT_NUMBER_RANGE = 10 ** 6
TRAIN_REPEATS = 2
INFERENCE_REPEATS = 4

# per-round trigger probability; mc and gn apply unconditionally
DEFAULT_PROBABILITY = {"mc": 1.0, "gn": 1.0, "rc": 0.4, "rt": 0.1,
                       "cwr": 0.4, "rna": 0.4}
_SINGLE_SHOT = {"mc", "gn", "rc"}


class MitigateError(ValueError):
    """Raised for invalid transform parameters or inputs."""


def _rng(seed) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


def derive_record_seed(base_seed: int, index: int) -> int:
    """Child seed for record `index`, mixed through a SeedSequence so batch
    order and worker scheduling cannot change any record's stream."""
    ss = np.random.SeedSequence([int(base_seed), int(index)])
    return int(ss.generate_state(1, np.uint64)[0])


def load_vocab(path: str | Path) -> tuple[str, ...]:
    words = tuple(w for w in Path(path).read_text(encoding="utf-8").split("\n") if w)
    if not words:
        raise MitigateError(f"{path}: vocabulary file is empty")
    return words


def default_vocab() -> tuple[str, ...]:
    text = resources.files("dupaudit").joinpath("data/vocab.txt").read_text("utf-8")
    return tuple(w for w in text.split("\n") if w)


@dataclass(frozen=True)
class TransformSpec:
    """Parameters of one mitigation strategy run."""

    strategy: str
    probability: float
    repeats: int = 1
    noise_scale: float = DEFAULT_NOISE_SCALE
    number_range: int = DEFAULT_NUMBER_RANGE
    vocab: tuple[str, ...] = ()
    seed: int = 0
    per_token: bool = False  # rt only: roll the trigger per token position

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise MitigateError(f"unknown strategy {self.strategy!r}")
        if not (0.0 <= self.probability <= 1.0):
            raise MitigateError(f"probability must be in [0, 1], got {self.probability}")
        if self.repeats < 1:
            raise MitigateError(f"repeats must be >= 1, got {self.repeats}")
        if self.noise_scale < 0.0:
            raise MitigateError(f"noise_scale must be >= 0, got {self.noise_scale}")
        if self.number_range < 1:
            raise MitigateError(f"number_range must be >= 1, got {self.number_range}")
        if self.seed < 0:
            raise MitigateError(f"seed must be non-negative, got {self.seed}")
        if self.strategy in ("rc", "rt") and not self.vocab:
            raise MitigateError(f"strategy {self.strategy!r} needs a vocabulary")

    @classmethod
    def for_strategy(cls, strategy: str, phase: str = "train", seed: int = 0,
                     vocab: Sequence[str] = (), **overrides) -> "TransformSpec":
        """Spec with the stock defaults: probability 0.4 (rc/cwr/rna) or 0.1
        (rt); repeats 2 at train time and 4 at inference for the
        multi-round strategies."""
        if phase not in ("train", "inference"):
            raise MitigateError(f"phase must be 'train' or 'inference', got {phase!r}")
        if strategy in _SINGLE_SHOT:
            repeats = 1
        else:
            repeats = TRAIN_REPEATS if phase == "train" else INFERENCE_REPEATS
        params = dict(
            strategy=strategy,
            probability=DEFAULT_PROBABILITY.get(strategy, 1.0),
            repeats=repeats,
            vocab=tuple(vocab),
            seed=seed,
        )
        params.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**params)


def multiple_captions_sample(pool: Sequence[str], seed: int) -> str:
    """Uniform seeded choice from a per-image caption pool."""
    if not pool:
        raise MitigateError("caption pool is empty")
    rng = _rng(seed)
    return pool[int(rng.integers(len(pool)))]


def gaussian_noise(text_emb: np.ndarray, noise_scale: float, seed: int) -> np.ndarray:
    """out = in + noise_scale * z with z ~ N(0, I), per-coordinate, seeded.

    noise_scale 0 returns the input bit-for-bit.
    """
    vec = np.asarray(text_emb)
    if noise_scale == 0.0:
        return vec.copy()
    rng = _rng(seed)
    noisy = vec.astype(np.float64) + noise_scale * rng.standard_normal(vec.shape)
    return noisy.astype(vec.dtype)


def random_caption_replace(caption: str, probability: float,
                           vocab: Sequence[str], seed: int) -> str:
    """With probability p, replace the entire caption by a random
    6-token sequence from the vocabulary; otherwise pass through."""
    if not vocab:
        raise MitigateError("random caption replacement needs a vocabulary")
    rng = _rng(seed)
    if rng.random() >= probability:
        return caption
    picks = rng.integers(len(vocab), size=RANDOM_SEQUENCE_LENGTH)
    return " ".join(vocab[int(i)] for i in picks)


def random_token_replace(caption: str, probability: float, repeats: int,
                         vocab: Sequence[str], seed: int,
                         per_token: bool = False) -> str:
    """Per round: with probability p, either overwrite one token with a
    random vocabulary word or insert one at a random position (equal odds).

    Empty captions only support insertion.  Round triggers are independent
    Bernoulli draws; replace preserves token count, add grows it by one.

    `per_token` switches to the alternative reading where every token
    position rolls its own Bernoulli(p) each round (replace it, or insert a
    word right after it, equal odds).
    """
    if not vocab:
        raise MitigateError("random token replacement needs a vocabulary")
    rng = _rng(seed)
    tokens = caption.split()
    changed = False
    for _ in range(repeats):
        if per_token and tokens:
            out = []
            for tok in tokens:
                out.append(tok)
                if rng.random() >= probability:
                    continue
                word = vocab[int(rng.integers(len(vocab)))]
                if int(rng.integers(2)) == 0:
                    out[-1] = word
                else:
                    out.append(word)
                changed = True
            tokens = out
            continue
        if rng.random() >= probability:
            continue
        if tokens and int(rng.integers(2)) == 0:
            pos = int(rng.integers(len(tokens)))
            tokens[pos] = vocab[int(rng.integers(len(vocab)))]
        else:
            pos = int(rng.integers(len(tokens) + 1))
            tokens.insert(pos, vocab[int(rng.integers(len(vocab)))])
        changed = True
    return " ".join(tokens) if changed else caption


def caption_word_repeat(caption: str, probability: float, repeats: int,
                        seed: int) -> str:
    """Per round: with probability p, copy one existing token to a random
    position.  Identity on empty captions."""
    rng = _rng(seed)
    tokens = caption.split()
    changed = False
    for _ in range(repeats):
        if rng.random() >= probability:
            continue
        if not tokens:
            continue
        word = tokens[int(rng.integers(len(tokens)))]
        pos = int(rng.integers(len(tokens) + 1))
        tokens.insert(pos, word)
        changed = True
    return " ".join(tokens) if changed else caption


def random_number_add(caption: str, probability: float, repeats: int,
                      number_range: int, seed: int) -> str:
    """Per round: with probability p, insert the decimal rendering of a
    uniform integer from [0, number_range)."""
    if number_range < 1:
        raise MitigateError(f"number_range must be >= 1, got {number_range}")
    rng = _rng(seed)
    tokens = caption.split()
    changed = False
    for _ in range(repeats):
        if rng.random() >= probability:
            continue
        number = int(rng.integers(number_range))
        pos = int(rng.integers(len(tokens) + 1))
        tokens.insert(pos, str(number))
        changed = True
    return " ".join(tokens) if changed else caption


def caption_scheme(scheme: str, class_name: str | None = None,
                   vocab: Sequence[str] = (), seed: int = 0) -> str:
    """Conditioning caption for the fixed / class / random schemes."""
    if scheme == "fixed":
        return "An image"
    if scheme == "class":
        if not class_name:
            raise MitigateError("class scheme needs a class name")
        return f"An image of {class_name}"
    if scheme == "random":
        if not vocab:
            raise MitigateError("random scheme needs a vocabulary")
        rng = _rng(seed)
        picks = rng.integers(len(vocab), size=RANDOM_SEQUENCE_LENGTH)
        return " ".join(vocab[int(i)] for i in picks)
    raise MitigateError(f"unknown caption scheme {scheme!r}")


def transform_caption(caption: str, spec: TransformSpec, seed: int) -> str:
    """Apply one caption strategy under an explicit record seed."""
    if spec.strategy == "rc":
        return random_caption_replace(caption, spec.probability, spec.vocab, seed)
    if spec.strategy == "rt":
        return random_token_replace(caption, spec.probability, spec.repeats,
                                    spec.vocab, seed, per_token=spec.per_token)
    if spec.strategy == "cwr":
        return caption_word_repeat(caption, spec.probability, spec.repeats, seed)
    if spec.strategy == "rna":
        return random_number_add(caption, spec.probability, spec.repeats,
                                 spec.number_range, seed)
    raise MitigateError(f"strategy {spec.strategy!r} does not transform single captions")


def transform_records(records: Sequence[CaptionRecord], spec: TransformSpec,
                      ) -> list[tuple[str, str, int]]:
    """Batch caption transform: (id, new caption, record seed) per input."""
    out = []
    for idx, rec in enumerate(records):
        rseed = derive_record_seed(spec.seed, idx)
        out.append((rec.id, transform_caption(rec.text, spec, rseed), rseed))
    return out


def sample_caption_pools(pools: Sequence[tuple[str, Sequence[str]]], seed: int,
                         ) -> list[tuple[str, str, int]]:
    """Batch mc strategy over (id, pool) rows."""
    out = []
    for idx, (rid, pool) in enumerate(pools):
        if not pool:
            raise MitigateError(f"record {rid!r}: caption pool is empty")
        rseed = derive_record_seed(seed, idx)
        out.append((rid, multiple_captions_sample(pool, rseed), rseed))
    return out


def add_embedding_noise(m: EmbeddingMatrix, noise_scale: float,
                        seed: int) -> EmbeddingMatrix:
    """gn strategy over a whole embedding matrix, one child seed per row.

    Noised rows are generally no longer unit-norm, so the result drops the
    normalized flag (scale 0 keeps the input bit-for-bit).
    """
    if noise_scale == 0.0:
        return m
    rows = np.empty_like(m.data)
    for i in range(m.n):
        rows[i] = gaussian_noise(m.data[i], noise_scale,
                                 derive_record_seed(seed, i))
    return EmbeddingMatrix(ids=m.ids, data=rows, normalized=False)
