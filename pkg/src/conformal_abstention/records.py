"""Calibration records: data model, line-delimited ingestion and splitting.

Scored-example files hold one JSON object per line with fields ``id``,
``score`` and ``matched``. Optional header lines ``#score_kind=<kind>`` and
``#k=<int>`` carry dataset metadata. Match-calibration files hold ``id``,
``similarity`` and ``human_correct``.

Splits and shuffles use :func:`seeded_permutation`, a Fisher-Yates shuffle
driven by the raw 64-bit output of the Philox4x64-10 counter-based
generator keyed with the seed. Only the raw word stream is consumed, so the
permutation does not depend on numpy's higher-level sampling algorithms.
"""

from __future__ import annotations

import io
import json
import math
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property
from typing import IO, Iterable, Sequence, Union

import numpy as np

DEFAULT_K = 10
"""Sampled alternatives per query, i.e. the largest possible match count."""


class RecordError(ValueError):
    """Base class for ingestion and validation failures."""


class ParseError(RecordError):
    """A line could not be decoded into a record."""

    def __init__(self, lineno: int, message: str):
        super().__init__(f"line {lineno}: {message}")
        self.lineno = lineno


class ValidationError(RecordError):
    """Records decoded but violate a data-model invariant."""


class ScoreKind(str, Enum):
    MATCH_COUNT = "match-count"
    EXPECTED_MATCH_COUNT = "expected-match-count"
    LOG_PROBABILITY = "log-probability"
    CUSTOM = "custom"


@dataclass(frozen=True)
class ScoredExample:
    id: str
    score: float
    matched: bool


@dataclass(frozen=True)
class MatchCalibRecord:
    id: str
    similarity: float
    human_correct: bool

    def __post_init__(self):
        if not math.isfinite(self.similarity):
            raise ValidationError(f"record {self.id!r}: similarity must be finite")


@dataclass(frozen=True)
class Dataset:
    """Ordered calibration or test points sharing one score kind.

    ``k`` is the number of sampled alternatives compared against each
    response; for match-count scores every score must be an integer in
    ``[0, k]``.
    """

    examples: tuple[ScoredExample, ...]
    score_kind: ScoreKind = ScoreKind.CUSTOM
    k: int = DEFAULT_K
    _skip_validation: bool = field(default=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "examples", tuple(self.examples))
        object.__setattr__(self, "score_kind", ScoreKind(self.score_kind))
        if self._skip_validation:
            return
        seen = set()
        for ex in self.examples:
            if ex.id in seen:
                raise ValidationError(f"duplicate id {ex.id!r}")
            seen.add(ex.id)
            if not math.isfinite(ex.score):
                raise ValidationError(f"example {ex.id!r}: score must be finite")
            if self.score_kind is ScoreKind.MATCH_COUNT:
                if ex.score != int(ex.score) or not 0 <= ex.score <= self.k:
                    raise ValidationError(
                        f"example {ex.id!r}: match-count score {ex.score} "
                        f"is not an integer in [0, {self.k}]"
                    )

    def __len__(self) -> int:
        return len(self.examples)

    @cached_property
    def scores(self) -> np.ndarray:
        return np.fromiter((ex.score for ex in self.examples), dtype=float, count=len(self))

    @cached_property
    def matched(self) -> np.ndarray:
        return np.fromiter((ex.matched for ex in self.examples), dtype=bool, count=len(self))

    @property
    def ids(self) -> list[str]:
        return [ex.id for ex in self.examples]

    @classmethod
    def from_arrays(cls, scores, matched, *, ids=None, score_kind=ScoreKind.CUSTOM,
                    k: int = DEFAULT_K, validate: bool = True) -> "Dataset":
        scores = np.asarray(scores, dtype=float)
        matched = np.asarray(matched, dtype=bool)
        if scores.shape != matched.shape or scores.ndim != 1:
            raise ValidationError("scores and matched must be 1-d arrays of equal length")
        if ids is None:
            ids = [str(i) for i in range(len(scores))]
        examples = tuple(
            ScoredExample(i, float(s), bool(m)) for i, s, m in zip(ids, scores, matched)
        )
        data = cls(examples, score_kind, k, _skip_validation=not validate)
        # Pre-populate the array caches; cached_property reads __dict__ first.
        data.__dict__["scores"] = scores.copy()
        data.__dict__["matched"] = matched.copy()
        return data

    def take(self, indices: Sequence[int]) -> "Dataset":
        """Subset by position; repeated positions get ``id@j`` suffixes."""
        indices = np.asarray(indices, dtype=np.int64)
        if len(np.unique(indices)) == len(indices):
            ids = [self.examples[i].id for i in indices]
        else:
            ids = [f"{self.examples[i].id}@{j}" for j, i in enumerate(indices)]
        return Dataset.from_arrays(
            self.scores[indices], self.matched[indices], ids=ids,
            score_kind=self.score_kind, k=self.k, validate=False,
        )


Source = Union[bytes, str, IO[bytes], IO[str], Iterable[Union[bytes, str]]]


def _iter_lines(source: Source):
    if isinstance(source, bytes):
        source = io.BytesIO(source)
    elif isinstance(source, str):
        source = io.StringIO(source)
    for lineno, raw in enumerate(source, start=1):
        if isinstance(raw, bytes):
            try:
                raw = raw.decode("utf-8")
            except UnicodeDecodeError as exc:
                raise ParseError(lineno, f"invalid UTF-8: {exc}") from None
        yield lineno, raw.strip()


def _decode_object(lineno: int, line: str) -> dict:
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as exc:
        raise ParseError(lineno, f"invalid JSON: {exc.msg}") from None
    if not isinstance(obj, dict):
        raise ParseError(lineno, "expected a JSON object")
    return obj


def _field(lineno: int, obj: dict, name: str, kind: str):
    if name not in obj:
        raise ParseError(lineno, f"missing field {name!r}")
    value = obj[name]
    if kind == "string":
        ok = isinstance(value, str)
    elif kind == "number":
        ok = isinstance(value, (int, float)) and not isinstance(value, bool)
    else:
        ok = isinstance(value, bool)
    if not ok:
        raise ParseError(lineno, f"field {name!r} must be a {kind}, got {value!r}")
    return float(value) if kind == "number" else value


def parse_scored_examples(source: Source) -> Dataset:
    """Parse a scored-example stream into a :class:`Dataset`.

    Raises
    ------
    ParseError
        On a malformed line; the message names the line number.
    ValidationError
        On duplicate ids, non-finite scores, or empty input.
    """
    score_kind = ScoreKind.CUSTOM
    k = DEFAULT_K
    examples = []
    for lineno, line in _iter_lines(source):
        if not line:
            continue
        if line.startswith("#"):
            key, sep, value = line[1:].partition("=")
            key, value = key.strip(), value.strip()
            if not sep:
                continue
            if key == "score_kind":
                try:
                    score_kind = ScoreKind(value)
                except ValueError:
                    raise ParseError(lineno, f"unknown score_kind {value!r}") from None
            elif key == "k":
                try:
                    k = int(value)
                except ValueError:
                    raise ParseError(lineno, f"k must be an integer, got {value!r}") from None
                if k < 1:
                    raise ParseError(lineno, "k must be positive")
            continue
        obj = _decode_object(lineno, line)
        examples.append(ScoredExample(
            _field(lineno, obj, "id", "string"),
            _field(lineno, obj, "score", "number"),
            _field(lineno, obj, "matched", "boolean"),
        ))
    if not examples:
        raise ValidationError("no records in input")
    return Dataset(tuple(examples), score_kind, k)


def parse_match_calib_records(source: Source) -> list[MatchCalibRecord]:
    records = []
    seen = set()
    for lineno, line in _iter_lines(source):
        if not line or line.startswith("#"):
            continue
        obj = _decode_object(lineno, line)
        rec = MatchCalibRecord(
            _field(lineno, obj, "id", "string"),
            _field(lineno, obj, "similarity", "number"),
            _field(lineno, obj, "human_correct", "boolean"),
        )
        if rec.id in seen:
            raise ValidationError(f"duplicate id {rec.id!r}")
        seen.add(rec.id)
        records.append(rec)
    if not records:
        raise ValidationError("no records in input")
    return records


def _number_repr(x: float):
    return int(x) if float(x).is_integer() else x


def serialize_scored_examples(data: Dataset) -> bytes:
    lines = [f"#score_kind={data.score_kind.value}", f"#k={data.k}"]
    for ex in data.examples:
        lines.append(json.dumps(
            {"id": ex.id, "score": _number_repr(ex.score), "matched": ex.matched}
        ))
    return ("\n".join(lines) + "\n").encode("utf-8")


def serialize_match_calib_records(records: Iterable[MatchCalibRecord]) -> bytes:
    lines = [
        json.dumps({"id": r.id, "similarity": _number_repr(r.similarity),
                    "human_correct": r.human_correct})
        for r in records
    ]
    return ("\n".join(lines) + "\n").encode("utf-8")


_U64 = 1 << 64


class _WordStream:
    """Raw 64-bit words from Philox4x64-10 keyed by ``seed``."""

    def __init__(self, seed: int, chunk: int = 256):
        if seed < 0:
            raise ValueError("seed must be non-negative")
        self._gen = np.random.Philox(key=seed % (1 << 128))
        self._chunk = chunk
        self._buf: list[int] = []

    def next(self) -> int:
        if not self._buf:
            self._buf = self._gen.random_raw(self._chunk).tolist()[::-1]
        return self._buf.pop()

    def below(self, bound: int) -> int:
        # Rejection sampling keeps the draw exactly uniform on [0, bound).
        limit = _U64 - (_U64 % bound)
        while True:
            word = self.next()
            if word < limit:
                return word % bound


def seeded_permutation(n: int, seed: int) -> np.ndarray:
    """Fisher-Yates permutation of ``range(n)``, bit-identical for fixed seed."""
    words = _WordStream(seed)
    perm = list(range(n))
    for i in range(n - 1, 0, -1):
        j = words.below(i + 1)
        perm[i], perm[j] = perm[j], perm[i]
    return np.array(perm, dtype=np.int64)


def round_half_up(x: float) -> int:
    return math.floor(x + 0.5)


def split_calibration_test(data: Dataset, test_fraction: float, seed: int) -> tuple[Dataset, Dataset]:
    """Shuffle and cut into (calibration, test).

    The test part has ``round_half_up(n * test_fraction)`` examples. Each part
    keeps the input order of its members.
    """
    if not 0.0 < test_fraction < 1.0:
        raise ValidationError(f"test_fraction must lie in (0, 1), got {test_fraction}")
    n = len(data)
    n_test = round_half_up(n * test_fraction)
    if n_test < 1 or n - n_test < 1:
        raise ValidationError(
            f"split of n={n} at test_fraction={test_fraction} leaves "
            f"{n - n_test} calibration and {n_test} test examples"
        )
    perm = seeded_permutation(n, seed)
    test_idx = np.sort(perm[:n_test])
    cal_idx = np.sort(perm[n_test:])
    return data.take(cal_idx), data.take(test_idx)
