"""Self-consistency confidence scores computed from sampled LLM responses.

Each query carries ``k`` responses. The default response is chosen among
them and the score says how many of the other responses agree with it:

* pairwise match count: every response is compared with every other one;
  the response with the most similar peers wins (ties go to the lowest
  index).
* greedy match count: response 0 (zero-temperature) is fixed and compared
  against the ``k - 1`` samples.
* expected match count: the model is asked once how many samples agree and
  the score is the expectation of its answer-token distribution.
* log-probability: the sequence log-probability of response 0.

Similarities are on the 0-10 scale of the similarity prompt. A pair counts
as a match only when its similarity is strictly above ``beta``.
"""

from __future__ import annotations

import json
import math
import re
import string
from collections import Counter
from dataclasses import dataclass
from enum import Enum
from typing import Mapping, Optional, Protocol, Sequence

import numpy as np

from .records import ParseError, ValidationError, _decode_object, _iter_lines


class ScoreInputError(ValueError):
    """A bundle lacks the material a score function needs."""


class DegenerateDistributionError(ScoreInputError):
    """Answer-token mass is too small to renormalise."""


class TemplateError(KeyError):
    """A prompt template slot has no value."""


MIN_TOKEN_MASS = 1e-6


@dataclass(frozen=True, eq=False)
class ResponseBundle:
    """Raw per-query material.

    ``pairwise_similarities[i][j]`` is the similarity reported when response
    ``i`` is shown as "C" and response ``j`` as "D"; it need not be symmetric
    and the diagonal is ignored. ``reference_similarities[j]`` compares
    response 0 against response ``j + 1``.
    """

    id: str
    question: str = ""
    responses: tuple[str, ...] = ()
    pairwise_similarities: Optional[np.ndarray] = None
    reference_similarities: Optional[tuple[float, ...]] = None
    match_token_probs: Optional[Mapping[int, float]] = None
    logprob: Optional[float] = None
    matched: Optional[bool] = None
    answer: Optional[str] = None

    def __post_init__(self):
        object.__setattr__(self, "responses", tuple(self.responses))
        if self.pairwise_similarities is not None:
            mat = np.array(self.pairwise_similarities, dtype=float)
            if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
                raise ValidationError(f"bundle {self.id!r}: pairwise similarities must be square")
            if self.responses and mat.shape[0] != len(self.responses):
                raise ValidationError(
                    f"bundle {self.id!r}: {mat.shape[0]}x{mat.shape[0]} similarity matrix "
                    f"for {len(self.responses)} responses"
                )
            off_diag = mat[~np.eye(len(mat), dtype=bool)]
            if not np.all(np.isfinite(off_diag)):
                raise ValidationError(f"bundle {self.id!r}: similarities must be finite")
            mat.setflags(write=False)
            object.__setattr__(self, "pairwise_similarities", mat)
        if self.reference_similarities is not None:
            ref = tuple(float(x) for x in self.reference_similarities)
            if not all(math.isfinite(x) for x in ref):
                raise ValidationError(f"bundle {self.id!r}: similarities must be finite")
            object.__setattr__(self, "reference_similarities", ref)
        if self.match_token_probs is not None:
            probs = {int(t): float(p) for t, p in self.match_token_probs.items()}
            if any(not math.isfinite(p) or p < 0 for p in probs.values()):
                raise ValidationError(f"bundle {self.id!r}: token probabilities must be >= 0")
            object.__setattr__(self, "match_token_probs", probs)
        if self.logprob is not None:
            if not math.isfinite(self.logprob) or self.logprob > 0:
                raise ValidationError(f"bundle {self.id!r}: logprob must be finite and <= 0")

    @property
    def k(self) -> int:
        if self.responses:
            return len(self.responses)
        if self.pairwise_similarities is not None:
            return len(self.pairwise_similarities)
        if self.reference_similarities is not None:
            return len(self.reference_similarities) + 1
        return 0


@dataclass(frozen=True)
class ScoreResult:
    chosen_index: int
    score: float


def pairwise_match_count(bundle: ResponseBundle, beta: float) -> ScoreResult:
    if bundle.pairwise_similarities is None:
        raise ScoreInputError(f"bundle {bundle.id!r}: no pairwise similarity matrix")
    sims = bundle.pairwise_similarities
    above = sims > beta
    np.fill_diagonal(above, False)
    counts = above.sum(axis=1)
    best = int(np.argmax(counts))  # first maximum, i.e. lowest index on ties
    return ScoreResult(best, float(counts[best]))


def greedy_match_count(bundle: ResponseBundle, beta: float) -> ScoreResult:
    if not bundle.reference_similarities:
        raise ScoreInputError(f"bundle {bundle.id!r}: no reference similarities")
    count = sum(1 for s in bundle.reference_similarities if s > beta)
    return ScoreResult(0, float(count))


def expected_match_count(bundle: ResponseBundle, n_alternatives: Optional[int] = None) -> ScoreResult:
    """Expected answer to "how many alternatives agree?".

    Mass is renormalised over the integer tokens ``0..n_alternatives``; other
    tokens are dropped. ``n_alternatives`` defaults to ``k - 1`` when the
    bundle lists its responses, else to 10.
    """
    if bundle.match_token_probs is None:
        raise ScoreInputError(f"bundle {bundle.id!r}: no match-token probabilities")
    if n_alternatives is None:
        n_alternatives = bundle.k - 1 if bundle.responses else 10
    items = [(t, p) for t, p in bundle.match_token_probs.items() if 0 <= t <= n_alternatives]
    mass = sum(p for _, p in items)
    if mass <= MIN_TOKEN_MASS:
        raise DegenerateDistributionError(
            f"bundle {bundle.id!r}: answer-token mass {mass:g} <= {MIN_TOKEN_MASS:g}"
        )
    return ScoreResult(0, sum(t * p for t, p in items) / mass)


def logprob_score(bundle: ResponseBundle) -> ScoreResult:
    if bundle.logprob is None:
        raise ScoreInputError(f"bundle {bundle.id!r}: no log-probability")
    return ScoreResult(0, float(bundle.logprob))


# -- similarity oracles -----------------------------------------------------


class SimilarityOracle(Protocol):
    def similarity(self, question: str, response_a: str, response_b: str) -> float:
        """Similarity of ``response_a`` ("C") and ``response_b`` ("D") given the question."""


class ConstantOracle:
    def __init__(self, value: float):
        if not 0 <= value <= 10:
            raise ValueError("similarity must lie in [0, 10]")
        self.value = float(value)

    def similarity(self, question, response_a, response_b):
        return self.value


class RecordedOracle:
    """Lookup table of previously recorded similarity judgements.

    Entries are keyed by the ordered triple ``(question, response_a,
    response_b)``; no symmetry is assumed.
    """

    def __init__(self, table: Mapping[tuple[str, str, str], float]):
        self._table = dict(table)

    @classmethod
    def from_jsonl(cls, source) -> "RecordedOracle":
        """Load lines with ``question``, ``response_a``, ``response_b``, ``similarity``."""
        table = {}
        for lineno, line in _iter_lines(source):
            if not line or line.startswith("#"):
                continue
            obj = _decode_object(lineno, line)
            try:
                key = (obj["question"], obj["response_a"], obj["response_b"])
                value = float(obj["similarity"])
            except (KeyError, TypeError, ValueError) as exc:
                raise ParseError(lineno, f"bad oracle record: {exc}") from None
            if not 0 <= value <= 10:
                raise ValidationError(f"line {lineno}: similarity {value} outside [0, 10]")
            table[key] = value
        return cls(table)

    def similarity(self, question, response_a, response_b):
        try:
            return self._table[(question, response_a, response_b)]
        except KeyError:
            raise ScoreInputError(
                f"no recorded similarity for question {question[:40]!r}"
            ) from None


def similarity_matrix(oracle: SimilarityOracle, question: str, responses: Sequence[str]) -> np.ndarray:
    """Query every ordered pair, row ``i`` as "C" and column ``j`` as "D"."""
    k = len(responses)
    mat = np.zeros((k, k))
    for i in range(k):
        for j in range(k):
            if i != j:
                mat[i, j] = oracle.similarity(question, responses[i], responses[j])
    return mat


def reference_similarity_list(oracle: SimilarityOracle, question: str,
                              responses: Sequence[str]) -> list[float]:
    """Similarities of response 0 ("C") against each later response ("D")."""
    return [oracle.similarity(question, responses[0], r) for r in responses[1:]]


# -- match functions --------------------------------------------------------

_ARTICLES = re.compile(r"\b(a|an|the)\b")
_PUNCT = str.maketrans("", "", string.punctuation)


def normalize_answer(text: str) -> list[str]:
    """Lower-case, strip punctuation and articles, split on whitespace."""
    text = text.lower().translate(_PUNCT)
    return _ARTICLES.sub(" ", text).split()


def token_recall(response: str, label: str) -> float:
    """Fraction of label tokens that appear in the response."""
    resp, lab = normalize_answer(response), normalize_answer(label)
    if not lab:
        return float(not resp)
    common = sum((Counter(resp) & Counter(lab)).values())
    return common / len(lab)


def token_precision(response: str, label: str) -> float:
    resp, lab = normalize_answer(response), normalize_answer(label)
    if not resp:
        return float(not lab)
    common = sum((Counter(resp) & Counter(lab)).values())
    return common / len(resp)


def token_f1(response: str, label: str) -> float:
    p, r = token_precision(response, label), token_recall(response, label)
    return 0.0 if p + r == 0 else 2 * p * r / (p + r)


def thresholded_match(similarity: float, beta: float) -> bool:
    """Match indicator of a similarity score: ``similarity >= beta``."""
    return similarity >= beta


# -- prompt templates -------------------------------------------------------


class PromptTemplate(str, Enum):
    ANSWER = "answer"
    PAIRWISE_SIMILARITY = "pairwise-similarity"
    BATCH_MATCH_COUNT = "batch-match-count"


TEMPLATES = {
    PromptTemplate.ANSWER: "Answer the following question: Q: {query} A:",
    PromptTemplate.PAIRWISE_SIMILARITY: (
        "You are given a question (Q), and two candidate answers (C and D).\n"
        "Given Q, measure the similarity of C and D on a scale of 0-10.\n"
        "Answer in a number between 0 and 10.\n"
        "\n"
        "Q: {question}\n"
        "\n"
        "C: {response1}\n"
        "D: {response2}\n"
        "\n"
        "Given Q, similarity of C and D to each other is [0-10]:"
    ),
    PromptTemplate.BATCH_MATCH_COUNT: (
        "You are given a question (Q), a candidate answer (C), and a list of "
        "alternative answers (A1->A10).\n"
        "How many of the alternative answers are semantically the same as C, "
        "if any? Generic answers do not count.\n"
        "Answer in a number between 0 and 10.\n"
        "\n"
        "Q: {question}\n"
        "\n"
        "C: {response}\n"
        "\n"
        + "".join(f"A{i}: {{response{i}}}\n" for i in range(1, 11))
        + "\n"
        "The number of supportive answers for C is [0-10]:"
    ),
}


def template_slots(template: PromptTemplate | str) -> list[str]:
    text = TEMPLATES[PromptTemplate(template)]
    return [name for _, name, _, _ in string.Formatter().parse(text) if name]


def render_prompt(template: PromptTemplate | str, slots: Mapping[str, str]) -> str:
    template = PromptTemplate(template)
    missing = [name for name in template_slots(template) if name not in slots]
    if missing:
        raise TemplateError(f"template {template.value!r} missing slots: {', '.join(missing)}")
    return TEMPLATES[template].format_map({k: str(v) for k, v in slots.items()})


# -- bundle files -----------------------------------------------------------


class ScoreFunction(str, Enum):
    MATCH_COUNT = "match-count"
    GREEDY_MATCH_COUNT = "greedy-match-count"
    EXPECTED_MATCH_COUNT = "expected-match-count"
    LOG_PROBABILITY = "log-probability"


def score_bundle(bundle: ResponseBundle, function: ScoreFunction | str,
                 beta: float = 5.0) -> ScoreResult:
    function = ScoreFunction(function)
    if function is ScoreFunction.MATCH_COUNT:
        return pairwise_match_count(bundle, beta)
    if function is ScoreFunction.GREEDY_MATCH_COUNT:
        return greedy_match_count(bundle, beta)
    if function is ScoreFunction.EXPECTED_MATCH_COUNT:
        return expected_match_count(bundle)
    return logprob_score(bundle)


def bundle_match(bundle: ResponseBundle, chosen_index: int, match_beta: float = 0.5) -> bool:
    """Ground-truth match of the chosen response.

    Uses the bundle's recorded ``matched`` flag if present, otherwise token
    recall of the chosen response against ``answer`` thresholded at
    ``match_beta``.
    """
    if bundle.matched is not None:
        return bool(bundle.matched)
    if bundle.answer is None or not bundle.responses:
        raise ScoreInputError(f"bundle {bundle.id!r}: needs 'matched' or 'answer' plus responses")
    return thresholded_match(token_recall(bundle.responses[chosen_index], bundle.answer), match_beta)


def parse_response_bundles(source) -> list[ResponseBundle]:
    bundles = []
    for lineno, line in _iter_lines(source):
        if not line or line.startswith("#"):
            continue
        obj = _decode_object(lineno, line)
        if not isinstance(obj.get("id"), str):
            raise ParseError(lineno, "field 'id' must be a string")
        probs = obj.get("match_token_probs")
        try:
            if probs is not None:
                probs = {int(t): float(p) for t, p in probs.items()}
            bundles.append(ResponseBundle(
                id=obj["id"],
                question=obj.get("question", ""),
                responses=tuple(obj.get("responses", ())),
                pairwise_similarities=obj.get("pairwise_similarities"),
                reference_similarities=obj.get("reference_similarities"),
                match_token_probs=probs,
                logprob=obj.get("logprob"),
                matched=obj.get("matched"),
                answer=obj.get("answer"),
            ))
        except ValidationError as exc:
            raise ValidationError(f"line {lineno}: {exc}") from None
        except (TypeError, ValueError, AttributeError) as exc:
            raise ParseError(lineno, str(exc)) from None
    return bundles


def serialize_response_bundle(bundle: ResponseBundle) -> str:
    obj = {"id": bundle.id, "question": bundle.question, "responses": list(bundle.responses)}
    if bundle.pairwise_similarities is not None:
        obj["pairwise_similarities"] = bundle.pairwise_similarities.tolist()
    if bundle.reference_similarities is not None:
        obj["reference_similarities"] = list(bundle.reference_similarities)
    if bundle.match_token_probs is not None:
        obj["match_token_probs"] = {str(t): p for t, p in bundle.match_token_probs.items()}
    for name in ("logprob", "matched", "answer"):
        if getattr(bundle, name) is not None:
            obj[name] = getattr(bundle, name)
    return json.dumps(obj)
