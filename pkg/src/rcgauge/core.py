"""Shared domain types, configuration, and the canonical tokenizer.

Everything in this module is immutable after construction and safe to share
across worker threads.
"""

from __future__ import annotations

import hashlib
import re
import unicodedata
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

LABEL_COMPLEX = "complex"
LABEL_NOT_COMPLEX = "not_complex"
LABELS = (LABEL_COMPLEX, LABEL_NOT_COMPLEX)

DOC_SOURCES = ("wikipedia", "msmarco", "custom")
RETRIEVER_KINDS = ("bm25", "hybrid")
SCORER_BACKENDS = ("lexical", "remote")

DEFAULT_T_ANS = 0.15
DEFAULT_T_COM = 0.80
DEFAULT_TOP_K = 10
DEFAULT_FUSION_K = 60
DEFAULT_EPSILON_REL = 1e-6

ENV_PREFIX = "RCGAUGE_"

# Splitting on [\W_] keeps unicode letters/digits and drops underscores,
# so tokens never contain their own separators (tokenize is idempotent).
_TOKEN_SPLIT = re.compile(r"[\W_]+")


class RcgaugeError(Exception):
    """Base class for errors raised by this package."""


class ConfigError(RcgaugeError, ValueError):
    """Config file cannot be parsed or violates a field invariant."""


def tokenize(text: str) -> list[str]:
    """Split text into normalized tokens.

    NFKC-normalizes, lowercases, then splits on runs of non-alphanumeric
    characters (underscore included), dropping empty pieces. Deterministic
    across runs and platforms; an empty input yields an empty list.
    """
    normalized = unicodedata.normalize("NFKC", text).lower()
    return [t for t in _TOKEN_SPLIT.split(normalized) if t]


@dataclass(frozen=True)
class Question:
    """A question with its stable tokenization."""

    id: str
    raw_text: str
    tokens: tuple[str, ...]

    def __post_init__(self) -> None:
        if not self.tokens:
            raise ValueError(f"question {self.id!r} has no tokens")
        if tuple(tokenize(self.raw_text)) != self.tokens:
            raise ValueError(
                f"question {self.id!r}: tokens do not match canonical tokenization"
            )

    @classmethod
    def from_text(cls, question_id: str, raw_text: str) -> "Question":
        return cls(id=question_id, raw_text=raw_text, tokens=tuple(tokenize(raw_text)))


@dataclass(frozen=True)
class Document:
    """One corpus document."""

    doc_id: str
    text: str
    source: str = "custom"

    def __post_init__(self) -> None:
        if not self.doc_id:
            raise ValueError("document id must be non-empty")
        if not self.text:
            raise ValueError(f"document {self.doc_id!r} has empty text")
        if self.source not in DOC_SOURCES:
            raise ValueError(
                f"document {self.doc_id!r}: unknown source {self.source!r} "
                f"(expected one of {DOC_SOURCES})"
            )


@dataclass(frozen=True)
class ReferenceSet:
    """Gold answer strings a document is scored against."""

    references: tuple[str, ...]

    def __post_init__(self) -> None:
        if not self.references:
            raise ValueError("reference set must contain at least one answer")
        for ref in self.references:
            if not tokenize(ref):
                raise ValueError(f"reference {ref!r} is empty after normalization")

    @classmethod
    def of(cls, *references: str) -> "ReferenceSet":
        return cls(tuple(references))


@dataclass(frozen=True)
class Thresholds:
    """Decision thresholds for the answerability and completeness bits."""

    t_ans: float = DEFAULT_T_ANS
    t_com: float = DEFAULT_T_COM

    def __post_init__(self) -> None:
        for name, value in (("t_ans", self.t_ans), ("t_com", self.t_com)):
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {value}")


@dataclass(frozen=True)
class PipelineConfig:
    """Validated pipeline settings.

    ``index_path``, ``scorer_url`` and ``llm_url`` are optional deployment
    wiring; the remaining fields control the pipeline math.
    """

    thresholds: Thresholds = field(default_factory=Thresholds)
    top_k: int = DEFAULT_TOP_K
    retriever: str = "bm25"
    scorer_backend: str = "lexical"
    fusion_k: int = DEFAULT_FUSION_K
    epsilon_rel: float = DEFAULT_EPSILON_REL
    index_path: str | None = None
    scorer_url: str | None = None
    llm_url: str | None = None

    def __post_init__(self) -> None:
        if self.top_k < 1:
            raise ValueError(f"top_k must be >= 1, got {self.top_k}")
        if self.fusion_k < 1:
            raise ValueError(f"fusion_k must be >= 1, got {self.fusion_k}")
        if not 0.0 < self.epsilon_rel < 1.0:
            raise ValueError(f"epsilon_rel must be in (0, 1), got {self.epsilon_rel}")
        if self.retriever not in RETRIEVER_KINDS:
            raise ValueError(
                f"retriever must be one of {RETRIEVER_KINDS}, got {self.retriever!r}"
            )
        if self.scorer_backend not in SCORER_BACKENDS:
            raise ValueError(
                f"scorer_backend must be one of {SCORER_BACKENDS}, "
                f"got {self.scorer_backend!r}"
            )

    def digest(self) -> str:
        """Stable hash of the effective configuration."""
        lines = "\n".join(f"{k}={v}" for k, v in sorted(self.as_dict().items()))
        return hashlib.sha256(lines.encode("utf-8")).hexdigest()[:16]

    def as_dict(self) -> dict[str, object]:
        return {
            "t_ans": self.thresholds.t_ans,
            "t_com": self.thresholds.t_com,
            "top_k": self.top_k,
            "retriever": self.retriever,
            "scorer_backend": self.scorer_backend,
            "fusion_k": self.fusion_k,
            "epsilon_rel": self.epsilon_rel,
            "index_path": self.index_path,
            "scorer_url": self.scorer_url,
            "llm_url": self.llm_url,
        }


_FLOAT_KEYS = ("t_ans", "t_com", "epsilon_rel")
_INT_KEYS = ("top_k", "fusion_k")
_STR_KEYS = ("retriever", "scorer_backend", "index_path", "scorer_url", "llm_url")
CONFIG_KEYS = _FLOAT_KEYS + _INT_KEYS + _STR_KEYS


def _parse_config_text(text: str, origin: str) -> dict[str, str]:
    values: dict[str, str] = {}
    for lineno, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{origin}:{lineno}: expected 'key = value', got {line!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if key not in CONFIG_KEYS:
            raise ConfigError(f"{origin}:{lineno}: unknown config key {key!r}")
        if key in values:
            raise ConfigError(f"{origin}:{lineno}: duplicate config key {key!r}")
        values[key] = value
    return values


def _coerce(key: str, value: str) -> float | int | str:
    try:
        if key in _FLOAT_KEYS:
            return float(value)
        if key in _INT_KEYS:
            return int(value)
    except ValueError:
        raise ConfigError(f"config key {key!r}: cannot parse {value!r}") from None
    return value


def load_config(
    path: str | Path | None = None,
    env: Mapping[str, str] | None = None,
) -> PipelineConfig:
    """Build a PipelineConfig from a flat key-value file.

    Missing keys fall back to defaults. Unknown keys are an error. When
    ``env`` is given, variables named ``RCGAUGE_<KEY>`` override file values
    using the same parsing and validation.
    """
    values: dict[str, str] = {}
    if path is not None:
        path = Path(path)
        values = _parse_config_text(path.read_text(encoding="utf-8"), str(path))
    if env is not None:
        for key in CONFIG_KEYS:
            env_value = env.get(ENV_PREFIX + key.upper())
            if env_value is not None:
                values[key] = env_value

    coerced = {key: _coerce(key, value) for key, value in values.items()}

    threshold_kwargs = {k: coerced.pop(k) for k in ("t_ans", "t_com") if k in coerced}
    try:
        thresholds = Thresholds(**threshold_kwargs)  # type: ignore[arg-type]
        return PipelineConfig(thresholds=thresholds, **coerced)  # type: ignore[arg-type]
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
