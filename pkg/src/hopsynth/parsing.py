"""Parsers for the structured text grammars emitted by model providers.

Two grammars are supported (full grammar reference in docs/formats.md):

* delimited tuples -- parts shaped ``("tag"<|>field<|>...)`` joined by
  a literal `` ## `` and terminated by the ``<|COMPLETE|>`` sentinel;
* sectioned text -- ``HEADER:`` lines opening bodies that run until the
  next recognized header.

Parsers tolerate surrounding whitespace and optional quoting but never
a missing sentinel or header: a malformed completion is a hard failure,
which downstream stages rely on as a supervision signal.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

COMPLETE_SENTINEL = "<|COMPLETE|>"
FIELD_SEP = "<|>"
PART_SEP = " ## "


class MalformedOutput(Exception):
    """Raised when a completion does not match its expected grammar."""


@dataclass(frozen=True)
class TupleRecord:
    tag: str
    fields: tuple[str, ...]


@dataclass(frozen=True)
class DecisionSentinel:
    """Leading decision line (e.g. NONE / INVALID_BRIDGE_CONNECTION) plus reason."""

    decision: str
    reason: str


def _strip_quotes(s: str) -> str:
    s = s.strip()
    if len(s) >= 2 and s[0] == s[-1] and s[0] in ("'", '"'):
        return s[1:-1]
    return s


def parse_delimited_tuples(raw: str) -> list[TupleRecord]:
    """Parse a `` ## ``-joined list of tuple parts ending in ``<|COMPLETE|>``.

    Each part must look like ``("tag"<|>field<|>...)``; the first field is
    the tag. Fields are stripped of whitespace and one pair of matching
    quotes. Raises MalformedOutput on a missing sentinel or on any part
    whose parentheses do not balance (the part index is reported).
    """
    text = raw.strip()
    if not text.endswith(COMPLETE_SENTINEL):
        raise MalformedOutput(f"missing {COMPLETE_SENTINEL} sentinel")
    text = text[: -len(COMPLETE_SENTINEL)].strip()
    if not text:
        return []
    records: list[TupleRecord] = []
    for i, part in enumerate(text.split(PART_SEP)):
        part = part.strip()
        if not (part.startswith("(") and part.endswith(")")):
            raise MalformedOutput(f"part {i}: unbalanced parentheses: {part!r}")
        fields = [_strip_quotes(f) for f in part[1:-1].split(FIELD_SEP)]
        if not fields or not fields[0]:
            raise MalformedOutput(f"part {i}: empty tag")
        records.append(TupleRecord(tag=fields[0], fields=tuple(fields[1:])))
    return records


def format_delimited_tuples(records: Iterable[TupleRecord]) -> str:
    """Inverse of parse_delimited_tuples for well-formed records."""
    parts = []
    for rec in records:
        fields = FIELD_SEP.join(f'"{f}"' for f in (rec.tag, *rec.fields))
        parts.append(f"({fields})")
    return PART_SEP.join(parts) + COMPLETE_SENTINEL


def parse_sectioned(
    raw: str,
    schema: Sequence[str],
    optional: Iterable[str] = (),
    sentinels: Iterable[str] = (),
) -> dict[str, str] | DecisionSentinel:
    """Split text into bodies keyed by the colon-terminated headers in `schema`.

    Headers are matched case-sensitively at line starts; a body is the text
    (same line after the colon plus following lines) up to the next
    recognized header, stripped. If the first non-empty line equals one of
    `sentinels`, a DecisionSentinel is returned instead, its reason taken
    from a ``Reason:`` line when present. Missing non-optional headers raise
    MalformedOutput listing the absent keys.
    """
    if not schema:
        raise ValueError("schema must be non-empty")
    lines = raw.splitlines()

    sentinel_set = set(sentinels)
    for line in lines:
        stripped = line.strip()
        if not stripped:
            continue
        if stripped in sentinel_set:
            reason = ""
            for rest in lines[lines.index(line) + 1 :]:
                r = rest.strip()
                if r.startswith("Reason:"):
                    reason = r[len("Reason:") :].strip()
                    break
            return DecisionSentinel(decision=stripped, reason=reason)
        break

    sections: dict[str, list[str]] = {}
    current: str | None = None
    for line in lines:
        matched = None
        stripped = line.strip()
        for key in schema:
            if stripped.startswith(key + ":"):
                matched = key
                break
        if matched is not None:
            current = matched
            remainder = stripped[len(matched) + 1 :].strip()
            sections[current] = [remainder] if remainder else []
        elif current is not None:
            sections[current].append(line)

    optional_set = set(optional)
    missing = [k for k in schema if k not in sections and k not in optional_set]
    if missing:
        raise MalformedOutput(f"missing sections: {', '.join(missing)}")

    out: dict[str, str] = {}
    for key in schema:
        if key in sections:
            out[key] = "\n".join(sections[key]).strip()
        elif key in optional_set:
            out[key] = ""
    return out


def format_sectioned(sections: Mapping[str, str]) -> str:
    """Inverse of parse_sectioned for bodies free of recognized headers."""
    blocks = []
    for key, body in sections.items():
        blocks.append(f"{key}:\n{body}" if body else f"{key}:")
    return "\n".join(blocks)


# -- normalization helpers shared by containment rules across pipelines --

_PUNCT = set("!\"#$%&'()*+,-./:;<=>?@[\\]^_`{|}~")


def normalize_entity(s: str) -> str:
    """Casefold, map punctuation to spaces, collapse whitespace."""
    s = "".join(" " if ch in _PUNCT else ch for ch in s.casefold())
    return " ".join(s.split())


def contains_normalized(haystack: str, needle: str) -> bool:
    n = normalize_entity(needle)
    return bool(n) and n in normalize_entity(haystack)
