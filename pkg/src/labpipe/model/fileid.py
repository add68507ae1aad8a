"""File-ID pattern expansion.

Patterns are literal text with `{name}` placeholders. A placeholder names a
template field or one of the builtins (seq, date, site, study). The seq
builtin accepts a zero-pad width: `{seq:3}` renders 7 as "007" and widens
(never truncates) when the counter outgrows the width.
"""

from __future__ import annotations

import re
from typing import Any, Iterable

from .types import ErrorCode, ValidationError, ValidationFailure

BUILTIN_NAMES = frozenset({"seq", "date", "site", "study"})

_PLACEHOLDER_RE = re.compile(r"\{([a-z][a-z0-9_]*)(?::([0-9]+))?\}")
_SAFE_CHAR_RE = re.compile(r"[^A-Za-z0-9._-]")


def pattern_placeholders(pattern: str) -> list[tuple[str, int | None]]:
    """Extract (name, width) pairs; raises ValidationFailure on malformed syntax."""
    out: list[tuple[str, int | None]] = []
    pos = 0
    for m in _PLACEHOLDER_RE.finditer(pattern):
        literal = pattern[pos:m.start()]
        if "{" in literal or "}" in literal:
            raise ValidationFailure([_bad(pattern, "unbalanced braces")])
        out.append((m.group(1), int(m.group(2)) if m.group(2) else None))
        pos = m.end()
    tail = pattern[pos:]
    if "{" in tail or "}" in tail:
        raise ValidationFailure([_bad(pattern, "unbalanced braces")])
    return out


def check_pattern(pattern: str, field_names: Iterable[str]) -> list[ValidationError]:
    """All problems with a pattern relative to the declared fields."""
    try:
        refs = pattern_placeholders(pattern)
    except ValidationFailure as exc:
        return list(exc.errors)
    known = set(field_names) | BUILTIN_NAMES
    errors = []
    for name, _ in refs:
        if name not in known:
            errors.append(_bad(pattern, f"placeholder '{name}' names no field or builtin"))
    return errors


def sanitize(text: str) -> str:
    return _SAFE_CHAR_RE.sub("_", text)


def expand_file_id(pattern: str, values: dict[str, Any], builtins: dict[str, Any]) -> str:
    """Deterministic expansion of `pattern` over values and builtins."""
    pieces: list[str] = []
    pos = 0
    for m in _PLACEHOLDER_RE.finditer(pattern):
        pieces.append(pattern[pos:m.start()])
        name, width = m.group(1), m.group(2)
        if name in builtins:
            raw = builtins[name]
        elif name in values:
            raw = values[name]
        else:
            raise ValidationFailure([_bad(pattern, f"unresolved placeholder '{name}'")])
        if name == "seq" and width is not None:
            pieces.append(f"{int(raw):0{int(width)}d}")
        else:
            pieces.append(str(raw))
        pos = m.end()
    pieces.append(pattern[pos:])
    return sanitize("".join(pieces))


def _bad(pattern: str, why: str) -> ValidationError:
    return ValidationError(field="", code=ErrorCode.BAD_PATTERN,
                           message=f"pattern {pattern!r}: {why}")
