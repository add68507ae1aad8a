"""Form-template compilation and submission validation.

Both the server and the agent run the same code here: the agent validates at
the point of entry, the server re-validates on ingest and never trusts the
client.
"""

from __future__ import annotations

import re
from typing import Any

from . import timeutil
from .fileid import check_pattern
from .types import (
    CollectionProtocol,
    Constraints,
    ErrorCode,
    FieldKind,
    FieldSpec,
    FormTemplate,
    LinkMethod,
    SamplingMode,
    ValidationError,
    ValidationFailure,
)

_NAME_RE = re.compile(r"^[a-z][a-z0-9_]*$")
_NUMERIC_KINDS = (FieldKind.INTEGER, FieldKind.DECIMAL)
_TEXTUAL_KINDS = (FieldKind.TEXT, FieldKind.BARCODE)


def compile_template(raw: dict) -> FormTemplate:
    """Build a FormTemplate from a parsed document.

    Raises ValidationFailure carrying every violation found, not just the first.
    """
    errors: list[ValidationError] = []
    template_id = raw.get("template_id")
    if not isinstance(template_id, str) or not template_id:
        errors.append(_terr("template_id missing or not a string"))
        template_id = ""
    version = raw.get("version", 1)
    if not isinstance(version, int) or isinstance(version, bool) or version < 1:
        errors.append(_terr("version must be a positive integer"))
        version = 1

    fields: list[FieldSpec] = []
    seen: set[str] = set()
    raw_fields = raw.get("fields", [])
    if not isinstance(raw_fields, list):
        errors.append(_terr("fields must be a list"))
        raw_fields = []
    for i, rf in enumerate(raw_fields):
        spec, ferrs = _compile_field(rf, i)
        errors.extend(ferrs)
        if spec is None:
            continue
        if spec.name in seen:
            errors.append(ValidationError(spec.name, ErrorCode.UNKNOWN_FIELD,
                                          f"duplicate field name '{spec.name}'"))
            continue
        seen.add(spec.name)
        fields.append(spec)

    pattern = raw.get("file_id_pattern", "")
    if not isinstance(pattern, str):
        errors.append(_terr("file_id_pattern must be a string"))
        pattern = ""
    errors.extend(check_pattern(pattern, (f.name for f in fields)))

    kinds = raw.get("expected_file_kinds", [])
    if not isinstance(kinds, list) or not all(isinstance(k, str) for k in kinds):
        errors.append(_terr("expected_file_kinds must be a list of glob strings"))
        kinds = []

    if errors:
        raise ValidationFailure(errors)
    return FormTemplate(template_id=template_id, version=version, fields=tuple(fields),
                        file_id_pattern=pattern, expected_file_kinds=tuple(kinds))


def _compile_field(rf: Any, index: int) -> tuple[FieldSpec | None, list[ValidationError]]:
    if not isinstance(rf, dict):
        return None, [_terr(f"field #{index} is not an object")]
    errors: list[ValidationError] = []
    name = rf.get("name", "")
    if not isinstance(name, str) or not _NAME_RE.match(name):
        errors.append(ValidationError(str(name), ErrorCode.UNKNOWN_FIELD,
                                      f"field name {name!r} must match [a-z][a-z0-9_]*"))
        return None, errors
    try:
        kind = FieldKind(rf.get("kind"))
    except ValueError:
        errors.append(ValidationError(name, ErrorCode.WRONG_KIND,
                                      f"unknown field kind {rf.get('kind')!r}"))
        return None, errors

    rc = rf.get("constraints", {}) or {}
    if not isinstance(rc, dict):
        errors.append(ValidationError(name, ErrorCode.CONSTRAINT_VIOLATION,
                                      "constraints must be an object"))
        rc = {}
    choices = tuple(str(c) for c in rc.get("choices", []))
    regex = rc.get("regex")
    if regex is not None:
        try:
            re.compile(regex)
        except re.error as exc:
            errors.append(ValidationError(name, ErrorCode.CONSTRAINT_VIOLATION,
                                          f"bad regex: {exc}"))
            regex = None
    constraints = Constraints(
        min_value=rc.get("min"),
        max_value=rc.get("max"),
        regex=regex,
        choices=choices,
    )
    if kind is FieldKind.ENUM_CHOICE and not choices:
        errors.append(ValidationError(name, ErrorCode.CONSTRAINT_VIOLATION,
                                      "enum_choice requires a non-empty choice list"))
    if kind is not FieldKind.ENUM_CHOICE and choices:
        errors.append(ValidationError(name, ErrorCode.CONSTRAINT_VIOLATION,
                                      f"kind {kind.value} does not accept a choice list"))
    if errors:
        return None, errors
    spec = FieldSpec(name=name, label=str(rf.get("label", name)), kind=kind,
                     required=bool(rf.get("required", False)), constraints=constraints)
    return spec, []


def template_to_doc(t: FormTemplate) -> dict:
    return t.to_dict()


def validate_submission(template: FormTemplate, values: dict[str, Any]) -> dict[str, Any]:
    """Coerce `values` against the template; raises ValidationFailure listing
    one error per violated field."""
    errors: list[ValidationError] = []
    typed: dict[str, Any] = {}
    fields = template.field_map()

    for name in values:
        if name not in fields:
            errors.append(ValidationError(name, ErrorCode.UNKNOWN_FIELD,
                                          f"no field named '{name}' in template"))
    for spec in template.fields:
        if spec.name not in values or values[spec.name] is None or values[spec.name] == "":
            if spec.required:
                errors.append(ValidationError(spec.name, ErrorCode.MISSING_REQUIRED,
                                              f"required field '{spec.name}' is missing"))
            continue
        raw = values[spec.name]
        try:
            coerced = _coerce(spec, raw)
        except _Wrong as exc:
            errors.append(ValidationError(spec.name, ErrorCode.WRONG_KIND, str(exc)))
            continue
        verr = _check_constraints(spec, coerced)
        if verr is not None:
            errors.append(verr)
            continue
        typed[spec.name] = coerced

    if errors:
        raise ValidationFailure(errors)
    return typed


class _Wrong(Exception):
    pass


def _coerce(spec: FieldSpec, raw: Any) -> Any:
    kind = spec.kind
    if kind in _TEXTUAL_KINDS or kind is FieldKind.ENUM_CHOICE:
        if not isinstance(raw, str):
            raise _Wrong(f"expected text, got {type(raw).__name__}")
        return raw
    if kind is FieldKind.INTEGER:
        if isinstance(raw, bool):
            raise _Wrong("expected integer, got boolean")
        if isinstance(raw, int):
            return raw
        if isinstance(raw, str):
            try:
                return int(raw.strip(), 10)
            except ValueError:
                raise _Wrong(f"not an integer: {raw!r}") from None
        raise _Wrong(f"expected integer, got {type(raw).__name__}")
    if kind is FieldKind.DECIMAL:
        if isinstance(raw, bool):
            raise _Wrong("expected decimal, got boolean")
        if isinstance(raw, (int, float)):
            return float(raw)
        if isinstance(raw, str):
            try:
                return float(raw.strip())
            except ValueError:
                raise _Wrong(f"not a decimal: {raw!r}") from None
        raise _Wrong(f"expected decimal, got {type(raw).__name__}")
    if kind is FieldKind.BOOLEAN:
        if isinstance(raw, bool):
            return raw
        if isinstance(raw, str) and raw.strip().lower() in ("true", "false"):
            return raw.strip().lower() == "true"
        raise _Wrong(f"expected boolean, got {raw!r}")
    if kind is FieldKind.TIMESTAMP:
        if not isinstance(raw, str):
            raise _Wrong(f"expected timestamp string, got {type(raw).__name__}")
        try:
            return timeutil.normalize_rfc3339(raw)
        except ValueError:
            raise _Wrong(f"not an RFC 3339 timestamp: {raw!r}") from None
    raise _Wrong(f"unsupported kind {kind}")


def _check_constraints(spec: FieldSpec, value: Any) -> ValidationError | None:
    c = spec.constraints
    if spec.kind is FieldKind.ENUM_CHOICE and value not in c.choices:
        return ValidationError(spec.name, ErrorCode.CONSTRAINT_VIOLATION,
                               f"{value!r} not in choices {list(c.choices)}")
    if spec.kind in _NUMERIC_KINDS:
        if c.min_value is not None and value < c.min_value:
            return ValidationError(spec.name, ErrorCode.CONSTRAINT_VIOLATION,
                                   f"{value} below minimum {c.min_value}")
        if c.max_value is not None and value > c.max_value:
            return ValidationError(spec.name, ErrorCode.CONSTRAINT_VIOLATION,
                                   f"{value} above maximum {c.max_value}")
    if spec.kind in _TEXTUAL_KINDS and c.regex is not None:
        if not re.fullmatch(c.regex, value):
            return ValidationError(spec.name, ErrorCode.CONSTRAINT_VIOLATION,
                                   f"{value!r} does not match /{c.regex}/")
    return None


def compile_protocol(raw: dict) -> CollectionProtocol:
    """Validate a collection-protocol document."""
    errors: list[ValidationError] = []

    def need(key: str) -> str:
        v = raw.get(key)
        if not isinstance(v, str) or not v:
            errors.append(_terr(f"{key} missing or not a string"))
            return ""
        return v

    protocol_id = need("protocol_id")
    study_id = need("study_id")
    site_id = need("site_id")
    instrument_id = need("instrument_id")
    try:
        mode = SamplingMode(raw.get("sampling_mode", "offline"))
    except ValueError:
        errors.append(_terr(f"unknown sampling_mode {raw.get('sampling_mode')!r}"))
        mode = SamplingMode.OFFLINE
    try:
        link = LinkMethod(raw.get("link_method", "change_detection"))
    except ValueError:
        errors.append(_terr(f"unknown link_method {raw.get('link_method')!r}"))
        link = LinkMethod.CHANGE_DETECTION
    if link is LinkMethod.MANUAL:
        errors.append(_terr("protocols may not declare link_method=manual"))

    tref = raw.get("template", {})
    if (not isinstance(tref, dict) or not isinstance(tref.get("template_id"), str)
            or not isinstance(tref.get("version"), int) or isinstance(tref.get("version"), bool)
            or tref.get("version", 0) < 1):
        errors.append(_terr("template reference requires template_id and positive version"))
        tref = {"template_id": "", "version": 1}

    topics = raw.get("notification_topics", [])
    if not isinstance(topics, list) or not all(isinstance(t, str) for t in topics):
        errors.append(_terr("notification_topics must be a list of strings"))
        topics = []

    if errors:
        raise ValidationFailure(errors)
    return CollectionProtocol(
        protocol_id=protocol_id, study_id=study_id, site_id=site_id,
        instrument_id=instrument_id, sampling_mode=mode,
        template_id=tref["template_id"], template_version=tref["version"],
        watch_directory_hint=str(raw.get("watch_directory_hint", "")),
        notification_topics=tuple(topics), link_method=link)


def _terr(message: str) -> ValidationError:
    return ValidationError(field="", code=ErrorCode.BAD_PATTERN, message=message)
