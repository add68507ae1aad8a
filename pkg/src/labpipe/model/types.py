"""Shared domain types used by both the server and the agent."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Optional


class FieldKind(str, Enum):
    TEXT = "text"
    INTEGER = "integer"
    DECIMAL = "decimal"
    BOOLEAN = "boolean"
    ENUM_CHOICE = "enum_choice"
    TIMESTAMP = "timestamp"
    BARCODE = "barcode"


class ErrorCode(str, Enum):
    MISSING_REQUIRED = "missing_required"
    WRONG_KIND = "wrong_kind"
    CONSTRAINT_VIOLATION = "constraint_violation"
    UNKNOWN_FIELD = "unknown_field"
    BAD_PATTERN = "bad_pattern"


@dataclass(frozen=True)
class ValidationError:
    field: str  # empty string for template-level problems
    code: ErrorCode
    message: str

    def to_dict(self) -> dict:
        return {"field": self.field, "code": self.code.value, "message": self.message}


class ValidationFailure(Exception):
    """Raised when compilation or submission validation fails.

    Carries every violation found, never just the first.
    """

    def __init__(self, errors: list[ValidationError]):
        self.errors = errors
        super().__init__("; ".join(f"{e.code.value}({e.field}): {e.message}" for e in errors))


@dataclass(frozen=True)
class Constraints:
    min_value: Optional[float] = None
    max_value: Optional[float] = None
    regex: Optional[str] = None
    choices: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        out: dict[str, Any] = {}
        if self.min_value is not None:
            out["min"] = self.min_value
        if self.max_value is not None:
            out["max"] = self.max_value
        if self.regex is not None:
            out["regex"] = self.regex
        if self.choices:
            out["choices"] = list(self.choices)
        return out


@dataclass(frozen=True)
class FieldSpec:
    name: str
    label: str
    kind: FieldKind
    required: bool = False
    constraints: Constraints = field(default_factory=Constraints)

    def to_dict(self) -> dict:
        doc = {
            "name": self.name,
            "label": self.label,
            "kind": self.kind.value,
            "required": self.required,
        }
        c = self.constraints.to_dict()
        if c:
            doc["constraints"] = c
        return doc


@dataclass(frozen=True)
class FormTemplate:
    template_id: str
    version: int
    fields: tuple[FieldSpec, ...]
    file_id_pattern: str = ""
    expected_file_kinds: tuple[str, ...] = ()

    def field_map(self) -> dict[str, FieldSpec]:
        return {f.name: f for f in self.fields}

    def to_dict(self) -> dict:
        return {
            "template_id": self.template_id,
            "version": self.version,
            "fields": [f.to_dict() for f in self.fields],
            "file_id_pattern": self.file_id_pattern,
            "expected_file_kinds": list(self.expected_file_kinds),
        }


class LinkMethod(str, Enum):
    ID_PATTERN = "id_pattern"
    CHANGE_DETECTION = "change_detection"
    MANUAL = "manual"


class SamplingMode(str, Enum):
    ONLINE = "online"
    OFFLINE = "offline"


@dataclass(frozen=True)
class CollectionProtocol:
    protocol_id: str
    study_id: str
    site_id: str
    instrument_id: str
    sampling_mode: SamplingMode
    template_id: str
    template_version: int
    watch_directory_hint: str = ""
    notification_topics: tuple[str, ...] = ()
    # how the agent binds files: by expanded file id or by change detection
    link_method: LinkMethod = LinkMethod.CHANGE_DETECTION

    def to_dict(self) -> dict:
        return {
            "protocol_id": self.protocol_id,
            "study_id": self.study_id,
            "site_id": self.site_id,
            "instrument_id": self.instrument_id,
            "sampling_mode": self.sampling_mode.value,
            "template": {"template_id": self.template_id, "version": self.template_version},
            "watch_directory_hint": self.watch_directory_hint,
            "notification_topics": list(self.notification_topics),
            "link_method": self.link_method.value,
        }


@dataclass(frozen=True)
class MetadataRecord:
    record_id: str
    idempotency_key: str
    protocol_id: str
    template_id: str
    template_version: int
    values: dict[str, Any]
    collected_at: str  # RFC 3339 UTC, millisecond precision
    collector: str
    session_id: str

    def to_dict(self) -> dict:
        return {
            "record_id": self.record_id,
            "idempotency_key": self.idempotency_key,
            "protocol_id": self.protocol_id,
            "template_id": self.template_id,
            "template_version": self.template_version,
            "values": dict(self.values),
            "collected_at": self.collected_at,
            "collector": self.collector,
            "session_id": self.session_id,
        }


@dataclass(frozen=True)
class FileArtifact:
    artifact_id: str
    generated_file_id: str
    content_hash: str  # sha-256, lowercase hex
    size_bytes: int
    original_path: str
    captured_at: str

    def to_dict(self) -> dict:
        return {
            "artifact_id": self.artifact_id,
            "generated_file_id": self.generated_file_id,
            "content_hash": self.content_hash,
            "size_bytes": self.size_bytes,
            "original_path": self.original_path,
            "captured_at": self.captured_at,
        }


@dataclass(frozen=True)
class LinkageRecord:
    record_id: str
    artifact_id: str
    link_method: LinkMethod

    def to_dict(self) -> dict:
        return {
            "record_id": self.record_id,
            "artifact_id": self.artifact_id,
            "link_method": self.link_method.value,
        }
