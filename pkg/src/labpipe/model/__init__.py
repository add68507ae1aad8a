"""Shared domain model: types, template compilation, validation, file-ID expansion."""

from .fileid import BUILTIN_NAMES, check_pattern, expand_file_id, sanitize
from .templates import compile_protocol, compile_template, validate_submission
from .timeutil import epoch_to_rfc3339, format_rfc3339, normalize_rfc3339, now_rfc3339, parse_rfc3339
from .types import (
    CollectionProtocol,
    Constraints,
    ErrorCode,
    FieldKind,
    FieldSpec,
    FileArtifact,
    FormTemplate,
    LinkageRecord,
    LinkMethod,
    MetadataRecord,
    SamplingMode,
    ValidationError,
    ValidationFailure,
)

__all__ = [
    "BUILTIN_NAMES",
    "CollectionProtocol",
    "Constraints",
    "ErrorCode",
    "FieldKind",
    "FieldSpec",
    "FileArtifact",
    "FormTemplate",
    "LinkMethod",
    "LinkageRecord",
    "MetadataRecord",
    "SamplingMode",
    "ValidationError",
    "ValidationFailure",
    "check_pattern",
    "compile_protocol",
    "compile_template",
    "epoch_to_rfc3339",
    "expand_file_id",
    "format_rfc3339",
    "normalize_rfc3339",
    "now_rfc3339",
    "parse_rfc3339",
    "sanitize",
    "validate_submission",
]
