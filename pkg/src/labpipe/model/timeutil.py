"""UTC timestamp handling: RFC 3339 with millisecond precision, everywhere."""

from __future__ import annotations

from datetime import datetime, timezone


def now_rfc3339() -> str:
    return format_rfc3339(datetime.now(timezone.utc))


def format_rfc3339(dt: datetime) -> str:
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    dt = dt.astimezone(timezone.utc)
    return dt.strftime("%Y-%m-%dT%H:%M:%S.") + f"{dt.microsecond // 1000:03d}Z"


def parse_rfc3339(value: str) -> datetime:
    """Parse an RFC 3339 timestamp; raises ValueError on anything else."""
    text = value.strip()
    if text.endswith(("Z", "z")):
        text = text[:-1] + "+00:00"
    dt = datetime.fromisoformat(text)
    if dt.tzinfo is None:
        raise ValueError(f"timestamp missing timezone: {value!r}")
    return dt.astimezone(timezone.utc)


def normalize_rfc3339(value: str) -> str:
    return format_rfc3339(parse_rfc3339(value))


def epoch_to_rfc3339(ts: float) -> str:
    return format_rfc3339(datetime.fromtimestamp(ts, tz=timezone.utc))
