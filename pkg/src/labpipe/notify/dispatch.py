"""Subscription matching and delivery bookkeeping.

Topic patterns are dot-separated segments matched exactly, with an optional
trailing "*" segment that matches any suffix. Delivery failures are recorded
and never propagate to the caller that published the event.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

from ..model import now_rfc3339
from .plugins import PluginRegistry


@dataclass(frozen=True)
class Subscription:
    subscription_id: str
    topic_pattern: str
    plugin: str
    params: dict = field(default_factory=dict)

    @classmethod
    def from_doc(cls, doc: dict) -> "Subscription":
        return cls(subscription_id=doc["subscription_id"],
                   topic_pattern=doc["topic_pattern"],
                   plugin=doc["plugin"],
                   params=doc.get("params", {}))


@dataclass(frozen=True)
class DeliveryRecord:
    event_id: str
    subscription_id: str
    status: str  # delivered | failed
    attempted_at: str
    detail: str = ""

    def to_dict(self) -> dict:
        return {"event_id": self.event_id, "subscription_id": self.subscription_id,
                "status": self.status, "attempted_at": self.attempted_at,
                "detail": self.detail}


def match_topic(topic: str, pattern: str) -> bool:
    tsegs = topic.split(".")
    psegs = pattern.split(".")
    if psegs and psegs[-1] == "*":
        head = psegs[:-1]
        return len(tsegs) >= len(head) and tsegs[:len(head)] == head
    return tsegs == psegs


def matching(topic: str, subscriptions: list[Subscription]) -> list[Subscription]:
    return [s for s in subscriptions if match_topic(topic, s.topic_pattern)]


class Notifier:
    """Dispatches events to every matching subscription, one attempt each (v1)."""

    def __init__(self, registry: PluginRegistry, on_failure=None):
        self.registry = registry
        self.deliveries: list[DeliveryRecord] = []
        self._event_ids = itertools.count(1)
        self._on_failure = on_failure

    def publish(self, topic: str, event: dict, subscriptions: list[Subscription]) -> int:
        """Returns the number of matched subscriptions (delivery attempts)."""
        event_id = f"evt-{next(self._event_ids)}"
        matched = matching(topic, subscriptions)
        for sub in matched:
            try:
                plugin = self.registry.get(sub.plugin)
                plugin.send(topic, event, sub.params)
            except Exception as exc:  # plugin faults must not reach the API caller
                rec = DeliveryRecord(event_id, sub.subscription_id, "failed",
                                     now_rfc3339(), detail=str(exc))
                if self._on_failure is not None:
                    self._on_failure(topic, sub, exc)
            else:
                rec = DeliveryRecord(event_id, sub.subscription_id, "delivered",
                                     now_rfc3339())
            self.deliveries.append(rec)
        return len(matched)
