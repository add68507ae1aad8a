"""Notification dispatch: subscription matching and delivery plugins."""

from .dispatch import DeliveryRecord, Notifier, Subscription, match_topic
from .plugins import CaptureSink, EmailPlugin, NotifyPlugin, PluginRegistry, default_registry

__all__ = [
    "CaptureSink",
    "DeliveryRecord",
    "EmailPlugin",
    "Notifier",
    "NotifyPlugin",
    "PluginRegistry",
    "Subscription",
    "default_registry",
    "match_topic",
]
