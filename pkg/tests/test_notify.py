"""Subscription matching, delivery plugins and failure isolation."""

import pytest

from labpipe.notify import CaptureSink, Notifier, PluginRegistry, Subscription, match_topic
from labpipe.notify.plugins import render_message
from labpipe.server.errors import ValidationRejected

from conftest import install_demo_configs
from test_server_records import ingest


class TestMatch:
    @pytest.mark.parametrize("topic,pattern,expected", [
        ("sample.collected.EMBER", "sample.collected.*", True),
        ("sample.collected.EMBER", "sample.collected.EMBER", True),
        ("sample.collected.EMBER", "sample.collected.OTHER", False),
        ("file.committed", "sample.*", False),
        ("sample.collected.EMBER.extra", "sample.collected.*", True),
        ("sample", "sample.*", True),
        ("sample.collected", "sample.collected", True),
    ])
    def test_patterns(self, topic, pattern, expected):
        assert match_topic(topic, pattern) is expected

    def test_empty_subscription_set(self):
        notifier = Notifier(PluginRegistry())
        assert notifier.publish("sample.collected.X", {}, []) == 0


class FailingPlugin:
    def send(self, topic, event, params):
        raise RuntimeError("boom")


class TestDeliver:
    def sub(self, plugin="capture", pattern="sample.collected.*"):
        return Subscription("s1", pattern, plugin, {"recipients": ["a@b"]})

    def test_capture_sink_receives_rendered_message(self):
        reg = PluginRegistry()
        sink = CaptureSink()
        reg.register("capture", sink)
        notifier = Notifier(reg)
        n = notifier.publish("sample.collected.EMBER",
                             {"study": "EMBER", "protocol_id": "p1",
                              "collector": "nurse1", "at": "t", "file_count": 0},
                             [self.sub()])
        assert n == 1
        assert len(sink.messages) == 1
        assert "Protocol: p1" in sink.messages[0]["body"]

    def test_plugin_failure_recorded_not_raised(self):
        reg = PluginRegistry()
        reg.register("bad", FailingPlugin())
        notifier = Notifier(reg)
        n = notifier.publish("sample.collected.EMBER", {}, [self.sub(plugin="bad")])
        assert n == 1
        rec, = notifier.deliveries
        assert rec.status == "failed" and "boom" in rec.detail

    def test_no_matching_subscriptions(self):
        reg = PluginRegistry()
        reg.register("capture", CaptureSink())
        notifier = Notifier(reg)
        n = notifier.publish("file.committed.X", {}, [self.sub(pattern="sample.*")])
        assert n == 0 and notifier.deliveries == []

    def test_render_template_fields(self):
        body = render_message({"study": "EMBER", "protocol_id": "p", "collector": "c",
                               "at": "2024-03-01T10:00:00.000Z", "file_count": 2})
        for needle in ("EMBER", "p", "c", "2024-03-01", "2"):
            assert needle in body


class TestServerIntegration:
    def test_ingest_dispatches_to_subscription(self, lab, admin, capture):
        install_demo_configs(lab, admin)
        lab.upsert_config(admin, "subscription", "notify_ember", {
            "topic_pattern": "sample.collected.*", "plugin": "capture", "params": {}})
        ingest(lab, admin, "key-1")
        assert len(capture.messages) == 1
        assert "ember_gcms_site1" in capture.messages[0]["body"]

    def test_replayed_ingest_does_not_redispatch(self, lab, admin, capture):
        install_demo_configs(lab, admin)
        lab.upsert_config(admin, "subscription", "notify_ember", {
            "topic_pattern": "sample.collected.*", "plugin": "capture", "params": {}})
        ingest(lab, admin, "key-1")
        ingest(lab, admin, "key-1")
        assert len(capture.messages) == 1

    def test_failing_plugin_never_fails_ingest(self, lab, admin):
        install_demo_configs(lab, admin)
        lab.notifier.registry.register("always_fails", FailingPlugin())
        lab.upsert_config(admin, "subscription", "bad_sub", {
            "topic_pattern": "sample.collected.*", "plugin": "always_fails", "params": {}})
        out = ingest(lab, admin, "key-1")
        assert out["status"] == "created"
        errs = [e for e in lab.audit.read() if e["outcome"] == "error"]
        assert errs and "boom" in errs[-1]["detail"]

    def test_unregistered_plugin_rejected_at_subscription_time(self, lab, admin):
        with pytest.raises(ValidationRejected):
            lab.upsert_config(admin, "subscription", "s", {
                "topic_pattern": "sample.*", "plugin": "nope", "params": {}})

    def test_email_subscription_requires_recipients(self, lab, admin):
        lab.notifier.registry.register("email", CaptureSink())  # stand-in transport
        with pytest.raises(ValidationRejected):
            lab.upsert_config(admin, "subscription", "s", {
                "topic_pattern": "sample.*", "plugin": "email", "params": {}})
