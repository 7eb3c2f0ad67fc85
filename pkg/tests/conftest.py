"""Shared fixtures: no network, synthetic fixtures, in-process stub clients."""

from __future__ import annotations

import socket
from pathlib import Path

import httpx
import pytest

from sanjeh.config import parse_config
from sanjeh.synthetic import build_synthetic_fixture


class NetworkBlocked(RuntimeError):
    pass


@pytest.fixture(autouse=True)
def no_network(monkeypatch):
    """Any outbound socket connection fails the test."""
    def guard(*args, **kwargs):
        raise NetworkBlocked(f"network access attempted: {args!r}")

    monkeypatch.setattr(socket.socket, "connect", guard)
    monkeypatch.setattr(socket.socket, "connect_ex", guard)
    monkeypatch.setattr(socket, "create_connection", guard)
    monkeypatch.setattr(socket, "getaddrinfo", guard)


@pytest.fixture
def fixture_dir(tmp_path) -> Path:
    """Small synthetic replay fixture: 2 models, fa + en, 96 categories, 2 trials."""
    build_synthetic_fixture(tmp_path / "fx", trials=2)
    return tmp_path / "fx"


@pytest.fixture
def stub_http():
    """Factory for AsyncClients bound to an in-process ASGI app."""
    def make(app) -> httpx.AsyncClient:
        return httpx.AsyncClient(transport=httpx.ASGITransport(app=app),
                                 base_url="http://stub")
    return make


@pytest.fixture
def stub_config(tmp_path):
    """Factory for record-mode configs pointed at the in-process stub."""
    def make(**overrides):
        raw = {
            "models": [{"model_id": "stub-chat", "adapter": "openai",
                        "base_url": "http://stub/v1", "requests_per_minute": 6000}],
            "oracles": [
                {"oracle_id": "A", "adapter": "genderize",
                 "base_url": "http://stub/genderize", "requests_per_minute": 6000},
                {"oracle_id": "B", "adapter": "namsor",
                 "base_url": "http://stub/namsor", "requests_per_minute": 6000},
            ],
            "languages": ["en"],
            "trials_per_category": 1,
            "mode": "record",
            "trace_path": "trace.jsonl",
            "out_dir": "report",
            "transport_backoff_s": 0.0,
        }
        raw.update(overrides)
        return parse_config(raw, base_dir=tmp_path)
    return make
