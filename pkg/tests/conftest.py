"""Shared fixtures: the bundled fixture corpus and a scripted LLM client.

The whole suite must run without network access, so an autouse session
fixture replaces the socket connect entry points with functions that raise.
HTTP client behavior is tested through in-memory mock transports instead.
"""
from __future__ import annotations

import socket
from pathlib import Path

import pytest

from crossrag.config import client_for, load_config
from crossrag.kb import Registry, load_manifest

DATA_DIR = Path(__file__).parent / "data"


def _refuse_network(*args, **kwargs):
    raise RuntimeError("network access is disabled for the test suite")


@pytest.fixture(scope="session", autouse=True)
def no_network():
    saved = (socket.socket.connect, socket.socket.connect_ex,
             socket.create_connection)
    socket.socket.connect = _refuse_network
    socket.socket.connect_ex = _refuse_network
    socket.create_connection = _refuse_network
    try:
        yield
    finally:
        (socket.socket.connect, socket.socket.connect_ex,
         socket.create_connection) = saved


@pytest.fixture(scope="session")
def data_dir() -> Path:
    return DATA_DIR


@pytest.fixture(scope="session")
def registry() -> Registry:
    return load_manifest(DATA_DIR / "manifest.json")


@pytest.fixture(scope="session")
def scripted_config():
    return load_config(DATA_DIR / "config_scripted.json")


@pytest.fixture()
def scripted_client(scripted_config):
    return client_for(scripted_config, "scripted-demo")
