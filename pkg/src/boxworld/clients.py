"""Pluggable completion clients for scene proposals, code writing, and tasks.

A client is anything with ``complete(payload: dict) -> dict``.  Production use
points at an HTTP endpoint (JSON POST); tests and offline runs use scripted
clients that replay canned replies.  Endpoints come from the environment:
SCENE_LLM_ENDPOINT, CODE_LLM_ENDPOINT, TASK_LLM_ENDPOINT.
"""

from __future__ import annotations

import json
import os
from pathlib import Path

import requests

SCENE_ENDPOINT_VAR = "SCENE_LLM_ENDPOINT"
CODE_ENDPOINT_VAR = "CODE_LLM_ENDPOINT"
TASK_ENDPOINT_VAR = "TASK_LLM_ENDPOINT"


class ClientError(Exception):
    pass


class HttpClient:
    """POSTs the payload as JSON and returns the decoded JSON reply."""

    def __init__(self, endpoint: str, timeout: float = 60.0):
        self.endpoint = endpoint
        self.timeout = timeout

    def complete(self, payload: dict) -> dict:
        try:
            resp = requests.post(self.endpoint, json=payload, timeout=self.timeout)
            resp.raise_for_status()
            return resp.json()
        except (requests.RequestException, ValueError) as exc:
            raise ClientError(f"request to {self.endpoint} failed: {exc}") from exc


class ScriptedClient:
    """Replays a fixed list of replies; raises when the script runs out."""

    def __init__(self, replies: list[dict]):
        self._replies = list(replies)
        self.requests: list[dict] = []

    @classmethod
    def from_file(cls, path: str | Path) -> "ScriptedClient":
        with open(path, "r", encoding="utf-8") as fh:
            replies = json.load(fh)
        if not isinstance(replies, list):
            raise ClientError(f"{path}: scripted replies must be a JSON list")
        return cls(replies)

    def complete(self, payload: dict) -> dict:
        self.requests.append(payload)
        if not self._replies:
            raise ClientError("scripted client exhausted")
        return self._replies.pop(0)


def client_from_env(var: str):
    """HttpClient if the endpoint env var is set, else None (caller mocks)."""
    endpoint = os.environ.get(var)
    return HttpClient(endpoint) if endpoint else None
