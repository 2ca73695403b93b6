"""Chat-completion backends: an HTTP client and a scripted mock."""

from __future__ import annotations

import base64
import json
import logging
import os
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import requests

from ..errors import AgentError, ConfigError

log = logging.getLogger(__name__)

DEFAULT_KEY_ENV = "HARMON_API_KEY"


@dataclass
class BackendConfig:
    endpoint: str = "https://api.openai.com/v1/chat/completions"
    model: str = "gpt-4o"
    api_key_env: str = DEFAULT_KEY_ENV
    timeout: float = 60.0
    max_retries: int = 1


@dataclass(frozen=True)
class ImagePart:
    frame: int
    png: bytes


def data_uri(png: bytes) -> str:
    return "data:image/png;base64," + base64.b64encode(png).decode("ascii")


def build_messages(system: str, text: str, images: Sequence[ImagePart] = ()) -> list[dict]:
    """Chat messages with the prompt text first, then one image part per frame."""
    content = [{"type": "text", "text": text}]
    for img in images:
        content.append({"type": "image_url", "image_url": {"url": data_uri(img.png)}})
    return [
        {"role": "system", "content": [{"type": "text", "text": system}]},
        {"role": "user", "content": content},
    ]


class ChatBackend:
    """Interface: ``complete(role, messages) -> text``."""

    deterministic = False
    max_retries = 1

    def complete(self, role: str, messages: list[dict]) -> str:
        raise NotImplementedError

    def check_ready(self) -> None:
        """Raise ConfigError if the backend cannot be used."""


class HttpChatBackend(ChatBackend):
    """POSTs the de facto chat-completion payload to a configurable endpoint."""

    def __init__(self, config: BackendConfig | None = None, session: requests.Session | None = None):
        self.config = config or BackendConfig()
        self.max_retries = self.config.max_retries
        self._session = session or requests.Session()

    def _key(self) -> str:
        key = os.environ.get(self.config.api_key_env)
        if not key:
            raise ConfigError(f"environment variable {self.config.api_key_env} is not set")
        return key

    def check_ready(self) -> None:
        self._key()

    def payload(self, messages: list[dict]) -> dict:
        return {"model": self.config.model, "messages": messages}

    def complete(self, role: str, messages: list[dict]) -> str:
        headers = {"Authorization": f"Bearer {self._key()}", "Content-Type": "application/json"}
        body = self.payload(messages)
        last = None
        for attempt in range(self.config.max_retries + 1):
            try:
                resp = self._session.post(self.config.endpoint, json=body, headers=headers,
                                          timeout=self.config.timeout)
                if resp.status_code >= 500 or resp.status_code == 429:
                    last = f"HTTP {resp.status_code}"
                    log.warning("%s: %s (attempt %d)", role, last, attempt + 1)
                    time.sleep(min(2.0 ** attempt, 8.0) * 0.1)
                    continue
                if resp.status_code != 200:
                    raise AgentError(f"{role}: HTTP {resp.status_code}: {resp.text[:200]}")
                return extract_text(resp.json())
            except requests.RequestException as exc:
                last = str(exc)
                log.warning("%s: request failed (%s), attempt %d", role, exc, attempt + 1)
            except ValueError as exc:
                raise AgentError(f"{role}: response is not JSON ({exc})") from None
        raise AgentError(f"{role}: backend failed after {self.config.max_retries + 1} attempts: {last}")


def extract_text(response: dict) -> str:
    """Text of the first choice; list-of-parts content is concatenated."""
    try:
        content = response["choices"][0]["message"]["content"]
    except (KeyError, IndexError, TypeError):
        raise AgentError("response has no choices[0].message.content") from None
    if isinstance(content, list):
        return "".join(p.get("text", "") for p in content if isinstance(p, dict))
    if not isinstance(content, str):
        raise AgentError("message content is neither text nor a list of parts")
    return content


def _fence(obj) -> str:
    return "```json\n" + json.dumps(obj, indent=2) + "\n```"


@dataclass
class MockChatBackend(ChatBackend):
    """Replays canned responses keyed by (agent role, call index).

    Script format::

        {"responses": {"judge": ["```json {...} ```", {"aligned": true, ...}, ...], ...}}

    An entry may be a raw string, a JSON object (sent as a fenced block), or
    ``{"response": ..., "expect": "substring"}`` to also check the prompt.
    Running past the end of a role's list is a mismatch and fails the call;
    a failed ``expect`` is only recorded.
    """

    script: dict
    max_retries: int = 1
    calls: dict = field(default_factory=dict)
    mismatches: list = field(default_factory=list)
    deterministic = True

    @classmethod
    def from_file(cls, path: str | Path, max_retries: int = 1) -> "MockChatBackend":
        try:
            script = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read mock script {path}: {exc}") from None
        return cls(script, max_retries=max_retries)

    @classmethod
    def from_transcript(cls, transcript) -> "MockChatBackend":
        responses: dict[str, list] = {}
        for rec in transcript.records:
            responses.setdefault(rec.role, []).append(rec.raw_response)
        return cls({"responses": responses})

    def complete(self, role: str, messages: list[dict]) -> str:
        index = self.calls.get(role, 0)
        self.calls[role] = index + 1
        entries = self.script.get("responses", {}).get(role, [])
        if index >= len(entries):
            self.mismatches.append({"role": role, "index": index, "problem": "no scripted response"})
            raise AgentError(f"mock script has no response #{index} for role {role!r}")
        entry = entries[index]
        if isinstance(entry, dict) and "response" in entry:
            expect = entry.get("expect")
            if expect is not None:
                prompt = json.dumps(messages)
                if expect not in prompt:
                    self.mismatches.append({"role": role, "index": index,
                                            "problem": f"prompt lacks {expect!r}"})
            entry = entry["response"]
        return entry if isinstance(entry, str) else _fence(entry)
