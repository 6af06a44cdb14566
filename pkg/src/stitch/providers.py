"""Layout providers: chat-style services answering (system, user) requests.

Three implementations ship with the toolkit:

* HttpChatProvider talks to a chat-completion endpoint (base URL + model
  name, bearer key read from an environment variable, STITCH_LLM_API_KEY
  by default).
* FallbackProvider answers layout requests deterministically by parsing
  the description and solving the 2x2 grid; background requests get the
  literal word "background".
* ScriptedProvider replays canned responses, for tests and recorded runs.
"""

from __future__ import annotations

import json
import os
import re

from .errors import ProviderError
from .layout import fallback_plan, parse_scene, plan_to_dict

DEFAULT_API_KEY_ENV = "STITCH_LLM_API_KEY"


class LayoutProvider:
    """Interface: a single blocking chat completion."""

    def complete(self, system: str, user: str) -> str:
        raise NotImplementedError


class ScriptedProvider(LayoutProvider):
    """Replays a fixed response list; records every request it sees."""

    def __init__(self, responses):
        self._responses = list(responses)
        self.requests: list[tuple[str, str]] = []

    def complete(self, system: str, user: str) -> str:
        self.requests.append((system, user))
        if not self._responses:
            raise ProviderError("scripted provider ran out of responses")
        return self._responses.pop(0)


_CANVAS_RE = re.compile(r"canvas of size (\d+)x\1")


class FallbackProvider(LayoutProvider):
    """Offline planner speaking the same wire format as the LLM."""

    def complete(self, system: str, user: str) -> str:
        if "Return only ONE word" in system:
            return "background"
        m = _CANVAS_RE.search(system)
        if m is None:
            raise ProviderError("fallback provider got an unrecognized request")
        canvas = int(m.group(1))
        description = user.split("Description:", 1)[-1].strip()
        scene = parse_scene(description)
        plan = fallback_plan(scene, canvas, full_prompt=description)
        return json.dumps(plan_to_dict(plan)["objects"])


class HttpChatProvider(LayoutProvider):
    """OpenAI-style /chat/completions client.

    Safe for concurrent requests: each call opens an independent session.
    """

    def __init__(self, base_url: str, model: str, api_key_env: str = DEFAULT_API_KEY_ENV, timeout: float = 60.0):
        if not base_url:
            raise ValueError("base_url required")
        self.base_url = base_url.rstrip("/")
        self.model = model
        self.api_key_env = api_key_env
        self.timeout = timeout

    def complete(self, system: str, user: str) -> str:
        import requests

        headers = {"Content-Type": "application/json"}
        key = os.environ.get(self.api_key_env, "")
        if key:
            headers["Authorization"] = f"Bearer {key}"
        payload = {
            "model": self.model,
            "messages": [
                {"role": "system", "content": system},
                {"role": "user", "content": user},
            ],
        }
        try:
            resp = requests.post(
                f"{self.base_url}/chat/completions",
                json=payload,
                headers=headers,
                timeout=self.timeout,
            )
            resp.raise_for_status()
            body = resp.json()
        except requests.RequestException as exc:
            raise ProviderError(f"layout service request failed: {exc}") from exc
        try:
            return body["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError) as exc:
            raise ProviderError(f"unexpected chat response shape: {body!r}") from exc
