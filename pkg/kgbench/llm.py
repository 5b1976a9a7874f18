"""
Question text from a chat-completion service, with a replayable transcript and a template
fallback that needs no network.
"""
import hashlib
import json
import logging
import os
import threading
import time
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable, Optional, Protocol

import requests
from pydantic import BaseModel, ConfigDict, Field, computed_field

from kgbench.errors import EmptyCompletion, GeneratorFailure, RateLimited, TransportError
from kgbench.graph import Direction

logger = logging.getLogger(__name__)

BASE_URL_ENV = "KGBENCH_LLM_BASE_URL"
API_KEY_ENV = "KGBENCH_LLM_API_KEY"
FALLBACK_API_KEY_ENV = "OPENAI_API_KEY"
DEFAULT_BASE_URL = "https://api.openai.com/v1"

PROMPT_TEMPLATE = """\
You are an expert in knowledge graph question generation.

Given:
Removed Triple: ({entity_h}, {predicate_T}, {entity_t})
Question Entity: {topic_entity}
Answer Entity: {answer_entity}

Write a clear, natural-language question that asks for the Answer Entity, using the given predicate and Topic Entity.

Requirements:
- Express the predicate {predicate_T} naturally (paraphrasing allowed, but preserve core meaning; e.g., "wife_of" -> "wife").
- Mention the Topic Entity {topic_entity}.
- The answer should be the Answer Entity {answer_entity}.
- Do not mention the Answer Entity {answer_entity} in the question.
- Do not ask a yes/no question.
- Output only the question as plain text.

Example:
Removed Triple: ("Alice", "wife_of", "Carol")
Question Entity: Carol
Answer Entity: Alice

Output:
Who is Carol's wife?

Now, generate the question for:
Removed Triple: ({entity_h}, {predicate_T}, {entity_t})
Question Entity: {topic_entity}
Answer Entity: {answer_entity}
"""

# Appended when a first answer failed validation; temperature is 0, so the same prompt would only
# replay the rejected text
RETRY_NOTE = "\nYour previous answer broke one of the requirements. Follow every requirement."

LabeledTriple = tuple[str, str, str]


def _environment_api_key() -> Optional[str]:
    return os.environ.get(API_KEY_ENV) or os.environ.get(FALLBACK_API_KEY_ENV) or None


class LLMConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    model_name: str = "gpt-4"
    base_url: str = Field(default_factory=lambda: os.environ.get(BASE_URL_ENV, DEFAULT_BASE_URL))
    api_key: Optional[str] = Field(default_factory=_environment_api_key, exclude=True, repr=False)
    max_in_flight: int = Field(default=4, ge=1)
    attempts: int = Field(default=3, ge=1)
    backoff: float = Field(default=1.0, ge=0)
    timeout: float = Field(default=60.0, gt=0)

    @property
    def endpoint_configured(self) -> bool:
        return bool(self.api_key) or BASE_URL_ENV in os.environ


class PromptRequest(BaseModel):
    model_config = ConfigDict(frozen=True)

    prompt: str
    model_name: str
    temperature: float = Field(default=0.0, ge=0, le=0)

    @computed_field
    @property
    def request_id(self) -> str:
        return hashlib.sha256(f"{self.model_name}\n{self.prompt}".encode("utf-8")).hexdigest()


class TranscriptEntry(BaseModel):
    request_id: str
    model_name: str
    prompt: str
    response: str
    timestamp: str


class Transcript:
    """
    Append-only record of every completion, one JSON object per line. Looking a request up here
    never touches the network; writes from concurrent generators are serialised.
    """

    def __init__(self, path: Optional[Path | str] = None):
        self.path = Path(path) if path is not None else None
        self._entries: dict[str, TranscriptEntry] = {}
        self._lock = threading.Lock()
        if self.path is not None and self.path.exists():
            with self.path.open(encoding="utf-8") as f:
                for line in f:
                    if line.strip():
                        entry = TranscriptEntry.model_validate_json(line)
                        self._entries.setdefault(entry.request_id, entry)
            logger.info("transcript %s: %d entries", self.path, len(self._entries))

    def __len__(self):
        return len(self._entries)

    def __contains__(self, request_id: str):
        return request_id in self._entries

    def get(self, request_id: str) -> Optional[str]:
        entry = self._entries.get(request_id)
        return None if entry is None else entry.response

    def record(self, request: PromptRequest, response: str) -> None:
        entry = TranscriptEntry(
            request_id=request.request_id,
            model_name=request.model_name,
            prompt=request.prompt,
            response=response,
            timestamp=datetime.now(timezone.utc).isoformat(timespec="seconds"),
        )
        with self._lock:
            if entry.request_id in self._entries:
                return
            self._entries[entry.request_id] = entry
            if self.path is not None:
                with self.path.open("a", encoding="utf-8") as f:
                    f.write(entry.model_dump_json() + "\n")


def render_prompt(removed: LabeledTriple, topic: str, answer: str) -> str:
    """
    The question-generation prompt for a removed triple given by its labels. The triple's labels
    are quoted, the topic and answer lines are not.
    """
    head, predicate, tail = removed
    if {topic, answer} != {head, tail}:
        raise ValueError(f"topic {topic!r} and answer {answer!r} must be the ends of {removed!r}")
    quote = json.dumps
    return PROMPT_TEMPLATE.format(
        entity_h=quote(head, ensure_ascii=False),
        predicate_T=quote(predicate, ensure_ascii=False),
        entity_t=quote(tail, ensure_ascii=False),
        topic_entity=topic,
        answer_entity=answer,
    )


def template_fallback(removed: LabeledTriple, direction: Direction) -> str:
    """A fixed-pattern question about one end of ``removed``; it has no slot for the other end."""
    head, predicate, tail = removed
    if direction is Direction.HEAD_AS_TOPIC:
        return f"Which entity is {head} the {predicate} of?"
    return f"Which entity is the {predicate} of {tail}?"


class ChatTransport:
    """POSTs to ``<base_url>/chat/completions`` in the common chat-completions wire shape."""

    def __init__(self, config: LLMConfig, session: Optional[requests.Session] = None):
        self.config = config
        self.session = session if session is not None else requests.Session()

    def complete(self, request: PromptRequest) -> str:
        url = self.config.base_url.rstrip("/") + "/chat/completions"
        headers = {"Content-Type": "application/json"}
        if self.config.api_key:
            headers["Authorization"] = f"Bearer {self.config.api_key}"
        body = {
            "model": request.model_name,
            "temperature": request.temperature,
            "messages": [{"role": "user", "content": request.prompt}],
        }
        try:
            response = self.session.post(
                url, json=body, headers=headers, timeout=self.config.timeout
            )
        except requests.RequestException as e:
            raise TransportError(f"{url}: {e}") from e
        if response.status_code == 429:
            raise RateLimited(f"{url}: rate limited (HTTP 429)")
        if not 200 <= response.status_code < 300:
            raise TransportError(f"{url}: HTTP {response.status_code}: {response.text[:200]}")
        try:
            content = response.json()["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError) as e:
            raise EmptyCompletion(f"{url}: response has no completion text") from e
        if not isinstance(content, str) or not content.strip():
            raise EmptyCompletion(f"{url}: empty completion")
        return content


def _single_line(text: str) -> str:
    text = " ".join(text.split())
    if len(text) >= 2 and text[0] == text[-1] and text[0] in "\"'":
        text = text[1:-1].strip()
    return text


def generate(
    request: PromptRequest,
    transport: Optional[ChatTransport],
    transcript: Optional[Transcript] = None,
    attempts: int = 3,
    backoff: float = 1.0,
    sleep: Callable[[float], None] = time.sleep,
) -> str:
    """
    Completion text for ``request``, trimmed to a single line. A transcript hit is returned as is,
    without calling ``transport``; fresh completions are recorded.

    Retriable failures (``TransportError``, ``RateLimited``) are retried up to ``attempts`` times
    in total, waiting ``backoff * 2**k`` seconds before retry ``k + 1``.

    :raises GeneratorFailure: no transport and no transcript entry, or the last attempt failed.
    """
    if transcript is not None:
        cached = transcript.get(request.request_id)
        if cached is not None:
            return cached
    if transport is None:
        raise GeneratorFailure(
            f"request {request.request_id[:12]} is not in the transcript and no endpoint is set"
        )
    for attempt in range(1, attempts + 1):
        try:
            text = _single_line(transport.complete(request))
            break
        except GeneratorFailure as e:
            if not e.retriable or attempt == attempts:
                raise
            delay = backoff * 2 ** (attempt - 1)
            logger.warning(
                "attempt %d/%d failed: %s; retrying in %.1fs", attempt, attempts, e, delay
            )
            sleep(delay)
    if not text:
        raise EmptyCompletion(f"request {request.request_id[:12]}: empty completion")
    if transcript is not None:
        transcript.record(request, text)
    return text


class QuestionGenerator(Protocol):
    def question(self, removed: LabeledTriple, direction: Direction, retry: bool = False) -> str:
        ...


class TemplateGenerator:
    def question(self, removed: LabeledTriple, direction: Direction, retry: bool = False) -> str:
        return template_fallback(removed, direction)


class LLMGenerator:
    def __init__(
        self,
        config: LLMConfig,
        transcript: Optional[Transcript] = None,
        transport: Optional[ChatTransport] = None,
        sleep: Callable[[float], None] = time.sleep,
    ):
        """
        At most ``config.max_in_flight`` questions are generated at once, whatever the number of
        calling threads.

        :param transport: Defaults to a ``ChatTransport`` when ``config`` names an endpoint;
            otherwise only transcript replay is possible.
        """
        self.config = config
        self.transcript = transcript if transcript is not None else Transcript()
        if transport is None and config.endpoint_configured:
            transport = ChatTransport(config)
        self.transport = transport
        self.sleep = sleep
        self._in_flight = threading.BoundedSemaphore(config.max_in_flight)

    @property
    def ready(self) -> bool:
        """Whether any question can be produced at all."""
        return self.transport is not None or len(self.transcript) > 0

    def question(self, removed: LabeledTriple, direction: Direction, retry: bool = False) -> str:
        head, _, tail = removed
        topic, answer = (head, tail) if direction is Direction.HEAD_AS_TOPIC else (tail, head)
        prompt = render_prompt(removed, topic, answer)
        if retry:
            prompt += RETRY_NOTE
        request = PromptRequest(prompt=prompt, model_name=self.config.model_name)
        with self._in_flight:
            return generate(
                request,
                self.transport,
                self.transcript,
                attempts=self.config.attempts,
                backoff=self.config.backoff,
                sleep=self.sleep,
            )
