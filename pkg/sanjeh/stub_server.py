"""
stub_server — local stand-in for the chat and name-gender APIs.

Serves the four wire shapes the adapters speak:

    POST /v1/chat/completions                       openai
    POST /v1beta/models/{model}:generateContent     gemini
    GET  /genderize?name=..&country_id=..           genderize
    POST /namsor/genderGeoBatch                     namsor

Answers are scripted; every request is logged with a timestamp from the
injected clock so tests can check rate limits.  Tests mount the app with
``httpx.ASGITransport``; ``python -m sanjeh.stub_server`` serves it on
localhost for manual record runs.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Any, Callable, Mapping, Optional, Union

from fastapi import FastAPI, HTTPException
from pydantic import BaseModel

ChatReply = Union[str, Callable[[str, str], str]]
GenderTable = Mapping[str, tuple[Optional[str], float]]


class ChatMessage(BaseModel):
    role: str
    content: str


class ChatRequest(BaseModel):
    model: str
    messages: list[ChatMessage]
    temperature: Optional[float] = None
    max_tokens: Optional[int] = None


class GeminiPart(BaseModel):
    text: str = ""


class GeminiContent(BaseModel):
    role: str = "user"
    parts: list[GeminiPart]


class GeminiRequest(BaseModel):
    contents: list[GeminiContent]
    generationConfig: Optional[dict[str, Any]] = None


class NamsorName(BaseModel):
    id: str
    firstName: str
    lastName: str = ""
    countryIso2: Optional[str] = None


class NamsorBatch(BaseModel):
    personalNames: list[NamsorName]


@dataclass
class StubState:
    reply: ChatReply = "Emily"
    genderize: dict[str, tuple[Optional[str], float]] = field(default_factory=dict)
    namsor: dict[str, tuple[Optional[str], float]] = field(default_factory=dict)
    clock: Callable[[], float] = time.monotonic
    requests: list[tuple[float, str]] = field(default_factory=list)
    queued_errors: dict[str, list[int]] = field(default_factory=dict)

    def fail_next(self, kind: str, *statuses: int) -> None:
        """Answer the next requests of ``kind`` with these status codes."""
        self.queued_errors.setdefault(kind, []).extend(statuses)

    def answer(self, model: str, prompt: str) -> str:
        return self.reply(model, prompt) if callable(self.reply) else self.reply

    def hit(self, kind: str) -> None:
        self.requests.append((self.clock(), kind))
        queued = self.queued_errors.get(kind)
        if queued:
            raise HTTPException(status_code=queued.pop(0), detail=f"scripted {kind} failure")

    def timestamps(self, kind: Optional[str] = None) -> list[float]:
        return [t for t, k in self.requests if kind is None or k == kind]


def create_stub_app(
    reply: ChatReply = "Emily",
    genders: Optional[GenderTable] = None,
    *,
    namsor_genders: Optional[GenderTable] = None,
    clock: Callable[[], float] = time.monotonic,
) -> FastAPI:
    """
    ``reply`` is a fixed string or ``(model, prompt) -> str``.  ``genders``
    maps name → (gender or None, probability) for genderize; namsor uses
    ``namsor_genders`` when given, else the same table.
    """
    state = StubState(
        reply=reply,
        genderize=dict(genders or {}),
        namsor=dict(namsor_genders if namsor_genders is not None else genders or {}),
        clock=clock,
    )
    app = FastAPI(title="sanjeh stub")
    app.state.stub = state

    @app.post("/v1/chat/completions")
    async def chat_completions(body: ChatRequest):
        state.hit("chat")
        text = state.answer(body.model, body.messages[-1].content)
        return {
            "id": f"stub-{len(state.requests)}",
            "object": "chat.completion",
            "model": body.model,
            "choices": [{"index": 0, "finish_reason": "stop",
                         "message": {"role": "assistant", "content": text}}],
        }

    @app.post("/v1beta/models/{model}:generateContent")
    async def generate_content(model: str, body: GeminiRequest):
        state.hit("gemini")
        prompt = "".join(p.text for p in body.contents[-1].parts)
        text = state.answer(model, prompt)
        return {"candidates": [{"content": {"role": "model", "parts": [{"text": text}]},
                                "finishReason": "STOP"}]}

    @app.get("/genderize")
    async def genderize(name: str, country_id: Optional[str] = None):
        state.hit("genderize")
        gender, probability = state.genderize.get(name, (None, 0.0))
        return {"name": name, "gender": gender,
                "probability": probability if gender else 0.0,
                "count": 1 if gender else 0}

    @app.post("/namsor/genderGeoBatch")
    async def namsor_batch(body: NamsorBatch):
        state.hit("namsor")
        out = []
        for person in body.personalNames:
            gender, probability = state.namsor.get(person.firstName, (None, 0.0))
            out.append({"id": person.id, "firstName": person.firstName,
                        "lastName": person.lastName,
                        "likelyGender": gender or "unknown",
                        "probabilityCalibrated": probability if gender else -1.0})
        return {"personalNames": out}

    @app.get("/requests")
    async def request_log():
        return {"requests": [{"t": t, "kind": k} for t, k in state.requests]}

    return app


if __name__ == "__main__":
    import uvicorn

    uvicorn.run("sanjeh.stub_server:create_stub_app", factory=True,
                host="127.0.0.1", port=8765)
