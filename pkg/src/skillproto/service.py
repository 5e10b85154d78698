"""HTTP inference service: health, vocabulary, prototype export, and
prediction with a full reasoning trace."""

from __future__ import annotations

from fastapi import FastAPI, HTTPException
from pydantic import BaseModel, Field

from .data import DataError, encode_query
from .explain import explain, export_prototypes
from .model import SetRegressor


class SkillRef(BaseModel):
    name: str
    level: str | None = None


class PredictRequest(BaseModel):
    skills: list[SkillRef] = Field(min_length=1)
    context: dict = Field(default_factory=dict)


def create_app(model: SetRegressor) -> FastAPI:
    """Requests share the immutable model; every handler is a pure function
    of (checkpoint, request body)."""
    app = FastAPI(title="skillproto inference service")
    vocab = model.vocab

    @app.get("/health")
    def health():
        return {"status": "ok"}

    @app.get("/skills")
    def skills():
        return vocab.to_json()

    @app.get("/prototypes")
    def prototypes():
        return export_prototypes(model)

    @app.post("/predict")
    def predict(request: PredictRequest):
        try:
            sample = encode_query(
                [(s.name, s.level) for s in request.skills], request.context, vocab
            )
        except DataError as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from None
        explanation = explain(sample, model)
        return {"salary": explanation.salary, "explanation": explanation.to_json()}

    return app


def serve(model: SetRegressor, port: int = 8000, host: str = "127.0.0.1") -> None:
    import uvicorn

    uvicorn.run(create_app(model), host=host, port=port)
