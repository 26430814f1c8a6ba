"""Remote embedding backend serving sentence-transformers vectors.

POST /embed {"texts": [...]} -> {"model": ..., "dim": ..., "embeddings": [[...], ...]}
"""

import os

from fastapi import FastAPI
from pydantic import BaseModel
from sentence_transformers import SentenceTransformer

MODEL = os.environ.get("ZSLREQ_SBERT_MODEL", "deepset/sentence_bert")

model = SentenceTransformer(MODEL, device="cpu")
app = FastAPI()


class EmbedRequest(BaseModel):
    texts: list[str]


@app.get("/health")
def health():
    return {"status": "ok", "model": MODEL}


@app.post("/embed")
def embed(req: EmbedRequest):
    vectors = model.encode(req.texts, convert_to_numpy=True, show_progress_bar=False)
    return {
        "model": MODEL,
        "dim": int(vectors.shape[1]) if len(req.texts) else 0,
        "embeddings": [[float(x) for x in v] for v in vectors],
    }
