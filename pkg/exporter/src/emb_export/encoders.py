"""Sentence encoders behind one interface.

The default is an off-the-shelf transformer sentence encoder loaded by
identifier. A deterministic offline encoder ("hash://<dim>") derives each
vector from a SHA-256 digest of the text; it carries no semantics but has
the same shape contract, which is all the format tooling and tests need.
"""
import hashlib

import numpy as np

DEFAULT_MODEL = "sentence-transformers/nli-distilroberta-base-v2"


class HashEncoder:
    """Deterministic text -> float32 vector, no model download required."""

    def __init__(self, dim: int):
        if dim < 1:
            raise ValueError("dim must be >= 1")
        self.dim = dim
        self.max_tokens = None  # never truncates

    def encode(self, texts: list[str], batch_size: int = 32) -> np.ndarray:
        out = np.empty((len(texts), self.dim), dtype=np.float32)
        for row, text in enumerate(texts):
            digest = hashlib.sha256(text.encode("utf-8")).digest()
            seed = int.from_bytes(digest[:8], "little")
            rng = np.random.default_rng(seed)
            out[row] = rng.standard_normal(self.dim).astype(np.float32)
        return out


class SentenceTransformerEncoder:
    def __init__(self, identifier: str):
        from sentence_transformers import SentenceTransformer

        self.model = SentenceTransformer(identifier)
        self.dim = self.model.get_sentence_embedding_dimension()
        self.max_tokens = getattr(self.model, "max_seq_length", None)

    def encode(self, texts: list[str], batch_size: int = 32) -> np.ndarray:
        return np.asarray(
            self.model.encode(
                texts,
                batch_size=batch_size,
                convert_to_numpy=True,
                normalize_embeddings=False,
                show_progress_bar=False,
            ),
            dtype=np.float32,
        )


def load_encoder(identifier: str):
    """"hash://<dim>" -> HashEncoder; anything else loads by model name."""
    if identifier.startswith("hash://"):
        return HashEncoder(int(identifier[len("hash://"):]))
    return SentenceTransformerEncoder(identifier)
