"""Academic expert search engine: embeddings, retrofitting, cosine retrieval
and voting-model author ranking."""

__version__ = "0.1.0"
