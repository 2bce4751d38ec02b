"""Sentence splitting, byte-for-byte compatible with the search engine.

The engine splits abstracts on ./!/? followed by whitespace; the exporter
must produce the same sentence boundaries so that record counts and
sentence indices line up. A shared golden-case file keeps the two
implementations honest.
"""
import re

_SENTENCE_BREAK = re.compile(r"(?<=[.!?])\s+")


def split_sentences(text: str) -> list[str]:
    fragments = [frag.strip() for frag in _SENTENCE_BREAK.split(text)]
    return [frag for frag in fragments if frag]
