"""Writer for the EMB1 binary embedding file.

Layout: magic "EMB1", u32 dim, then records of
u32 id_len | id UTF-8 | u8 role (0 = title, 1 = abstract sentence) |
u16 sentence_index | dim little-endian float32 components.
"""
import struct

import numpy as np

EMB1_MAGIC = b"EMB1"
ROLE_TITLE = 0
ROLE_ABSTRACT = 1

_HEADER = struct.Struct("<4sI")
_REC_FIXED = struct.Struct("<BH")
_U32 = struct.Struct("<I")


def write_records(path, dim: int, records) -> int:
    """Write (record_id, role, sentence_index, vector) tuples; returns count."""
    written = 0
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(EMB1_MAGIC, dim))
        for record_id, role, sentence_index, vector in records:
            vec = np.asarray(vector, dtype="<f4")
            if vec.shape != (dim,):
                raise ValueError(
                    f"record {record_id!r} has shape {vec.shape}, expected ({dim},)"
                )
            encoded = record_id.encode("utf-8")
            fh.write(_U32.pack(len(encoded)))
            fh.write(encoded)
            fh.write(_REC_FIXED.pack(role, sentence_index))
            fh.write(vec.tobytes())
            written += 1
    return written
