#!/usr/bin/env python3
"""Writes the SPCV vector and score JSON-lines fixtures under tests/fixtures/interchange.

The files are produced with plain struct packing, independent of the C++
writer, so the primary-side loaders can be checked against them.
"""
import json
import random
import struct
from pathlib import Path

OUT = Path(__file__).resolve().parent.parent / "tests" / "fixtures" / "interchange"

FNV128_OFFSET = 0x6C62272E07BB014262B821756295C58D
FNV128_PRIME = (1 << 88) + 0x13B


def fnv1a128(data: bytes) -> str:
    h = FNV128_OFFSET
    for b in data:
        h = ((h ^ b) * FNV128_PRIME) % (1 << 128)
    return f"{h:032x}"


def pair_id(paper, ps, mention, ms):
    return fnv1a128(f"{paper}\x1f{ps}\x1f{mention}\x1f{ms}".encode())


def f32(x):
    return struct.unpack("<f", struct.pack("<f", x))[0]


def main():
    rng = random.Random(424242)
    OUT.mkdir(parents=True, exist_ok=True)
    dim = 8
    keys = ["P01#4", "P01#5", "N01#1", "N01#2", "T01#0"]
    vectors = {}
    for k in keys:
        v = [rng.gauss(0.0, 1.0) for _ in range(dim)]
        norm = sum(x * x for x in v) ** 0.5
        vectors[k] = [f32(x / norm) for x in v]
    vectors["T01#0"] = [f32(x) for x in vectors["P01#4"]]  # duplicate sentence, identical bytes

    blob = bytearray(b"SPCV")
    blob += struct.pack("<BIQ", 1, dim, len(keys))
    for k in keys:
        kb = k.encode()
        blob += struct.pack("<H", len(kb)) + kb
        blob += struct.pack(f"<{dim}f", *vectors[k])
    (OUT / "vectors.spcv").write_bytes(bytes(blob))
    (OUT / "vectors_expected.json").write_text(json.dumps({"dim": dim, "vectors": vectors}, indent=1) + "\n")

    pairs = []
    for paper_sent in (4, 5):
        for mention, ms in (("N01", 1), ("N01", 2), ("T01", 0)):
            pairs.append({"pair_id": pair_id("P01", paper_sent, mention, ms), "paper_doc_id": "P01",
                          "paper_sent_idx": paper_sent, "mention_doc_id": mention, "mention_sent_idx": ms})
    with open(OUT / "pairs.jsonl", "w") as f:
        for p in pairs:
            f.write(json.dumps(p) + "\n")
    with open(OUT / "scores.jsonl", "w") as f:
        f.write('# {"model": "fixture-regressor", "range": [1, 5]}\n')
        for p in pairs:
            f.write(json.dumps({"pair_id": p["pair_id"], "value": round(rng.uniform(1.0, 5.0), 4)}) + "\n")


if __name__ == "__main__":
    main()
