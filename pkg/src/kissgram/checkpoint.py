"""Versioned binary checkpoints with an integrity checksum.

Layout: an 8-byte magic, a u32 version, then length-prefixed sections
(4-byte ascii tag, u64 payload length, payload), and a trailing sha256 over
all prior bytes.  Restoring a checkpoint restores the RNG cursor, the tree
statistics, the policy and the best result, so a resumed run reproduces the
uninterrupted one bit for bit.
"""

from __future__ import annotations

import hashlib
import io
import json
import os
import struct
from dataclasses import dataclass

import numpy as np

from .corrector import CorrectorPolicy
from .errors import CheckpointError
from .fileio import GRAM_MAGIC
from .filler import SearchTree
from .game import EpisodeResult
from .gram import GramState

MAGIC = b"KISSCKPT"
VERSION = 1

_SECTIONS = ("CFGE", "RNGS", "TREE", "POLI", "PROG", "BEST")


@dataclass
class Checkpoint:
    config_echo: str
    rng_state: dict
    tree: SearchTree
    policy: CorrectorPolicy
    baseline: float
    rewards: list[int]
    best: EpisodeResult | None


def _best_payload(best: EpisodeResult | None) -> bytes:
    if best is None:
        return b""
    from .fileio import format_float
    from .rational import format_rational

    state = best.final_state
    lines = [f"{GRAM_MAGIC} dim={state.dim} count={state.m} mode={state.mode}"]

    for i in range(state.m):
        if state.exact is not None:
            lines.append(" ".join(format_rational(state.exact[i][j])
                                  for j in range(i, state.m)))
        else:
            lines.append(" ".join(format_float(float(state.entries[i, j]))
                                  for j in range(i, state.m)))
    doc = {
        "team_reward": best.team_reward,
        "per_round_sizes": list(best.per_round_sizes),
        "gram": "\n".join(lines) + "\n",
    }
    return json.dumps(doc, sort_keys=True).encode("utf-8")


def _best_from_payload(payload: bytes) -> EpisodeResult | None:
    if not payload:
        return None
    doc = json.loads(payload.decode("utf-8"))
    from fractions import Fraction

    from .fileio import _data_lines, _parse_header
    from .rational import parse_rational

    lines = _data_lines(doc["gram"])
    fields = _parse_header(lines[0], GRAM_MAGIC, "<checkpoint>")
    count = int(fields["count"])
    mode = fields.get("mode", "float")
    entries = np.zeros((count, count))
    exact = [[Fraction(0)] * count for _ in range(count)] if mode == "rational" else None
    for i, row in enumerate(lines[1:]):
        for k, part in enumerate(row.split()):
            j = i + k
            if mode == "rational":
                val = parse_rational(part)
                exact[i][j] = exact[j][i] = val
                entries[i, j] = entries[j, i] = float(val)
            else:
                entries[i, j] = entries[j, i] = float(part)
    state = GramState(dim=int(fields["dim"]), entries=entries,
                      exact=tuple(tuple(r) for r in exact) if exact is not None else None)
    return EpisodeResult(
        final_state=state,
        team_reward=int(doc["team_reward"]),
        per_round_sizes=tuple(doc["per_round_sizes"]),
        trajectory=(),
        wall_time=0.0,
    )


def save_checkpoint(path, *, config_echo: str, rng: np.random.Generator,
                    tree: SearchTree, policy: CorrectorPolicy, baseline: float,
                    rewards: list[int], best: EpisodeResult | None):
    payloads = {
        "CFGE": config_echo.encode("utf-8"),
        "RNGS": json.dumps(rng.bit_generator.state, sort_keys=True).encode("utf-8"),
        "TREE": json.dumps(tree.summary(), sort_keys=True).encode("utf-8"),
        "POLI": json.dumps({
            "weights": [float(w) for w in policy.weights],
            "temperature": policy.temperature,
            "max_delete_fraction": policy.max_delete_fraction,
            "protected_prefix": policy.protected_prefix,
            "baseline": baseline,
        }, sort_keys=True).encode("utf-8"),
        "PROG": json.dumps({"rewards": rewards}, sort_keys=True).encode("utf-8"),
        "BEST": _best_payload(best),
    }
    body = io.BytesIO()
    body.write(MAGIC)
    body.write(struct.pack("<I", VERSION))
    for tag in _SECTIONS:
        payload = payloads[tag]
        body.write(tag.encode("ascii"))
        body.write(struct.pack("<Q", len(payload)))
        body.write(payload)
    raw = body.getvalue()
    digest = hashlib.sha256(raw).digest()
    # Atomic replace: a run killed mid-write never leaves a torn checkpoint.
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as fh:
        fh.write(raw + digest)
        fh.flush()
        os.fsync(fh.fileno())
    os.replace(tmp, path)


def load_checkpoint(path) -> Checkpoint:
    try:
        with open(path, "rb") as fh:
            blob = fh.read()
    except OSError as exc:
        raise CheckpointError(f"{path}: {exc}") from exc
    if len(blob) < len(MAGIC) + 4 + 32:
        raise CheckpointError(f"{path}: truncated checkpoint")
    raw, digest = blob[:-32], blob[-32:]
    if hashlib.sha256(raw).digest() != digest:
        raise CheckpointError(f"{path}: integrity checksum mismatch")
    if raw[: len(MAGIC)] != MAGIC:
        raise CheckpointError(f"{path}: bad magic")
    (version,) = struct.unpack_from("<I", raw, len(MAGIC))
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
    offset = len(MAGIC) + 4
    payloads: dict[str, bytes] = {}
    while offset < len(raw):
        if offset + 12 > len(raw):
            raise CheckpointError(f"{path}: truncated section header")
        tag = raw[offset:offset + 4].decode("ascii", errors="replace")
        (length,) = struct.unpack_from("<Q", raw, offset + 4)
        offset += 12
        if offset + length > len(raw):
            raise CheckpointError(f"{path}: truncated section {tag}")
        payloads[tag] = raw[offset:offset + length]
        offset += length
    missing = [tag for tag in _SECTIONS if tag not in payloads]
    if missing:
        raise CheckpointError(f"{path}: missing sections {missing}")
    try:
        poli = json.loads(payloads["POLI"].decode("utf-8"))
        policy = CorrectorPolicy(
            weights=np.array(poli["weights"], dtype=float),
            temperature=float(poli["temperature"]),
            max_delete_fraction=float(poli["max_delete_fraction"]),
            protected_prefix=int(poli["protected_prefix"]),
        )
        return Checkpoint(
            config_echo=payloads["CFGE"].decode("utf-8"),
            rng_state=json.loads(payloads["RNGS"].decode("utf-8")),
            tree=SearchTree.from_summary(json.loads(payloads["TREE"].decode("utf-8"))),
            policy=policy,
            baseline=float(poli["baseline"]),
            rewards=[int(r) for r in json.loads(payloads["PROG"].decode("utf-8"))["rewards"]],
            best=_best_from_payload(payloads["BEST"]),
        )
    except (KeyError, ValueError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path}: malformed section payload: {exc}") from exc
