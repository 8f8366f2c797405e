"""Typed messages and the in-process channel between the two parties.

The channel is ordered and reliable.  Every message is appended to a log
that can be exported as JSON lines (direction, type, payload digest, size)
for auditing.
"""

from __future__ import annotations

import hashlib
import json
from collections import deque
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Any

import numpy as np

from .errors import ProtocolError
from .paillier import EncryptedArray


class MsgType(str, Enum):
    ESTIMATED_REPS = "EstimatedReps"
    ENC_GRAD_WRT_ESTIMATE = "EncGradWrtEstimate"
    ENC_PARAM_GRAD = "EncParamGrad"
    DEC_PARAM_GRAD = "DecParamGrad"
    PERTURBATION = "Perturbation"


ALLOWED_TYPES = frozenset(MsgType)

# Which party may send each message type.
SENDER_OF = {
    MsgType.ESTIMATED_REPS: "A",
    MsgType.ENC_GRAD_WRT_ESTIMATE: "B",
    MsgType.ENC_PARAM_GRAD: "A",
    MsgType.DEC_PARAM_GRAD: "B",
    MsgType.PERTURBATION: "B",
}


@dataclass(frozen=True)
class Message:
    variant: MsgType
    payload: Any
    sender: str
    receiver: str
    seq: int

    def arrays(self) -> list[np.ndarray]:
        """Plain numeric arrays carried in the payload (ciphertexts excluded)."""
        return [v for v in _payload_values(self.payload) if isinstance(v, np.ndarray) and v.dtype != object]

    def payload_bytes(self) -> bytes:
        h = []
        for v in _payload_values(self.payload):
            if isinstance(v, EncryptedArray):
                h.append("\n".join(v.serialize()).encode())
            elif isinstance(v, np.ndarray):
                h.append(np.ascontiguousarray(v).tobytes())
            else:
                h.append(repr(v).encode())
        return b"".join(h)

    def digest(self) -> str:
        return hashlib.sha256(self.payload_bytes()).hexdigest()

    def nbytes(self) -> int:
        total = 0
        for v in _payload_values(self.payload):
            if isinstance(v, EncryptedArray):
                total += v.nbytes()
            elif isinstance(v, np.ndarray):
                total += v.nbytes
            else:
                total += len(repr(v))
        return total

    def to_record(self) -> dict:
        return {
            "seq": self.seq,
            "direction": f"{self.sender}->{self.receiver}",
            "type": self.variant.value,
            "digest": self.digest(),
            "bytes": self.nbytes(),
        }


def _payload_values(payload):
    if isinstance(payload, dict):
        return list(payload.values())
    return [payload]


class Channel:
    """Ordered, reliable, in-process message passing between parties A and B."""

    def __init__(self):
        self.log: list[Message] = []
        self._inbox = {"A": deque(), "B": deque()}

    def send(self, variant: MsgType, payload, sender: str, receiver: str) -> Message:
        variant = MsgType(variant)
        if SENDER_OF[variant] != sender or sender == receiver or receiver not in self._inbox:
            raise ProtocolError(f"{sender}->{receiver} may not carry {variant.value}")
        msg = Message(variant, payload, sender, receiver, len(self.log))
        self.log.append(msg)
        self._inbox[receiver].append(msg)
        return msg

    def receive(self, receiver: str, expected: MsgType) -> Message:
        inbox = self._inbox[receiver]
        if not inbox:
            raise ProtocolError(f"party {receiver} expected {MsgType(expected).value}, inbox empty")
        if inbox[0].variant != expected:
            raise ProtocolError(
                f"party {receiver} expected {MsgType(expected).value}, got {inbox[0].variant.value}"
            )
        return inbox.popleft()

    def pending(self, receiver: str) -> int:
        return len(self._inbox[receiver])

    def records(self) -> list[dict]:
        return [m.to_record() for m in self.log]

    def write_jsonl(self, path) -> None:
        with Path(path).open("w") as fh:
            for rec in self.records():
                fh.write(json.dumps(rec) + "\n")

    def __len__(self) -> int:
        return len(self.log)
