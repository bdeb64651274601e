"""Wire-level fault injection for abort-soundness testing."""

from __future__ import annotations

from .field import FieldParams
from .transport import Endpoint, Message


class TamperingEndpoint:
    """Wraps an endpoint and adds ``delta`` (mod p) to one element of the
    ``occurrence``-th outgoing message carrying ``label``.

    Labels are the engine's message annotations: ``eps``, ``delta``,
    ``square-eps``, ``s-open``, ``output-open``, ``input``,
    ``sigma-commit``, ``sigma-reveal``.
    """

    def __init__(self, inner: Endpoint, params: FieldParams, label: str,
                 delta: int, occurrence: int = 0, element: int = 0):
        self.inner = inner
        self.params = params
        self.label = label
        self.delta = delta % params.p
        self.occurrence = occurrence
        self.element = element
        self.fired = False
        self._seen = 0

    def send(self, msg: Message) -> None:
        if msg.label == self.label and not self.fired:
            if self._seen == self.occurrence and msg.payload.size:
                payload = msg.payload.copy()
                j = self.element % payload.size
                payload[j] = (int(payload[j]) + self.delta) % self.params.p
                msg = Message(msg.tag, payload, msg.label)
                self.fired = True
            self._seen += 1
        self.inner.send(msg)

    def recv(self) -> Message:
        return self.inner.recv()

    def close(self) -> None:
        self.inner.close()

    @property
    def stats(self):
        return self.inner.stats

    @property
    def transcript(self):
        return self.inner.transcript

