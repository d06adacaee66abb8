"""Analytic FLOP accounting.

Counts are data-independent and follow one stated convention:

* 2 FLOPs per multiply-accumulate (convolutions, linear layers),
* 1 FLOP per element per pass for norms, activations, pooling, softmax,
  and elementwise tensor arithmetic.

A counter is installed with ``flops_scope``; modules stamped with
``assign_qualnames`` attribute their ops to their dotted path.
"""

from __future__ import annotations

CONVENTION = (
    "2 FLOPs per multiply-accumulate; 1 FLOP per element per pass for "
    "norms, activations, pooling, softmax, and elementwise arithmetic"
)

_counter = None


class FlopCounter:
    """Accumulates (scope, kind, flops) records during a counting forward."""

    def __init__(self):
        self.total = 0
        self.records: list[tuple[str, str, int]] = []
        self._scopes: list[str] = []

    def push(self, name: str):
        self._scopes.append(name)

    def pop(self):
        self._scopes.pop()

    def add(self, kind: str, flops: int):
        self.total += int(flops)
        scope = self._scopes[-1] if self._scopes else ""
        self.records.append((scope, kind, int(flops)))


class flops_scope:
    """Context manager installing a FlopCounter for the enclosed forward."""

    def __init__(self, counter: FlopCounter):
        self.counter = counter

    def __enter__(self):
        global _counter
        self._prev = _counter
        _counter = self.counter
        return self.counter

    def __exit__(self, *exc):
        global _counter
        _counter = self._prev
        return False


def active() -> FlopCounter | None:
    return _counter


def add(kind: str, flops: int) -> None:
    if _counter is not None:
        _counter.add(kind, flops)
