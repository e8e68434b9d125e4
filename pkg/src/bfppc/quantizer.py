"""State quantizers.

Every quantizer honours the bound ``|q(x) - x| <= delta0``.  The uniform kind
maps x to the nearest multiple of ``l0`` (ties away from zero), so it is odd,
idempotent, monotone and has a dead zone ``[-l0/2, l0/2)`` around the origin.

The hysteresis and logarithmic kinds are provided only as bound-respecting
stand-ins; their exact maps are not modelled.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

from .errors import DivergenceError


class QuantizerKind(str, Enum):
    UNIFORM = "uniform"
    HYSTERESIS_UNIFORM = "hysteresis-uniform"
    LOGARITHMIC_UNIFORM = "logarithmic-uniform"


def _round_half_away(v: float) -> float:
    return math.copysign(math.floor(abs(v) + 0.5), v)


@dataclass
class QuantizerModel:
    """Quantizer with interval length ``l0`` and error bound ``delta0``.

    ``delta0`` defaults to ``l0 / 2``.  ``memory`` holds the last emitted level
    per channel and is only used by the hysteresis kind, so a hysteresis
    instance must not be shared between simulation runs.
    """

    kind: QuantizerKind = QuantizerKind.UNIFORM
    l0: float = 0.1
    delta0: float | None = None
    memory: list[float] | None = field(default=None, repr=False)

    def __post_init__(self) -> None:
        self.kind = QuantizerKind(self.kind)
        if not (math.isfinite(self.l0) and self.l0 > 0):
            raise ValueError(f"quantizer l0 must be positive, got {self.l0}")
        if self.delta0 is None:
            self.delta0 = self.l0 / 2
        if not self.delta0 >= self.l0 / 2:
            raise ValueError(
                f"quantizer bound delta0={self.delta0} must be >= l0/2={self.l0 / 2}"
            )

    def level(self, x: float) -> float:
        """Nearest uniform level to x (no memory).

        At exact ties the level ``l0*k`` is itself rounded, so ``|q(x) - x|``
        can exceed ``delta0`` by a unit in the last place there.
        """
        return self.l0 * _round_half_away(x / self.l0) + 0.0

    def reset(self) -> None:
        self.memory = None

    def copy(self) -> "QuantizerModel":
        return QuantizerModel(self.kind, self.l0, self.delta0)


def quantize(q: QuantizerModel, x: float) -> float:
    """Quantize a scalar without touching channel memory."""
    if not math.isfinite(x):
        raise DivergenceError(f"cannot quantize non-finite value {x!r}")
    return q.level(x)


def quantize_state(q: QuantizerModel, x: Sequence[float]) -> list[float]:
    """Channel-wise quantization of a state vector.

    For the hysteresis kind the previously emitted level is kept while it is
    still within ``delta0`` of the input; otherwise the nearest level is
    emitted and remembered.
    """
    # a finite sum rules out inf/nan; an overflowing sum falls back to the per-entry check
    if not math.isfinite(sum(x)) and not all(map(math.isfinite, x)):
        raise DivergenceError(f"cannot quantize non-finite state {list(x)!r}")
    if q.kind is not QuantizerKind.HYSTERESIS_UNIFORM:
        l0 = q.l0  # inline of q.level
        return [l0 * _round_half_away(v / l0) + 0.0 for v in x]

    if q.memory is None or len(q.memory) != len(x):
        q.memory = [q.level(v) for v in x]
        return list(q.memory)
    out = []
    for i, v in enumerate(x):
        held = q.memory[i]
        if abs(v - held) > q.delta0:
            held = q.level(v)
            q.memory[i] = held
        out.append(held)
    return out
