"""Deterministic random streams.

Every stochastic step in the package draws from a Philox4x64 counter-based
generator keyed by ``(seed, purpose, round, unit)``:

    key word 0 = seed                      (full 64 bits)
    key word 1 = purpose << 56 | round << 32 | unit
                 purpose: 8 bits  (see the constants below)
                 round:   24 bits (epoch or inference round index)
                 unit:    32 bits (node id, parameter index, or 0)

Streams with distinct keys are independent, so per-target sampling is
schedule-independent: any implementation that builds the same keys and reads
Philox4x64 the same way (uniform doubles from the high 53 bits, numpy
``Generator`` semantics) reproduces byte-identical samples on any platform.
"""

import numpy as np
from numpy.random import Generator, Philox

# purpose tags (8 bits)
TRAIN_SAMPLE = 1
INFER_SAMPLE = 2
NEG_TRAIN = 3
NEG_INFER = 4
SHUFFLE = 5
INIT = 6
INJECT_STRUCT = 7
INJECT_ATTR = 8
SYNTH = 9
NEG_PICK = 10  # choice of the fresh-negative node, separate from its walk

_ROUND_BITS = 24
_UNIT_BITS = 32


def stream_key(seed, purpose, round_index=0, unit=0):
    if not 0 <= round_index < (1 << _ROUND_BITS):
        raise ValueError(f"round index {round_index} exceeds {_ROUND_BITS} bits")
    if not 0 <= unit < (1 << _UNIT_BITS):
        raise ValueError(f"unit {unit} exceeds {_UNIT_BITS} bits")
    word1 = (purpose << (_ROUND_BITS + _UNIT_BITS)) | (round_index << _UNIT_BITS) | unit
    return np.array([seed & 0xFFFFFFFFFFFFFFFF, word1], dtype=np.uint64)


def stream(seed, purpose, round_index=0, unit=0):
    """A fresh Generator for the (seed, purpose, round, unit) stream."""
    return Generator(Philox(key=stream_key(seed, purpose, round_index, unit)))


def stream_id(seed, purpose, round_index=0, unit=0):
    """Human-readable stream tag recorded in batches and manifests."""
    return f"philox4x64:seed={seed}:purpose={purpose}:round={round_index}:unit={unit}"
