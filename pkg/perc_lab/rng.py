# perc_lab/rng.py

"""
Counter-based per-edge labels.

Every label is a pure function of (master seed, stream id, edge index), so a
configuration can be regenerated bit-exactly in any worker and in any order.
"""

import hashlib
from typing import Optional

import numpy as np

from .constants import GOLDEN_GAMMA, LABEL_SCALE, MIX_MULT_1, MIX_MULT_2

_U64 = np.uint64


def mix64(x: np.ndarray) -> np.ndarray:
    """SplitMix64 finalizer, vectorised over uint64 arrays."""
    x = np.asarray(x, dtype=_U64)
    with np.errstate(over="ignore"):
        z = x.copy()
        z = (z ^ (z >> _U64(30))) * _U64(MIX_MULT_1)
        z = (z ^ (z >> _U64(27))) * _U64(MIX_MULT_2)
        return z ^ (z >> _U64(31))


def stream_id(purpose: str, *indices) -> int:
    """Stable 64-bit stream id for a purpose string and integer indices."""
    text = "|".join([purpose] + [str(int(i)) for i in indices])
    return int.from_bytes(hashlib.blake2b(text.encode("utf-8"), digest_size=8).digest(), "little")


def mask_digest(*masks: np.ndarray) -> int:
    """Stable 64-bit digest of one or more boolean masks (used to key substreams)."""
    h = hashlib.blake2b(digest_size=8)
    for m in masks:
        h.update(np.packbits(np.asarray(m, dtype=bool)).tobytes())
        h.update(b"/")
    return int.from_bytes(h.digest(), "little")


def threshold(p: float) -> Optional[int]:
    """
    Fixed-point threshold for density ``p``: an edge is open iff its label is
    below the threshold. ``None`` means every edge is open (p >= 1).
    """
    if p >= 1.0:
        return None
    if p <= 0.0:
        return 0
    return int(p * LABEL_SCALE)


class EdgeLabels:
    """
    Uniform 64-bit fixed-point labels U_e for the edges of one graph.

    :param edge_count: Number of edges of the owning graph.
    :param master_seed: Run-level seed.
    :param stream: Stream id (see :func:`stream_id`).
    """

    def __init__(self, edge_count: int, master_seed: int, stream: int):
        self.edge_count = int(edge_count)
        self.master_seed = int(master_seed) & (LABEL_SCALE - 1)
        self.stream = int(stream) & (LABEL_SCALE - 1)
        key = mix64(np.array([self.master_seed], dtype=_U64) ^ mix64(np.array([self.stream], dtype=_U64)))
        counters = np.arange(1, self.edge_count + 1, dtype=_U64)
        with np.errstate(over="ignore"):
            self.values = mix64(mix64(key + counters * _U64(GOLDEN_GAMMA)))
        self.values.setflags(write=False)

    def open_below(self, p: float, domain: Optional[np.ndarray] = None) -> np.ndarray:
        """Edges with U_e < p, restricted to ``domain``."""
        thr = threshold(p)
        if thr is None:
            opened = np.ones(self.edge_count, dtype=bool)
        else:
            opened = self.values < _U64(thr)
        if domain is not None:
            opened &= domain
        return opened

    def uniforms(self) -> np.ndarray:
        """Labels as float64 in [0, 1) (53 significant bits)."""
        return (self.values >> _U64(11)).astype(np.float64) * (1.0 / (1 << 53))
