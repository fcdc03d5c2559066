"""Coarse pattern classification of a phase field (spots / stripes / mixed / uniform)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .grid import GridSpec


def count_components(mask: np.ndarray, periodic: bool = True) -> int:
    """Connected components (face neighbours), merging across periodic boundaries."""
    labels, n = ndimage.label(mask)
    if not periodic or n == 0:
        return n
    parent = list(range(n + 1))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for axis in range(mask.ndim):
        lo = np.take(labels, 0, axis=axis)
        hi = np.take(labels, -1, axis=axis)
        for a, b in zip(lo.ravel(), hi.ravel()):
            if a and b:
                ra, rb = find(a), find(b)
                if ra != rb:
                    parent[ra] = rb
    return len({find(i) for i in range(1, n + 1)})


@dataclass(frozen=True)
class Morphology:
    interface_fraction: float
    positive_fraction: float
    positive_components: int
    negative_components: int
    pattern: str


def classify(grid: GridSpec, phi: np.ndarray, band: float = 0.2) -> Morphology:
    """Classify using the interface fraction ``|phi| < band`` and component counts.

    ``spots``: one phase is a single connected matrix holding at least four
    islands of the other; ``stripes``: both phases split into several
    components with roughly balanced areas; ``uniform``: no phase separation.
    """
    phi = grid.check(phi)
    periodic = grid.periodic
    interface = float(np.mean(np.abs(phi) < band))
    pos = phi > 0
    pos_frac = float(np.mean(pos))
    n_pos = count_components(pos, periodic)
    n_neg = count_components(~pos, periodic)
    # a separated pattern has a clear bimodal distribution around the wells
    separated = interface < 0.5 and min(pos_frac, 1 - pos_frac) > 0.02 and np.ptp(phi) > 1.0
    if not separated:
        pattern = "uniform"
    elif (n_pos == 1 and n_neg >= 4) or (n_neg == 1 and n_pos >= 4):
        pattern = "spots"
    elif n_pos >= 2 and n_neg >= 2 and abs(pos_frac - 0.5) < 0.15:
        pattern = "stripes"
    else:
        pattern = "mixed"
    return Morphology(interface, pos_frac, n_pos, n_neg, pattern)
