"""Synthetic genuine/impostor templates standing in for real biometric data."""

from __future__ import annotations

import numpy as np

from .protocols import FaceTemplate, IrisTemplate


def iris_pair(
    n_bits: int,
    rng: np.random.Generator,
    *,
    genuine: bool,
    flip_rate: float = 0.05,
    mask_rate: float = 0.05,
    radial: int | None = None,
    angular: int | None = None,
) -> tuple[IrisTemplate, IrisTemplate]:
    """Enrolled and probe iriscodes.

    A genuine probe is the enrolled code with each bit flipped with
    probability ``flip_rate``; an impostor probe is independent. Masks are
    independent Bernoulli(``mask_rate``) noise for both templates.
    """
    base = rng.integers(0, 2, n_bits, dtype=np.uint8)
    if genuine:
        probe = base ^ (rng.random(n_bits) < flip_rate).astype(np.uint8)
    else:
        probe = rng.integers(0, 2, n_bits, dtype=np.uint8)
    masks = [(rng.random(n_bits) < mask_rate).astype(np.uint8) for _ in range(2)]
    for m in masks:
        if m.all():
            m[0] = 0
    return (
        IrisTemplate(base, masks[0], radial, angular),
        IrisTemplate(probe, masks[1], radial, angular),
    )


def face_pair(
    k: int,
    rng: np.random.Generator,
    *,
    genuine: bool,
    bf: int = 8,
    radius: int = 4,
) -> tuple[FaceTemplate, FaceTemplate]:
    """Enrolled and probe eigenface projections with ``bf``-bit entries;
    a genuine probe moves each entry by at most ``radius``."""
    top = (1 << bf) - 1
    base = rng.integers(0, top + 1, k)
    if genuine:
        probe = np.clip(base + rng.integers(-radius, radius + 1, k), 0, top)
    else:
        probe = rng.integers(0, top + 1, k)
    return FaceTemplate(base, bf), FaceTemplate(probe, bf)
