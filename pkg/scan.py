"""Inclusive prefix scans over affine recurrence elements ``(A, b)``."""

from concurrent.futures import ThreadPoolExecutor
from typing import Literal, Optional, Sequence

import numpy as np
from loguru import logger

ScanMode = Literal["sequential", "tree"]

# (transition, offset). A diagonal transition is stored as a 1-D vector.
ScanElement = tuple[np.ndarray, np.ndarray]


def is_diagonal(element: ScanElement) -> bool:
    return element[0].ndim == 1


def identity_element(d: int, diagonal: bool = False) -> ScanElement:
    """``(I, 0)``; combining with it on either side is a no-op."""
    transition = np.ones(d) if diagonal else np.eye(d)
    return transition, np.zeros(d)


def combine(later: ScanElement, earlier: ScanElement) -> ScanElement:
    """
    Compose two recurrence steps: ``(A2, b2) ∘ (A1, b1) = (A2 A1, A2 b1 + b2)``.

    Args:
        later: The step applied second
        earlier: The step applied first

    Returns:
        The composed step
    """
    a2, b2 = later
    a1, b1 = earlier

    if a2.ndim == 1 and a1.ndim == 1:
        return a2 * a1, a2 * b1 + b2

    if a2.ndim == 1:
        a2 = np.diag(a2)
    if a1.ndim == 1:
        a1 = np.diag(a1)
    return a2 @ a1, a2 @ b1 + b2


def _sequential(elements: Sequence[ScanElement]) -> list[ScanElement]:
    prefixes = [elements[0]]
    for element in elements[1:]:
        prefixes.append(combine(element, prefixes[-1]))
    return prefixes


def _tree(elements: Sequence[ScanElement], max_workers: Optional[int]) -> list[ScanElement]:
    """Hillis-Steele scan: ceil(log2 n) levels, each level's combines independent."""
    current = list(elements)
    n = len(current)
    shift = 1

    executor = ThreadPoolExecutor(max_workers=max_workers) if max_workers and max_workers > 1 else None
    try:
        while shift < n:
            snapshot = current

            def step(i: int) -> ScanElement:
                return combine(snapshot[i], snapshot[i - shift])

            indices = range(shift, n)
            if executor is None:
                combined = [step(i) for i in indices]
            else:
                combined = list(executor.map(step, indices))

            current = snapshot[:shift] + combined
            shift <<= 1
    finally:
        if executor is not None:
            executor.shutdown()

    return current


def inclusive_scan(
    elements: Sequence[ScanElement],
    mode: ScanMode = "sequential",
    max_workers: Optional[int] = None,
) -> list[ScanElement]:
    """
    Compute every prefix composition ``e_i ∘ ... ∘ e_1``.

    The offset of prefix ``i`` is the recurrence state ``h_i`` started from zero.

    Args:
        elements: Steps in time order
        mode: ``sequential`` (n - 1 combines) or ``tree`` (O(n log n) combines)
        max_workers: Thread pool size for tree levels; None or 1 runs inline

    Returns:
        Prefix elements, one per input element
    """
    if len(elements) == 0:
        return []

    if mode == "sequential":
        return _sequential(elements)
    if mode == "tree":
        logger.debug(f"Tree scan over {len(elements)} elements (workers={max_workers})")
        return _tree(elements, max_workers)

    raise ValueError(f"Unknown scan mode: {mode!r}")
