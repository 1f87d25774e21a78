"""Piecewise-linear envelopes for quadratic offer costs.

A quadratic cost ``a*q^2 + b*q`` over ``[q_min, q_max]`` is replaced by K
equal-width segments whose slopes are the chord slopes of the quadratic:
segment k spanning ``[q_k, q_{k+1}]`` gets slope ``a*(q_k + q_{k+1}) + b``.
With ``a >= 0`` the slopes are non-decreasing, so a minimizing LP fills
segments in order and the approximation is exact at every breakpoint.
"""
from __future__ import annotations

import numpy as np


def segment_breakpoints(q_min: float, q_max: float, k: int) -> np.ndarray:
    if k < 1:
        raise ValueError("need at least one segment")
    return np.linspace(q_min, q_max, k + 1)


def segment_widths_and_slopes(
    a: float, b: float, q_min: float, q_max: float, k: int
) -> tuple[np.ndarray, np.ndarray]:
    """Per-segment widths and chord slopes for one hour of one offer."""
    bp = segment_breakpoints(q_min, q_max, k)
    widths = np.diff(bp)
    slopes = a * (bp[:-1] + bp[1:]) + b
    return widths, slopes


def linearized_cost(
    p: float, a: float, b: float, q_min: float, q_max: float, k: int
) -> float:
    """Variable cost of output ``p`` under the segment envelope.

    Segments fill greedily from the cheapest, which is how the LP allocates
    them; the fixed ``c`` term and any ``q_min`` base cost are not included.
    """
    widths, slopes = segment_widths_and_slopes(a, b, q_min, q_max, k)
    remaining = p - q_min
    filled = np.clip(remaining - np.concatenate([[0.0], np.cumsum(widths)[:-1]]), 0.0, widths)
    return float(slopes @ filled)


def base_cost(a: float, b: float, c: float, q_min: float) -> float:
    """Hourly cost incurred just for being online at minimum output."""
    return c + a * q_min * q_min + b * q_min
