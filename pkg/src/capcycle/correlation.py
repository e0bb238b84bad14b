"""Tie-corrected Kendall rank correlation between metric scores and human judgments.

Two variants are exposed: tau_b (geometric-mean tie correction, used for
crowd-sourced yes-fractions) and Stuart's tau_c (correction for unequal
numbers of distinct values, used for expert Likert judgments). The fast
path sorts once and counts discordant pairs by merge-sort inversion
counting; `brute_force_tau_oracle` is the literal O(n^2) reference it
must match pair-for-pair.

Ties between repeated metric scores are expected (cached scores) and are
never jittered away; jitter would make reports irreproducible.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal, Sequence

import numpy as np

from .errors import ContractError, DegenerateInputError

TauVariant = Literal["tau_b", "tau_c"]


@dataclass(frozen=True)
class CorrelationReport:
    """Tau statistic plus the full pair classification behind it.

    ties_x / ties_y count all pairs tied in that coordinate (pairs tied in
    both coordinates appear in each and once in ties_xy), so every
    unordered pair is classified exactly once:
    concordant + discordant + ties_x + ties_y - ties_xy == n(n-1)/2.
    """

    tau: float
    variant: TauVariant
    n: int
    concordant: int
    discordant: int
    ties_x: int
    ties_y: int
    ties_xy: int = 0
    excluded: int = 0

    def __post_init__(self) -> None:
        if not -1.0 <= self.tau <= 1.0:
            raise ContractError(f"tau must lie in [-1, 1], got {self.tau}")
        n0 = self.n * (self.n - 1) // 2
        classified = (
            self.concordant + self.discordant + self.ties_x + self.ties_y - self.ties_xy
        )
        if classified != n0:
            raise ContractError(
                f"pair accounting broken: {classified} classified of {n0} pairs"
            )

    def to_dict(self) -> dict:
        return {
            "tau": self.tau,
            "variant": self.variant,
            "n": self.n,
            "concordant": self.concordant,
            "discordant": self.discordant,
            "ties_x": self.ties_x,
            "ties_y": self.ties_y,
            "ties_xy": self.ties_xy,
            "excluded": self.excluded,
        }


def _validate(x: Sequence[float], y: Sequence[float]) -> tuple[np.ndarray, np.ndarray]:
    xa = np.asarray(x, dtype=np.float64)
    ya = np.asarray(y, dtype=np.float64)
    if xa.ndim != 1 or ya.ndim != 1:
        raise ContractError("x and y must be flat sequences")
    if xa.shape[0] != ya.shape[0]:
        raise ContractError(f"length mismatch: {xa.shape[0]} != {ya.shape[0]}")
    if xa.shape[0] < 2:
        raise ContractError("need at least 2 samples")
    if not (np.all(np.isfinite(xa)) and np.all(np.isfinite(ya))):
        raise ContractError("x and y must be finite (NaN would misclassify pairs)")
    return xa, ya


def _merge_count(values: list[float]) -> int:
    """Count strict inversions (pairs i<j with v[i] > v[j]) by merge sort."""
    inv = 0
    src = values
    width = 1
    n = len(src)
    buf = [0.0] * n
    while width < n:
        for lo in range(0, n, 2 * width):
            mid = min(lo + width, n)
            hi = min(lo + 2 * width, n)
            i, j, k = lo, mid, lo
            while i < mid and j < hi:
                if src[i] <= src[j]:
                    buf[k] = src[i]
                    i += 1
                else:
                    buf[k] = src[j]
                    inv += mid - i
                    j += 1
                k += 1
            buf[k:hi] = src[i:mid] if i < mid else src[j:hi]
        src, buf = buf, src
        width *= 2
    return inv


def _tie_pairs(sorted_vals: np.ndarray) -> int:
    """Sum t*(t-1)/2 over runs of equal values in an already-sorted array."""
    boundaries = np.flatnonzero(np.r_[True, sorted_vals[1:] != sorted_vals[:-1], True])
    runs = np.diff(boundaries)
    return int((runs * (runs - 1) // 2).sum())


def _pair_counts(xa: np.ndarray, ya: np.ndarray) -> tuple[int, int, int, int, int]:
    """(concordant, discordant, ties_x, ties_y, ties_xy) in O(n log n)."""
    n = xa.shape[0]
    order = np.lexsort((ya, xa))
    xs = xa[order]
    ys = ya[order]

    # sorted by (x, y): y ascends inside every x run, so every strict
    # inversion of the y sequence crosses distinct x values => discordant
    dis = _merge_count(list(ys))

    ties_x = _tie_pairs(xs)
    ties_y = _tie_pairs(np.sort(ya))
    joint_runs = np.diff(
        np.flatnonzero(np.r_[True, (xs[1:] != xs[:-1]) | (ys[1:] != ys[:-1]), True])
    )
    ties_xy = int((joint_runs * (joint_runs - 1) // 2).sum())

    n0 = n * (n - 1) // 2
    con = n0 - dis - ties_x - ties_y + ties_xy
    return con, dis, ties_x, ties_y, ties_xy


def _tau_b_from_counts(
    con: int, dis: int, ties_x: int, ties_y: int, n: int
) -> float:
    n0 = n * (n - 1) // 2
    if ties_x == n0 or ties_y == n0:
        raise DegenerateInputError("tau_b undefined when one list is entirely tied")
    return (con - dis) / math.sqrt((n0 - ties_x) * (n0 - ties_y))


def _tau_c_from_counts(con: int, dis: int, m: int, n: int) -> float:
    if m < 2:
        raise DegenerateInputError("tau_c needs at least 2 distinct values in each list")
    return 2.0 * m * (con - dis) / (n * n * (m - 1))


def kendall_tau_b(x: Sequence[float], y: Sequence[float]) -> CorrelationReport:
    """Tie-adjusted tau_b: (C-D) / sqrt((n0-n1)(n0-n2))."""
    xa, ya = _validate(x, y)
    con, dis, tx, ty, txy = _pair_counts(xa, ya)
    tau = _tau_b_from_counts(con, dis, tx, ty, xa.shape[0])
    return CorrelationReport(
        tau=tau, variant="tau_b", n=xa.shape[0],
        concordant=con, discordant=dis, ties_x=tx, ties_y=ty, ties_xy=txy,
    )


def kendall_tau_c(x: Sequence[float], y: Sequence[float]) -> CorrelationReport:
    """Stuart's tau_c: 2m(C-D) / (n^2 (m-1)) with m = min distinct values."""
    xa, ya = _validate(x, y)
    m = min(np.unique(xa).size, np.unique(ya).size)
    con, dis, tx, ty, txy = _pair_counts(xa, ya)
    tau = _tau_c_from_counts(con, dis, m, xa.shape[0])
    return CorrelationReport(
        tau=tau, variant="tau_c", n=xa.shape[0],
        concordant=con, discordant=dis, ties_x=tx, ties_y=ty, ties_xy=txy,
    )


def brute_force_tau_oracle(
    x: Sequence[float], y: Sequence[float], variant: TauVariant
) -> CorrelationReport:
    """Literal pair-by-pair classification; the reference the fast path must equal."""
    xa, ya = _validate(x, y)
    if variant not in ("tau_b", "tau_c"):
        raise ContractError(f"unknown variant {variant!r}")
    n = xa.shape[0]
    xs = xa.tolist()  # plain floats: the loop below is the hot path
    ys = ya.tolist()
    con = dis = tx = ty = txy = 0
    for i in range(n - 1):
        for j in range(i + 1, n):
            dx = xs[i] - xs[j]
            dy = ys[i] - ys[j]
            if dx == 0 and dy == 0:
                tx += 1
                ty += 1
                txy += 1
            elif dx == 0:
                tx += 1
            elif dy == 0:
                ty += 1
            elif (dx > 0) == (dy > 0):
                con += 1
            else:
                dis += 1
    if variant == "tau_b":
        tau = _tau_b_from_counts(con, dis, tx, ty, n)
    else:
        tau = _tau_c_from_counts(con, dis, min(len(set(xs)), len(set(ys))), n)
    return CorrelationReport(
        tau=tau, variant=variant, n=n,
        concordant=con, discordant=dis, ties_x=tx, ties_y=ty, ties_xy=txy,
    )
