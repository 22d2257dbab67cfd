"""Predictable stratum-selection rules and per-null masking.

Two rules ship: proportional round-robin (draw from the stratum with the
lowest sampled fraction) and the lower-sided hard stop, which runs a
level-0.05 lower-sided test per (null, stratum) and, once it rejects,
replaces that stratum's future terms with 1 for that null, forever.
Both rules are predictable: the choice at time t depends only on draws
before t.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

PROPORTIONAL = "proportional"
LOWER_SIDED = "lower_sided"

RULES = (PROPORTIONAL, LOWER_SIDED)


class AuditComplete(Exception):
    """No stratum remains worth (or possible) sampling."""


class HistoryError(ValueError):
    """A selector history referenced draws a stream does not contain."""


def next_stratum_proportional(counts, sizes, exhausted_flags) -> int:
    """Stratum with the smallest sampled fraction; ties to lowest index.

    Realizes sampling proportional to stratum size as a round robin.
    Returns a 0-based index.
    """
    counts = np.asarray(counts, dtype=float)
    sizes = np.asarray(sizes, dtype=float)
    exhausted_flags = np.asarray(exhausted_flags, dtype=bool)
    if exhausted_flags.all():
        raise AuditComplete("all strata exhausted")
    frac = np.where(exhausted_flags, np.inf, counts / sizes)
    return int(np.argmin(frac))


def interleave(term_streams, history, mask_from=None):
    """Interleave per-stratum supermartingale terms along a selector path.

    ``term_streams[k]`` holds the successive multipliers of stratum k's
    supermartingale; ``history`` is the sequence of chosen stratum
    indices (0-based).  ``mask_from[k]``, when given, is the within-
    stratum draw count after which stratum k's terms are replaced by 1.
    Returns the trajectory M_1..M_T of the interleaved product.
    """
    k_strata = len(term_streams)
    counts = [0] * k_strata
    m = 1.0
    out = np.empty(len(history))
    for t, k in enumerate(history):
        if not 0 <= k < k_strata:
            raise HistoryError(f"stratum index {k} out of range")
        i = counts[k]
        if i >= len(term_streams[k]):
            raise HistoryError(
                f"history consumes draw {i + 1} of stratum {k}, "
                f"stream has {len(term_streams[k])}"
            )
        masked = mask_from is not None and mask_from[k] is not None and i >= mask_from[k]
        if not masked:
            m *= float(term_streams[k][i])
        counts[k] = i + 1
        out[t] = m
    return out


@dataclass
class SelectorState:
    """Bookkeeping for one audit's stratum selection.

    ``masks`` is (nulls x strata); True means that null no longer
    consumes that stratum (absorbing).  ``counts`` are physical draws,
    ``consumed`` the draws counted as workload: a draw counts iff some
    null that was still unrejected at draw time consumed it.
    """

    rule: str
    sizes: np.ndarray
    n_nulls: int
    level: float = 0.05
    counts: np.ndarray = field(init=False)
    consumed: np.ndarray = field(init=False)
    history: list = field(default_factory=list)
    masks: np.ndarray = field(init=False)

    def __post_init__(self):
        if self.rule not in RULES:
            raise ValueError(f"unknown selector rule {self.rule!r}")
        self.sizes = np.asarray(self.sizes, dtype=np.int64)
        k = len(self.sizes)
        self.counts = np.zeros(k, dtype=np.int64)
        self.consumed = np.zeros(k, dtype=np.int64)
        self.masks = np.zeros((self.n_nulls, k), dtype=bool)

    def stratum_consumable(self, alive: np.ndarray) -> np.ndarray:
        """Per stratum: does at least one live null still consume it?"""
        if self.rule != LOWER_SIDED:
            return np.repeat(alive.any(), len(self.sizes))
        return (alive[:, None] & ~self.masks).any(axis=0)

    def choose(self, exhausted_flags, alive: np.ndarray) -> int:
        """Pick the next stratum under this rule (0-based)."""
        eligible_blocked = np.asarray(exhausted_flags, dtype=bool).copy()
        if self.rule == LOWER_SIDED:
            eligible_blocked |= ~self.stratum_consumable(alive)
        return next_stratum_proportional(self.counts, self.sizes, eligible_blocked)

    def record_draw(self, k: int, alive: np.ndarray) -> bool:
        """Note a physical draw from stratum k; returns True if counted."""
        counted = bool(self.stratum_consumable(alive)[k])
        self.counts[k] += 1
        if counted:
            self.consumed[k] += 1
        self.history.append(k)
        return counted

    def apply_masks(self, k: int, newly_rejected: np.ndarray) -> None:
        """Mask (null, stratum k) pairs whose lower-sided test rejected."""
        self.masks[newly_rejected, k] = True

    def workload(self) -> dict:
        """Consumed (headline) and physical draw counts."""
        return {
            "consumed_by_stratum": self.consumed.copy(),
            "consumed_total": int(self.consumed.sum()),
            "physical_by_stratum": self.counts.copy(),
            "physical_total": int(self.counts.sum()),
        }
