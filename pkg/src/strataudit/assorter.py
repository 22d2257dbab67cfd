"""Plurality assorters, overstatement assorters, and null-mean translation.

A polling audit tests card values directly against a hypothesized stratum
mean.  A comparison audit tests the overstatement assorter
B = u_A - (cvr - card), a nonnegative quantity bounded by 2 u_A, against
the translated null mean beta = theta + u_A - reported_mean.
"""

from __future__ import annotations

from dataclasses import dataclass

POLLING = "polling"
COMPARISON = "comparison"

_PLURALITY = {"winner": 1.0, "loser": 0.0, "other": 0.5}


class ContractError(ValueError):
    """An operation was applied to the wrong kind of assorter spec."""


class DomainError(ValueError):
    """Input value outside the assorter's declared bounds."""


@dataclass(frozen=True)
class AssorterSpec:
    """Per-stratum assorter metadata.

    ``upper_bound_original`` is the bound on the raw assorter (1 for
    plurality).  For comparison audits the test statistic operates on
    overstatement-assorter values bounded by twice that, and the
    reported assorter mean enters the null translation.
    """

    kind: str
    upper_bound_original: float = 1.0
    reported_mean: float | None = None

    def __post_init__(self):
        if self.kind not in (POLLING, COMPARISON):
            raise ContractError(f"unknown audit kind {self.kind!r}")
        if self.upper_bound_original <= 0:
            raise DomainError("assorter upper bound must be positive")
        if self.kind == COMPARISON:
            if self.reported_mean is None:
                raise ContractError("comparison audits need a reported assorter mean")
            if not 0 <= self.reported_mean <= self.upper_bound_original:
                raise DomainError("reported mean outside [0, upper bound]")
        elif self.reported_mean is not None:
            raise ContractError("polling audits carry no reported mean")

    @property
    def upper_bound_test(self) -> float:
        """Bound on the values the test statistic consumes."""
        if self.kind == COMPARISON:
            return 2.0 * self.upper_bound_original
        return self.upper_bound_original


@dataclass(frozen=True)
class OverstatementRecord:
    cvr_value: float
    card_value: float
    omega: float
    b_value: float


def plurality_assorter(vote: str) -> float:
    """Plurality assorter value: winner 1, loser 0, anything else 1/2."""
    return _PLURALITY.get(vote, 0.5)


def overstatement_assorter(
    cvr_value: float, card_value: float, upper_bound: float = 1.0
) -> OverstatementRecord:
    """Overstatement omega = cvr - card and its assorter B = u_A - omega.

    B lands in [0, 2 u_A]: 0 for a two-vote overstatement, u_A for an
    exact match, 2 u_A for a two-vote understatement.
    """
    if not 0 <= cvr_value <= upper_bound:
        raise DomainError(f"cvr value {cvr_value} outside [0, {upper_bound}]")
    if not 0 <= card_value <= upper_bound:
        raise DomainError(f"card value {card_value} outside [0, {upper_bound}]")
    omega = cvr_value - card_value
    return OverstatementRecord(
        cvr_value=cvr_value,
        card_value=card_value,
        omega=omega,
        b_value=upper_bound - omega,
    )


def comparison_null_mean(theta_k: float, spec: AssorterSpec) -> float:
    """Translate a hypothesized stratum mean onto the overstatement scale.

    beta = theta + u_A - reported_mean; the stratum assertion holds iff
    the overstatement-assorter mean exceeds beta.
    """
    if spec.kind != COMPARISON:
        raise ContractError("null-mean translation applies to comparison audits only")
    if not 0 <= theta_k <= spec.upper_bound_original:
        raise DomainError(f"theta {theta_k} outside [0, {spec.upper_bound_original}]")
    return theta_k + spec.upper_bound_original - spec.reported_mean


def null_mean_on_test_scale(theta_k: float, spec: AssorterSpec) -> float:
    """Null mean on the scale the test statistic sees.

    Identity for polling audits; the beta translation for comparison.
    """
    if spec.kind == POLLING:
        return theta_k
    return comparison_null_mean(theta_k, spec)


def reported_mean_from_margin(margin: float, upper_bound: float = 1.0) -> float:
    """Reported assorter mean implied by a diluted margin, for plurality."""
    if not -1.0 <= margin <= 1.0:
        raise DomainError(f"diluted margin {margin} outside [-1, 1]")
    return upper_bound * (1.0 + margin) / 2.0
