"""Loaders for external data: populations, CVR/MVR pairs, county results,
and the pilot-audit fixture.

Loaders are total over their formats: anything else raises
:class:`LoadError` with a line- or field-addressed message.
"""

from __future__ import annotations

import csv
import hashlib
import json
from pathlib import Path

import numpy as np

from .population import Stratum, StratifiedPopulation

_DATA_DIR = Path(__file__).parent / "data"

CALIFORNIA_CSV = _DATA_DIR / "ca_2020_president.csv"
KALAMAZOO_JSON = _DATA_DIR / "kalamazoo_2018.json"


class LoadError(ValueError):
    pass


def _rows(path):
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.DictReader(f)
        if reader.fieldnames is None:
            raise LoadError(f"{path}: empty file")
        yield reader.fieldnames
        for lineno, row in enumerate(reader, start=2):
            yield lineno, row


def load_population(
    path, replacement: bool = False, upper_bounds: dict | None = None
) -> StratifiedPopulation:
    """Read a ``stratum,value,count`` CSV into categorical urns.

    ``upper_bounds`` maps stratum id to its value bound; omitted strata
    take their largest observed value as the bound.
    """
    rows = _rows(path)
    header = next(rows)
    for col in ("stratum", "value", "count"):
        if col not in header:
            raise LoadError(f"{path}: missing column {col!r}")
    cats: dict[int, list[tuple[float, int]]] = {}
    for lineno, row in rows:
        try:
            sid = int(row["stratum"])
            value = float(row["value"])
            count = int(row["count"])
        except (TypeError, ValueError) as exc:
            raise LoadError(f"{path}:{lineno}: {exc}") from None
        if value < 0:
            raise LoadError(f"{path}:{lineno}: negative assorter value")
        if count < 0:
            raise LoadError(f"{path}:{lineno}: negative count")
        cats.setdefault(sid, []).append((value, count))
    if not cats:
        raise LoadError(f"{path}: no data rows")
    strata = []
    for sid in sorted(cats):
        values = np.array([v for v, _ in cats[sid]])
        counts = np.array([c for _, c in cats[sid]], dtype=np.int64)
        u = (upper_bounds or {}).get(sid, float(values.max()) or 1.0)
        if np.any(values > u):
            raise LoadError(f"{path}: stratum {sid} has values above bound {u}")
        strata.append(
            Stratum(
                sid=sid,
                size=int(counts.sum()),
                values=values,
                counts=counts,
                upper_bound=float(u),
            )
        )
    return StratifiedPopulation(strata=strata, replacement=replacement)


def export_population(pop: StratifiedPopulation, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f)
        w.writerow(["stratum", "value", "count"])
        for s in pop.strata:
            for v, c in zip(s.values, s.counts):
                if c > 0:
                    w.writerow([s.sid, repr(float(v)), int(c)])


def load_cvr_mvr(path) -> list[tuple[int, str, str]]:
    """Read a ``stratum,cvr,mvr`` CSV of vote labels."""
    rows = _rows(path)
    header = next(rows)
    for col in ("stratum", "cvr", "mvr"):
        if col not in header:
            raise LoadError(f"{path}: missing column {col!r}")
    out = []
    for lineno, row in rows:
        try:
            sid = int(row["stratum"])
        except (TypeError, ValueError):
            raise LoadError(f"{path}:{lineno}: bad stratum id") from None
        cvr = (row["cvr"] or "").strip()
        mvr = (row["mvr"] or "").strip()
        if not mvr:
            raise LoadError(f"{path}:{lineno}: missing manual interpretation")
        out.append((sid, cvr, mvr))
    return out


def load_california_results(path=None):
    """Read ``county,candidate,votes`` and aggregate per county.

    Returns (counties, winner, loser): counties is a list of
    (name, total_votes, winner_votes, loser_votes) sorted by name; the
    winner and loser are the two candidates with the highest statewide
    totals.
    """
    path = path or CALIFORNIA_CSV
    rows = _rows(path)
    header = next(rows)
    for col in ("county", "candidate", "votes"):
        if col not in header:
            raise LoadError(f"{path}: missing column {col!r}")
    per_county: dict[str, dict[str, int]] = {}
    statewide: dict[str, int] = {}
    for lineno, row in rows:
        county = (row["county"] or "").strip()
        cand = (row["candidate"] or "").strip()
        if not county or not cand:
            raise LoadError(f"{path}:{lineno}: missing county or candidate")
        try:
            votes = int(row["votes"])
        except (TypeError, ValueError):
            raise LoadError(f"{path}:{lineno}: non-numeric votes") from None
        if votes < 0:
            raise LoadError(f"{path}:{lineno}: negative votes")
        per_county.setdefault(county, {})
        per_county[county][cand] = per_county[county].get(cand, 0) + votes
        statewide[cand] = statewide.get(cand, 0) + votes
    if len(statewide) < 2:
        raise LoadError(f"{path}: need at least two candidates")
    ranked = sorted(statewide, key=statewide.get, reverse=True)
    winner, loser = ranked[0], ranked[1]
    counties = []
    for name in sorted(per_county):
        tallies = per_county[name]
        total = sum(tallies.values())
        if total <= 0:
            raise LoadError(f"{path}: county {name} has no votes")
        counties.append(
            (name, total, tallies.get(winner, 0), tallies.get(loser, 0))
        )
    return counties, winner, loser


def fixture_checksum(fixture: dict) -> str:
    """Checksum of the fixture payload (everything but the checksum)."""
    payload = {k: v for k, v in fixture.items() if k != "checksum"}
    canon = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()


def load_kalamazoo_fixture(path=None, require_transcribed: bool = False) -> dict:
    """Load and validate the 2018 pilot-audit fixture.

    Validates the embedded checksum and the published stratum sizes,
    diluted margins, and sample sizes.  ``require_transcribed`` refuses
    fixtures whose provenance is not a direct transcription of the
    pilot-audit records (this package ships a reconstruction; see the
    fixture's provenance notes).
    """
    path = path or KALAMAZOO_JSON
    try:
        with open(path, encoding="utf-8") as f:
            fixture = json.load(f)
    except FileNotFoundError:
        raise LoadError(f"{path}: fixture not found") from None
    except json.JSONDecodeError as exc:
        raise LoadError(f"{path}: invalid JSON ({exc})") from None
    if fixture.get("checksum") != fixture_checksum(fixture):
        raise LoadError(f"{path}: checksum mismatch; refusing fixture")
    strata = fixture.get("strata", {})
    cvr, pol = strata.get("cvr", {}), strata.get("polling", {})
    checks = [
        (cvr.get("size"), 5294, "cvr stratum size"),
        (pol.get("size"), 22732, "polling stratum size"),
        (cvr.get("diluted_margin"), 0.55, "cvr diluted margin"),
        (pol.get("diluted_margin"), 0.57, "polling diluted margin"),
        (len(fixture.get("cvr_sample", [])), 8, "cvr sample size"),
        (sum(fixture.get("polling_sample_tallies", {}).values()), 32,
         "polling sample size"),
    ]
    for got, want, what in checks:
        if got != want:
            raise LoadError(f"{path}: {what} is {got}, expected {want}")
    if require_transcribed and fixture.get("provenance", {}).get("kind") != "transcribed":
        raise LoadError(
            f"{path}: fixture provenance is "
            f"{fixture.get('provenance', {}).get('kind')!r}, not a transcription"
        )
    return fixture
