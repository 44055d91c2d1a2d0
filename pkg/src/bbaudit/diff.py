"""Claim-level diff between two releases of the availability map.

Removed claims feed the unserved-evidence labeling path; brand-only edits
are not service changes and are deliberately invisible to the diff.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Optional

from .geo import CellId
from .ingest import AvailabilityClaim, MapSnapshot, Technology


class DeltaKind(Enum):
    ADDED = "added"
    REMOVED = "removed"
    MODIFIED = "modified"


@dataclass(frozen=True)
class ClaimDelta:
    kind: DeltaKind
    provider_id: int
    technology: Technology
    location_id: int
    cell: CellId
    before: Optional[AvailabilityClaim]
    after: Optional[AvailabilityClaim]


def _service_fields(c: AvailabilityClaim) -> tuple[float, float, bool]:
    return (c.max_down_mbps, c.max_up_mbps, c.low_latency)


def diff_snapshots(old: MapSnapshot, new: MapSnapshot) -> list[ClaimDelta]:
    """Complete, minimal delta keyed by (provider, technology, location)."""
    deltas: list[ClaimDelta] = []
    old_keys = old.claims_by_key.keys()
    new_keys = new.claims_by_key.keys()
    for key in sorted(old_keys - new_keys):
        c = old.claims_by_key[key]
        deltas.append(ClaimDelta(DeltaKind.REMOVED, c.provider_id, c.technology,
                                 c.location_id, c.cell, before=c, after=None))
    for key in sorted(new_keys - old_keys):
        c = new.claims_by_key[key]
        deltas.append(ClaimDelta(DeltaKind.ADDED, c.provider_id, c.technology,
                                 c.location_id, c.cell, before=None, after=c))
    for key in sorted(old_keys & new_keys):
        before = old.claims_by_key[key]
        after = new.claims_by_key[key]
        if _service_fields(before) != _service_fields(after):
            deltas.append(ClaimDelta(DeltaKind.MODIFIED, after.provider_id, after.technology,
                                     after.location_id, after.cell, before=before, after=after))
    return deltas


def apply_deltas(old: MapSnapshot, deltas: Iterable[ClaimDelta]) -> MapSnapshot:
    """Patch a snapshot forward; inverse check for diff completeness."""
    claims = dict(old.claims_by_key)
    for d in deltas:
        key = (d.provider_id, d.technology, d.location_id)
        if d.kind is DeltaKind.REMOVED:
            claims.pop(key, None)
        else:
            assert d.after is not None
            claims[key] = d.after
    return MapSnapshot(as_of_date=old.as_of_date, release_date=old.release_date,
                       claims_by_key=claims, methodology_texts=dict(old.methodology_texts))


def removals_as_labels(deltas: Iterable[ClaimDelta]) -> list[tuple[int, CellId, Technology]]:
    """Unserved evidence: one row per (provider, cell, technology) that lost
    at least one location. Added and Modified deltas contribute nothing."""
    seen: set[tuple[int, CellId, Technology]] = set()
    for d in deltas:
        if d.kind is DeltaKind.REMOVED:
            seen.add((d.provider_id, d.cell, d.technology))
    return sorted(seen, key=lambda k: (k[0], k[1].id, int(k[2])))


def _claim_json(c: Optional[AvailabilityClaim]) -> Optional[dict]:
    if c is None:
        return None
    return {
        "provider_id": c.provider_id,
        "brand": c.brand,
        "technology": int(c.technology),
        "max_down_mbps": c.max_down_mbps,
        "max_up_mbps": c.max_up_mbps,
        "low_latency": c.low_latency,
        "location_id": c.location_id,
        "cell_hex": c.cell.to_hex(),
        "state": c.state,
        "category": c.residential_business,
    }


def write_deltas(deltas: Iterable[ClaimDelta], path) -> None:
    """NDJSON audit export, one delta per line."""
    with open(path, "w", encoding="utf-8") as fh:
        for d in deltas:
            fh.write(json.dumps({
                "kind": d.kind.value,
                "provider_id": d.provider_id,
                "technology": int(d.technology),
                "location_id": d.location_id,
                "cell_hex": d.cell.to_hex(),
                "before": _claim_json(d.before),
                "after": _claim_json(d.after),
            }) + "\n")
