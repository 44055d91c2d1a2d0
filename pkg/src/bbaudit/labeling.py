"""Labeled-observation construction, conflict resolution, and balancing.

An observation is one (provider, cell, technology) triple labeled served or
unserved. Unserved evidence comes from successful challenges and from
claims removed between map releases; served evidence comes from failed
challenges and, synthetically, from cells that pass the three-condition
likely-served rule (device density above one per location, provider-
attributed test evidence, and a matching claim). Satellite technologies
are excluded from observation construction.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Iterable, Mapping, Optional, Sequence

from .attribution import CellTestStats, ProviderCellEvidence
from .geo import CellId
from .ingest import (
    ChallengeRecord,
    HexLocationCount,
    MalformedRow,
    MapSnapshot,
    Technology,
    open_text,
)


class LabelingError(ValueError):
    pass


class MissingBslCount(LabelingError):
    pass


class Label(Enum):
    SERVED = "served"
    UNSERVED = "unserved"


class LabelSource(Enum):
    CHALLENGE_FAILED = "challenge_failed"
    CHALLENGE_SUCCEEDED = "challenge_succeeded"
    CHANGE_REMOVED = "change_removed"
    SYNTHETIC_LIKELY_SERVED = "synthetic_likely_served"


_LABEL_FOR_SOURCE = {
    LabelSource.CHALLENGE_FAILED: Label.SERVED,
    LabelSource.CHALLENGE_SUCCEEDED: Label.UNSERVED,
    LabelSource.CHANGE_REMOVED: Label.UNSERVED,
    LabelSource.SYNTHETIC_LIKELY_SERVED: Label.SERVED,
}

# Adjudicated negative evidence is the strongest signal, then adjudicated
# positive, then inferred removals, then synthetic positives.
DEFAULT_PRECEDENCE = (
    LabelSource.CHALLENGE_SUCCEEDED,
    LabelSource.CHALLENGE_FAILED,
    LabelSource.CHANGE_REMOVED,
    LabelSource.SYNTHETIC_LIKELY_SERVED,
)


@dataclass(frozen=True)
class LabeledObservation:
    provider_id: int
    cell: CellId
    technology: Technology
    state: str
    label: Label
    source: LabelSource
    coverage_score: Optional[float] = None
    adjudicated: bool = False

    def __post_init__(self):
        if _LABEL_FOR_SOURCE[self.source] is not self.label:
            raise LabelingError(f"source {self.source.value} cannot carry label {self.label.value}")

    @property
    def key(self) -> tuple[int, CellId, Technology]:
        return (self.provider_id, self.cell, self.technology)


def _sort_key(o: LabeledObservation):
    return (o.provider_id, o.cell.id, int(o.technology))


@dataclass
class LabeledDataset:
    observations: list[LabeledObservation] = field(default_factory=list)

    def __post_init__(self):
        self.observations = sorted(self.observations, key=_sort_key)
        keys = [o.key for o in self.observations]
        if len(keys) != len(set(keys)):
            raise LabelingError("duplicate observation keys in dataset")

    def __len__(self) -> int:
        return len(self.observations)

    def keys(self) -> set[tuple[int, CellId, Technology]]:
        return {o.key for o in self.observations}

    def composition(self) -> dict[str, dict]:
        """Counts and fractions by label source."""
        total = len(self.observations)
        out = {}
        for source in LabelSource:
            count = sum(1 for o in self.observations if o.source is source)
            out[source.value] = {
                "count": count,
                "fraction": count / total if total else 0.0,
            }
        return out

    def class_counts(self) -> dict[str, int]:
        served = sum(1 for o in self.observations if o.label is Label.SERVED)
        return {"served": served, "unserved": len(self.observations) - served}


# ---------------------------------------------------------------------------
# Label sources


def coverage_score(stats: CellTestStats, counts: HexLocationCount) -> float:
    """Unique devices per location in the cell."""
    if counts.bsl_count < 1:
        raise MissingBslCount(f"cell {counts.cell.to_hex()} has bsl_count {counts.bsl_count}")
    return stats.ookla_devices / counts.bsl_count


def coverage_scores(
    stats: Iterable[CellTestStats],
    counts: Iterable[HexLocationCount],
) -> dict[CellId, float]:
    """Per-cell coverage score; every stats cell must have a location count."""
    count_by_cell = {c.cell: c for c in counts}
    out: dict[CellId, float] = {}
    for s in stats:
        count = count_by_cell.get(s.cell)
        if count is None:
            raise MissingBslCount(f"no location count for cell {s.cell.to_hex()}")
        out[s.cell] = coverage_score(s, count)
    return out


def claim_tech_index(snapshot: MapSnapshot) -> dict[tuple[int, CellId], set[Technology]]:
    """(provider, cell) -> claimed terrestrial technologies."""
    out: dict[tuple[int, CellId], set[Technology]] = {}
    for c in snapshot.claims:
        if c.technology.is_satellite:
            continue
        out.setdefault((c.provider_id, c.cell), set()).add(c.technology)
    return out


def likely_served(
    scores: Mapping[CellId, float],
    evidence: Iterable[ProviderCellEvidence],
    claims: Mapping[tuple[int, CellId], set[Technology]],
    cell_states: Mapping[CellId, str],
) -> list[LabeledObservation]:
    """Synthetic served observations meeting all three conditions: device
    density above one per location, provider-attributed test evidence in
    the cell, and a claim by that provider for the technology."""
    out: list[LabeledObservation] = []
    for ev in evidence:
        score = scores.get(ev.cell)
        if score is None or score <= 1.0:
            continue
        techs = claims.get((ev.provider_id, ev.cell))
        if not techs:
            continue
        for tech in sorted(techs):
            out.append(LabeledObservation(
                provider_id=ev.provider_id,
                cell=ev.cell,
                technology=tech,
                state=cell_states.get(ev.cell, ""),
                label=Label.SERVED,
                source=LabelSource.SYNTHETIC_LIKELY_SERVED,
                coverage_score=score,
            ))
    return sorted(out, key=_sort_key)


def challenge_labels(
    records: Iterable[ChallengeRecord],
    cell_states: Mapping[CellId, str],
    cutoff_date: Optional[str] = None,
) -> list[LabeledObservation]:
    """Hex-aggregated challenge outcomes.

    Any successful challenge in a cell marks the whole (provider, cell,
    technology) unserved; otherwise failed challenges mark it served (the
    same hex aggregation applied symmetrically). Records resolved before
    cutoff_date are discarded to avoid leakage from earlier analysis
    windows. The adjudicated flag is set when a record on the deciding
    side was resolved by the regulator.
    """
    grouped: dict[tuple[int, CellId, Technology], list[ChallengeRecord]] = {}
    for r in records:
        if r.technology.is_satellite:
            continue
        if cutoff_date is not None and r.resolved_date < cutoff_date:
            continue
        grouped.setdefault((r.provider_id, r.cell, r.technology), []).append(r)

    out: list[LabeledObservation] = []
    for (provider_id, cell, tech), recs in grouped.items():
        successes = [r for r in recs if r.outcome.success]
        deciding = successes if successes else recs
        out.append(LabeledObservation(
            provider_id=provider_id,
            cell=cell,
            technology=tech,
            state=cell_states.get(cell, ""),
            label=Label.UNSERVED if successes else Label.SERVED,
            source=LabelSource.CHALLENGE_SUCCEEDED if successes else LabelSource.CHALLENGE_FAILED,
            adjudicated=any(r.outcome.adjudicated for r in deciding),
        ))
    return sorted(out, key=_sort_key)


def change_labels(
    removals: Iterable[tuple[int, CellId, Technology]],
    cell_states: Mapping[CellId, str],
) -> list[LabeledObservation]:
    """Unserved observations from claims removed between releases."""
    out = []
    for provider_id, cell, tech in removals:
        if tech.is_satellite:
            continue
        out.append(LabeledObservation(
            provider_id=provider_id,
            cell=cell,
            technology=tech,
            state=cell_states.get(cell, ""),
            label=Label.UNSERVED,
            source=LabelSource.CHANGE_REMOVED,
        ))
    return sorted(out, key=_sort_key)


# ---------------------------------------------------------------------------
# Assembly and balancing


def assemble_dataset(
    challenge_obs: Sequence[LabeledObservation],
    change_obs: Sequence[LabeledObservation],
    synthetic_obs: Sequence[LabeledObservation],
    precedence: Sequence[LabelSource] = DEFAULT_PRECEDENCE,
) -> LabeledDataset:
    """Merge label sources, resolving key conflicts by source precedence."""
    rank = {source: i for i, source in enumerate(precedence)}
    if set(rank) != set(LabelSource):
        raise LabelingError("precedence must rank every label source exactly once")
    chosen: dict[tuple, LabeledObservation] = {}
    for obs in list(challenge_obs) + list(change_obs) + list(synthetic_obs):
        cur = chosen.get(obs.key)
        if cur is None or rank[obs.source] < rank[cur.source]:
            chosen[obs.key] = obs
    return LabeledDataset(list(chosen.values()))


def _candidate_order(o: LabeledObservation):
    score = o.coverage_score if o.coverage_score is not None else 0.0
    # Descending score; ties broken by ascending cell id for determinism.
    return (-score, o.cell.id, o.provider_id, int(o.technology))


def balance(dataset: LabeledDataset, candidates: Sequence[LabeledObservation]) -> LabeledDataset:
    """Add served candidates until classes balance, never removing rows.

    First pass balances each (provider, state) by descending coverage
    score; where the per-provider pool runs dry, a second pass balances
    each state as a whole using any remaining candidates from that state.
    """
    existing = dataset.keys()
    overlap = [c for c in candidates if c.key in existing]
    if overlap:
        raise LabelingError(f"candidate pool overlaps dataset keys, e.g. {overlap[0].key}")

    deficit: dict[tuple[int, str], int] = {}
    state_deficit: dict[str, int] = {}
    for o in dataset.observations:
        delta = 1 if o.label is Label.UNSERVED else -1
        deficit[(o.provider_id, o.state)] = deficit.get((o.provider_id, o.state), 0) + delta
        state_deficit[o.state] = state_deficit.get(o.state, 0) + delta

    pool = sorted(candidates, key=_candidate_order)
    added: list[LabeledObservation] = []
    remaining: list[LabeledObservation] = []
    seen: set[tuple] = set()
    for cand in pool:
        if cand.key in seen:
            continue
        seen.add(cand.key)
        key = (cand.provider_id, cand.state)
        if deficit.get(key, 0) > 0:
            added.append(cand)
            deficit[key] -= 1
            state_deficit[cand.state] -= 1
        else:
            remaining.append(cand)

    for cand in remaining:
        if state_deficit.get(cand.state, 0) > 0:
            added.append(cand)
            state_deficit[cand.state] -= 1

    return LabeledDataset(dataset.observations + added)


# ---------------------------------------------------------------------------
# Reporting and CSV round trip

LABELED_HEADER = [
    "provider_id", "cell_hex", "technology", "state",
    "label", "source", "coverage_score", "adjudicated",
]


def write_labeled(dataset: LabeledDataset, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(LABELED_HEADER)
        for o in dataset.observations:
            w.writerow([
                o.provider_id, o.cell.to_hex(), int(o.technology), o.state,
                o.label.value, o.source.value,
                "" if o.coverage_score is None else repr(o.coverage_score),
                int(o.adjudicated),
            ])


def parse_labeled(path) -> LabeledDataset:
    out = []
    with open_text(path) as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != LABELED_HEADER:
            raise MalformedRow(path, 1, f"header {header} != expected {LABELED_HEADER}")
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                out.append(LabeledObservation(
                    provider_id=int(row[0]),
                    cell=CellId.from_hex(row[1]),
                    technology=Technology.from_code(int(row[2])),
                    state=row[3],
                    label=Label(row[4]),
                    source=LabelSource(row[5]),
                    coverage_score=float(row[6]) if row[6] else None,
                    adjudicated=bool(int(row[7])),
                ))
            except (ValueError, KeyError) as e:
                raise MalformedRow(path, line_no, str(e)) from e
    return LabeledDataset(out)


def challenge_stats(records: Iterable[ChallengeRecord]) -> dict:
    """Outcome and reason distributions over a challenge file."""
    records = list(records)
    total = len(records)
    by_outcome: dict[str, int] = {}
    by_reason: dict[str, int] = {}
    successful = 0
    for r in records:
        by_outcome[r.outcome.value] = by_outcome.get(r.outcome.value, 0) + 1
        by_reason[r.reason] = by_reason.get(r.reason, 0) + 1
        if r.outcome.success:
            successful += 1
    return {
        "total": total,
        "successful": successful,
        "failed": total - successful,
        "success_rate": successful / total if total else 0.0,
        "outcomes": {k: {"count": v, "fraction": v / total} for k, v in sorted(by_outcome.items())},
        "reasons": {k: {"count": v, "fraction": v / total} for k, v in sorted(by_reason.items())},
    }
