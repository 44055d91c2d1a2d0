"""Align crowdsourced speed tests with the hex grid and provider claims.

Two independent signals come out of this module: per-cell aggregate tile
stats (provider-agnostic), and per-(provider, cell) test-existence evidence
from ASN-attributed tests localized inside the provider's claimed cells.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Iterable, Mapping, Optional

from .entity_match import ProviderAsnMatch
from .geo import CellId, GridConfig, cells_overlapping_bbox, cells_within_radius, quadkey_to_tile, tile_bounds
from .ingest import MalformedRow, MlabTest, OoklaTile, open_text

# Tests geolocated more loosely than this cannot be usefully localized.
MAX_ACCURACY_RADIUS_KM = 20.0


@dataclass(frozen=True)
class CellTestStats:
    cell: CellId
    ookla_tests: int
    ookla_devices: int
    max_avg_down_kbps: Optional[float]
    max_avg_up_kbps: Optional[float]
    min_avg_latency_ms: Optional[float]


@dataclass(frozen=True)
class ProviderCellEvidence:
    provider_id: int
    cell: CellId
    mlab_test_count: int


@dataclass
class AttributionResult:
    evidence: list[ProviderCellEvidence]
    attributed_tests: int
    unattributed_tests: int
    radius_filtered_tests: int


def reproject_ookla(tiles: Iterable[OoklaTile], grid: GridConfig) -> list[CellTestStats]:
    """Map each tile onto every overlapping cell and aggregate per cell.

    A tile spanning several cells is duplicated into each of them, not
    split. Counts are summed; throughput keeps the maximum reported
    average and latency the minimum, considering only tiles that carry at
    least one test. Tiles with zero tests and zero devices are skipped.
    """
    acc: dict[CellId, dict] = {}
    for tile in tiles:
        if tile.tests == 0 and tile.devices == 0:
            continue
        sw, ne = tile_bounds(quadkey_to_tile(tile.quadkey))
        for cell in cells_overlapping_bbox(sw, ne, grid):
            a = acc.setdefault(cell, {"tests": 0, "devices": 0, "down": None, "up": None, "lat": None})
            a["tests"] += tile.tests
            a["devices"] += tile.devices
            if tile.tests > 0:
                a["down"] = tile.avg_down_kbps if a["down"] is None else max(a["down"], tile.avg_down_kbps)
                a["up"] = tile.avg_up_kbps if a["up"] is None else max(a["up"], tile.avg_up_kbps)
                a["lat"] = tile.avg_latency_ms if a["lat"] is None else min(a["lat"], tile.avg_latency_ms)
    return [
        CellTestStats(cell=cell, ookla_tests=a["tests"], ookla_devices=a["devices"],
                      max_avg_down_kbps=a["down"], max_avg_up_kbps=a["up"],
                      min_avg_latency_ms=a["lat"])
        for cell, a in sorted(acc.items(), key=lambda kv: kv[0].id)
    ]


def attribute_and_localize(
    tests: Iterable[MlabTest],
    matches: Iterable[ProviderAsnMatch],
    claims_by_provider: Mapping[int, set[CellId]],
    grid: GridConfig,
) -> AttributionResult:
    """Attribute tests to providers via ASN and localize them to claimed cells.

    Tests with accuracy radius over 20 km are dropped. Each surviving test
    maps through its ASN to one or more providers; its candidate cells are
    everything within the accuracy radius, intersected with each matched
    provider's claimed cells. Every candidate cell gets one count per test.
    Tests whose ASN matches no provider land in the unattributed bucket.
    """
    providers_by_asn: dict[int, set[int]] = {}
    for m in matches:
        for asn in m.asn_union:
            providers_by_asn.setdefault(asn, set()).add(m.provider_id)

    counts: dict[tuple[int, CellId], int] = {}
    attributed = unattributed = filtered = 0
    for test in tests:
        if test.accuracy_radius_km > MAX_ACCURACY_RADIUS_KM:
            filtered += 1
            continue
        providers = providers_by_asn.get(test.asn)
        if not providers:
            unattributed += 1
            continue
        attributed += 1
        candidates = cells_within_radius(test.geo, test.accuracy_radius_km, grid)
        for provider_id in providers:
            claimed = claims_by_provider.get(provider_id)
            if not claimed:
                continue
            for cell in candidates & claimed:
                counts[(provider_id, cell)] = counts.get((provider_id, cell), 0) + 1

    evidence = [
        ProviderCellEvidence(provider_id=p, cell=c, mlab_test_count=n)
        for (p, c), n in sorted(counts.items(), key=lambda kv: (kv[0][0], kv[0][1].id))
    ]
    return AttributionResult(
        evidence=evidence,
        attributed_tests=attributed,
        unattributed_tests=unattributed,
        radius_filtered_tests=filtered,
    )


# ---------------------------------------------------------------------------
# CSV round trip for the stage boundary

CELL_STATS_HEADER = [
    "cell_hex", "ookla_tests", "ookla_devices",
    "max_avg_down_kbps", "max_avg_up_kbps", "min_avg_latency_ms",
]
EVIDENCE_HEADER = ["provider_id", "cell_hex", "mlab_test_count"]


def write_cell_stats(stats: Iterable[CellTestStats], path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CELL_STATS_HEADER)
        for s in stats:
            w.writerow([
                s.cell.to_hex(), s.ookla_tests, s.ookla_devices,
                "" if s.max_avg_down_kbps is None else repr(s.max_avg_down_kbps),
                "" if s.max_avg_up_kbps is None else repr(s.max_avg_up_kbps),
                "" if s.min_avg_latency_ms is None else repr(s.min_avg_latency_ms),
            ])


def parse_cell_stats(path) -> list[CellTestStats]:
    out = []
    with open_text(path) as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != CELL_STATS_HEADER:
            raise MalformedRow(path, 1, f"header {header} != expected {CELL_STATS_HEADER}")
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            out.append(CellTestStats(
                cell=CellId.from_hex(row[0]),
                ookla_tests=int(row[1]),
                ookla_devices=int(row[2]),
                max_avg_down_kbps=float(row[3]) if row[3] else None,
                max_avg_up_kbps=float(row[4]) if row[4] else None,
                min_avg_latency_ms=float(row[5]) if row[5] else None,
            ))
    return out


def write_evidence(evidence: Iterable[ProviderCellEvidence], path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(EVIDENCE_HEADER)
        for e in evidence:
            w.writerow([e.provider_id, e.cell.to_hex(), e.mlab_test_count])


def parse_evidence(path) -> list[ProviderCellEvidence]:
    out = []
    with open_text(path) as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != EVIDENCE_HEADER:
            raise MalformedRow(path, 1, f"header {header} != expected {EVIDENCE_HEADER}")
        for row in reader:
            if not row:
                continue
            out.append(ProviderCellEvidence(
                provider_id=int(row[0]),
                cell=CellId.from_hex(row[1]),
                mlab_test_count=int(row[2]),
            ))
    return out
