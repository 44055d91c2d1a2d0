"""Record schemas, parsers, and writers for every pipeline input dataset.

All inputs are flat CSV or NDJSON files with the headers documented next to
each parser; gzip compression is auto-detected from magic bytes. Parsers
stream line by line, type every field, and report errors with the source
line number. Advertised-speed floors are applied here, exactly once.
"""

from __future__ import annotations

import csv
import gzip
import io
import json
from dataclasses import dataclass, field
from enum import Enum, IntEnum
from typing import Iterable, Iterator, Optional

from .geo import CellId, GeoPoint

# Values below these floors are published as 0 in the map.
DOWN_FLOOR_MBPS = 10.0
UP_FLOOR_MBPS = 1.0


class IngestError(ValueError):
    """Base class for input-file errors."""


class MalformedRow(IngestError):
    def __init__(self, path, line_no: int, message: str):
        super().__init__(f"{path}:{line_no}: {message}")
        self.path = path
        self.line_no = line_no


class DuplicateClaim(IngestError):
    pass


class UnknownTechnologyCode(IngestError):
    pass


class UnknownOutcome(IngestError):
    pass


class Technology(IntEnum):
    COPPER = 10
    CABLE = 40
    FIBER = 50
    GSO_SATELLITE = 60
    NGSO_SATELLITE = 61
    UNLICENSED_FIXED_WIRELESS = 70
    LICENSED_FIXED_WIRELESS = 71

    @classmethod
    def from_code(cls, code: int) -> "Technology":
        try:
            return cls(code)
        except ValueError:
            raise UnknownTechnologyCode(f"unknown technology code {code}") from None

    @property
    def is_satellite(self) -> bool:
        return self in (Technology.GSO_SATELLITE, Technology.NGSO_SATELLITE)


class ChallengeOutcome(Enum):
    PROVIDER_CONCEDED = "Provider Conceded"
    SERVICE_CHANGED = "Service Changed"
    FCC_UPHELD = "FCC Upheld"
    CHALLENGE_WITHDRAWN = "Challenge Withdrawn"
    FCC_OVERTURNED = "FCC Overturned"

    @classmethod
    def from_label(cls, label: str) -> "ChallengeOutcome":
        for member in cls:
            if member.value == label:
                return member
        raise UnknownOutcome(f"unknown challenge outcome {label!r}")

    @property
    def success(self) -> bool:
        """True when the challenge removed or changed the provider's claim."""
        return self in (
            ChallengeOutcome.PROVIDER_CONCEDED,
            ChallengeOutcome.SERVICE_CHANGED,
            ChallengeOutcome.FCC_UPHELD,
        )

    @property
    def adjudicated(self) -> bool:
        """True when the outcome was decided by the regulator, not the parties."""
        return self in (ChallengeOutcome.FCC_UPHELD, ChallengeOutcome.FCC_OVERTURNED)


CHALLENGE_REASONS = (
    "Technology Unavailable",
    "Speed(s) Unavailable",
    "Service Request Denied",
    "No Signal",
    "Asked Higher than Standard Connection Fee",
    "Failed to Provide Service within 10 Biz-days",
    "Provider not Ready (dependency on new equipment)",
    "Failed to Install Service within Timeline",
)


@dataclass(frozen=True)
class AvailabilityClaim:
    provider_id: int
    brand: str
    technology: Technology
    max_down_mbps: float
    max_up_mbps: float
    low_latency: bool
    location_id: int
    cell: CellId
    state: str
    residential_business: str

    @property
    def key(self) -> tuple[int, Technology, int]:
        return (self.provider_id, self.technology, self.location_id)


@dataclass
class MapSnapshot:
    """One release of the availability map, immutable after load."""

    as_of_date: str = ""
    release_date: str = ""
    claims_by_key: dict[tuple[int, Technology, int], AvailabilityClaim] = field(default_factory=dict)
    methodology_texts: dict[tuple[int, Optional[Technology]], str] = field(default_factory=dict)

    @property
    def claims(self) -> Iterable[AvailabilityClaim]:
        return self.claims_by_key.values()

    def __len__(self) -> int:
        return len(self.claims_by_key)

    def cells_by_provider(self) -> dict[int, set[CellId]]:
        out: dict[int, set[CellId]] = {}
        for c in self.claims:
            out.setdefault(c.provider_id, set()).add(c.cell)
        return out

    def cell_states(self) -> dict[CellId, str]:
        return {c.cell: c.state for c in self.claims}

    def claim_groups(self) -> dict[tuple[int, Technology, CellId], list[AvailabilityClaim]]:
        """Claims grouped by the (provider, technology, cell) observation key."""
        out: dict[tuple[int, Technology, CellId], list[AvailabilityClaim]] = {}
        for c in self.claims:
            out.setdefault((c.provider_id, c.technology, c.cell), []).append(c)
        return out

    def methodology_for(self, provider_id: int, technology: Technology) -> str:
        """Per-technology filing text, falling back to the provider-level text."""
        text = self.methodology_texts.get((provider_id, technology))
        if text is None:
            text = self.methodology_texts.get((provider_id, None), "")
        return text


@dataclass(frozen=True)
class ChallengeRecord:
    provider_id: int
    location_id: int
    cell: CellId
    technology: Technology
    outcome: ChallengeOutcome
    reason: str
    resolved_date: str


@dataclass(frozen=True)
class OoklaTile:
    quadkey: str
    tests: int
    devices: int
    avg_down_kbps: float
    avg_up_kbps: float
    avg_latency_ms: float


@dataclass(frozen=True)
class MlabTest:
    timestamp: str
    asn: int
    geo: GeoPoint
    accuracy_radius_km: float
    down_mbps: float
    up_mbps: float
    min_rtt_ms: float


@dataclass
class MlabParseResult:
    tests: list[MlabTest]
    rejected_rows: int


@dataclass(frozen=True)
class FrnRegistration:
    frn: int
    provider_id: int
    company_name: str
    contact_email: str
    physical_address: str


@dataclass(frozen=True)
class HexLocationCount:
    cell: CellId
    bsl_count: int


# WHOIS registry entities; links are handles resolved during flattening.
@dataclass(frozen=True)
class WhoisAsn:
    asn: int
    org_handle: Optional[str]
    poc_handles: tuple[str, ...]


@dataclass(frozen=True)
class WhoisOrg:
    handle: str
    name: str
    address: str
    poc_handles: tuple[str, ...]
    net_handles: tuple[str, ...]


@dataclass(frozen=True)
class WhoisNet:
    handle: str
    poc_handles: tuple[str, ...]


@dataclass(frozen=True)
class WhoisPoc:
    handle: str
    emails: tuple[str, ...]
    address: str


@dataclass
class WhoisRegistry:
    asns: dict[int, WhoisAsn] = field(default_factory=dict)
    orgs: dict[str, WhoisOrg] = field(default_factory=dict)
    nets: dict[str, WhoisNet] = field(default_factory=dict)
    pocs: dict[str, WhoisPoc] = field(default_factory=dict)


@dataclass(frozen=True)
class WhoisRecord:
    """Flat per-ASN view after link resolution, before canonicalization."""

    asn: int
    org_names: tuple[str, ...]
    poc_emails: tuple[str, ...]
    addresses: tuple[str, ...]


# ---------------------------------------------------------------------------
# File helpers


def open_text(path) -> io.TextIOBase:
    """Open UTF-8 text, transparently decompressing gzip (magic 1f 8b)."""
    with open(path, "rb") as probe:
        magic = probe.read(2)
    if magic == b"\x1f\x8b":
        return io.TextIOWrapper(gzip.open(path, "rb"), encoding="utf-8", newline="")
    return open(path, "r", encoding="utf-8", newline="")


def _csv_rows(path, expected_header: list[str]) -> Iterator[tuple[int, dict[str, str]]]:
    with open_text(path) as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise MalformedRow(path, 1, "missing header row") from None
        if header != expected_header:
            raise MalformedRow(path, 1, f"header {header} != expected {expected_header}")
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(expected_header):
                raise MalformedRow(path, line_no, f"expected {len(expected_header)} fields, got {len(row)}")
            yield line_no, dict(zip(expected_header, row))


def _parse_int(path, line_no, name, value) -> int:
    try:
        return int(value)
    except ValueError:
        raise MalformedRow(path, line_no, f"field {name}={value!r} is not an integer") from None


def _parse_float(path, line_no, name, value) -> float:
    try:
        return float(value)
    except ValueError:
        raise MalformedRow(path, line_no, f"field {name}={value!r} is not a number") from None


def _parse_bool(path, line_no, name, value) -> bool:
    v = value.strip().lower()
    if v in ("1", "true"):
        return True
    if v in ("0", "false"):
        return False
    raise MalformedRow(path, line_no, f"field {name}={value!r} is not a boolean")


def _parse_cell(path, line_no, value) -> CellId:
    try:
        return CellId.from_hex(value)
    except ValueError:
        raise MalformedRow(path, line_no, f"field cell_hex={value!r} is not a 64-bit hex id") from None


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, float):
        return repr(value)
    return str(value)


# ---------------------------------------------------------------------------
# Availability snapshots

SNAPSHOT_HEADER = [
    "provider_id", "brand", "technology", "max_down_mbps", "max_up_mbps",
    "low_latency", "location_id", "cell_hex", "state", "category",
]
METHODOLOGY_HEADER = ["provider_id", "technology", "methodology"]


def apply_speed_floors(down: float, up: float) -> tuple[float, float]:
    return (0.0 if down < DOWN_FLOOR_MBPS else down, 0.0 if up < UP_FLOOR_MBPS else up)


def parse_snapshot(path, methodology_path=None, as_of_date: str = "", release_date: str = "") -> MapSnapshot:
    """Load an availability snapshot; rejects duplicate claim keys."""
    snap = MapSnapshot(as_of_date=as_of_date, release_date=release_date)
    for line_no, row in _csv_rows(path, SNAPSHOT_HEADER):
        tech_code = _parse_int(path, line_no, "technology", row["technology"])
        try:
            tech = Technology.from_code(tech_code)
        except UnknownTechnologyCode as e:
            raise MalformedRow(path, line_no, str(e)) from e
        down = _parse_float(path, line_no, "max_down_mbps", row["max_down_mbps"])
        up = _parse_float(path, line_no, "max_up_mbps", row["max_up_mbps"])
        down, up = apply_speed_floors(down, up)
        claim = AvailabilityClaim(
            provider_id=_parse_int(path, line_no, "provider_id", row["provider_id"]),
            brand=row["brand"],
            technology=tech,
            max_down_mbps=down,
            max_up_mbps=up,
            low_latency=_parse_bool(path, line_no, "low_latency", row["low_latency"]),
            location_id=_parse_int(path, line_no, "location_id", row["location_id"]),
            cell=_parse_cell(path, line_no, row["cell_hex"]),
            state=row["state"],
            residential_business=row["category"],
        )
        if claim.key in snap.claims_by_key:
            raise DuplicateClaim(f"{path}:{line_no}: duplicate claim key {claim.key}")
        snap.claims_by_key[claim.key] = claim
    if methodology_path is not None:
        snap.methodology_texts = parse_methodology(methodology_path)
    return snap


def parse_methodology(path) -> dict[tuple[int, Optional[Technology]], str]:
    """Filing methodology texts; empty technology means provider-level text."""
    out: dict[tuple[int, Optional[Technology]], str] = {}
    for line_no, row in _csv_rows(path, METHODOLOGY_HEADER):
        provider = _parse_int(path, line_no, "provider_id", row["provider_id"])
        tech: Optional[Technology] = None
        if row["technology"].strip():
            tech = Technology.from_code(_parse_int(path, line_no, "technology", row["technology"]))
        out[(provider, tech)] = row["methodology"]
    return out


def write_snapshot(snapshot: MapSnapshot, path, methodology_path=None) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(SNAPSHOT_HEADER)
        for c in snapshot.claims:
            w.writerow([
                c.provider_id, c.brand, int(c.technology), _fmt(c.max_down_mbps),
                _fmt(c.max_up_mbps), _fmt(c.low_latency), c.location_id,
                c.cell.to_hex(), c.state, c.residential_business,
            ])
    if methodology_path is not None:
        with open(methodology_path, "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(METHODOLOGY_HEADER)
            for (provider, tech), text in snapshot.methodology_texts.items():
                w.writerow([provider, "" if tech is None else int(tech), text])


# ---------------------------------------------------------------------------
# Challenges

CHALLENGE_HEADER = [
    "provider_id", "location_id", "cell_hex", "technology",
    "outcome", "reason", "resolved_date",
]


def parse_challenges(path) -> list[ChallengeRecord]:
    out = []
    for line_no, row in _csv_rows(path, CHALLENGE_HEADER):
        try:
            outcome = ChallengeOutcome.from_label(row["outcome"])
        except UnknownOutcome as e:
            raise MalformedRow(path, line_no, str(e)) from e
        try:
            tech = Technology.from_code(_parse_int(path, line_no, "technology", row["technology"]))
        except UnknownTechnologyCode as e:
            raise MalformedRow(path, line_no, str(e)) from e
        out.append(ChallengeRecord(
            provider_id=_parse_int(path, line_no, "provider_id", row["provider_id"]),
            location_id=_parse_int(path, line_no, "location_id", row["location_id"]),
            cell=_parse_cell(path, line_no, row["cell_hex"]),
            technology=tech,
            outcome=outcome,
            reason=row["reason"],
            resolved_date=row["resolved_date"],
        ))
    return out


def write_challenges(records: Iterable[ChallengeRecord], path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CHALLENGE_HEADER)
        for r in records:
            w.writerow([
                r.provider_id, r.location_id, r.cell.to_hex(), int(r.technology),
                r.outcome.value, r.reason, r.resolved_date,
            ])


# ---------------------------------------------------------------------------
# Crowdsourced speed-test datasets

OOKLA_HEADER = ["quadkey", "tests", "devices", "avg_down_kbps", "avg_up_kbps", "avg_latency_ms"]
MLAB_HEADER = ["timestamp", "asn", "lat", "lon", "accuracy_radius_km", "down_mbps", "up_mbps", "min_rtt_ms"]


def parse_ookla(path) -> list[OoklaTile]:
    out = []
    for line_no, row in _csv_rows(path, OOKLA_HEADER):
        tests = _parse_int(path, line_no, "tests", row["tests"])
        devices = _parse_int(path, line_no, "devices", row["devices"])
        if tests < 0 or devices < 0:
            raise MalformedRow(path, line_no, "counts must be >= 0")
        if not row["quadkey"] or any(ch not in "0123" for ch in row["quadkey"]):
            raise MalformedRow(path, line_no, f"bad quadkey {row['quadkey']!r}")
        out.append(OoklaTile(
            quadkey=row["quadkey"],
            tests=tests,
            devices=devices,
            avg_down_kbps=_parse_float(path, line_no, "avg_down_kbps", row["avg_down_kbps"]),
            avg_up_kbps=_parse_float(path, line_no, "avg_up_kbps", row["avg_up_kbps"]),
            avg_latency_ms=_parse_float(path, line_no, "avg_latency_ms", row["avg_latency_ms"]),
        ))
    return out


def write_ookla(tiles: Iterable[OoklaTile], path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(OOKLA_HEADER)
        for t in tiles:
            w.writerow([t.quadkey, t.tests, t.devices, _fmt(t.avg_down_kbps),
                        _fmt(t.avg_up_kbps), _fmt(t.avg_latency_ms)])


def _mlab_from_fields(path, line_no, fields: dict) -> Optional[MlabTest]:
    radius = fields.get("accuracy_radius_km")
    if radius is None or (isinstance(radius, str) and not radius.strip()):
        return None
    if isinstance(radius, str):
        radius = _parse_float(path, line_no, "accuracy_radius_km", radius)
    lat = fields["lat"]
    lon = fields["lon"]
    if isinstance(lat, str):
        lat = _parse_float(path, line_no, "lat", lat)
    if isinstance(lon, str):
        lon = _parse_float(path, line_no, "lon", lon)
    try:
        geo = GeoPoint(float(lat), float(lon))
    except ValueError as e:
        raise MalformedRow(path, line_no, str(e)) from e
    if radius < 0:
        raise MalformedRow(path, line_no, "accuracy_radius_km must be >= 0")

    def num(name):
        v = fields[name]
        return _parse_float(path, line_no, name, v) if isinstance(v, str) else float(v)

    asn = fields["asn"]
    return MlabTest(
        timestamp=str(fields["timestamp"]),
        asn=_parse_int(path, line_no, "asn", asn) if isinstance(asn, str) else int(asn),
        geo=geo,
        accuracy_radius_km=float(radius),
        down_mbps=num("down_mbps"),
        up_mbps=num("up_mbps"),
        min_rtt_ms=num("min_rtt_ms"),
    )


def parse_mlab(path) -> MlabParseResult:
    """Speed-test rows from CSV or NDJSON (sniffed); rows lacking an
    accuracy radius are rejected and counted, not fatal."""
    with open_text(path) as fh:
        first = fh.read(1)
    result = MlabParseResult(tests=[], rejected_rows=0)
    if first == "{":
        with open_text(path) as fh:
            for line_no, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                try:
                    fields = json.loads(line)
                except json.JSONDecodeError as e:
                    raise MalformedRow(path, line_no, f"bad JSON: {e}") from e
                missing = [k for k in MLAB_HEADER if k != "accuracy_radius_km" and k not in fields]
                if missing:
                    raise MalformedRow(path, line_no, f"missing fields {missing}")
                test = _mlab_from_fields(path, line_no, fields)
                if test is None:
                    result.rejected_rows += 1
                else:
                    result.tests.append(test)
    else:
        for line_no, row in _csv_rows(path, MLAB_HEADER):
            test = _mlab_from_fields(path, line_no, row)
            if test is None:
                result.rejected_rows += 1
            else:
                result.tests.append(test)
    return result


def write_mlab(tests: Iterable[MlabTest], path) -> None:
    """NDJSON writer (the parser's sniffing prefers it for MLab rows)."""
    with open(path, "w", encoding="utf-8") as fh:
        for t in tests:
            fh.write(json.dumps({
                "timestamp": t.timestamp,
                "asn": t.asn,
                "lat": t.geo.lat,
                "lon": t.geo.lon,
                "accuracy_radius_km": t.accuracy_radius_km,
                "down_mbps": t.down_mbps,
                "up_mbps": t.up_mbps,
                "min_rtt_ms": t.min_rtt_ms,
            }) + "\n")


# ---------------------------------------------------------------------------
# Registration and registry data

FRN_HEADER = ["frn", "provider_id", "company_name", "contact_email", "physical_address"]
HEX_COUNT_HEADER = ["cell_hex", "bsl_count"]


def parse_frn(path) -> list[FrnRegistration]:
    out = []
    for line_no, row in _csv_rows(path, FRN_HEADER):
        out.append(FrnRegistration(
            frn=_parse_int(path, line_no, "frn", row["frn"]),
            provider_id=_parse_int(path, line_no, "provider_id", row["provider_id"]),
            company_name=row["company_name"],
            contact_email=row["contact_email"],
            physical_address=row["physical_address"],
        ))
    return out


def write_frn(records: Iterable[FrnRegistration], path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(FRN_HEADER)
        for r in records:
            w.writerow([r.frn, r.provider_id, r.company_name, r.contact_email, r.physical_address])


def parse_hex_counts(path) -> list[HexLocationCount]:
    out = []
    seen: set[CellId] = set()
    for line_no, row in _csv_rows(path, HEX_COUNT_HEADER):
        cell = _parse_cell(path, line_no, row["cell_hex"])
        count = _parse_int(path, line_no, "bsl_count", row["bsl_count"])
        if count < 1:
            raise MalformedRow(path, line_no, "bsl_count must be >= 1")
        if cell in seen:
            raise MalformedRow(path, line_no, f"duplicate cell {cell.to_hex()}")
        seen.add(cell)
        out.append(HexLocationCount(cell=cell, bsl_count=count))
    return out


def write_hex_counts(rows: Iterable[HexLocationCount], path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(HEX_COUNT_HEADER)
        for r in rows:
            w.writerow([r.cell.to_hex(), r.bsl_count])


def parse_whois(path) -> WhoisRegistry:
    """NDJSON registry dump with one entity per line, kind in
    {asn, org, net, poc}; links between kinds are string handles."""
    reg = WhoisRegistry()
    with open_text(path) as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as e:
                raise MalformedRow(path, line_no, f"bad JSON: {e}") from e
            kind = obj.get("kind")
            try:
                if kind == "asn":
                    asn = int(obj["asn"])
                    reg.asns[asn] = WhoisAsn(
                        asn=asn,
                        org_handle=obj.get("org"),
                        poc_handles=tuple(obj.get("pocs", [])),
                    )
                elif kind == "org":
                    reg.orgs[obj["handle"]] = WhoisOrg(
                        handle=obj["handle"],
                        name=obj.get("name", ""),
                        address=obj.get("address", ""),
                        poc_handles=tuple(obj.get("pocs", [])),
                        net_handles=tuple(obj.get("nets", [])),
                    )
                elif kind == "net":
                    reg.nets[obj["handle"]] = WhoisNet(
                        handle=obj["handle"],
                        poc_handles=tuple(obj.get("pocs", [])),
                    )
                elif kind == "poc":
                    reg.pocs[obj["handle"]] = WhoisPoc(
                        handle=obj["handle"],
                        emails=tuple(obj.get("emails", [])),
                        address=obj.get("address", ""),
                    )
                else:
                    raise MalformedRow(path, line_no, f"unknown record kind {kind!r}")
            except (KeyError, TypeError, ValueError) as e:
                if isinstance(e, MalformedRow):
                    raise
                raise MalformedRow(path, line_no, f"bad {kind} record: {e}") from e
    return reg


def write_whois(registry: WhoisRegistry, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for asn in registry.asns.values():
            fh.write(json.dumps({
                "kind": "asn", "asn": asn.asn, "org": asn.org_handle,
                "pocs": list(asn.poc_handles),
            }) + "\n")
        for org in registry.orgs.values():
            fh.write(json.dumps({
                "kind": "org", "handle": org.handle, "name": org.name,
                "address": org.address, "pocs": list(org.poc_handles),
                "nets": list(org.net_handles),
            }) + "\n")
        for net in registry.nets.values():
            fh.write(json.dumps({
                "kind": "net", "handle": net.handle, "pocs": list(net.poc_handles),
            }) + "\n")
        for poc in registry.pocs.values():
            fh.write(json.dumps({
                "kind": "poc", "handle": poc.handle, "emails": list(poc.emails),
                "address": poc.address,
            }) + "\n")
