"""Provider-to-ASN entity resolution.

Four exact matching methods over canonicalized registration contacts:
full email, contact email domain, company name, and physical address.
No fuzzy matching; a match means canonical values intersect. Per-provider
results carry the evidence of each method and a Jaccard agreement score
across methods.
"""

from __future__ import annotations

import csv
import re
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Mapping, Optional

import numpy as np

from .ingest import FrnRegistration, WhoisRecord, WhoisRegistry

# Domains open to public registration carry no organizational signal.
PUBLIC_EMAIL_DOMAINS = frozenset({
    "gmail.com", "yahoo.com", "outlook.com", "hotmail.com", "aol.com",
    "icloud.com", "live.com", "msn.com", "mail.com", "gmx.com",
    "protonmail.com", "proton.me", "zoho.com", "yandex.com",
})

# Country TLDs whose registrable domain has three labels.
_MULTI_PART_TLDS = frozenset({
    "co.uk", "org.uk", "ac.uk", "gov.uk", "com.au", "net.au", "org.au",
    "co.nz", "co.jp", "com.br", "com.mx",
})

# Word-level abbreviations used for postal address canonicalization
# (common suffix/directional/unit subset of the USPS standard).
ADDRESS_ABBREVIATIONS = {
    "alley": "aly", "annex": "anx", "avenue": "ave", "beach": "bch",
    "boulevard": "blvd", "branch": "br", "bridge": "brg", "brook": "brk",
    "building": "bldg", "bypass": "byp", "canyon": "cyn", "center": "ctr",
    "circle": "cir", "cliff": "clf", "club": "clb", "corner": "cor",
    "court": "ct", "cove": "cv", "creek": "crk", "crescent": "cres",
    "crossing": "xing", "dale": "dl", "department": "dept", "drive": "dr",
    "east": "e", "estate": "est", "expressway": "expy", "extension": "ext",
    "falls": "fls", "ferry": "fry", "field": "fld", "floor": "fl",
    "forest": "frst", "fork": "frk", "fort": "ft", "freeway": "fwy",
    "garden": "gdn", "gateway": "gtwy", "glen": "gln", "green": "grn",
    "grove": "grv", "harbor": "hbr", "heights": "hts", "highway": "hwy",
    "hill": "hl", "hollow": "holw", "island": "is", "junction": "jct",
    "lake": "lk", "landing": "lndg", "lane": "ln", "lodge": "ldg",
    "manor": "mnr", "meadows": "mdws", "mill": "ml", "mount": "mt",
    "mountain": "mtn", "north": "n", "northeast": "ne", "northwest": "nw",
    "orchard": "orch", "parkway": "pkwy", "place": "pl", "plaza": "plz",
    "point": "pt", "port": "prt", "prairie": "pr", "ranch": "rnch",
    "ridge": "rdg", "river": "riv", "road": "rd", "room": "rm",
    "shore": "shr", "south": "s", "southeast": "se", "southwest": "sw",
    "spring": "spg", "square": "sq", "station": "sta", "street": "st",
    "suite": "ste", "summit": "smt", "terrace": "ter", "trail": "trl",
    "tunnel": "tunl", "turnpike": "tpke", "union": "un", "valley": "vly",
    "viaduct": "via", "village": "vlg", "vista": "vis", "west": "w",
    "apartment": "apt",
}

_NON_ALNUM_WS = re.compile(r"[^0-9a-zA-Z\s]+")
_DOMAIN_LABEL = re.compile(r"^[0-9a-z]([0-9a-z-]*[0-9a-z])?$")


class MatchMethod(Enum):
    FULL_EMAIL = "full_email"
    EMAIL_DOMAIN = "email_domain"
    COMPANY_NAME = "company_name"
    ADDRESS = "address"


METHOD_ORDER = (
    MatchMethod.FULL_EMAIL,
    MatchMethod.EMAIL_DOMAIN,
    MatchMethod.COMPANY_NAME,
    MatchMethod.ADDRESS,
)


class MatchTier(Enum):
    STRONG = "strong"
    MULTI_METHOD = "multi_method"
    SINGLE_METHOD = "single_method"
    UNMATCHED = "unmatched"


@dataclass
class CanonicalContact:
    emails: set[str] = field(default_factory=set)
    email_domains: set[str] = field(default_factory=set)
    company_names: set[str] = field(default_factory=set)
    addresses: set[str] = field(default_factory=set)

    def values_for(self, method: MatchMethod) -> set[str]:
        return {
            MatchMethod.FULL_EMAIL: self.emails,
            MatchMethod.EMAIL_DOMAIN: self.email_domains,
            MatchMethod.COMPANY_NAME: self.company_names,
            MatchMethod.ADDRESS: self.addresses,
        }[method]


@dataclass
class ProviderAsnMatch:
    provider_id: int
    asns_by_method: dict[MatchMethod, frozenset[int]]
    asn_union: frozenset[int]
    agreement: float
    tier: MatchTier


@dataclass
class FlattenResult:
    contacts: dict[int, CanonicalContact]
    records: list[WhoisRecord]
    warnings: list[str]


# ---------------------------------------------------------------------------
# Canonicalizers (total and idempotent)


def canonicalize_email(s: str) -> str:
    return s.strip().lower()


def canonicalize_domain(email_or_domain: str) -> Optional[str]:
    """Registrable domain, lowercased; None for public email providers or
    values that are neither an email address nor a domain."""
    s = email_or_domain.strip().lower()
    if "@" in s:
        s = s.rsplit("@", 1)[1]
    labels = s.split(".")
    if len(labels) < 2 or not all(_DOMAIN_LABEL.match(lbl) for lbl in labels):
        return None
    if len(labels) >= 3 and ".".join(labels[-2:]) in _MULTI_PART_TLDS:
        domain = ".".join(labels[-3:])
    else:
        domain = ".".join(labels[-2:])
    if domain in PUBLIC_EMAIL_DOMAINS:
        return None
    return domain


def canonicalize_company(s: str) -> str:
    """Lowercase, strip punctuation, drop trailing 'inc'/'llc' tokens."""
    text = _NON_ALNUM_WS.sub("", s).lower()
    tokens = text.split()
    while tokens and tokens[-1] in ("inc", "llc"):
        tokens.pop()
    return " ".join(tokens)


def canonicalize_address(s: str) -> str:
    """Strip punctuation, lowercase, abbreviate words per the bundled
    postal table, collapse whitespace."""
    text = _NON_ALNUM_WS.sub("", s).lower()
    tokens = [ADDRESS_ABBREVIATIONS.get(t, t) for t in text.split()]
    return " ".join(tokens)


# ---------------------------------------------------------------------------
# WHOIS flattening (ASN -> POC, ASN -> ORG -> POC, ASN -> ORG -> NET -> POC)


def flatten_whois(registry: WhoisRegistry) -> FlattenResult:
    """Union of contacts reachable from each ASN via the three link paths.

    Dangling handles are reported as warnings and skipped; contacts from
    the remaining paths are still collected.
    """
    contacts: dict[int, CanonicalContact] = {}
    records: list[WhoisRecord] = []
    warnings: list[str] = []

    for asn in sorted(registry.asns):
        entry = registry.asns[asn]
        org_names: set[str] = set()
        emails: set[str] = set()
        addresses: set[str] = set()
        poc_handles: set[str] = set(entry.poc_handles)

        if entry.org_handle is not None:
            org = registry.orgs.get(entry.org_handle)
            if org is None:
                warnings.append(f"AS{asn}: dangling org handle {entry.org_handle!r}")
            else:
                if org.name:
                    org_names.add(org.name)
                if org.address:
                    addresses.add(org.address)
                poc_handles.update(org.poc_handles)
                for net_handle in org.net_handles:
                    net = registry.nets.get(net_handle)
                    if net is None:
                        warnings.append(f"AS{asn}: dangling net handle {net_handle!r}")
                        continue
                    poc_handles.update(net.poc_handles)

        for handle in sorted(poc_handles):
            poc = registry.pocs.get(handle)
            if poc is None:
                warnings.append(f"AS{asn}: dangling poc handle {handle!r}")
                continue
            emails.update(poc.emails)
            if poc.address:
                addresses.add(poc.address)

        records.append(WhoisRecord(
            asn=asn,
            org_names=tuple(sorted(org_names)),
            poc_emails=tuple(sorted(emails)),
            addresses=tuple(sorted(addresses)),
        ))
        contact = CanonicalContact()
        for e in emails:
            contact.emails.add(canonicalize_email(e))
            domain = canonicalize_domain(e)
            if domain is not None:
                contact.email_domains.add(domain)
        for n in org_names:
            canon = canonicalize_company(n)
            if canon:
                contact.company_names.add(canon)
        for a in addresses:
            canon = canonicalize_address(a)
            if canon:
                contact.addresses.add(canon)
        contacts[asn] = contact

    return FlattenResult(contacts=contacts, records=records, warnings=warnings)


# ---------------------------------------------------------------------------
# Matching and agreement


def jaccard(a: set, b: set) -> float:
    """|a & b| / |a | b|; agreement of two empty sets is vacuously 1."""
    if not a and not b:
        return 1.0
    return len(a & b) / len(a | b)


def _provider_contacts(providers: Iterable[FrnRegistration]) -> dict[int, CanonicalContact]:
    out: dict[int, CanonicalContact] = {}
    for reg in providers:
        contact = out.setdefault(reg.provider_id, CanonicalContact())
        if reg.contact_email.strip():
            contact.emails.add(canonicalize_email(reg.contact_email))
            domain = canonicalize_domain(reg.contact_email)
            if domain is not None:
                contact.email_domains.add(domain)
        name = canonicalize_company(reg.company_name)
        if name:
            contact.company_names.add(name)
        addr = canonicalize_address(reg.physical_address)
        if addr:
            contact.addresses.add(addr)
    return out


def match_providers(
    providers: Iterable[FrnRegistration],
    asn_contacts: Mapping[int, CanonicalContact],
) -> list[ProviderAsnMatch]:
    """Match every provider against the registry contacts.

    One ASN may match multiple providers; that is expected (corporate
    groups, shared wholesale transit) and flagged in the summary rather
    than treated as an error. Output order is by provider id, and results
    do not depend on input row order.
    """
    by_provider = _provider_contacts(providers)

    index: dict[MatchMethod, dict[str, set[int]]] = {m: {} for m in METHOD_ORDER}
    for asn in sorted(asn_contacts):
        contact = asn_contacts[asn]
        for method in METHOD_ORDER:
            for value in contact.values_for(method):
                index[method].setdefault(value, set()).add(asn)

    matches: list[ProviderAsnMatch] = []
    for provider_id in sorted(by_provider):
        contact = by_provider[provider_id]
        by_method: dict[MatchMethod, frozenset[int]] = {}
        for method in METHOD_ORDER:
            hits: set[int] = set()
            for value in contact.values_for(method):
                hits.update(index[method].get(value, ()))
            by_method[method] = frozenset(hits)
        union = frozenset().union(*by_method.values())
        non_empty = [by_method[m] for m in METHOD_ORDER if by_method[m]]
        pair_scores = [
            jaccard(set(non_empty[i]), set(non_empty[j]))
            for i in range(len(non_empty))
            for j in range(i + 1, len(non_empty))
        ]
        if not non_empty:
            tier = MatchTier.UNMATCHED
        elif len(non_empty) == 1:
            tier = MatchTier.SINGLE_METHOD
        elif all(s == 1.0 for s in pair_scores):
            tier = MatchTier.STRONG
        else:
            tier = MatchTier.MULTI_METHOD
        # With fewer than two non-empty methods there are no pairs to
        # disagree, so agreement defaults to 1.
        agreement = sum(pair_scores) / len(pair_scores) if pair_scores else 1.0
        matches.append(ProviderAsnMatch(
            provider_id=provider_id,
            asns_by_method=by_method,
            asn_union=union,
            agreement=agreement,
            tier=tier,
        ))
    return matches


def agreement_matrix(matches: Iterable[ProviderAsnMatch]) -> np.ndarray:
    """4x4 mean pairwise Jaccard by method, averaged only over providers
    where both methods produced a non-empty ASN set. Cells with no
    qualifying provider are NaN; the diagonal is 1 by definition."""
    matches = list(matches)
    n = len(METHOD_ORDER)
    out = np.full((n, n), np.nan)
    for i in range(n):
        out[i, i] = 1.0
        for j in range(i + 1, n):
            scores = []
            for m in matches:
                a = m.asns_by_method[METHOD_ORDER[i]]
                b = m.asns_by_method[METHOD_ORDER[j]]
                if a and b:
                    scores.append(jaccard(set(a), set(b)))
            if scores:
                out[i, j] = out[j, i] = sum(scores) / len(scores)
    return out


def match_summary(matches: Iterable[ProviderAsnMatch]) -> dict:
    """Headline matching statistics plus shared-ASN review flags."""
    matches = list(matches)
    total = len(matches)
    tiers = {tier.value: 0 for tier in MatchTier}
    asn_providers: dict[int, list[int]] = {}
    for m in matches:
        tiers[m.tier.value] += 1
        for asn in m.asn_union:
            asn_providers.setdefault(asn, []).append(m.provider_id)
    matched = total - tiers[MatchTier.UNMATCHED.value]
    shared = {asn: sorted(ps) for asn, ps in sorted(asn_providers.items()) if len(ps) > 1}
    return {
        "providers_total": total,
        "providers_matched": matched,
        "match_rate": matched / total if total else 0.0,
        "tiers": tiers,
        "asns_matched": len(asn_providers),
        "asns_shared_by_multiple_providers": len(shared),
        "shared_asn_review": shared,
    }


MATCH_EXPORT_HEADER = [
    "provider_id", "tier", "asns", "full_email", "email_domain",
    "company_name", "address", "agreement",
]


def write_matches(matches: Iterable[ProviderAsnMatch], path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(MATCH_EXPORT_HEADER)
        for m in matches:
            w.writerow([
                m.provider_id,
                m.tier.value,
                ";".join(str(a) for a in sorted(m.asn_union)),
                *(int(bool(m.asns_by_method[meth])) for meth in METHOD_ORDER),
                repr(m.agreement),
            ])


def write_agreement_matrix(matrix: np.ndarray, path) -> None:
    names = [m.value for m in METHOD_ORDER]
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["method", *names])
        for i, name in enumerate(names):
            w.writerow([name, *("" if np.isnan(v) else repr(float(v)) for v in matrix[i])])
