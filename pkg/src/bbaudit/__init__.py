"""Broadband availability claim auditing toolkit.

A batch pipeline that ingests availability filings, challenge outcomes,
map-release diffs, and crowdsourced speed tests; resolves provider/ASN
identities; synthesizes likely-served labels; trains a boosted-tree
classifier; and reports coverage claims likely to fail a challenge.
"""

__version__ = "0.1.0"
