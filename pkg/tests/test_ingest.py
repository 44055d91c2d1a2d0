import gzip

import pytest

from bbaudit import geo, ingest


def _claim(provider=1, tech=50, down=100.0, up=10.0, loc=1000, cell_q=0, cell_r=0,
           state="KS", brand="Acme", low_latency=True, category="R"):
    return ingest.AvailabilityClaim(
        provider_id=provider,
        brand=brand,
        technology=ingest.Technology.from_code(tech),
        max_down_mbps=down,
        max_up_mbps=up,
        low_latency=low_latency,
        location_id=loc,
        cell=geo._encode_axial(cell_q, cell_r),
        state=state,
        residential_business=category,
    )


def _write_snapshot_csv(path, rows):
    lines = [",".join(ingest.SNAPSHOT_HEADER)]
    lines += [",".join(str(v) for v in row) for row in rows]
    path.write_text("\n".join(lines) + "\n")


CELL = geo._encode_axial(0, 0).to_hex()


class TestSnapshotParsing:
    def test_speed_floor_applied_to_slow_download(self, tmp_path):
        f = tmp_path / "snap.csv"
        _write_snapshot_csv(f, [[1, "Acme", 50, 8, 5, 1, 1000, CELL, "KS", "R"]])
        snap = ingest.parse_snapshot(f)
        claim = next(iter(snap.claims))
        assert claim.max_down_mbps == 0.0
        assert claim.max_up_mbps == 5.0

    def test_upload_floor(self, tmp_path):
        f = tmp_path / "snap.csv"
        _write_snapshot_csv(f, [[1, "Acme", 50, 100, 0.5, 1, 1000, CELL, "KS", "R"]])
        claim = next(iter(ingest.parse_snapshot(f).claims))
        assert claim.max_up_mbps == 0.0
        assert claim.max_down_mbps == 100.0

    def test_empty_file_with_header(self, tmp_path):
        f = tmp_path / "snap.csv"
        _write_snapshot_csv(f, [])
        assert len(ingest.parse_snapshot(f)) == 0

    def test_unknown_technology_code(self, tmp_path):
        f = tmp_path / "snap.csv"
        _write_snapshot_csv(f, [[1, "Acme", 99, 100, 10, 1, 1000, CELL, "KS", "R"]])
        with pytest.raises(ingest.MalformedRow, match="technology code 99"):
            ingest.parse_snapshot(f)

    def test_duplicate_claim_rejected(self, tmp_path):
        f = tmp_path / "snap.csv"
        row = [1, "Acme", 50, 100, 10, 1, 1000, CELL, "KS", "R"]
        _write_snapshot_csv(f, [row, row])
        with pytest.raises(ingest.DuplicateClaim):
            ingest.parse_snapshot(f)

    def test_missing_header(self, tmp_path):
        f = tmp_path / "snap.csv"
        f.write_text("")
        with pytest.raises(ingest.MalformedRow):
            ingest.parse_snapshot(f)

    def test_malformed_row_reports_line(self, tmp_path):
        f = tmp_path / "snap.csv"
        _write_snapshot_csv(f, [
            [1, "Acme", 50, 100, 10, 1, 1000, CELL, "KS", "R"],
            [2, "Bad", 50, "fast", 10, 1, 1001, CELL, "KS", "R"],
        ])
        with pytest.raises(ingest.MalformedRow, match=":3:"):
            ingest.parse_snapshot(f)

    def test_gzip_autodetect(self, tmp_path):
        f = tmp_path / "snap.csv.gz"
        text = ",".join(ingest.SNAPSHOT_HEADER) + "\n" + \
            ",".join(str(v) for v in [1, "Acme", 50, 100, 10, 1, 1000, CELL, "KS", "R"]) + "\n"
        f.write_bytes(gzip.compress(text.encode()))
        assert len(ingest.parse_snapshot(f)) == 1


class TestChallengeParsing:
    def _write(self, path, outcome, reason="Technology Unavailable"):
        lines = [",".join(ingest.CHALLENGE_HEADER),
                 f'1,1000,{CELL},50,{outcome},{reason},2023-03-01']
        path.write_text("\n".join(lines) + "\n")

    def test_provider_conceded_is_success(self, tmp_path):
        f = tmp_path / "ch.csv"
        self._write(f, "Provider Conceded")
        rec = ingest.parse_challenges(f)[0]
        assert rec.outcome.success is True

    def test_fcc_overturned_is_failure(self, tmp_path):
        f = tmp_path / "ch.csv"
        self._write(f, "FCC Overturned")
        rec = ingest.parse_challenges(f)[0]
        assert rec.outcome.success is False
        assert rec.outcome.adjudicated is True

    def test_unknown_outcome(self, tmp_path):
        f = tmp_path / "ch.csv"
        self._write(f, "Maybe")
        with pytest.raises(ingest.MalformedRow, match="unknown challenge outcome"):
            ingest.parse_challenges(f)

    def test_outcome_success_partition(self):
        successes = {o for o in ingest.ChallengeOutcome if o.success}
        assert successes == {
            ingest.ChallengeOutcome.PROVIDER_CONCEDED,
            ingest.ChallengeOutcome.SERVICE_CHANGED,
            ingest.ChallengeOutcome.FCC_UPHELD,
        }


class TestOoklaMlab:
    def test_empty_tile_accepted(self, tmp_path):
        f = tmp_path / "ookla.csv"
        f.write_text(",".join(ingest.OOKLA_HEADER) + "\n0231,0,0,0,0,0\n")
        tiles = ingest.parse_ookla(f)
        assert tiles[0].tests == 0 and tiles[0].devices == 0

    def test_mlab_missing_radius_rejected_with_count(self, tmp_path):
        f = tmp_path / "mlab.csv"
        f.write_text(",".join(ingest.MLAB_HEADER) + "\n"
                     "2022-01-01T00:00:00Z,64500,39.0,-98.0,,100,10,20\n"
                     "2022-01-01T00:00:00Z,64500,39.0,-98.0,5.0,100,10,20\n")
        result = ingest.parse_mlab(f)
        assert result.rejected_rows == 1
        assert len(result.tests) == 1

    def test_mlab_ndjson(self, tmp_path):
        f = tmp_path / "mlab.ndjson"
        f.write_text('{"timestamp": "t", "asn": 64500, "lat": 39.0, "lon": -98.0,'
                     ' "accuracy_radius_km": 5.0, "down_mbps": 10, "up_mbps": 1, "min_rtt_ms": 9}\n'
                     '{"timestamp": "t", "asn": 64500, "lat": 39.0, "lon": -98.0,'
                     ' "down_mbps": 10, "up_mbps": 1, "min_rtt_ms": 9}\n')
        result = ingest.parse_mlab(f)
        assert len(result.tests) == 1
        assert result.rejected_rows == 1
        assert result.tests[0].asn == 64500


class TestRoundTrips:
    def test_snapshot_roundtrip_random_records(self, tmp_path, rng):
        claims = []
        for i in range(1000):
            down = float(rng.choice([0.0, 25.0, 100.5, 940.0]))
            up = float(rng.choice([0.0, 3.0, 10.25, 500.0]))
            claims.append(_claim(
                provider=int(rng.integers(1, 50)),
                tech=int(rng.choice([10, 40, 50, 60, 61, 70, 71])),
                down=down, up=up,
                loc=i,
                cell_q=int(rng.integers(-50, 50)),
                cell_r=int(rng.integers(-50, 50)),
                state=str(rng.choice(["KS", "NE", "OK"])),
                low_latency=bool(rng.integers(2)),
            ))
        snap = ingest.MapSnapshot(claims_by_key={c.key: c for c in claims},
                                  methodology_texts={(1, None): "subscriber addresses"})
        claims_path = tmp_path / "snap.csv"
        meth_path = tmp_path / "meth.csv"
        ingest.write_snapshot(snap, claims_path, meth_path)
        back = ingest.parse_snapshot(claims_path, meth_path)
        assert back.claims_by_key == snap.claims_by_key
        assert back.methodology_texts == snap.methodology_texts

    def test_challenge_roundtrip(self, tmp_path, rng):
        records = [
            ingest.ChallengeRecord(
                provider_id=int(rng.integers(1, 20)),
                location_id=i,
                cell=geo._encode_axial(int(rng.integers(-20, 20)), int(rng.integers(-20, 20))),
                technology=ingest.Technology.from_code(int(rng.choice([10, 40, 50, 70, 71]))),
                outcome=list(ingest.ChallengeOutcome)[int(rng.integers(5))],
                reason=ingest.CHALLENGE_REASONS[int(rng.integers(8))],
                resolved_date="2023-05-01",
            )
            for i in range(500)
        ]
        path = tmp_path / "ch.csv"
        ingest.write_challenges(records, path)
        assert ingest.parse_challenges(path) == records

    def test_ookla_roundtrip(self, tmp_path, rng):
        tiles = [
            ingest.OoklaTile(
                quadkey="".join(str(int(d)) for d in rng.integers(0, 4, size=18)),
                tests=int(rng.integers(0, 100)),
                devices=int(rng.integers(0, 50)),
                avg_down_kbps=float(rng.uniform(0, 1e6)),
                avg_up_kbps=float(rng.uniform(0, 1e5)),
                avg_latency_ms=float(rng.uniform(1, 200)),
            )
            for _ in range(300)
        ]
        path = tmp_path / "ookla.csv"
        ingest.write_ookla(tiles, path)
        assert ingest.parse_ookla(path) == tiles

    def test_mlab_roundtrip(self, tmp_path, rng):
        tests = [
            ingest.MlabTest(
                timestamp=f"2022-01-{1 + int(rng.integers(28)):02d}T12:00:00Z",
                asn=int(rng.integers(64500, 64600)),
                geo=geo.GeoPoint(float(rng.uniform(35, 42)), float(rng.uniform(-100, -95))),
                accuracy_radius_km=float(rng.uniform(0, 30)),
                down_mbps=float(rng.uniform(1, 900)),
                up_mbps=float(rng.uniform(1, 100)),
                min_rtt_ms=float(rng.uniform(5, 80)),
            )
            for _ in range(300)
        ]
        path = tmp_path / "mlab.ndjson"
        ingest.write_mlab(tests, path)
        result = ingest.parse_mlab(path)
        assert result.tests == tests
        assert result.rejected_rows == 0

    def test_frn_and_hex_count_roundtrip(self, tmp_path):
        frn = [ingest.FrnRegistration(900 + i, 10 + i, f"Op {i} LLC", f"noc@op{i}.net", f"{i} Main Street")
               for i in range(50)]
        path = tmp_path / "frn.csv"
        ingest.write_frn(frn, path)
        assert ingest.parse_frn(path) == frn

        counts = [ingest.HexLocationCount(geo._encode_axial(i, -i), i + 1) for i in range(50)]
        cpath = tmp_path / "counts.csv"
        ingest.write_hex_counts(counts, cpath)
        assert ingest.parse_hex_counts(cpath) == counts

    def test_whois_roundtrip(self, tmp_path):
        reg = ingest.WhoisRegistry()
        reg.asns[64500] = ingest.WhoisAsn(64500, "ORG-1", ("POC-1",))
        reg.orgs["ORG-1"] = ingest.WhoisOrg("ORG-1", "Acme Networks", "1 Main St", ("POC-2",), ("NET-1",))
        reg.nets["NET-1"] = ingest.WhoisNet("NET-1", ("POC-3",))
        for i in (1, 2, 3):
            reg.pocs[f"POC-{i}"] = ingest.WhoisPoc(f"POC-{i}", (f"p{i}@acme.net",), f"{i} Oak Ave")
        path = tmp_path / "whois.ndjson"
        ingest.write_whois(reg, path)
        back = ingest.parse_whois(path)
        assert back == reg
