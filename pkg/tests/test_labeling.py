import pytest

from bbaudit import attribution as attr
from bbaudit import geo, ingest, labeling as lab


CELLS = [geo._encode_axial(q, 0) for q in range(24)]
STATES = {c: "KS" for c in CELLS}


def _stats(cell, devices, tests=None):
    return attr.CellTestStats(cell=cell, ookla_tests=tests if tests is not None else devices,
                              ookla_devices=devices, max_avg_down_kbps=5e4,
                              max_avg_up_kbps=5e3, min_avg_latency_ms=20.0)


def _challenge(cell, outcome, provider=1, tech=50, loc=1, date="2023-03-01"):
    return ingest.ChallengeRecord(
        provider_id=provider, location_id=loc, cell=cell,
        technology=ingest.Technology.from_code(tech),
        outcome=outcome, reason="Technology Unavailable", resolved_date=date)


def _obs(provider, cell, source, tech=50, state="KS", score=None):
    label = lab._LABEL_FOR_SOURCE[source]
    return lab.LabeledObservation(
        provider_id=provider, cell=cell,
        technology=ingest.Technology.from_code(tech), state=state,
        label=label, source=source, coverage_score=score)


SUCCESS = ingest.ChallengeOutcome.FCC_UPHELD
FAILURE = ingest.ChallengeOutcome.FCC_OVERTURNED


class TestCoverageScore:
    def test_ratio(self):
        assert lab.coverage_score(_stats(CELLS[0], 8), ingest.HexLocationCount(CELLS[0], 4)) == 2.0

    def test_zero_devices(self):
        assert lab.coverage_score(_stats(CELLS[0], 0), ingest.HexLocationCount(CELLS[0], 4)) == 0.0

    def test_above_one_candidate(self):
        score = lab.coverage_score(_stats(CELLS[0], 5), ingest.HexLocationCount(CELLS[0], 4))
        assert score == 1.25 and score > 1.0

    def test_missing_count_raises(self):
        with pytest.raises(lab.MissingBslCount):
            lab.coverage_scores([_stats(CELLS[0], 5)], [])


class TestLikelyServed:
    def _claims(self):
        return {(1, CELLS[0]): {ingest.Technology.FIBER}}

    def test_all_three_conditions(self):
        obs = lab.likely_served(
            {CELLS[0]: 1.25},
            [attr.ProviderCellEvidence(1, CELLS[0], 3)],
            self._claims(), STATES)
        assert len(obs) == 1
        assert obs[0].label is lab.Label.SERVED
        assert obs[0].source is lab.LabelSource.SYNTHETIC_LIKELY_SERVED
        assert obs[0].coverage_score == 1.25

    def test_no_mlab_evidence_not_emitted(self):
        assert lab.likely_served({CELLS[0]: 1.25}, [], self._claims(), STATES) == []

    def test_low_score_not_emitted(self):
        obs = lab.likely_served(
            {CELLS[0]: 0.9},
            [attr.ProviderCellEvidence(1, CELLS[0], 3)],
            self._claims(), STATES)
        assert obs == []

    def test_score_exactly_one_not_emitted(self):
        obs = lab.likely_served(
            {CELLS[0]: 1.0},
            [attr.ProviderCellEvidence(1, CELLS[0], 3)],
            self._claims(), STATES)
        assert obs == []

    def test_no_claim_not_emitted(self):
        obs = lab.likely_served(
            {CELLS[0]: 2.0},
            [attr.ProviderCellEvidence(2, CELLS[0], 3)],
            self._claims(), STATES)
        assert obs == []

    def test_matches_brute_force_filter(self, rng):
        scores = {c: float(rng.uniform(0, 3)) for c in CELLS}
        evidence = [attr.ProviderCellEvidence(int(p), CELLS[int(i)], int(n))
                    for p, i, n in zip(rng.integers(1, 4, 30), rng.integers(0, 12, 30),
                                       rng.integers(1, 9, 30))]
        evidence = list({(e.provider_id, e.cell): e for e in evidence}.values())
        claims = {}
        for p in (1, 2, 3):
            for c in CELLS:
                if rng.random() < 0.5:
                    claims[(p, c)] = {ingest.Technology.FIBER, ingest.Technology.CABLE}
        got = {(o.provider_id, o.cell, o.technology)
               for o in lab.likely_served(scores, evidence, claims, STATES)}
        want = set()
        for e in evidence:
            for tech in claims.get((e.provider_id, e.cell), ()):
                if scores[e.cell] > 1.0:
                    want.add((e.provider_id, e.cell, tech))
        assert got == want


class TestChallengeLabels:
    def test_one_success_marks_whole_hex(self):
        records = [_challenge(CELLS[0], SUCCESS, loc=1)] + \
                  [_challenge(CELLS[0], FAILURE, loc=i) for i in range(2, 7)]
        obs = lab.challenge_labels(records, STATES)
        assert len(obs) == 1
        assert obs[0].label is lab.Label.UNSERVED
        assert obs[0].source is lab.LabelSource.CHALLENGE_SUCCEEDED

    def test_overturned_is_served(self):
        (o,) = lab.challenge_labels([_challenge(CELLS[0], FAILURE)], STATES)
        assert o.label is lab.Label.SERVED
        assert o.adjudicated is True

    def test_conceded_not_adjudicated(self):
        (o,) = lab.challenge_labels(
            [_challenge(CELLS[0], ingest.ChallengeOutcome.PROVIDER_CONCEDED)], STATES)
        assert o.label is lab.Label.UNSERVED
        assert o.adjudicated is False

    def test_mixed_outcomes_unserved_wins(self):
        records = [_challenge(CELLS[0], FAILURE, loc=1), _challenge(CELLS[0], SUCCESS, loc=2)]
        (o,) = lab.challenge_labels(records, STATES)
        assert o.label is lab.Label.UNSERVED

    def test_cutoff_excludes_older_records(self):
        records = [_challenge(CELLS[0], SUCCESS, date="2023-01-15"),
                   _challenge(CELLS[1], SUCCESS, date="2023-02-10")]
        obs = lab.challenge_labels(records, STATES, cutoff_date="2023-02-01")
        assert [o.cell for o in obs] == [CELLS[1]]

    def test_satellite_records_skipped(self):
        assert lab.challenge_labels([_challenge(CELLS[0], SUCCESS, tech=60)], STATES) == []


class TestAssemble:
    def test_precedence_challenge_failed_over_synthetic(self):
        a = _obs(1, CELLS[0], lab.LabelSource.CHALLENGE_FAILED)
        b = _obs(1, CELLS[0], lab.LabelSource.SYNTHETIC_LIKELY_SERVED, score=2.0)
        ds = lab.assemble_dataset([a], [], [b])
        assert len(ds) == 1
        assert ds.observations[0].source is lab.LabelSource.CHALLENGE_FAILED

    def test_precedence_success_over_failure(self):
        a = _obs(1, CELLS[0], lab.LabelSource.CHALLENGE_FAILED)
        b = _obs(1, CELLS[0], lab.LabelSource.CHALLENGE_SUCCEEDED)
        ds = lab.assemble_dataset([a, b], [], [])
        assert ds.observations[0].label is lab.Label.UNSERVED

    def test_disjoint_concatenation(self):
        a = _obs(1, CELLS[0], lab.LabelSource.CHALLENGE_SUCCEEDED)
        b = _obs(1, CELLS[1], lab.LabelSource.CHANGE_REMOVED)
        c = _obs(2, CELLS[0], lab.LabelSource.SYNTHETIC_LIKELY_SERVED, score=1.5)
        ds = lab.assemble_dataset([a], [b], [c])
        assert len(ds) == 3

    def test_composition_report(self):
        ds = lab.assemble_dataset(
            [_obs(1, CELLS[0], lab.LabelSource.CHALLENGE_SUCCEEDED)],
            [_obs(1, CELLS[1], lab.LabelSource.CHANGE_REMOVED)],
            [_obs(1, CELLS[i], lab.LabelSource.SYNTHETIC_LIKELY_SERVED, score=2.0)
             for i in (2, 3)])
        comp = ds.composition()
        assert comp["challenge_succeeded"]["count"] == 1
        assert comp["change_removed"]["fraction"] == 0.25
        assert comp["synthetic_likely_served"]["fraction"] == 0.5

    def test_invalid_label_source_pairing_rejected(self):
        with pytest.raises(lab.LabelingError):
            lab.LabeledObservation(1, CELLS[0], ingest.Technology.FIBER, "KS",
                                   lab.Label.SERVED, lab.LabelSource.CHALLENGE_SUCCEEDED)


class TestBalance:
    def _unbalanced(self, n_unserved=10, n_served=2, provider=1, state="KS"):
        obs = [_obs(provider, CELLS[i], lab.LabelSource.CHALLENGE_SUCCEEDED, state=state)
               for i in range(n_unserved)]
        obs += [_obs(provider, CELLS[10 + i], lab.LabelSource.CHALLENGE_FAILED, state=state)
                for i in range(n_served)]
        return lab.LabeledDataset(obs)

    def _pool(self, n, provider=1, state="KS", start=100):
        return [_obs(provider, geo._encode_axial(start + i, 5),
                     lab.LabelSource.SYNTHETIC_LIKELY_SERVED, state=state,
                     score=3.0 - i * 0.01)
                for i in range(n)]

    def test_adds_highest_scoring_until_equal(self):
        ds = self._unbalanced(10, 2)
        pool = self._pool(20)
        out = lab.balance(ds, pool)
        assert out.class_counts() == {"served": 10, "unserved": 10}
        added = [o for o in out.observations if o.source is lab.LabelSource.SYNTHETIC_LIKELY_SERVED]
        assert len(added) == 8
        top8 = sorted(pool, key=lambda o: -o.coverage_score)[:8]
        assert {o.key for o in added} == {o.key for o in top8}

    def test_pool_exhausted_triggers_state_pass(self):
        # Provider 1 is pool-starved (5 of 8 needed); provider 2's surplus
        # candidates then balance the state as a whole.
        obs = self._unbalanced(10, 2, provider=1).observations
        obs += [_obs(2, geo._encode_axial(50 + i, 3), lab.LabelSource.CHALLENGE_SUCCEEDED)
                for i in range(2)]
        ds = lab.LabeledDataset(obs)
        pool = self._pool(5, provider=1) + self._pool(8, provider=2, start=200)
        out = lab.balance(ds, pool)
        counts = out.class_counts()
        assert counts["served"] == counts["unserved"]
        p1_added = sum(1 for o in out.observations
                       if o.source is lab.LabelSource.SYNTHETIC_LIKELY_SERVED and o.provider_id == 1)
        assert p1_added == 5

    def test_already_balanced_unchanged(self):
        ds = self._unbalanced(3, 3)
        out = lab.balance(ds, self._pool(10))
        assert out.observations == ds.observations

    def test_never_removes(self):
        ds = self._unbalanced(2, 6)
        out = lab.balance(ds, self._pool(10))
        assert set(ds.keys()) <= set(out.keys())
        assert len(out) == len(ds)

    def test_overlapping_pool_rejected(self):
        ds = self._unbalanced(2, 1)
        dup = _obs(1, CELLS[0], lab.LabelSource.SYNTHETIC_LIKELY_SERVED, score=2.0)
        with pytest.raises(lab.LabelingError):
            lab.balance(ds, [dup])

    def test_deterministic_given_ties(self):
        ds = self._unbalanced(4, 0)
        pool = [_obs(1, geo._encode_axial(100 + i, 5),
                     lab.LabelSource.SYNTHETIC_LIKELY_SERVED, score=2.0)
                for i in range(8)]
        out1 = lab.balance(ds, pool)
        out2 = lab.balance(ds, list(reversed(pool)))
        assert out1.observations == out2.observations
        added = [o for o in out1.observations if o.source is lab.LabelSource.SYNTHETIC_LIKELY_SERVED]
        assert [o.cell.id for o in added] == sorted(o.cell.id for o in added)[:4]


class TestRoundTripAndStats:
    def test_labeled_csv_roundtrip(self, tmp_path):
        ds = lab.assemble_dataset(
            [_obs(1, CELLS[0], lab.LabelSource.CHALLENGE_SUCCEEDED)],
            [_obs(1, CELLS[1], lab.LabelSource.CHANGE_REMOVED)],
            [_obs(2, CELLS[2], lab.LabelSource.SYNTHETIC_LIKELY_SERVED, score=1.75)])
        path = tmp_path / "labeled.csv"
        lab.write_labeled(ds, path)
        back = lab.parse_labeled(path)
        assert back.observations == ds.observations

    def test_challenge_stats_table(self):
        records = [_challenge(CELLS[0], SUCCESS), _challenge(CELLS[1], FAILURE),
                   _challenge(CELLS[2], ingest.ChallengeOutcome.PROVIDER_CONCEDED)]
        stats = lab.challenge_stats(records)
        assert stats["total"] == 3
        assert stats["successful"] == 2
        assert stats["success_rate"] == pytest.approx(2 / 3)
        assert stats["outcomes"]["FCC Upheld"]["count"] == 1
        assert stats["reasons"]["Technology Unavailable"]["count"] == 3
