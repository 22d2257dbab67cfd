import json

import numpy as np
import pytest

from strataudit.ingest import (
    CALIFORNIA_CSV,
    KALAMAZOO_JSON,
    LoadError,
    export_population,
    fixture_checksum,
    load_california_results,
    load_cvr_mvr,
    load_kalamazoo_fixture,
    load_population,
)
from strataudit.sim import build_comparison_scenario


class TestPopulationFile:
    def test_round_trip(self, tmp_path):
        sc = build_comparison_scenario((0.0, 0.10), (0.0, 0.02), (1000, 1000))
        pop = sc.population()
        path = tmp_path / "pop.csv"
        export_population(pop, path)
        back = load_population(path, upper_bounds={1: 2.0, 2: 2.0})
        for a, b in zip(pop.strata, back.strata):
            assert a.size == b.size
            assert sorted(zip(a.values, a.counts)) == sorted(zip(b.values, b.counts))
        # canonical file: export(import(x)) is byte-identical
        path2 = tmp_path / "pop2.csv"
        export_population(back, path2)
        assert path.read_text() == path2.read_text()

    def test_single_category(self, tmp_path):
        p = tmp_path / "p.csv"
        p.write_text("stratum,value,count\n1,1.0,7\n")
        pop = load_population(p)
        assert pop.strata[0].size == 7

    def test_malformed_row_line_numbered(self, tmp_path):
        p = tmp_path / "p.csv"
        p.write_text("stratum,value,count\n1,1.0,5\n1,oops,3\n")
        with pytest.raises(LoadError, match=":3"):
            load_population(p)

    def test_bound_violation(self, tmp_path):
        p = tmp_path / "p.csv"
        p.write_text("stratum,value,count\n1,1.5,5\n")
        with pytest.raises(LoadError, match="bound"):
            load_population(p, upper_bounds={1: 1.0})

    def test_missing_column(self, tmp_path):
        p = tmp_path / "p.csv"
        p.write_text("stratum,value\n1,1.0\n")
        with pytest.raises(LoadError, match="count"):
            load_population(p)


class TestCvrMvr:
    def test_basic(self, tmp_path):
        p = tmp_path / "s.csv"
        p.write_text("stratum,cvr,mvr\n1,winner,winner\n2,,loser\n")
        rows = load_cvr_mvr(p)
        assert rows == [(1, "winner", "winner"), (2, "", "loser")]

    def test_missing_mvr(self, tmp_path):
        p = tmp_path / "s.csv"
        p.write_text("stratum,cvr,mvr\n1,winner,\n")
        with pytest.raises(LoadError, match=":2"):
            load_cvr_mvr(p)


class TestCalifornia:
    def test_packaged_data(self):
        counties, winner, loser = load_california_results()
        assert len(counties) == 58
        assert sum(c[1] for c in counties) == 17_500_881
        assert winner == "Biden"
        assert loser == "Trump"
        assert all(c[1] > 0 for c in counties)
        assert all(c[2] + c[3] <= c[1] for c in counties)

    def test_synthetic_round_trip(self, tmp_path):
        p = tmp_path / "two.csv"
        p.write_text(
            "county,candidate,votes\n"
            "X,Alpha,60\nX,Beta,30\nX,Other,10\n"
            "Y,Alpha,20\nY,Beta,45\nY,Other,5\n"
        )
        counties, winner, loser = load_california_results(p)
        assert winner == "Alpha" and loser == "Beta"
        assert counties == [("X", 100, 60, 30), ("Y", 70, 20, 45)]

    def test_non_numeric_votes(self, tmp_path):
        p = tmp_path / "bad.csv"
        p.write_text("county,candidate,votes\nX,Alpha,many\n")
        with pytest.raises(LoadError, match=":2"):
            load_california_results(p)


class TestKalamazooFixture:
    def test_packaged_fixture_valid(self):
        fx = load_kalamazoo_fixture()
        assert fx["strata"]["cvr"]["size"] == 5294
        assert fx["strata"]["polling"]["size"] == 22732
        assert fx["strata"]["cvr"]["diluted_margin"] == 0.55
        assert fx["strata"]["polling"]["diluted_margin"] == 0.57
        assert len(fx["cvr_sample"]) == 8
        assert sum(fx["polling_sample_tallies"].values()) == 32

    def test_checksum_tamper_refused(self, tmp_path):
        fx = json.loads(KALAMAZOO_JSON.read_text())
        fx["polling_sample_tallies"]["winner"] += 1
        p = tmp_path / "fx.json"
        p.write_text(json.dumps(fx))
        with pytest.raises(LoadError, match="checksum"):
            load_kalamazoo_fixture(p)

    def test_wrong_sizes_refused(self, tmp_path):
        fx = json.loads(KALAMAZOO_JSON.read_text())
        fx["strata"]["cvr"]["size"] = 5000
        fx["checksum"] = fixture_checksum(fx)
        p = tmp_path / "fx.json"
        p.write_text(json.dumps(fx))
        with pytest.raises(LoadError, match="cvr stratum size"):
            load_kalamazoo_fixture(p)

    def test_reconstruction_not_transcription(self):
        with pytest.raises(LoadError, match="transcription"):
            load_kalamazoo_fixture(require_transcribed=True)

    def test_missing_file(self, tmp_path):
        with pytest.raises(LoadError, match="not found"):
            load_kalamazoo_fixture(tmp_path / "nope.json")
