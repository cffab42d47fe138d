import csv
import io
import json

import jsonschema
import numpy as np
import pytest

from critising import cli
from critising.acceptance import TierConfig
from critising.cli import EST_HEADER, SAMPLE_COLUMNS, load_schema, main


def write_config(tmp_path, **over):
    raw = {"schema_version": "1.0", "experiment": "mini", "sides": [8], "boundary": "plus",
           "n_samples": 100, "seed": 7}
    raw.update(over)
    path = tmp_path / f"cfg_{len(list(tmp_path.glob('cfg_*')))}.json"
    path.write_text(json.dumps(raw))
    return path


def read_rows(text):
    return list(csv.DictReader(io.StringIO(text)))


@pytest.fixture(scope="module")
def plus_archive(tmp_path_factory):
    root = tmp_path_factory.mktemp("plus")
    cfg = write_config(root, sides=[8, 16], n_samples=100, snapshots=True)
    assert main(["sample", "--config", str(cfg), "--out", str(root), "--threads", "1"]) == 0
    return root / "mini"


@pytest.fixture(scope="module")
def free_archives(tmp_path_factory):
    root = tmp_path_factory.mktemp("free")
    out = []
    for side in (8, 16):
        cfg = write_config(root, experiment=f"free{side}", sides=[side], boundary="free",
                           n_samples=200)
        assert main(["sample", "--config", str(cfg), "--out", str(root), "--threads", "1"]) == 0
        out.append(root / f"free{side}")
    return out


class TestSample:
    def test_rows_columns_and_manifest(self, plus_archive):
        raw = (plus_archive / "samples.csv").read_bytes()
        assert b"\r\n" in raw
        rows = read_rows(raw.decode())
        assert len(rows) == 200
        assert tuple(rows[0])[:len(SAMPLE_COLUMNS)] == SAMPLE_COLUMNS
        assert {int(r["side"]) for r in rows} == {8, 16}
        man = json.loads((plus_archive / "manifest.json").read_text())
        assert man["config"]["seed"] == 7
        assert set(man["files"]) == {"samples.csv", "snapshots_N8_c0.npz", "snapshots_N16_c0.npz"}
        with np.load(plus_archive / "snapshots_N16_c0.npz") as z:
            assert z["spins"].shape == (100, 16, 16)

    def test_values_round_trip(self, plus_archive):
        rows = read_rows((plus_archive / "samples.csv").read_text())
        for r in rows[:20]:
            for key in ("magnetization", "sobolev_h2"):
                assert cli.fmt(float(r[key])) == r[key]
            n = int(r["side"])
            assert float(r["magnetization"]) == pytest.approx(int(r["total_spin"]) * n ** (-15 / 8),
                                                              rel=1e-14)

    def test_rerun_is_byte_identical(self, tmp_path):
        cfg = write_config(tmp_path, n_samples=50)
        for name in ("a", "b"):
            assert main(["sample", "--config", str(cfg), "--out", str(tmp_path / name)]) == 0
        a = (tmp_path / "a" / "mini" / "samples.csv").read_bytes()
        b = (tmp_path / "b" / "mini" / "samples.csv").read_bytes()
        assert a == b

    def test_thread_count_does_not_change_output(self, tmp_path):
        cfg = write_config(tmp_path, sides=[4, 8], n_samples=40, n_chains=2)
        assert main(["sample", "--config", str(cfg), "--out", str(tmp_path / "one"),
                     "--threads", "1"]) == 0
        assert main(["sample", "--config", str(cfg), "--out", str(tmp_path / "two"),
                     "--threads", "2"]) == 0
        assert ((tmp_path / "one" / "mini" / "samples.csv").read_bytes()
                == (tmp_path / "two" / "mini" / "samples.csv").read_bytes())

    def test_seed_flag_overrides_config(self, tmp_path):
        cfg = write_config(tmp_path, n_samples=20)
        main(["sample", "--config", str(cfg), "--out", str(tmp_path / "x"), "--seed", "8"])
        man = json.loads((tmp_path / "x" / "mini" / "manifest.json").read_text())
        assert man["config"]["seed"] == 8

    def test_missing_seed(self, tmp_path):
        raw = {"schema_version": "1.0", "experiment": "e", "sides": [8], "boundary": "free",
               "n_samples": 10}
        path = tmp_path / "c.json"
        path.write_text(json.dumps(raw))
        assert main(["sample", "--config", str(path), "--out", str(tmp_path)]) == 2

    @pytest.mark.parametrize("over", [{"sides": [6]}, {"boundary": "periodic"}, {"n_samples": 0}])
    def test_invalid_config(self, tmp_path, over):
        cfg = write_config(tmp_path, **over)
        assert main(["sample", "--config", str(cfg), "--out", str(tmp_path)]) == 2

    def test_unreadable_config_is_io_error(self, tmp_path):
        assert main(["sample", "--config", str(tmp_path / "nope.json")]) == 3

    def test_malformed_json(self, tmp_path):
        path = tmp_path / "c.json"
        path.write_text("{not json")
        assert main(["sample", "--config", str(path)]) == 2


class TestEstimate:
    def run(self, capsys, *argv):
        code = main(["estimate", *argv])
        return code, read_rows(capsys.readouterr().out)

    def test_riesz_single_row(self, capsys):
        code, rows = self.run(capsys, "riesz")
        assert code == 0 and len(rows) == 1
        assert tuple(rows[0]) == EST_HEADER
        assert float(rows[0]["estimate"]) == pytest.approx(1.23925963, abs=1e-6)

    def test_unknown_kind(self, capsys):
        assert main(["estimate", "bogus"]) == 2

    def test_wrong_input_count(self, plus_archive):
        assert main(["estimate", "ks", str(plus_archive)]) == 2
        assert main(["estimate", "riesz", str(plus_archive)]) == 2

    def test_missing_archive(self, tmp_path):
        assert main(["estimate", "moments", str(tmp_path)]) == 3

    def test_two_point_rows(self, capsys, free_archives):
        code, rows = self.run(capsys, "two-point", str(free_archives[1]))
        assert code == 0 and len(rows) == 1
        r = rows[0]
        assert r["quantity"] == "rho_hat" and r["parameter"] == "4"
        assert 0 < float(r["estimate"]) < 1 and int(r["n_samples"]) == 200

    def test_moments_and_cutoff(self, capsys, free_archives):
        code, rows = self.run(capsys, "moments", str(free_archives[0]))
        assert code == 0
        assert [r["quantity"] for r in rows] == ["mean", "variance", "skewness", "kurtosis_ratio"]
        code, rows = self.run(capsys, "cutoff", str(free_archives[1]))
        assert code == 0 and {r["parameter"] for r in rows} == {"2", "4", "8", "16"}

    def test_ks_one_row(self, capsys, free_archives):
        code, rows = self.run(capsys, "ks", *map(str, free_archives))
        assert code == 0 and len(rows) == 1
        assert 0 <= float(rows[0]["estimate"]) <= 1

    def test_plus_archive_kinds(self, capsys, plus_archive):
        for kind in ("one-arm", "sobolev", "mgf", "charfun"):
            code, rows = self.run(capsys, kind, str(plus_archive))
            assert code == 0 and rows, kind
        code, rows = self.run(capsys, "kpoint", str(plus_archive), "--points", "1,1")
        assert code == 0 and [r["side"] for r in rows] == ["8", "16"]
        code, rows = self.run(capsys, "blocks", str(plus_archive), "--alpha1", "0.8")
        assert code == 0 and {r["quantity"] for r in rows} == {"xy_discrepancy", "c_hat"}

    def test_snapshot_kinds_need_snapshots(self, free_archives):
        assert main(["estimate", "kpoint", str(free_archives[0]), "--points", "1,1"]) == 2
        assert main(["estimate", "blocks", str(free_archives[0])]) == 2


def test_oracle_writes_golden(tmp_path, capsys):
    out = tmp_path / "g"
    assert main(["oracle", "--out", str(out)]) == 0
    files = list(out.glob("*.csv"))
    assert len(files) == 1
    rows = read_rows(files[0].read_text())
    assert len(rows) == 10
    assert {r["graph_id"] for r in rows} >= {"2x2-free", "3x3-plus", "star4"}


def test_acceptance_report_validates(tmp_path, monkeypatch):
    tiny = TierConfig("fast", ("C8",), n_chain=10, heavy_stride=1, ks_samples=10, qmc_log2=10)
    monkeypatch.setitem(cli.TIERS, "fast", tiny)
    assert main(["acceptance", "--tier", "fast", "--out", str(tmp_path)]) == 0
    report = json.loads((tmp_path / "acceptance_fast.json").read_text())
    jsonschema.validate(report, load_schema("report.schema.json"))
    status = {c["id"]: c["status"] for c in report["criteria"]}
    assert status["C8"] == "pass" and len(status) == 13


def test_bad_thread_env(monkeypatch):
    monkeypatch.setenv("CRIT_THREADS", "many")
    assert main(["oracle"]) == 2


def test_argparse_errors_exit_two():
    assert main(["sample"]) == 2
    assert main([]) == 2
