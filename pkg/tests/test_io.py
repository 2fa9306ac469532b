import json

import numpy as np
import pytest

from cavispec import io as cio
from cavispec.oracle import RadialProfile
from cavispec.problem import ProblemConfig, solve_problem


@pytest.fixture(scope="module")
def small_solution():
    return solve_problem(ProblemConfig(eps=1e-1, lambda1=2.2, lambda2=2.0, N=4, M=4))


class TestSnapshot:
    def test_round_trip_bit_exact(self, tmp_path, small_solution):
        sol = small_solution
        path = cio.write_snapshot(tmp_path / "snap.json", sol.config, sol.y)
        cfg, y = cio.read_snapshot(path)
        assert cfg.to_dict() == sol.config.to_dict()
        assert y.tobytes() == sol.y.tobytes()

    def test_header_and_packing(self, tmp_path, small_solution):
        sol = small_solution
        data = json.loads(cio.write_snapshot(tmp_path / "s.json", sol.config, sol.y).read_text())
        assert data["header"] == {"N": 4, "M": 4, "eps": 0.1, "gamma": 1.0, "lambda1": 2.2, "lambda2": 2.0,
                                  "material": "default"}
        assert data["packing"] == ["alpha", "beta", "xi", "eta"]
        assert len(data["y"]) == 2 * 4 * 4

    def test_rejects_inconsistent_header(self, tmp_path, small_solution):
        sol = small_solution
        path = cio.write_snapshot(tmp_path / "s.json", sol.config, sol.y)
        data = json.loads(path.read_text())
        data["header"]["M"] = 5
        path.write_text(json.dumps(data))
        with pytest.raises(cio.SnapshotError):
            cio.read_snapshot(path)

    def test_rejects_wrong_length(self, tmp_path, small_solution):
        sol = small_solution
        path = cio.write_snapshot(tmp_path / "s.json", sol.config, sol.y[:-1])
        with pytest.raises(cio.SnapshotError):
            cio.read_snapshot(path)

    def test_rejects_other_json(self, tmp_path):
        (tmp_path / "x.json").write_text("{}")
        with pytest.raises(cio.SnapshotError):
            cio.read_snapshot(tmp_path / "x.json")


class TestTables:
    def test_history_csv(self, tmp_path, small_solution):
        path = cio.write_history_csv(tmp_path / "h.csv", small_solution.report.history)
        rows = cio.read_history_csv(path)
        assert tuple(rows[0]) == cio.HISTORY_COLUMNS
        assert len(rows) == len(small_solution.report.history)
        assert {r["phase"] for r in rows} <= {"gradient", "regularized", "quasi-newton"}

    def test_report_embeds_config(self, tmp_path, small_solution):
        sol = small_solution
        data = cio.read_json(cio.write_report(tmp_path / "r.json", sol.report, sol.config, energy=sol.energy))
        assert data["config"]["Mq"] == 32 and data["config"]["solver"]["tol_start"] == 0.1
        assert data["report"]["min_D"] > 0 and data["energy"] == sol.energy

    def test_table_round_trip(self, tmp_path):
        path = cio.write_table(tmp_path / "t.dat", ("M", "err"), [(4, 1e-3), (8, 1e-6)], comments=["demo"])
        text = path.read_text().splitlines()
        assert text[0] == "# demo" and text[1] == "# M err"
        np.testing.assert_allclose(cio.read_table(path), [[4, 1e-3], [8, 1e-6]])

    def test_profile_csv(self, tmp_path):
        prof = RadialProfile(np.array([0.1, 1.0]), np.array([0.5, 2.0]), 1.0, 0.5, 0.0, 2, 1)
        lines = cio.write_profile_csv(tmp_path / "p.csv", prof).read_text().splitlines()
        assert lines[0] == "r,s" and lines[2] == "1.0,2.0"

    def test_non_finite_json(self, tmp_path):
        data = cio.read_json(cio.write_json(tmp_path / "n.json", {"a": float("nan"), "b": np.inf, "c": np.int64(3)}))
        assert data == {"a": "nan", "b": "inf", "c": 3}

    def test_atomic_write_leaves_no_temp(self, tmp_path):
        cio.atomic_write(tmp_path / "sub" / "f.txt", "hello")
        assert [p.name for p in (tmp_path / "sub").iterdir()] == ["f.txt"]

    def test_samples_csv(self, tmp_path):
        (tmp_path / "s.csv").write_text("N,M,q\n16,8,1.5\n16,12,1.25\n")
        samples = cio.read_samples_csv(tmp_path / "s.csv")
        assert [(s.N, s.M, s.q) for s in samples] == [(16, 8, 1.5), (16, 12, 1.25)]

    @pytest.mark.parametrize("text", ["N,M\n1,2\n", "N,M,q\n16,x,1\n"])
    def test_samples_csv_errors(self, tmp_path, text):
        (tmp_path / "s.csv").write_text(text)
        with pytest.raises(ValueError):
            cio.read_samples_csv(tmp_path / "s.csv")
