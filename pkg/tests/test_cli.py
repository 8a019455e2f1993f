import csv
import json

import pytest

from bayesrob.cli import EXIT_DATA, EXIT_FAIL, EXIT_OK, EXIT_USAGE, main, parse_range
from bayesrob.distributions import load_grid


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def write_spec(path, domain):
    path.write_text(json.dumps({
        "spec_version": 1, "kind": "truncated_normal_mixture", "domain": [domain], "shape": [200],
        "priors": [0.5, 0.5],
        "params": {"classes": [{"components": [{"mean": [m], "scale": [0.8]}]} for m in (-1, 1)]},
    }))
    return path


class TestParseRange:
    def test_inclusive(self):
        assert parse_range("0:0.49:0.01")[-1] == pytest.approx(0.49)
        assert len(parse_range("0:0.49:0.01")) == 50

    def test_bad(self):
        with pytest.raises(Exception):
            parse_range("0:1")


class TestDistBuild:
    def test_shipped(self, tmp_path, capsys):
        out = tmp_path / "g.json"
        code, text, _ = run(capsys, "dist", "build", "--spec", "step_1d", "--out", out, "--shape", "400")
        assert code == EXIT_OK
        assert load_grid(out).shape == (400,)
        assert "bayes_error=" in text

    def test_missing_spec_is_usage(self, tmp_path, capsys):
        code, _, err = run(capsys, "dist", "build", "--spec", tmp_path / "nope.json", "--out", tmp_path / "g.json")
        assert code == EXIT_USAGE and "no such spec" in err

    def test_domain_too_small(self, tmp_path, capsys):
        spec = write_spec(tmp_path / "s.json", [-1, 1])
        code, _, err = run(capsys, "dist", "build", "--spec", spec, "--out", tmp_path / "g.json")
        assert code == EXIT_DATA and "clipped mass" in err


class TestBound:
    def test_single_kappa(self, tmp_path, capsys):
        out = tmp_path / "b.json"
        code, text, _ = run(capsys, "bound", "--dist", "step_1d", "--eps", 0.15, "--kappa", 0.1, "--out", out)
        assert code == EXIT_OK
        data = json.loads(out.read_text())
        assert data["det_robust_error"] == pytest.approx(0.15, abs=2e-3)
        assert "prob b_p" in text

    def test_sweep_writes_table_and_chart(self, tmp_path, capsys):
        out = tmp_path / "sweep.json"
        code, _, _ = run(capsys, "bound", "--dist", "step_1d", "--kappa-range", "0:0.49:0.01", "--out", out)
        assert code == EXIT_OK
        rows = list(csv.reader((tmp_path / "sweep.csv").open()))
        assert rows[0] == ["kappa", "prob_acc_bound"]
        assert len(rows) == 51
        assert (tmp_path / "sweep.svg").read_text().startswith("<svg")

    def test_tau_sensitivity(self, capsys):
        code, text, _ = run(capsys, "bound", "--dist", "step_1d", "--kappa", 0.1, "--tau-sensitivity")
        assert code == EXIT_OK and "tau sensitivity" in text

    @pytest.mark.parametrize("kappa", ["0.6", "0.5", "-0.1"])
    def test_kappa_out_of_range(self, capsys, kappa):
        code, _, err = run(capsys, "bound", "--dist", "step_1d", "--kappa", kappa)
        assert code == EXIT_USAGE and "error" in err

    def test_argparse_errors_are_usage(self, capsys):
        with pytest.raises(SystemExit) as info:
            main(["bound", "--kappa", "0.1"])
        assert info.value.code == EXIT_USAGE

    def test_unsupported_norm(self, capsys):
        code, _, _ = run(capsys, "bound", "--dist", "step_1d", "--p", 3, "--kappa", 0.1)
        assert code == EXIT_USAGE

    def test_needs_kappa(self, capsys):
        code, _, err = run(capsys, "bound", "--dist", "step_1d")
        assert code == EXIT_USAGE and "exactly one" in err

    def test_monotonicity_violation_exits_one(self, capsys, monkeypatch):
        import bayesrob.cli as cli
        from bayesrob.errors import MonotonicityViolation

        def boom(*a, **k):
            raise MonotonicityViolation("not monotone", (0.1, 0.2))

        monkeypatch.setattr(cli, "compute_bounds", boom)
        code, _, err = run(capsys, "bound", "--dist", "step_1d", "--kappa-range", "0.1:0.2:0.1")
        assert code == EXIT_FAIL and "(0.1, 0.2)" in err

    def test_grid_file_input(self, tmp_path, capsys):
        grid = tmp_path / "g.json"
        run(capsys, "dist", "build", "--spec", "step_1d", "--out", grid)
        code, text, _ = run(capsys, "bound", "--dist", grid, "--kappa", 0.1)
        assert code == EXIT_OK and "det b_d" in text


class TestEval:
    def test_table_and_files(self, tmp_path, capsys):
        out = tmp_path / "e.json"
        clf = tmp_path / "c.json"
        code, text, _ = run(capsys, "eval", "--dist", "step_1d", "--classifier", "noisy", "--rho", 0.1,
                            "--out", out, "--save-classifier", clf)
        assert code == EXIT_OK
        assert "det_robust" in text and "gap" in text
        data = json.loads(out.read_text())
        assert set(data["gap"]) == {"vanilla", "det_robust", "prob_robust"}
        assert (tmp_path / "e.csv").exists()
        code, _, _ = run(capsys, "eval", "--dist", "step_1d", "--classifier", clf)
        assert code == EXIT_OK

    def test_monte_carlo_prints_stderr(self, capsys):
        code, text, _ = run(capsys, "eval", "--dist", "step_1d", "--mode", "monte_carlo", "--m", 50)
        assert code == EXIT_OK and "stderr" in text

    def test_constant(self, capsys):
        code, text, _ = run(capsys, "eval", "--dist", "step_1d", "--classifier", "constant:1")
        assert code == EXIT_OK and "classifier=constant" in text

    def test_unknown_classifier(self, capsys):
        code, _, _ = run(capsys, "eval", "--dist", "step_1d", "--classifier", "oracle")
        assert code == EXIT_USAGE


class TestVoting:
    def test_vote_compare(self, tmp_path, capsys):
        out = tmp_path / "v.csv"
        code, text, _ = run(capsys, "vote-compare", "--dist", "normals_1d", "--m", 21, "--seeds", 3,
                            "--out", out)
        assert code == EXIT_OK
        assert "mean delta" in text
        assert len(list(csv.reader(out.open()))) == 4
        assert json.loads((tmp_path / "v.json").read_text())["m"] == 21

    def test_zero_seeds(self, capsys):
        code, _, _ = run(capsys, "vote-compare", "--dist", "step_1d", "--seeds", 0)
        assert code == EXIT_USAGE

    def test_sample_study(self, tmp_path, capsys):
        out = tmp_path / "s.csv"
        code, _, _ = run(capsys, "sample-study", "--dist", "step_1d", "--m-list", "1,10", "--trials", 2,
                         "--out", out)
        assert code == EXIT_OK
        assert [r[0] for r in csv.reader(out.open())] == ["m", "1", "10"]

    def test_sample_study_descending(self, capsys):
        code, _, _ = run(capsys, "sample-study", "--dist", "step_1d", "--m-list", "10,1", "--trials", 2)
        assert code == EXIT_USAGE

    def test_large_seed_accepted(self, capsys):
        code, _, _ = run(capsys, "vote-compare", "--dist", "step_1d", "--m", 3, "--seeds", 1,
                         "--seed", 2 ** 63)
        assert code == EXIT_OK


class TestGeom:
    def test_profile(self, tmp_path, capsys):
        out = tmp_path / "p.csv"
        code, _, _ = run(capsys, "geom", "profile", "--dim", 1, "--eps", 0.5, "--phi-range", "0:1:0.25",
                         "--out", out)
        assert code == EXIT_OK
        rows = list(csv.reader(out.open()))[1:]
        assert [float(r[2]) for r in rows] == pytest.approx([0, 0.25, 0.5, 0.75, 1.0], abs=1e-9)

    def test_profile_dim(self, capsys):
        code, _, _ = run(capsys, "geom", "profile", "--dim", 4)
        assert code == EXIT_USAGE

    def test_verify_one_dim(self, capsys):
        code, text, _ = run(capsys, "geom", "verify", "--dims", "1")
        assert code == EXIT_OK
        assert "FAIL" not in text

    def test_svg_deterministic(self, tmp_path, capsys):
        for name in ("a", "b"):
            run(capsys, "geom", "profile", "--dim", 1, "--phi-range", "0:0.3:0.1", "--out", tmp_path / f"{name}.csv")
        assert (tmp_path / "a.svg").read_bytes() == (tmp_path / "b.svg").read_bytes()
