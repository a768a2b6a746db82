import json

import pytest

from driftgp.cli import main

MODEL_TOML = """\
[kernel]
family = "gaussian"
alpha = 1.0
beta = 1.0

[drift]
profile = "exp_decay"
xi = 2.0

[scheme]
n = 400
a = 0.4

[experiment]
seed = 42
"""


@pytest.fixture()
def model_cfg(tmp_path):
    cfg = tmp_path / "model.toml"
    cfg.write_text(MODEL_TOML)
    return cfg


def run(*argv):
    return main([str(a) for a in argv])


class TestSimulate:
    def test_writes_path_and_manifest(self, model_cfg, tmp_path):
        out = tmp_path / "run"
        assert run("simulate", "--config", model_cfg, "--out", out) == 0
        assert (out / "path.csv").exists()
        sidecar = json.loads((out / "path.json").read_text())
        assert sidecar["scheme"]["n"] == 400
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["command"] == "simulate"
        assert manifest["config_sha256"]
        assert "driftgp" in manifest["versions"]

    def test_same_seed_identical_bytes(self, model_cfg, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        run("simulate", "--config", model_cfg, "--out", a)
        run("simulate", "--config", model_cfg, "--out", b)
        assert (a / "path.csv").read_bytes() == (b / "path.csv").read_bytes()

    def test_explicit_seed_overrides(self, model_cfg, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        run("simulate", "--config", model_cfg, "--out", a)
        run("simulate", "--config", model_cfg, "--seed", 43, "--out", b)
        assert (a / "path.csv").read_bytes() != (b / "path.csv").read_bytes()

    def test_set_override_changes_grid(self, model_cfg, tmp_path):
        out = tmp_path / "o"
        run("simulate", "--config", model_cfg, "--set", "scheme.n=100", "--out", out)
        assert json.loads((out / "path.json").read_text())["scheme"]["n"] == 100


class TestEstimateRoundTrip:
    def test_simulate_then_estimate(self, model_cfg, tmp_path):
        out = tmp_path / "run"
        run("simulate", "--config", model_cfg, "--out", out)
        est = tmp_path / "est"
        assert run("estimate", "--config", model_cfg, "--path", out / "path.csv",
                   "--sidecar", out / "path.json", "--out", est) == 0
        report = json.loads((est / "report.json").read_text())
        theta = report["theta_hat"]
        assert {"xi", "gamma", "alpha", "beta"} <= set(theta)
        assert abs(theta["beta"] - 1.0) < 1.0  # loose sanity at n = 400
        assert report["asymptotics"]["rates"]["xi"] == "h^-1/2"
        assert report["asymptotics"]["std_errors"]["xi"] > 0

    def test_sidecar_discovered_automatically(self, model_cfg, tmp_path):
        out = tmp_path / "run"
        run("simulate", "--config", model_cfg, "--out", out)
        est = tmp_path / "est"
        assert run("estimate", "--config", model_cfg, "--path", out / "path.csv", "--out", est) == 0

    def test_ou_family_report(self, tmp_path):
        ou_cfg = tmp_path / "ou.toml"
        ou_cfg.write_text(
            '[kernel]\nfamily = "exponential_ou"\nalpha = 1.0\nbeta = 1.0\n'
            "[scheme]\nn = 2000\na = 0.4\n[experiment]\nseed = 11\n"
        )
        out = tmp_path / "run"
        run("simulate", "--config", ou_cfg, "--out", out)
        est = tmp_path / "est_ou"
        assert run("estimate", "--config", ou_cfg, "--path", out / "path.csv", "--out", est) == 0
        report = json.loads((est / "report.json").read_text())
        assert abs(report["theta_hat"]["beta"] - 1.0) < 0.5
        assert report["diagnostics"]["epsilon"] == pytest.approx(2000 ** -0.4 / 2.0)

    def test_rq_family_report(self, tmp_path, model_cfg):
        out = tmp_path / "run"
        run("simulate", "--config", model_cfg, "--out", out)
        rq_cfg = tmp_path / "rq.toml"
        rq_cfg.write_text(MODEL_TOML.replace(
            'family = "gaussian"', 'family = "rational_quadratic"\ngamma = 1.0'))
        est = tmp_path / "est_rq"
        assert run("estimate", "--config", rq_cfg, "--path", out / "path.csv", "--out", est) == 0
        theta = json.loads((est / "report.json").read_text())["theta_hat"]
        assert {"xi", "alpha", "beta"} <= set(theta)


class TestMoments:
    def test_statistics_json(self, model_cfg, tmp_path):
        out = tmp_path / "run"
        run("simulate", "--config", model_cfg, "--out", out)
        mom = tmp_path / "mom"
        assert run("moments", "--config", model_cfg, "--path", out / "path.csv",
                   "--out", mom, "--kappa", "1,2") == 0
        stats = json.loads((mom / "moments.json").read_text())
        assert stats["increment_moment_k1_limit"] == 1.0
        assert stats["increment_moment_k2_limit"] == 3.0
        assert "alpha_hat" in stats and "k4_hat" in stats
        assert stats["g[(y-x)^2]_limit"] == 1.0


class TestReplicate:
    def test_outputs_and_figures(self, tmp_path):
        out = tmp_path / "rep"
        assert run("replicate", "--case", "I", "--n", "120", "--reps", "40",
                   "--seed", "7", "--out", out) == 0
        assert (out / "summary.csv").exists()
        assert (out / "records.csv").exists()
        for est in ("xi", "alpha", "beta"):
            assert (out / f"qq_{est}_120.csv").exists()
            assert (out / f"qq_{est}_120.png").stat().st_size > 0
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["experiment"]["master_seed"] == 7
        assert "qq_correlation" in manifest
        assert manifest["cells"]["I,120"]["drift_tail_mass"] > 0

    def test_config_driven(self, tmp_path):
        cfg = tmp_path / "exp.toml"
        cfg.write_text(
            '[experiment]\ncase = "I"\nn_values = [100]\nreps = 35\nseed = 3\n'
        )
        out = tmp_path / "rep"
        assert run("replicate", "--config", cfg, "--out", out) == 0
        lines = (out / "records.csv").read_text().splitlines()
        assert len(lines) == 36

    def test_requires_case(self, tmp_path):
        assert run("replicate", "--out", tmp_path / "x") == 2

    def test_qq_subcommand(self, tmp_path):
        out = tmp_path / "rep"
        run("replicate", "--case", "I", "--n", "120", "--reps", "40", "--seed", "7", "--out", out)
        qq = tmp_path / "qq"
        assert run("qq", "--records", out / "records.csv", "--estimator", "beta",
                   "--n", "120", "--out", qq) == 0
        assert (qq / "qq_beta_120.csv").exists()
        assert (qq / "qq_beta_120.png").exists()


class TestKernelInfo:
    def test_table_and_derivatives(self, model_cfg, tmp_path, capsys):
        out = tmp_path / "ki"
        assert run("kernel-info", "--config", model_cfg, "--lags", "0:1:0.5", "--out", out) == 0
        rows = (out / "kernel_info.csv").read_text().splitlines()
        assert rows[0] == "t,K"
        assert rows[1] == "0.0,1.0"
        summary = json.loads(capsys.readouterr().out)
        assert summary["d2_at_zero"] == -1.0
        assert summary["d4_at_zero"] == 3.0

    def test_unsupported_derivative_reported(self, tmp_path, capsys):
        cfg = tmp_path / "ou.toml"
        cfg.write_text('[kernel]\nfamily = "exponential_ou"\nalpha = 1.0\nbeta = 1.0\n')
        assert run("kernel-info", "--config", cfg, "--out", tmp_path / "ki") == 0
        summary = json.loads(capsys.readouterr().out)
        assert "unavailable" in summary["d2_at_zero"]


class TestExitCodes:
    def test_missing_config(self, tmp_path):
        assert run("simulate", "--config", tmp_path / "nope.toml", "--out", tmp_path) == 2

    def test_unknown_key(self, tmp_path):
        cfg = tmp_path / "bad.toml"
        cfg.write_text('[kernel]\nfamily = "gaussian"\nalpha = 1.0\nbeta = 1.0\nbogus = 1\n')
        assert run("simulate", "--config", cfg, "--out", tmp_path) == 2

    def test_domain_error_in_config(self, tmp_path):
        cfg = tmp_path / "bad.toml"
        cfg.write_text(
            '[kernel]\nfamily = "mollified_ou"\nalpha = 1.0\nbeta = 4.0\nepsilon = 0.5\n'
            "[scheme]\nn = 50\na = 0.4\n"
        )
        assert run("simulate", "--config", cfg, "--out", tmp_path) == 2

    def test_numerical_error_is_exit_3(self, model_cfg, tmp_path):
        zeros = tmp_path / "zeros.csv"
        lines = ["t,x"] + [f"{i * 0.1!r},0.0" for i in range(80)]
        zeros.write_text("\n".join(lines) + "\n")
        assert run("estimate", "--config", model_cfg, "--path", zeros, "--out", tmp_path) == 3

    def test_bad_subcommand_exits_2(self):
        with pytest.raises(SystemExit) as exc:
            main(["frobnicate"])
        assert exc.value.code == 2

    def test_env_var_default_out(self, model_cfg, tmp_path, monkeypatch):
        target = tmp_path / "envout"
        monkeypatch.setenv("DRIFTGP_OUT", str(target))
        assert run("simulate", "--config", model_cfg) == 0
        assert (target / "path.csv").exists()
