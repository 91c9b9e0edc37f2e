"""Tests for the YAML run-config parser."""

import pytest

from acquisition import AcquisitionConfig, SurrogateConfig
from config import CONFIG_DIR
from core import ArgumentError
from runconfig import ConfigError, Fig6Config, RunConfig, apply_overrides, load_run_config, parse_run_config


class TestShippedConfigs:
    @pytest.mark.parametrize("path", sorted(CONFIG_DIR.glob("*.yaml")), ids=lambda p: p.stem)
    def test_parses(self, path):
        cfg = load_run_config(path)
        assert isinstance(cfg, RunConfig)


class TestParsing:
    def test_minimal(self):
        cfg = parse_run_config("experiment: fig5\n")
        assert cfg.problem == "ackley1d"
        assert cfg.seed == 0

    def test_default_problem_depends_on_experiment(self):
        assert parse_run_config("experiment: fig6\n").problem == "foil_proxy"
        assert parse_run_config("experiment: sail\n").problem == "rastrigin"

    def test_sections_fill_settings(self):
        text = (
            "experiment: sail\n"
            "seed: 7\n"
            "illumination:\n"
            "  resolution: [8, 4]\n"
            "  sigma_frac: 0.2\n"
            "acquisition:\n"
            "  rounds: 3\n"
            "  surrogate_kind: hierarchical\n"
            "surrogate:\n"
            "  kind: hierarchical\n"
            "  node_kind: bann\n"
            "  members: 4\n"
            "  lm:\n"
            "    tol: 1e-6\n"
            "  hierarchy:\n"
            "    depth: 1\n"
            "    level_kinds: [gp, bann]\n"
        )
        cfg = parse_run_config(text)
        assert cfg.seed == 7
        assert cfg.illumination.resolution == (8, 4)
        assert cfg.acquisition.rounds == 3
        assert cfg.surrogate.base.kind == "bann"
        assert cfg.surrogate.base.members == 4
        assert cfg.surrogate.base.lm.tol == 1e-6
        assert cfg.surrogate.hierarchy.level_kinds == ("gp", "bann")

    def test_surrogate_kind_implies_acquisition_kind(self):
        cfg = parse_run_config("experiment: sail\nsurrogate:\n  kind: hierarchical\n")
        assert cfg.acquisition.surrogate_kind == "hierarchical"
        assert cfg.surrogate.kind == "hierarchical"

    def test_acquisition_kind_implies_surrogate_kind(self):
        cfg = parse_run_config("experiment: sail\nacquisition:\n  surrogate_kind: bann\n")
        assert cfg.surrogate.kind == "bann"

    def test_fig6_defaults_to_networks(self):
        cfg = parse_run_config("experiment: fig6\n")
        assert cfg.fig6.model == "bann"
        assert load_run_config(CONFIG_DIR / "fig6.yaml").fig6.model == "bann"

    def test_integer_accepted_for_float(self):
        assert parse_run_config("experiment: sail\nacquisition:\n  kappa: 1\n").acquisition.kappa == 1.0

    def test_snapshot_leaves_out_runtime_settings(self):
        snap = parse_run_config("experiment: sail\nout: somewhere\nworkers: 3\n").snapshot()
        assert "out" not in snap and "workers" not in snap
        assert snap["experiment"] == "sail"


class TestErrors:
    def test_unknown_key_reports_line(self):
        text = "experiment: sail\nillumination:\n  resolution: [4, 4]\n  sigma: 0.1\n"
        with pytest.raises(ConfigError, match=r"run.yaml:4: unknown key 'sigma'"):
            parse_run_config(text, source="run.yaml")

    def test_unknown_top_level_key(self):
        with pytest.raises(ConfigError, match=r":2: unknown key 'budget'"):
            parse_run_config("experiment: sail\nbudget: 10\n")

    def test_wrong_type_reports_line(self):
        text = "experiment: fig5\nfig5:\n  replicates: many\n"
        with pytest.raises(ConfigError, match=r":3: 'fig5.replicates' expects int, got str"):
            parse_run_config(text)

    def test_bool_is_not_an_int(self):
        with pytest.raises(ConfigError, match="expects int"):
            parse_run_config("experiment: sail\nseed: true\n")

    def test_invalid_value_reports_section(self):
        with pytest.raises(ConfigError, match=r":2: .*kappa must be >= 0"):
            parse_run_config("experiment: sail\nacquisition:\n  kappa: -1.0\n")

    def test_contradicting_surrogate_kinds_report_line(self):
        text = "experiment: sail\nacquisition:\n  surrogate_kind: gp\nsurrogate:\n  kind: hierarchical\n"
        with pytest.raises(ConfigError, match=r":5: surrogate.kind 'hierarchical' contradicts"):
            parse_run_config(text)

    def test_run_config_rejects_kind_mismatch(self):
        with pytest.raises(ArgumentError, match="must name the same model"):
            RunConfig(experiment="sail", acquisition=AcquisitionConfig(surrogate_kind="gp"),
                      surrogate=SurrogateConfig(kind="hierarchical"))

    def test_samples_per_weight_positive(self):
        with pytest.raises(ArgumentError):
            Fig6Config(samples_per_weight=0.0)

    def test_section_must_be_mapping(self):
        with pytest.raises(ConfigError, match="must be a mapping"):
            parse_run_config("experiment: sail\nillumination: 5\n")

    def test_illumination_seed_is_top_level(self):
        with pytest.raises(ConfigError, match="unknown key 'seed'"):
            parse_run_config("experiment: sail\nillumination:\n  seed: 3\n")

    def test_missing_experiment(self):
        with pytest.raises(ConfigError, match="missing 'experiment'"):
            parse_run_config("seed: 1\n")

    def test_unknown_problem(self):
        with pytest.raises(ConfigError, match="unknown problem"):
            parse_run_config("experiment: sail\nproblem: sphere\n")

    def test_experiment_mismatch(self):
        with pytest.raises(ConfigError, match="config is for 'fig5', not 'sail'"):
            parse_run_config("experiment: fig5\n", experiment="sail")

    def test_command_supplies_experiment(self):
        assert parse_run_config("seed: 2\n", experiment="bakeoff").experiment == "bakeoff"

    def test_bad_yaml(self):
        with pytest.raises(ConfigError, match=r"^<config>:\d+:"):
            parse_run_config("experiment: sail\nillumination: [1, 2\n")

    def test_missing_file(self, tmp_path):
        path = tmp_path / "absent.yaml"
        with pytest.raises(ConfigError, match="config file not found"):
            load_run_config(path)


class TestOverrides:
    def test_command_line_wins(self, tmp_path):
        cfg = parse_run_config("experiment: sail\nseed: 1\nout: a\nworkers: 1\n")
        cfg = apply_overrides(cfg, seed=9, out=tmp_path, workers=4)
        assert (cfg.seed, cfg.out, cfg.workers) == (9, tmp_path, 4)

    def test_no_overrides_keeps_config(self):
        cfg = parse_run_config("experiment: sail\n")
        assert apply_overrides(cfg) is cfg
