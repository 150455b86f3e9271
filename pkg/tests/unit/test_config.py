"""Tests for settings, experiment config loading and the exception hierarchy."""

import pytest
from pydantic import ValidationError

from privquery.core.config import Settings
from privquery.models.experiment import ExperimentConfig, Mode, SweepConfig
from privquery.models.hypothesis import FamilyKind
from privquery.utils.exceptions import (
    ConfigurationError,
    InfeasibleParametersError,
    InvalidArgumentError,
    require_positive,
    require_probability,
)

pytestmark = pytest.mark.unit


class TestSettings:
    def test_defaults(self):
        s = Settings(_env_file=None)
        assert s.workers == 1
        assert s.log_format in ("json", "console")

    def test_log_level_is_normalized(self):
        assert Settings(_env_file=None, log_level="debug").log_level == "DEBUG"

    @pytest.mark.parametrize(
        "overrides",
        [
            {"workers": 0},
            {"log_level": "LOUD"},
            {"log_format": "xml"},
            {"environment": "staging"},
            {"default_seed": -1},
        ],
    )
    def test_rejects_bad_values(self, overrides):
        with pytest.raises(ValidationError):
            Settings(_env_file=None, **overrides)

    def test_environment_prefix(self, monkeypatch):
        monkeypatch.setenv("PRIVQUERY_WORKERS", "3")
        assert Settings(_env_file=None).workers == 3


class TestExperimentConfig:
    def test_valid_mapping(self, config_data):
        config = ExperimentConfig.from_mapping(config_data)
        assert config.mode is Mode.AGNOSTIC
        assert config.family is FamilyKind.THRESHOLD
        assert not config.canonical

    def test_missing_schema_version(self, config_data):
        data = {k: v for k, v in config_data.items() if k != "schema_version"}
        with pytest.raises(ConfigurationError) as exc_info:
            ExperimentConfig.from_mapping(data)
        assert exc_info.value.details["config_key"] == "schema_version"

    def test_unsupported_schema_version(self, config_data):
        with pytest.raises(ConfigurationError) as exc_info:
            ExperimentConfig.from_mapping({**config_data, "schema_version": 2})
        assert exc_info.value.details["config_key"] == "schema_version"

    def test_unknown_key_rejected(self, config_data):
        with pytest.raises(ConfigurationError) as exc_info:
            ExperimentConfig.from_mapping({**config_data, "epsilonn": 1.0})
        assert exc_info.value.details["config_key"] == "epsilonn"
        assert exc_info.value.error_code == "CONFIGURATION_ERROR"

    @pytest.mark.parametrize(
        "overrides",
        [
            {"noise_rate": 0.5},
            {"epsilon": 0.0},
            {"delta": 1.0},
            {"n": 0},
            {"family": "interval"},
            {"family": "finite-explicit"},
        ],
    )
    def test_invalid_values(self, config_data, overrides):
        with pytest.raises(ConfigurationError):
            ExperimentConfig.from_mapping({**config_data, **overrides})

    def test_finite_family(self, config_data):
        config = ExperimentConfig.from_mapping(
            {
                **config_data,
                "family": "finite-explicit",
                "finite_members": [[0, 0], [0, 1], [1, 1]],
                "finite_vc_dimension": 1,
                "truth": [1],
                "marginal": "discrete",
                "marginal_points": [0, 1],
                "marginal_weights": [0.5, 0.5],
            }
        )
        family = config.build_family()
        assert len(family.tables) == 3
        assert config.build_truth(family).describe() == family.member(1).describe()

    def test_from_toml(self, tmp_path, config_data):
        path = tmp_path / "exp.toml"
        lines = [
            "schema_version = 1",
            'name = "toml"',
            'mode = "subsamp"',
            "truth = [0.5]",
            "n = 1000",
            "m = 10",
            "epsilon = 1.0",
            "delta = 0.05",
            "alpha = 0.1",
            "beta = 0.1",
            "seed = 5",
        ]
        path.write_text("\n".join(lines) + "\n")
        config = ExperimentConfig.from_toml(path)
        assert config.mode is Mode.SUBSAMP and config.seed == 5

    def test_missing_toml(self, tmp_path):
        with pytest.raises(ConfigurationError, match="not found"):
            ExperimentConfig.from_toml(tmp_path / "absent.toml")

    def test_malformed_toml(self, tmp_path):
        path = tmp_path / "bad.toml"
        path.write_text("schema_version = = 1\n")
        with pytest.raises(ConfigurationError):
            ExperimentConfig.from_toml(path)


class TestSweepConfig:
    def test_cells_cover_grid(self, config_data):
        sweep = SweepConfig.from_mapping({**config_data, "sweep_n": [56000, 112000], "sweep_alpha": [0.1, 0.2]})
        cells = sweep.cells()
        assert len(cells) == 4
        assert [(c.n, c.alpha) for c in cells] == [(56000, 0.1), (56000, 0.2), (112000, 0.1), (112000, 0.2)]
        assert all(type(c) is ExperimentConfig for c in cells)
        assert len({c.name for c in cells}) == 4

    def test_unswept_axes_use_base_values(self, config_data):
        (cell,) = SweepConfig.from_mapping(config_data).cells()
        assert (cell.n, cell.m, cell.alpha, cell.noise_rate) == (56000, 50, 0.1, 0.2)

    @pytest.mark.parametrize(
        "axis, values",
        [("sweep_noise_rate", [0.1, 0.6]), ("sweep_alpha", [0.1, 0.0]), ("sweep_n", [56000, 0]), ("sweep_m", [-1])],
    )
    def test_invalid_axis_values_rejected(self, config_data, axis, values):
        with pytest.raises(ConfigurationError, match=axis):
            SweepConfig.from_mapping({**config_data, axis: values})


class TestExceptions:
    def test_to_dict(self):
        exc = InvalidArgumentError("bad", argument="k", value=0)
        assert exc.to_dict() == {"code": "INVALID_ARGUMENT", "message": "bad", "details": {"argument": "k", "value": 0}}

    def test_configuration_error_merges_details(self):
        exc = ConfigurationError("bad", config_key="n", details={"errors": []})
        assert exc.details == {"config_key": "n", "errors": []}

    def test_infeasible_carries_minimal_n(self):
        exc = InfeasibleParametersError("too small", minimal_n=56, required=1, available=0)
        assert exc.minimal_n == 56
        assert exc.details["minimal_n"] == 56

    def test_non_scalar_values_are_repr(self):
        exc = InvalidArgumentError("bad", argument="shape", value=(2, 3))
        assert exc.details["value"] == "(2, 3)"

    @pytest.mark.parametrize("value", [0.0, 1.0, -0.1])
    def test_require_probability_open(self, value):
        with pytest.raises(InvalidArgumentError):
            require_probability(value, "p")

    def test_require_probability_closed(self):
        require_probability(0.0, "p", open_low=False)
        require_probability(1.0, "p", open_high=False)

    def test_require_positive(self):
        with pytest.raises(InvalidArgumentError):
            require_positive(0, "eps")
