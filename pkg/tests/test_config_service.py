from pathlib import Path

import pytest
from hypothesis import given, settings as hsettings, strategies as st

from errors import ConfigError
from models import SUITE_NAMES
from services.config_service import config_service

SEXTIC_RUN = """
# sextic potential with a gap
potential.coeffs = [1.8, -0.8, 0.1]
lambda.kind = bump
lambda.support = 0.1, 0.9   # comma list
n = 100:300:100
t.grid = -1:1:0.5
seed = 7
edge = r2
"""


class TestGrid:
    def test_inclusive(self):
        assert config_service.parse_grid("0:1:0.25") == [0.0, 0.25, 0.5, 0.75, 1.0]
        assert config_service.parse_grid("100:400:100") == [100.0, 200.0, 300.0, 400.0]

    def test_descending(self):
        assert config_service.parse_grid("1:-1:-1") == [1.0, 0.0, -1.0]

    def test_not_a_grid(self):
        assert config_service.parse_grid("bump") is None
        assert config_service.parse_grid("0.5") is None

    @pytest.mark.parametrize("text", ["1:0:0.5", "0:1:0", "0:1:-0.1"])
    def test_unreachable_end(self, text):
        with pytest.raises(ConfigError):
            config_service.parse_grid(text)

    @hsettings(max_examples=50, deadline=None)
    @given(st.integers(min_value=-20, max_value=20),
           st.integers(min_value=1, max_value=40),
           st.sampled_from([0.1, 0.25, 0.5, 1.0]))
    def test_grid_endpoints(self, start, steps, step):
        a = start * step
        b = a + steps * step
        grid = config_service.parse_grid(f"{a}:{b}:{step}")
        assert len(grid) == steps + 1
        assert grid[0] == pytest.approx(a)
        assert grid[-1] == pytest.approx(b)


class TestValues:
    def test_json(self):
        assert config_service.parse_value("[1.8, -0.8, 0.1]") == [1.8, -0.8, 0.1]
        assert config_service.parse_value("true") is True
        assert config_service.parse_value("42") == 42

    def test_comma_list(self):
        assert config_service.parse_value("product, ward") == ["product", "ward"]
        assert config_service.parse_value("0.1,0.9") == [0.1, 0.9]

    def test_bare_word(self):
        assert config_service.parse_value("r1") == "r1"

    def test_empty(self):
        with pytest.raises(ConfigError):
            config_service.parse_value("  ")


class TestParseText:
    def test_run_file(self):
        data = config_service.parse_text(SEXTIC_RUN)
        assert data["potential"]["coeffs"] == [1.8, -0.8, 0.1]
        assert data["lambda"]["support"] == [0.1, 0.9]
        assert data["n"] == [100.0, 200.0, 300.0]
        assert data["seed"] == 7

    def test_scalar_list_fields_are_wrapped(self):
        data = config_service.parse_text("n = 200\nroutes = ward")
        assert data["n"] == [200]
        assert data["routes"] == ["ward"]

    def test_relative_table(self, tmp_path):
        data = config_service.parse_text("potential.table = q.csv", base_dir=tmp_path)
        assert Path(data["potential"]["table"]) == tmp_path / "q.csv"

    def test_unknown_key(self):
        with pytest.raises(ConfigError, match="unknown configuration key"):
            config_service.parse_text("potential.degree = 3")

    def test_missing_equals(self):
        with pytest.raises(ConfigError, match="line 2"):
            config_service.parse_text("n = 100\nseed 3")

    def test_bad_grid_names_line(self):
        with pytest.raises(ConfigError, match="line 1"):
            config_service.parse_text("t.grid = 1:0:0.5")


class TestLambdaFlag:
    def test_bump(self):
        assert config_service.lambda_overrides("bump:0.1:0.9") == {
            "lambda.kind": "bump", "lambda.support": [0.1, 0.9]}

    def test_constant_with_height(self):
        assert config_service.lambda_overrides("const:0:0:2.5") == {
            "lambda.kind": "const", "lambda.height": 2.5}

    def test_absent(self):
        assert config_service.lambda_overrides(None) == {}

    @pytest.mark.parametrize("text", ["bump:0.1", "bump:a:b", "bump:0.1:0.9:1:2"])
    def test_malformed(self, text):
        with pytest.raises(ConfigError):
            config_service.lambda_overrides(text)


class TestLoad:
    def test_file_with_overrides(self, write_config):
        path = write_config(SEXTIC_RUN)
        config = config_service.load(path, {"n": "150", "mode": "exact", "seed": None})
        assert config.n == [150]
        assert config.mode == "exact"
        assert config.seed == 7
        assert config.edge == "r2"
        assert config.lam.kind == "bump"
        assert config.lam.support == (0.1, 0.9)
        assert config.t_grid == [-1.0, -0.5, 0.0, 0.5, 1.0]
        assert list(config.verify_suites) == list(SUITE_NAMES)

    def test_overrides_only(self):
        config = config_service.load(None, {"potential.coeffs": "[1.0]", "out": "results"})
        assert config.potential.coeffs == [1.0]
        assert config.out == Path("results")
        assert config.lam is None

    def test_missing_potential(self, write_config):
        with pytest.raises(ConfigError, match="no potential"):
            config_service.load(write_config("n = 100"))

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match="cannot read"):
            config_service.load(tmp_path / "absent.cfg")

    @pytest.mark.parametrize("text", [
        "potential.coeffs = [0.0, 0.0]",
        "potential.coeffs = [1.0]\nn = 5",
        "potential.coeffs = [1.0]\nlambda.kind = bump",
        "potential.coeffs = [1.0]\nlambda.kind = bump\nlambda.support = 0.9, 0.1",
        "potential.coeffs = [1.0]\nedge = middle",
        "potential.coeffs = [1.0]\ns_steps = 4",
        "potential.coeffs = [1.0]\npotential.table = q.csv",
    ])
    def test_validation_is_a_config_error(self, write_config, text):
        with pytest.raises(ConfigError, match="invalid configuration"):
            config_service.load(write_config(text))
