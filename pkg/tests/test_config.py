from __future__ import annotations

from fractions import Fraction

import pytest

from ammalgebra.config import compile_expression, load_config, parse_config, parse_number
from ammalgebra.errors import ConfigError

F = Fraction


def doc(**over):
    base = {
        "assets": ["X", "Y", "Z"],
        "amms": [{"name": "p", "type": "constant_product", "assets": ["X", "Y"], "level": 1,
                  "state": {"X": 1, "Y": 1}}],
    }
    base.update(over)
    return base


class TestShippedNetworks:
    @pytest.mark.parametrize("name", ["basic", "virtualization", "many_to_many"])
    def test_loads(self, networks, name):
        cfg = load_config(networks / f"{name}.yaml")
        assert cfg.amms

    def test_exact_constants(self, networks):
        cfg = load_config(networks / "basic.yaml")
        bob = cfg.amm("bob")
        assert bob.defn.level == F(3, 4) and bob.state.values == (1, F(3, 4))
        assert cfg.market_valuation.weights == (F(1, 3),) * 3
        assert cfg.seed == 7


class TestValidation:
    def test_minimal(self):
        cfg = parse_config(doc())
        assert cfg.amm("p").state.values == (1, 1)

    def test_off_manifold_reports_residual(self):
        bad = doc(amms=[{"name": "p", "type": "constant_product", "assets": ["X", "Y", "Z"], "level": 8,
                         "state": {"X": 2, "Y": 2, "Z": 3}}])
        with pytest.raises(ConfigError, match=r"amms\[0\]\.state.*\|A\(state\)\| = 4\b"):
            parse_config(bad)

    def test_undeclared_asset_path(self):
        bad = doc(amms=[{"name": "p", "type": "constant_product", "assets": ["X", "Q"], "level": 1,
                         "state": [1, 1]}])
        with pytest.raises(ConfigError, match=r"amms\[0\]\.assets\[1\]: undeclared asset 'Q'"):
            parse_config(bad)

    def test_market_valuation_must_cover(self):
        with pytest.raises(ConfigError, match="market_valuation"):
            parse_config(doc(market_valuation={"X": 1, "Y": 1}))

    def test_unknown_type(self):
        bad = doc(amms=[{"name": "p", "type": "curve", "assets": ["X", "Y"], "state": [1, 1]}])
        with pytest.raises(ConfigError, match=r"amms\[0\]\.type"):
            parse_config(bad)

    def test_missing_field(self):
        with pytest.raises(ConfigError, match=r"amms\[0\]\.level"):
            parse_config(doc(amms=[{"name": "p", "type": "constant_product", "assets": ["X", "Y"],
                                    "state": [1, 1]}]))

    def test_tolerance_override(self):
        cfg = parse_config(doc(tolerances={"kkt": "1e-10", "max_iter": 50}))
        assert cfg.tolerances.kkt == 1e-10 and cfg.tolerances.max_iter == 50
        with pytest.raises(ConfigError, match="tolerances.bogus"):
            parse_config(doc(tolerances={"bogus": 1}))

    def test_unknown_composition_member(self):
        with pytest.raises(ConfigError, match=r"compositions\[0\]\.amms\[1\]"):
            parse_config(doc(compositions=[{"name": "c", "mode": "seq", "amms": ["p", "q"]}]))

    def test_parse_error_has_line(self, tmp_path):
        path = tmp_path / "bad.yaml"
        path.write_text("assets: [X, Y\namms: []\n")
        with pytest.raises(ConfigError, match="line"):
            load_config(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            load_config(tmp_path / "none.yaml")


class TestNumbers:
    def test_rationals(self):
        assert parse_number("3/4", "f") == F(3, 4)
        assert parse_number("8", "f") == 8
        assert parse_number(0.5, "f") == 0.5
        with pytest.raises(ConfigError):
            parse_number("x", "f")
        with pytest.raises(ConfigError):
            parse_number(True, "f")


class TestExpressions:
    def test_exact_arithmetic(self):
        h = compile_expression("x / (2*x - 1)", ("X",))
        assert h([F(3, 2)]) == F(3, 4)

    def test_asset_names_and_functions(self):
        h = compile_expression("sqrt(A) + B**2", ("A", "B"))
        assert h([4.0, 3.0]) == 11.0

    def test_rejects_unsafe(self):
        for bad in ("__import__('os')", "x.real", "[x]", "lambda: 1", "y"):
            with pytest.raises(ConfigError):
                compile_expression(bad, ("x",))
