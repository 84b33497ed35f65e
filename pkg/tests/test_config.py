import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from adiabat.config import SCHEMA, parse_config, parse_g, serialize_config
from adiabat.errors import ConfigError


def test_minimal_config_takes_defaults():
    cfg = parse_config("model.omega = 1\nmodel.eta0 = 2\n")
    assert cfg["model.omega"] == 1.0
    assert cfg["initial.phi0"] == pytest.approx(math.pi / 2)
    assert cfg["integration.method"] == "rk8_adaptive"
    np.testing.assert_allclose(cfg.eps_grid, np.geomspace(0.08, 0.2, 8))
    assert parse_config("model.omega = 1\nmodel.eta0 = 2\n") == cfg


def test_comments_and_blank_lines():
    cfg = parse_config("# header\n\nmodel.eta0 = 4   # trailing\n")
    assert cfg["model.eta0"] == 4.0


def test_duplicate_key_names_both_lines():
    with pytest.raises(ConfigError) as exc:
        parse_config("model.omega = 1\n# c\nmodel.omega = 2\n")
    assert "line 3" in str(exc.value) and "line 1" in str(exc.value)


def test_unknown_key_reports_line():
    with pytest.raises(ConfigError, match=r"line 2: unknown key 'model.foo'"):
        parse_config("model.omega = 1\nmodel.foo = 3\n")


def test_type_mismatch_reports_line():
    with pytest.raises(ConfigError, match=r"line 1: model.eta0: expected finite number"):
        parse_config("model.eta0 = abc\n")
    with pytest.raises(ConfigError, match="integer"):
        parse_config("sweep.n = 2.5\n")


@pytest.mark.parametrize("text", [
    "model.omega = -1", "integration.xi_reach = 30", "sweep.eps = 0.1, -0.2",
    "model.eta0 = nan", "integration.method = euler", "phase.n = 4", "missing equals sign",
])
def test_invalid_values_rejected(text):
    with pytest.raises(ConfigError):
        parse_config(text)


def test_overrides_apply_last():
    cfg = parse_config("model.eta0 = 3\n", ["model.eta0=4", "sweep.eps = 0.1 0.12 0.15"])
    assert cfg["model.eta0"] == 4.0
    np.testing.assert_array_equal(cfg.eps_grid, [0.1, 0.12, 0.15])
    with pytest.raises(ConfigError):
        parse_config("", ["nonsense"])


def test_linear_spacing():
    cfg = parse_config("sweep.spacing = linear\nsweep.n = 3\nsweep.eps_min = 0.1\nsweep.eps_max = 0.2\n")
    np.testing.assert_allclose(cfg.eps_grid, [0.1, 0.15, 0.2])


def test_coupling_text():
    assert parse_g("cos").is_cosine
    g = parse_g("1:0.5:0 2:0:0.5")
    assert g.kind == "fourier"
    with pytest.raises(ConfigError):
        parse_g("1:2")


def test_derived_objects():
    cfg = parse_config("model.omega = 2\nintegration.tol = 1e-10\nparallel.workers = 3\n")
    assert cfg.system.omega == 2.0
    assert cfg.settings.abs_tol == 1e-10
    assert cfg.workers == 3
    assert parse_config("").workers is None
    assert cfg.formats == {"csv", "json", "svg"}


finite = st.floats(allow_nan=False, allow_infinity=False)


@given(st.floats(0.01, 100), st.floats(0.01, 100), finite, st.floats(1e-14, 1e-4),
       st.lists(st.floats(1e-3, 1.0), max_size=5), st.sampled_from(["cos", "1:0.5:0.1 3:0.1:0"]))
def test_serialize_round_trip(omega, eta0, phi0, tol, eps, g):
    text = (f"model.omega = {omega!r}\nmodel.eta0 = {eta0!r}\ninitial.phi0 = {phi0!r}\n"
            f"integration.tol = {tol!r}\nmodel.g = {g}\n")
    if eps:
        text += "sweep.eps = " + ", ".join(repr(e) for e in eps) + "\n"
    cfg = parse_config(text)
    again = parse_config(serialize_config(cfg))
    assert again == cfg


def test_serialized_config_lists_every_key():
    out = serialize_config(parse_config(""))
    assert [line.split(" = ")[0] for line in out.splitlines()] == list(SCHEMA)
