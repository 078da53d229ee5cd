"""Parameter loader: happy path, derived geometry quantities, and the
field-path errors raised for malformed files."""

import math

import pytest

from mhtes import ConfigError, default_params_path, load_params


@pytest.fixture()
def default_text():
    return default_params_path().read_text()


def write(tmp_path, text):
    p = tmp_path / "params.toml"
    p.write_text(text)
    return p


def test_default_file_loads_and_validates(params):
    assert params.gas.gas_constant == 4124.0
    assert params.fluid.specific_heat == 3300.0
    assert params.material_A.w_max == 0.0121
    assert params.material_B.name == "LaNi5"
    assert params.geometry_A.n_tubes == params.geometry_B.n_tubes == 400


def test_every_value_has_a_source(params):
    assert params.sources["material_A.w_max"].startswith("handbook")
    assert all(src for src in params.sources.values())


def test_geometry_derived_quantities(params):
    g = params.geometry_A
    shell = math.pi / 4.0 * (0.007**2 - 0.004**2) * 1.77
    assert g.shell_volume == pytest.approx(shell, rel=1e-15)
    assert g.tube_surface_area == pytest.approx(math.pi * 0.004 * 1.77, rel=1e-15)
    assert g.tube_cross_section == pytest.approx(math.pi / 4.0 * 0.004**2, rel=1e-15)
    m = g.hydride_mass(params.material_A)
    assert m == pytest.approx(0.5 * shell * 8200.0, rel=1e-15)


def test_prandtl_consistency_enforced(tmp_path, default_text):
    bad = default_text.replace(
        'prandtl              = { value = 17.325', 'prandtl              = { value = 18.0')
    with pytest.raises(ConfigError) as err:
        load_params(write(tmp_path, bad))
    assert "fluid.prandtl" in str(err.value)


def test_missing_field_names_dotted_path(tmp_path, default_text):
    bad = default_text.replace(
        'w_max         = { value = 0.0121, source = "handbook: MmNi4.5Cr0.5 capacity" }\n', "")
    with pytest.raises(ConfigError) as err:
        load_params(write(tmp_path, bad))
    assert err.value.path == "material_A.w_max"


def test_bare_value_without_source_rejected(tmp_path, default_text):
    bad = default_text.replace(
        'loss_coefficient        = { value = 40.0, source = "vendor: overall line + valve loss estimate" }',
        "loss_coefficient        = { value = 40.0 }")
    with pytest.raises(ConfigError) as err:
        load_params(write(tmp_path, bad))
    assert err.value.path == "line.loss_coefficient"
    assert "source" in str(err.value)


def test_plain_scalar_rejected(tmp_path, default_text):
    bad = default_text.replace(
        'loss_coefficient        = { value = 40.0, source = "vendor: overall line + valve loss estimate" }',
        "loss_coefficient        = 40.0")
    with pytest.raises(ConfigError) as err:
        load_params(write(tmp_path, bad))
    assert "inline table" in str(err.value)


def test_unequal_tube_counts_rejected(tmp_path, default_text):
    bad = default_text.replace(
        'n_tubes        = { value = 400, source = "vendor: exchanger B datasheet" }',
        'n_tubes        = { value = 200, source = "vendor: exchanger B datasheet" }')
    with pytest.raises(ConfigError) as err:
        load_params(write(tmp_path, bad))
    assert err.value.path == "geometry_B.n_tubes"


def test_porosity_bounds_enforced(tmp_path, default_text):
    bad = default_text.replace(
        'porosity      = { value = 0.5, source = "vendor: packed-bed porosity" }\n'
        '\n'
        '[material_B]',
        'porosity      = { value = 1.5, source = "vendor: packed-bed porosity" }\n'
        '\n'
        '[material_B]')
    with pytest.raises(ConfigError) as err:
        load_params(write(tmp_path, bad))
    assert err.value.path == "material_A.porosity"


def test_missing_file_and_bad_toml(tmp_path):
    with pytest.raises(ConfigError):
        load_params(tmp_path / "absent.toml")
    with pytest.raises(ConfigError) as err:
        load_params(write(tmp_path, "[material_A\n"))
    assert "TOML" in str(err.value)


def test_non_numeric_value_rejected(tmp_path, default_text):
    bad = default_text.replace(
        'E_A           = { value = 21180.0, source = "handbook: AB5-family activation energy" }',
        'E_A           = { value = "hot", source = "handbook: AB5-family activation energy" }')
    with pytest.raises(ConfigError) as err:
        load_params(write(tmp_path, bad))
    assert err.value.path == "material_A.E_A"
