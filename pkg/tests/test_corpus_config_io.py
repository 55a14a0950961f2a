import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from confdeficit.config import ConfigError, ExperimentConfig, dump_config, load_config
from confdeficit.corpus import (FAMILIES, bubbles, harmonic_perturbations, moebius_perturbations,
                                orthogonal_fields, power_maps, random_corpus)
from confdeficit.functionals import deficit
from confdeficit.io import MapFileError, load_map, map_from_spec, save_map, to_jsonable, write_csv, write_json
from confdeficit.maps import SphereMap, identity
from confdeficit.moebius import MoebiusTransform
from confdeficit.quadratics import project_kernel, w12_inner

floats = st.floats(min_value=1e-12, max_value=1e6, allow_nan=False, allow_infinity=False)


@given(seed=st.integers(0, 2**31), level=st.integers(0, 8), vf=floats, kappa=st.floats(1e-6, 0.999),
       fraction=st.floats(1e-3, 0.5), out=st.text("abcxyz_/.-0123", min_size=1, max_size=12))
def test_config_round_trip(seed, level, vf, kappa, fraction, out):
    cfg = ExperimentConfig(seed=seed, level=level, volume_floor=vf, kappa=kappa, fraction=fraction, out=out)
    back = ExperimentConfig.loads(cfg.dumps())
    assert back == cfg
    assert back.digest() == cfg.digest()


def test_config_digest_and_replace(tmp_path):
    cfg = ExperimentConfig()
    assert cfg.replace(seed=None, level=None) == cfg
    other = cfg.replace(seed=1)
    assert other.seed == 1 and other.digest() != cfg.digest()
    path = tmp_path / "c.cfg"
    dump_config(other, path)
    assert load_config(path) == other
    assert cfg.amplitude_list == [0.01, 0.1, 0.5]
    assert cfg.family_list == ["moebius", "harmonic", "power", "bubble"]


def test_config_accepts_comments():
    cfg = ExperimentConfig.loads("# header\nlevel = 2  # coarse\n\nseed=5\n")
    assert cfg.level == 2 and cfg.seed == 5


@pytest.mark.parametrize("text", ["level 3", "colour = red", "level = three", "fraction = 0.7", "kappa = 1.5",
                                  "backend = grid", "n = 2", "volume_floor = 0"])
def test_config_errors(text):
    with pytest.raises(ConfigError):
        ExperimentConfig.loads(text)


def test_map_specs(mesh2):
    phi = MoebiusTransform.from_boost(np.array([0.2, 0.0, -0.1]))
    u = map_from_spec({"kind": "moebius", "transform": phi.to_dict(), "scale": 2.0, "shift": [1, 0, 0]}, mesh2)
    assert np.allclose(u.values, 2.0 * phi(mesh2.nodes) + np.array([1.0, 0, 0]))
    v = map_from_spec({"kind": "polynomial", "exponents": [[1, 0, 0]], "coeffs": [[0.0, 0.0, 1.0]],
                       "plus_identity": True}, mesh2)
    x = mesh2.nodes
    assert np.allclose(v.values, x + x[:, :1] * np.array([0.0, 0.0, 1.0]))
    assert np.allclose(map_from_spec({"kind": "power", "k": 1}, mesh2).values, x)


def test_nodal_save_load_round_trip(mesh2, tmp_path):
    u = SphereMap.from_smooth(mesh2, identity(3)).to_nodal()
    path = tmp_path / "u.json"
    save_map(u, path, include_domain=True)
    v = load_map(path, mesh2)
    assert np.array_equal(u.values, v.values)


@pytest.mark.parametrize("spec", [{"kind": "torus"}, {"kind": "identity"}, {"kind": "identity", "n": 4},
                                  {"kind": "nodal", "values": [[0.0, 0.0, 1.0]]}, {"kind": "moebius"}])
def test_bad_map_specs(mesh2, spec):
    with pytest.raises(MapFileError):
        map_from_spec(spec, mesh2)


def test_bad_map_files(mesh2, tmp_path):
    p = tmp_path / "bad.json"
    p.write_text("{not json")
    with pytest.raises(MapFileError):
        load_map(p, mesh2)
    p.write_text("[1, 2]")
    with pytest.raises(MapFileError):
        load_map(p, mesh2)
    with pytest.raises(OSError):
        load_map(tmp_path / "missing.json", mesh2)


def test_json_and_csv_writers(tmp_path):
    data = {"a": np.float64(np.inf), "b": np.arange(3), "c": (np.int64(2), np.nan)}
    assert to_jsonable(data) == {"a": "inf", "b": [0, 1, 2], "c": [2, "nan"]}
    write_json(data, tmp_path / "d.json")
    assert json.loads((tmp_path / "d.json").read_text())["b"] == [0, 1, 2]
    write_csv([{"x": 0.1, "y": 1}, {"x": np.float64(1 / 3), "y": 2}], tmp_path / "d.csv")
    lines = (tmp_path / "d.csv").read_text().splitlines()
    assert lines == ["x,y", "0.1,1", "0.3333333333333333,2"]


def test_corpus_is_deterministic(mesh2):
    a = random_corpus(mesh2, size=12, seed=4)
    b = random_corpus(mesh2, size=12, seed=4)
    assert [i.label for i in a] == [i.label for i in b]
    assert all(np.array_equal(x.map.values, y.map.values) for x, y in zip(a, b))
    assert len(a) == 12
    assert set(FAMILIES) == {"moebius", "harmonic", "power", "bubble"}


def test_corpus_families(mesh3):
    for item in moebius_perturbations(mesh3, 3, seed=1):
        assert deficit(item.map).deficit < 1e-5
    assert [i.params["amplitude"] for i in harmonic_perturbations(mesh3, 4, amplitudes=(0.1, 0.2))] == [
        0.1, 0.2, 0.1, 0.2]
    assert [i.label for i in power_maps(mesh3, degrees=(-1, 2))] == ["power-1", "power+2"]
    for item in bubbles(mesh3, lams=(10.0,)):
        assert np.linalg.det(np.asarray(item.params["transform"]["O"])) > 0


def test_power_maps_need_the_two_sphere(chart4):
    with pytest.raises(ValueError):
        power_maps(chart4)


def test_orthogonal_fields_lie_in_normalized_class(mesh3):
    ident = SphereMap.from_smooth(mesh3, identity(3))
    for w in orthogonal_fields(mesh3, 3, seed=2):
        assert w12_inner(w, w) == pytest.approx(1.0)
        assert np.allclose(w.mean(), 0.0, atol=1e-12)
        assert abs(mesh3.integrate(np.einsum("qi,qi->q", w.qvalues, mesh3.points))) < 1e-12
        assert np.abs(project_kernel(w).coefficients).max() < 1e-10
        # <w, id>_{W12} equals n fint <w, x> only up to quadrature error
        assert abs(w12_inner(w, ident)) < 1e-7
