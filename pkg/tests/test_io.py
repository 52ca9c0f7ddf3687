import json
import math

import numpy as np
import pytest

from lamflow.errors import ConfigError, MeshError
from lamflow.flow import FlowConfig, run
from lamflow.geometry.generators import gen_genus2
from lamflow.io import (
    mesh_from_dict,
    read_config,
    read_conformal_factor,
    read_trajectory,
    write_conformal_factor,
    write_trajectory,
)
from lamflow.jsonio import dumps, write_json


def test_floats_round_trip_exactly():
    xs = [0.1, 1 / 3, math.pi, 1e-300, -2.5e17, 6.02214076e23]
    assert json.loads(dumps(xs)) == xs


def test_integral_floats_keep_point():
    assert dumps([1.0, 2, np.float64(3.0), np.int64(4)]) == "[1.0, 2, 3.0, 4]"


def test_keys_keep_order():
    assert dumps({"b": 1, "a": 2}) == '{"b": 1, "a": 2}'


def test_non_finite_encoded_as_strings():
    assert json.loads(dumps([math.nan, math.inf])) == ["nan", "inf"]


def test_numpy_arrays_and_bools():
    assert dumps({"x": np.array([[1, 2]]), "ok": np.bool_(True), "n": None}) == '{"x": [[1, 2]], "ok": true, "n": null}'


def test_unknown_type_rejected():
    with pytest.raises(TypeError):
        dumps(object())


def test_conformal_factor_round_trip(tmp_path):
    u = np.random.default_rng(0).normal(size=10)
    write_conformal_factor(tmp_path / "u.json", u)
    assert np.array_equal(read_conformal_factor(tmp_path / "u.json", 10), u)
    with pytest.raises(MeshError):
        read_conformal_factor(tmp_path / "u.json", 11)


def test_config_file(tmp_path):
    write_json(tmp_path / "c.json", {"r": -1.0, "integrator": "rk4"})
    assert read_config(tmp_path / "c.json") == FlowConfig(r=-1.0, integrator="rk4")
    write_json(tmp_path / "bad.json", [1, 2])
    with pytest.raises(ConfigError):
        read_config(tmp_path / "bad.json")


def test_malformed_mesh_document():
    with pytest.raises(MeshError):
        mesh_from_dict({"faces": [[0, 1, 2]]})
    with pytest.raises(MeshError):
        mesh_from_dict({"faces": [[0, 1, 2]], "edge_lengths": [{"v": [0, 1], "l": 1}, {"v": [1, 0], "l": 1}]})


def test_trajectory_round_trip(tmp_path):
    m = gen_genus2(1)
    u0 = np.random.default_rng(1).uniform(-0.1, 0.1, m.n_vertices) - 0.5
    traj = run(m, u0, FlowConfig(r=-4.0, dt_init=1e-3, t_max=0.05, record_every=7), probes=[0, 3])
    write_json(tmp_path / "mesh.json", {"faces": [], "edge_lengths": []})
    write_trajectory(tmp_path, traj, "mesh.json")
    back = read_trajectory(tmp_path, mesh=m)
    assert np.array_equal(back.times, traj.times)
    assert np.array_equal(back.R_max, traj.R_max)
    assert np.array_equal(back.probe_R, traj.probe_R)
    assert np.array_equal(back.probe_vertices, traj.probe_vertices)
    assert np.array_equal(back.final.u, traj.final.u)
    assert back.termination == traj.termination and back.config == traj.config
