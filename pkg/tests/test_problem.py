import json

import numpy as np
import pytest

from ordex.problem import ConfigError, load_problem, problem_from_dict
from ordex.starlan import Tolerances


def cfg(**over):
    base = {"schema": 1, "model": {"type": "builtin", "builtin": "constant"},
            "interval": [0, 1], "n": 21, "m": 2}
    base.update(over)
    return base


def test_defaults_constant():
    p = problem_from_dict(cfg())
    assert p.N == 2 and p.name == "constant"
    assert np.array_equal(p.func(0.3), [[1, 2], [3, 4]])
    assert np.array_equal(p.w, [1, 0]) and np.array_equal(p.v, [1, 0])
    assert p.tols == Tolerances()


@pytest.mark.parametrize("name,N", [("constant", 2), ("commuting", 3), ("rotation", 2),
                                    ("jordan", 2), ("rabi", 2), ("airy", 2)])
def test_every_builtin_loads(name, N):
    p = problem_from_dict(cfg(model={"type": "builtin", "builtin": name}, m=1))
    assert p.N == N
    assert p.func(0.5).shape == (N, N)
    assert abs(np.vdot(p.w, p.v) - 1) < 1e-12


def test_rabi_matrix():
    p = problem_from_dict(cfg(model={"type": "builtin", "builtin": "rabi",
                                     "params": {"Delta": 2.0, "Omega": 3.0, "omega": 1.0}}))
    t = 0.4
    c = 3 * np.cos(t)
    assert np.allclose(p.func(t), [[1, c], [c, -1]])


def test_commuting_is_cos_times_matrix():
    p = problem_from_dict(cfg(model={"type": "builtin", "builtin": "commuting",
                                     "params": {"matrix": [[1, 2], [0, 1]], "omega": 2.0}}))
    assert np.allclose(p.func(0.3), np.cos(0.6) * np.array([[1, 2], [0, 1]]))


def test_polynomial_model_complex_entries():
    p = problem_from_dict(cfg(model={"type": "polynomial",
                                     "coeffs": [[[1, [0, 2], 0], [0, 0, 0]],
                                                [[3, 0, 0], [0, 0, 1]]]}))
    t = 0.5
    assert np.allclose(p.func(t), [[1 + 2j * t, 0], [3, t * t]])


def test_fourier_model():
    p = problem_from_dict(cfg(model={"type": "fourier", "omega": 2.0,
                                     "cos": [[[1, 2]]], "sin": [[[0, 3]]]}, m=1))
    t = 0.3
    assert np.allclose(p.func(t), [[1 + 2 * np.cos(2 * t) + 3 * np.sin(2 * t)]])


def test_tolerance_overrides():
    p = problem_from_dict(cfg(tolerances={"mm": 1e-4, "max_order": 5}))
    assert p.tols.mm == 1e-4 and p.tols.max_order == 5 and p.tols.bio == Tolerances().bio


def test_rescales_unnormalized_v_with_warning():
    with pytest.warns(UserWarning, match="rescaling"):
        p = problem_from_dict(cfg(w=[1, 1], v=[1, 1]))
    assert abs(np.vdot(p.w, p.v) - 1) < 1e-15


def test_zero_pairing_rejected():
    with pytest.raises(ConfigError, match="w\\^H v = 0"):
        problem_from_dict(cfg(w=[1, 0], v=[0, 1]))


@pytest.mark.parametrize("bad,where", [
    ({"n": 4}, "$.n"),
    ({"m": 0}, "$.m"),
    ({"schema": 2}, "$.schema"),
    ({"extra": 1}, "$"),
    ({"interval": [0]}, "$.interval"),
    ({"w": [1, "x"]}, "$.w[1]"),
    ({"tolerances": {"mm": -1}}, "$.tolerances.mm"),
    ({"oracle_rtol": 1e-14}, "$.oracle_rtol"),
])
def test_schema_errors_are_located(bad, where):
    with pytest.raises(ConfigError) as exc:
        problem_from_dict(cfg(**bad))
    assert f"at {where}:" in str(exc.value)


def test_reversed_interval():
    with pytest.raises(ConfigError, match="b > a"):
        problem_from_dict(cfg(interval=[1, 0]))


def test_m_exceeds_dimension():
    with pytest.raises(ConfigError, match="exceeds"):
        problem_from_dict(cfg(m=3))


def test_vector_length_mismatch():
    with pytest.raises(ConfigError, match="length 2"):
        problem_from_dict(cfg(w=[1, 0, 0]))


def test_unknown_builtin_param():
    with pytest.raises(ConfigError, match="unknown key"):
        problem_from_dict(cfg(model={"type": "builtin", "builtin": "airy",
                                     "params": {"eps": 1}}))


def test_nonsquare_table():
    with pytest.raises(ConfigError, match="N x N x K"):
        problem_from_dict(cfg(model={"type": "polynomial", "coeffs": [[[1], [2]]]}))


def test_ragged_table():
    with pytest.raises(ConfigError, match="ragged"):
        problem_from_dict(cfg(model={"type": "polynomial", "coeffs": [[[1], [2, 3]], [[1], [1]]]}))


def test_sin_shape_mismatch():
    with pytest.raises(ConfigError, match="sin"):
        problem_from_dict(cfg(model={"type": "fourier", "omega": 1, "cos": [[[1, 2]]],
                                     "sin": [[[1]]]}, m=1))


def test_jordan_size_check():
    with pytest.raises(ConfigError, match="size"):
        problem_from_dict(cfg(model={"type": "builtin", "builtin": "jordan",
                                     "params": {"size": 1}}, m=1))


def test_invalid_json_position(tmp_path):
    f = tmp_path / "bad.json"
    f.write_text('{"schema": 1,\n  "n": }')
    with pytest.raises(ConfigError, match="bad.json:2:"):
        load_problem(f)


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError, match="cannot read"):
        load_problem(tmp_path / "nope.json")


def test_load_roundtrip(tmp_path):
    f = tmp_path / "p.json"
    f.write_text(json.dumps(cfg(name="mine")))
    p = load_problem(f)
    assert p.name == "mine" and p.grid().n == 21 and p.matrix_fn(31).grid.n == 31


def test_exact_reference_for_constant():
    from ordex.oracle import expm

    p = problem_from_dict(cfg(interval=[0.5, 1.5]))
    g = p.grid()
    ref = p.reference(g)
    assert ref[0] == 1
    assert np.allclose(ref[-1], expm(np.array([[1, 2], [3, 4]]))[0, 0])


def test_ode_reference_for_airy():
    p = problem_from_dict(cfg(model={"type": "builtin", "builtin": "airy"}))
    assert p.exact is None
    ref = p.reference(p.grid())
    assert abs(ref[-1] - 3.3429792662238956461) < 1e-8


def test_commuting_exact_matches_ode():
    p = problem_from_dict(cfg(model={"type": "builtin", "builtin": "commuting",
                                     "params": {"seed": 2}}, m=3))
    g = p.grid()
    exact = p.reference(g)
    from ordex.oracle import ode_propagator

    sol = ode_propagator(p.func, p.N, g, v=p.v, check=False)
    assert np.max(np.abs(exact - sol.bilinear(p.w))) < 1e-8
