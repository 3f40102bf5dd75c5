import json

import numpy as np
import pytest

from kedmd.systems import (
    ControlAffineSystem,
    duffing,
    euler_discretize,
    from_config,
    get_system,
    kellett,
    verify_equilibria,
)


def test_kellett_step_oracle():
    sys2 = kellett()
    # at (1, 0): ||x||^2 - 1 = 0, so the image is (1/8) * (0*1 - 0, 1 + 0)
    np.testing.assert_allclose(sys2.step(np.array([1.0, 0.0])), [0.0, 0.125], atol=1e-15)
    # at (0, 1): image is (1/8) * (0 - 1, 0 + 0) = (-0.125, 0)
    np.testing.assert_allclose(sys2.step(np.array([0.0, 1.0])), [-0.125, 0.0], atol=1e-15)


def test_kellett_fixed_point_at_origin():
    sys2 = kellett()
    np.testing.assert_array_equal(sys2.step(np.zeros(2)), np.zeros(2))


def test_kellett_batched_step():
    sys2 = kellett()
    X = np.array([[1.0, 0.0], [0.0, 1.0], [0.5, -0.5]])
    batched = sys2.step(X)
    rows = np.stack([sys2.step(x) for x in X])
    np.testing.assert_array_equal(batched, rows)


def test_kellett_lyapunov_data():
    sys2 = kellett()
    spec = sys2.lyapunov
    assert spec is not None
    assert spec.V(np.array([1.0, 2.0])) == pytest.approx(5.0)
    assert spec.alpha_V(2.0) == pytest.approx(7 * 4 / 32)
    np.testing.assert_array_equal(spec.x_star_arr, np.zeros(2))
    assert spec.power_p == 2


def test_kellett_decrease_on_domain():
    sys2 = kellett()
    spec = sys2.lyapunov
    rng = np.random.default_rng(0)
    X = rng.uniform(-2, 2, (2000, 2))
    V = np.sum(X**2, axis=1)
    V_next = np.sum(sys2.step(X) ** 2, axis=1)
    alpha = spec.alpha_V(np.linalg.norm(X, axis=1))
    assert np.min(V - alpha - V_next) >= -1e-12


def test_duffing_step_oracles():
    sys2 = duffing()
    x = np.array([1.0, 1.0])
    np.testing.assert_allclose(sys2.step(x, np.array([0.0])), [1.05, 1.05], atol=1e-15)
    np.testing.assert_allclose(sys2.step(x, np.array([1.0])), [1.05, 0.90], atol=1e-15)
    # drift is linear in the state, input enters through -3 dt x1^3
    np.testing.assert_allclose(
        sys2.step(np.array([2.0, 0.0]), np.array([0.5])),
        [2.0, 2.0 * 0.05 - 3 * 0.05 * 8.0 * 0.5],
        atol=1e-14,
    )


def test_duffing_control_bound_and_box():
    sys2 = duffing()
    assert isinstance(sys2, ControlAffineSystem)
    assert sys2.control_dim == 1
    assert sys2.control_bound == 2.0
    np.testing.assert_array_equal(sys2.domain.lower_arr, [-2.0, -2.0])


def test_autonomous_freezing():
    sys2 = duffing()
    frozen = sys2.autonomous(np.array([0.7]))
    rng = np.random.default_rng(1)
    X = rng.uniform(-2, 2, (50, 2))
    np.testing.assert_array_equal(frozen.step(X), sys2.step(X, np.array([0.7])))
    frozen0 = sys2.autonomous()
    np.testing.assert_array_equal(frozen0.step(X), sys2.step(X, np.zeros(1)))


def test_registered_equilibria_are_fixed_points():
    for system in (kellett(), duffing().autonomous()):
        worst = verify_equilibria(system)
        assert worst <= 1e-14


def test_euler_discretize_matches_hand_step():
    field = lambda x: np.stack([x[..., 1], -x[..., 0]], axis=-1)
    from kedmd.geometry import Box

    system = euler_discretize(field, None, 0.1, Box((-1.0, -1.0), (1.0, 1.0)), name="rot")
    x = np.array([0.5, 0.25])
    np.testing.assert_allclose(system.step(x), [0.525, 0.2], atol=1e-15)


def test_from_config_discrete_map(tmp_path):
    config = {
        "kind": "map",
        "name": "halving",
        "dim": 2,
        "map": ["0.5*x1", "0.5*x2 + 0.25*x1^2"],
        "domain": [[-1, 1], [-1, 1]],
        "equilibria": [[0, 0]],
        "lyapunov": {"V": "x1^2 + x2^2", "alpha_V": "0.1*r^2"},
    }
    system = from_config(config)
    assert system.name == "halving"
    np.testing.assert_allclose(system.step(np.array([0.8, -0.4])), [0.4, -0.04], atol=1e-15)
    assert system.lyapunov.V(np.array([1.0, 1.0])) == pytest.approx(2.0)
    assert system.lyapunov.alpha_V(2.0) == pytest.approx(0.4)
    # same config from a file path
    path = tmp_path / "sys.json"
    path.write_text(json.dumps(config))
    system2 = from_config(str(path))
    np.testing.assert_array_equal(
        system2.step(np.array([0.8, -0.4])), system.step(np.array([0.8, -0.4]))
    )


def test_from_config_batched_evaluation():
    system = from_config(
        {
            "kind": "map",
            "dim": 2,
            "map": ["x2", "-x1 + 0.1*x2"],
            "domain": [[-1, 1], [-1, 1]],
        }
    )
    rng = np.random.default_rng(2)
    X = rng.uniform(-1, 1, (31, 2))
    batched = system.step(X)
    assert batched.shape == (31, 2)
    rows = np.stack([system.step(x) for x in X])
    np.testing.assert_allclose(batched, rows, atol=1e-15)


def test_from_config_control_affine():
    system = from_config(
        {
            "kind": "euler",
            "dim": 2,
            "dt": 0.1,
            "drift": ["x2", "-x1"],
            "control_matrix": [["0"], ["1 - x1^2"]],
            "domain": [[-1, 1], [-1, 1]],
            "control_box": [[-2, 2]],
        }
    )
    assert isinstance(system, ControlAffineSystem)
    x = np.array([0.5, 0.0])
    u = np.array([1.0])
    # x+ = x + dt*(drift + G(x) u); G = (0, 1 - 0.25)
    np.testing.assert_allclose(system.step(x, u), [0.5, -0.05 + 0.1 * 0.75], atol=1e-15)


@pytest.mark.parametrize(
    "config",
    [
        {"dim": 2, "domain": [[-1, 1], [-1, 1]]},
        {"dim": 2, "map": ["x1"], "domain": [[-1, 1], [-1, 1]]},
        {"dim": 1, "map": ["x1"], "domain": {"lower": [0, 0], "upper": [1, 1]}},
        {
            "dim": 1,
            "dt": 0.1,
            "drift": ["x1"],
            "control_matrix": [["1"]],
            "domain": [[-1, 1]],
        },
        {"dim": 2, "map": ["x1", "x2"], "domain": "everywhere"},
    ],
)
def test_from_config_rejects_malformed(config):
    with pytest.raises(ValueError):
        from_config(config)


def test_get_system_dispatch(tmp_path):
    assert get_system("kellett").name == "kellett"
    fine = get_system("duffing", dt=0.025)
    np.testing.assert_allclose(
        fine.step(np.array([1.0, 1.0]), np.zeros(1)), [1.025, 1.025], atol=1e-15
    )
    with pytest.raises(ValueError):
        get_system("unknown-system")
    path = tmp_path / "custom.json"
    path.write_text(
        json.dumps({"kind": "map", "dim": 1, "map": ["0.5*x1"], "domain": [[-1, 1]]})
    )
    assert get_system(str(path)).dim == 1


def test_expression_radius_alias():
    system = from_config(
        {
            "kind": "map",
            "dim": 2,
            "map": ["0.5*x1", "0.5*x2"],
            "domain": [[-1, 1], [-1, 1]],
            "lyapunov": {"V": "r^2", "alpha_V": "0.5*r"},
        }
    )
    assert system.lyapunov.V(np.array([3.0, 4.0])) == pytest.approx(25.0)
    assert system.lyapunov.alpha_V(2.0) == pytest.approx(1.0)
