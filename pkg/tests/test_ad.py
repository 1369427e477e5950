import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from blockqn import ad, problems
from blockqn.ad import DualBatch, ObjectiveProgram, finite_difference_jvp, gad
from blockqn.errors import EvaluationError

from conftest import diag_quadratic


def fd_step(x):
    return 1e-6 * (1.0 + np.max(np.abs(x)))


def rel_err(a, b):
    return np.max(np.abs(a - b)) / max(np.max(np.abs(b)), 1e-300)


def test_gad_diagonal_quadratic():
    g, Y = gad(diag_quadratic([1.0, 2.0]), np.array([1.0, 1.0]), np.eye(2))
    np.testing.assert_array_equal(g, [1.0, 2.0])
    np.testing.assert_array_equal(Y, np.diag([1.0, 2.0]))


def test_gad_rosenbrock_at_minimizer():
    prog = problems.rosenbrock(problems.RosenbrockSpec(2, 100.0))
    g, Y = gad(prog, np.ones(2), np.eye(2))
    np.testing.assert_array_equal(g, [0.0, 0.0])
    np.testing.assert_allclose(Y, [[802.0, -400.0], [-400.0, 200.0]], rtol=0, atol=1e-12)


def test_zero_direction_gives_zero_column(rosen20, rng):
    x = rng.uniform(-1, 1, 20)
    S = rng.standard_normal((20, 3))
    S[:, 1] = 0.0
    _, Y = gad(rosen20, x, S)
    assert not np.any(Y[:, 1])


def test_fd_exact_on_quadratic():
    prog = diag_quadratic([1.0, 2.0])
    v = finite_difference_jvp(prog, np.array([0.3, -2.0]), np.array([1.0, 0.0]), 1e-5)
    np.testing.assert_allclose(v, [1.0, 0.0], atol=1e-9)


def test_fd_zero_direction(rosen20, rng):
    v = finite_difference_jvp(rosen20, rng.uniform(-1, 1, 20), np.zeros(20), 1e-5)
    assert not np.any(v)


def test_fd_rejects_bad_step(rosen20):
    with pytest.raises(ValueError):
        finite_difference_jvp(rosen20, np.zeros(20), np.ones(20), 0.0)


def test_fd_matches_gad_on_rosenbrock(rosen20, rng):
    x = rng.uniform(-1, 1, 20)
    s = rng.standard_normal(20)
    s /= np.linalg.norm(s)
    _, Y = gad(rosen20, x, s[:, None])
    assert rel_err(finite_difference_jvp(rosen20, x, s, 1e-6), Y[:, 0]) <= 1e-5


PROGRAMS = {
    "rosenbrock-2": problems.rosenbrock(problems.RosenbrockSpec(2, 100.0)),
    "rosenbrock-10": problems.rosenbrock(problems.RosenbrockSpec(10, 100.0)),
    "rosenbrock-100": problems.rosenbrock(problems.RosenbrockSpec(100, 100.0)),
    "quadratic-8": problems.quadratic(
        problems.random_spd_quadratic(8, 1.0, 100.0, np.random.default_rng(3))),
}


@pytest.mark.parametrize("name", sorted(PROGRAMS))
def test_gad_agrees_with_finite_differences(name):
    prog = PROGRAMS[name]
    rng = np.random.default_rng(11)
    worst = 0.0
    for _ in range(100):
        x = rng.uniform(-1.5, 1.5, prog.n)
        S = rng.standard_normal((prog.n, 2))
        _, Y = gad(prog, x, S)
        h = fd_step(x)
        for j in range(S.shape[1]):
            worst = max(worst, rel_err(finite_difference_jvp(prog, x, S[:, j], h), Y[:, j]))
    assert worst <= 1e-5


def test_gradient_part_is_bit_identical(rosen100, rng):
    x = rng.uniform(-1, 1, 100)
    g, _ = gad(rosen100, x, rng.standard_normal((100, 4)))
    assert np.array_equal(g, rosen100.g(x))


def test_lane_permutation_equivariance(rosen20, rng):
    x = rng.uniform(-1, 1, 20)
    S = rng.standard_normal((20, 5))
    perm = np.array([3, 0, 4, 1, 2])
    _, Y = gad(rosen20, x, S)
    _, Yp = gad(rosen20, x, S[:, perm])
    np.testing.assert_array_equal(Yp, Y[:, perm])


def test_non_finite_gradient_reports_coordinate():
    def grad(x):
        return ad.concatenate([x[:1], ad.log(x[1:2]), x[2:]])

    prog = ObjectiveProgram(3, lambda x: 0.0, grad)
    with pytest.raises(EvaluationError) as info, np.errstate(invalid="ignore"):
        gad(prog, np.array([1.0, -1.0, 2.0]), np.eye(3))
    assert info.value.coordinate == 1


def test_scalar_loop_program_is_supported():
    # gradient written element by element still differentiates lane-wise
    def grad(x):
        return [2.0 * x[0] * x[1], x[0] ** 2 + ad.exp(x[1])]

    prog = ObjectiveProgram(2, lambda x: x[0] ** 2 * x[1] + ad.exp(x[1]), grad)
    x = np.array([0.5, -0.3])
    g, Y = gad(prog, x, np.eye(2))
    np.testing.assert_allclose(g, [2 * 0.5 * -0.3, 0.25 + np.exp(-0.3)])
    np.testing.assert_allclose(Y, [[-0.6, 1.0], [1.0, np.exp(-0.3)]], rtol=1e-14)


finite = st.floats(-3.0, 3.0, allow_nan=False)


@settings(max_examples=60, deadline=None)
@given(v=finite, lanes=st.lists(finite, min_size=1, max_size=5))
def test_chain_rule_per_lane(v, lanes):
    u = DualBatch(v, lanes)
    lanes = np.array(lanes)
    for fn, dfn in [(ad.sin, np.cos), (ad.exp, np.exp), (ad.tanh, lambda t: 1 - np.tanh(t) ** 2)]:
        out = fn(u * u)
        np.testing.assert_allclose(out.tangents, dfn(v * v) * 2 * v * lanes, rtol=1e-12, atol=1e-12)


@settings(max_examples=40, deadline=None)
@given(x=st.lists(st.floats(0.5, 2.0), min_size=3, max_size=3), lane=st.integers(0, 3))
def test_lanes_are_independent(x, lane):
    rng = np.random.default_rng(0)
    T = rng.standard_normal((3, 4))
    T[:, lane] = 0.0
    u = DualBatch(np.array(x), T)
    out = (u[0] * u[1] / u[2] - ad.sqrt(u[1]) + u[2] ** 1.5 - 3.0 / u[0]).sum()
    assert out.tangents[lane] == 0.0


def test_dual_arithmetic_matches_closed_forms():
    u = DualBatch(2.0, [1.0, 0.0])
    v = DualBatch(3.0, [0.0, 1.0])
    np.testing.assert_allclose((u / v).tangents, [1 / 3, -2 / 9])
    np.testing.assert_allclose((u**v).tangents, [3 * 4.0, 8.0 * np.log(2.0)])
    np.testing.assert_allclose((2.0**u).tangents, [4.0 * np.log(2.0), 0.0])
    np.testing.assert_allclose((1.0 - u).tangents, [-1.0, 0.0])
    np.testing.assert_allclose((5.0 / v).tangents, [0.0, -5.0 / 9])
    assert u < v and v >= u
