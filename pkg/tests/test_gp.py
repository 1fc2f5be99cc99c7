import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from probls.gp import (
    DegenerateSurrogateError, KernelParams, Observation, SurrogatePosterior, kernel, posterior_from,
)

P = KernelParams()


def fd_check(i, j, t, u, wrt, h=1e-5):
    """Central difference of kernel(i-1, j) in t, or of kernel(i, j-1) in u."""
    if wrt == "t":
        num = (kernel(i - 1, j, t + h, u) - kernel(i - 1, j, t - h, u)) / (2 * h)
    else:
        num = (kernel(i, j - 1, t, u + h) - kernel(i, j - 1, t, u - h)) / (2 * h)
    return float(num), float(kernel(i, j, t, u))


def test_kernel_examples():
    assert kernel(0, 0, 0.0, 0.0) == pytest.approx(1000 / 3, rel=1e-12)
    assert kernel(1, 1, 1.0, 0.0) == pytest.approx(10.0)
    assert kernel(3, 1, 0.5, 2.0) == 0.0


def test_kernel_rejects_bad_orders():
    with pytest.raises(ValueError):
        kernel(4, 0, 0.0, 0.0)
    with pytest.raises(ValueError):
        kernel(0, 2, 0.0, 0.0)


@pytest.mark.parametrize("i,j,wrt", [(1, 0, "t"), (0, 1, "u"), (1, 1, "t"), (1, 1, "u"),
                                     (2, 0, "t"), (2, 1, "t"), (3, 0, "t")])
def test_kernel_derivatives_match_finite_differences(i, j, wrt):
    rng = np.random.default_rng(i * 10 + j)
    for _ in range(100):
        t, u = rng.uniform(0, 20, size=2)
        if abs(t - u) < 1e-3:
            continue
        num, exact = fd_check(i, j, t, u, wrt)
        assert num == pytest.approx(exact, rel=1e-5, abs=1e-7)


def test_kernel_symmetry():
    rng = np.random.default_rng(0)
    t, u = rng.uniform(0, 10, size=(2, 50))
    np.testing.assert_allclose(kernel(0, 0, t, u), kernel(0, 0, u, t))
    np.testing.assert_allclose(kernel(1, 0, t, u), kernel(0, 1, u, t))
    np.testing.assert_allclose(kernel(1, 1, t, u), kernel(1, 1, u, t))


def test_right_sided_at_kink():
    # t == u: the second derivative in t takes the value from the a >= b branch
    assert kernel(2, 0, 3.0, 3.0) == 0.0
    assert kernel(3, 0, 3.0, 3.0) == 0.0
    assert kernel(2, 1, 3.0, 3.0) == 0.0


def test_prior_gram_psd():
    rng = np.random.default_rng(1)
    for _ in range(50):
        ts = np.sort(rng.uniform(0, 100, size=rng.integers(1, 9)))
        T, U = ts[:, None], ts[None, :]
        gram = np.block([[kernel(0, 0, T, U), kernel(0, 1, T, U)],
                         [kernel(1, 0, T, U), kernel(1, 1, T, U)]])
        eig = np.linalg.eigvalsh(gram)
        assert eig.min() > -1e-8 * eig.max()


def random_obs(rng, n, noise=0.0, min_gap=0.2):
    # well-separated knots; with a 1e-12 noise floor, arbitrary values at nearly
    # coincident noiseless knots are not interpolated to 1e-6 by the exact posterior
    while True:
        ts = np.concatenate([[0.0], np.sort(rng.uniform(min_gap, 5, size=n - 1))])
        if n == 1 or np.diff(ts).min() >= min_gap:
            break
    ys = np.concatenate([[0.0], rng.normal(size=n - 1)])
    dys = np.concatenate([[-1.0], rng.normal(size=n - 1)])
    return [Observation(t, y, dy, noise, noise) for t, y, dy in zip(ts, ys, dys)]


def test_single_observation_interpolates():
    post = posterior_from([Observation(0.0, 0.0, -1.0)])
    assert abs(post.mean(0.0)) < 1e-6
    assert post.mean(0.0, order=1) == pytest.approx(-1.0, abs=1e-6)


def test_noiseless_interpolation():
    rng = np.random.default_rng(2)
    for n in range(1, 8):
        obs = random_obs(rng, n)
        post = posterior_from(obs)
        for o in obs:
            assert post.mean(o.t) == pytest.approx(o.y, abs=1e-6)
            assert post.mean(o.t, order=1) == pytest.approx(o.dy, abs=1e-6)
            assert abs(post.variance(o.t)) < 1e-6


def test_huge_noise_point_is_ignored():
    rng = np.random.default_rng(3)
    obs = random_obs(rng, 4, noise=0.01)
    base = posterior_from(obs)
    extra = base.update(Observation(2.345, 50.0, -30.0, 1e14, 1e14))
    grid = np.linspace(0, 6, 31)
    np.testing.assert_allclose(extra.mean(grid), base.mean(grid), atol=1e-6)
    np.testing.assert_allclose(extra.covariance(0, 0, grid, grid),
                               base.covariance(0, 0, grid, grid), atol=1e-6)


def test_mean_is_hermite_cubic_between_knots():
    rng = np.random.default_rng(4)
    for _ in range(20):
        post = posterior_from(random_obs(rng, 5))
        for a, b in zip(post.ts[:-1], post.ts[1:]):
            h = b - a
            fa, fb = post.mean(a), post.mean(b)
            da, db = post.mean(a, order=1), post.mean(b, order=1)
            s = np.linspace(0, 1, 25)
            h00, h10 = 2 * s**3 - 3 * s**2 + 1, s**3 - 2 * s**2 + s
            h01, h11 = -2 * s**3 + 3 * s**2, s**3 - s**2
            herm = h00 * fa + h10 * h * da + h01 * fb + h11 * h * db
            np.testing.assert_allclose(post.mean(a + s * h), herm, atol=1e-8)


def test_mean_derivative_finite_differences():
    rng = np.random.default_rng(5)
    post = posterior_from(random_obs(rng, 4, noise=0.05))
    for t in rng.uniform(0.01, 8, size=40):
        if np.min(np.abs(post.ts - t)) < 1e-3:
            continue
        h = 1e-5
        d = post.mean_derivatives(t)
        for k in range(3):
            num = (post.mean(t + h, order=k) - post.mean(t - h, order=k)) / (2 * h)
            assert num == pytest.approx(d[k + 1], rel=1e-5, abs=1e-7)


def test_third_derivative_constant_per_cell_and_beyond():
    post = posterior_from([Observation(0.0, 0.0, -1.0)])
    vals = [post.mean_derivatives(t)[3] for t in (0.1, 3.0, 50.0)]
    assert np.allclose(vals, vals[0])
    assert np.all(np.isfinite(vals))


def test_prior_variance_and_covariance_symmetry():
    post = posterior_from([Observation(0.0, 0.0, -1.0, 0.2, 0.3)])
    rng = np.random.default_rng(6)
    for t, u in rng.uniform(0, 5, size=(30, 2)):
        assert post.covariance(1, 0, t, u) == pytest.approx(post.covariance(0, 1, u, t), abs=1e-10)
        assert post.variance(t) >= -1e-9
    # far from the data, the posterior tends to the prior
    empty_like = posterior_from([Observation(0.0, 0.0, -1.0, 1e16, 1e16)])
    assert empty_like.variance(2.0) == pytest.approx(float(kernel(0, 0, 2.0, 2.0)), rel=1e-9)


def test_marginal_2x2_psd():
    rng = np.random.default_rng(7)
    post = posterior_from(random_obs(rng, 4, noise=0.1))
    for t in rng.uniform(0, 8, size=100):
        m = np.array([[post.covariance(0, 0, t, t), post.covariance(0, 1, t, t)],
                      [post.covariance(1, 0, t, t), post.covariance(1, 1, t, t)]])
        assert np.linalg.eigvalsh(m).min() >= -1e-9


def test_joint_covariance_matches_pairwise_queries():
    rng = np.random.default_rng(8)
    post = posterior_from(random_obs(rng, 3, noise=0.1))
    t = 1.7
    K = post.joint_covariance(t)
    locs = [(0, 0.0), (1, 0.0), (0, t), (1, t)]
    for a, (i, s) in enumerate(locs):
        for b, (j, u) in enumerate(locs):
            assert K[a, b] == pytest.approx(post.covariance(i, j, s, u), abs=1e-9)


def test_update_validation():
    post = posterior_from([Observation(0.0, 0.0, -1.0)])
    with pytest.raises(ValueError):
        post.update(Observation(0.0, 1.0, 1.0))
    with pytest.raises(ValueError):
        posterior_from([Observation(1.0, 0.0, -1.0)])
    with pytest.raises(ValueError):
        Observation(-1.0, 0.0, 0.0)
    with pytest.raises(ValueError):
        Observation(1.0, 0.0, 0.0, var_f=-1.0)
    with pytest.raises(ValueError):
        KernelParams(tau=0.0)


def test_degenerate_gram_raises(monkeypatch):
    calls = []

    def failing(matrix):
        calls.append(matrix.copy())
        raise np.linalg.LinAlgError("not positive definite")

    monkeypatch.setattr(np.linalg, "cholesky", failing)
    with pytest.raises(DegenerateSurrogateError):
        SurrogatePosterior((Observation(0.0, 0.0, -1.0), Observation(1.0, 0.0, 0.0)))
    # plain attempt plus three escalating jitters, each ten times the previous
    assert len(calls) == 4
    jitters = [c[0, 0] - calls[0][0, 0] for c in calls[1:]]
    assert jitters[1] == pytest.approx(10 * jitters[0])
    assert jitters[2] == pytest.approx(100 * jitters[0])


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(0.01, 20), min_size=1, max_size=6, unique=True),
       st.floats(0.0, 1.0))
def test_posterior_variance_nonnegative(ts, noise):
    ts = sorted(t for t in ts)
    if np.any(np.diff(ts) < 1e-3):
        return
    obs = [Observation(0.0, 0.0, -1.0, noise, noise)]
    obs += [Observation(t, -0.1 * t, 0.1, noise, noise) for t in ts]
    post = posterior_from(obs)
    grid = np.linspace(0, 25, 40)
    assert np.all(post.covariance(0, 0, grid, grid) >= -1e-9)
    assert np.all(post.covariance(1, 1, grid, grid) >= -1e-9)
