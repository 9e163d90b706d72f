import numpy as np
import pytest

from bco_lab.convexfn import Grid
from bco_lab.prior import (
    PRIOR_NAMES,
    FinitePrior,
    InconsistentObservation,
    Posterior,
    alpha,
    build_prior,
    cond_loss,
    load_prior,
    mean_loss,
    round_stats,
    save_prior,
)


def cube_prior(cube, weights=None):
    cube = np.asarray(cube, dtype=float)
    return FinitePrior.from_cube(Grid.uniform(cube.shape[2]), cube, weights)


def test_update_uninformative_observation():
    prior = cube_prior([[[0.3, 0.1]], [[0.3, 0.9]]])
    post = Posterior.initial(prior).update(1, 0, 0.3)
    assert np.allclose(post.weights(), [0.5, 0.5])


def test_update_fully_informative():
    prior = cube_prior([[[0.3, 0.1]], [[0.3, 0.9]]])
    post = Posterior.initial(prior).update(1, 1, 0.1)
    assert np.allclose(post.weights(), [1.0, 0.0])
    assert not post.alive[1]


def test_update_bayes_rule_three_scenarios():
    prior = cube_prior([[[0.0, 0.5]], [[0.2, 0.5]], [[0.2, 0.5]]], [0.5, 0.25, 0.25])
    post = Posterior.initial(prior).update(1, 0, 0.2)
    assert np.allclose(post.weights(), [0.0, 0.5, 0.5])


def test_update_rejects_inconsistent_and_out_of_range():
    post = Posterior.initial(cube_prior([[[0.3, 0.1]]]))
    with pytest.raises(InconsistentObservation, match="inconsistent observation"):
        post.update(1, 0, 0.7)
    with pytest.raises(IndexError):
        post.update(2, 0, 0.3)


def test_update_idempotent():
    rng = np.random.default_rng(0)
    cube = rng.integers(0, 3, size=(12, 2, 4)) / 2
    post = Posterior.initial(cube_prior(cube))
    once = post.update(1, 2, float(cube[0, 0, 2]))
    twice = once.update(1, 2, float(cube[0, 0, 2]))
    assert np.array_equal(once.log_weights, twice.log_weights)


def test_alpha_examples():
    single = Posterior.initial(cube_prior([[[0.4, 0.1, 0.7]]]))
    assert np.array_equal(alpha(single).masses, [0.0, 1.0, 0.0])
    two = Posterior.initial(cube_prior([[[0.0, 1.0, 1.0]], [[1.0, 1.0, 0.0]]]))
    assert np.allclose(alpha(two).masses, [0.5, 0.0, 0.5])


def test_mean_loss_examples():
    one = cube_prior([[[0.2, 0.6, 0.3]]])
    assert np.array_equal(mean_loss(Posterior.initial(one), 1).values, [0.2, 0.6, 0.3])
    two = cube_prior([np.zeros((1, 3)), np.ones((1, 3))])
    assert np.allclose(mean_loss(Posterior.initial(two), 1).values, 0.5)


def test_cond_loss_examples():
    prior = cube_prior([[[0.1, 0.5, 0.9]], [[0.9, 0.5, 0.1]]])
    post = Posterior.initial(prior)
    assert np.allclose(cond_loss(post, 1, 0).values, [0.1, 0.5, 0.9])
    # alpha_1 = 0: falls back to the mean
    assert np.allclose(cond_loss(post, 1, 1).values, mean_loss(post, 1).values)
    same = Posterior.initial(cube_prior([[[0.1, 0.5, 0.9]], [[0.2, 0.6, 0.7]]]))
    assert np.allclose(cond_loss(same, 1, 0).values, mean_loss(same, 1).values)


def test_total_expectation_every_round():
    rng = np.random.default_rng(1)
    for _ in range(30):
        M, T, K = 15, 3, 6
        cube = rng.integers(0, 4, size=(M, T, K)) / 3
        prior = cube_prior(cube, rng.dirichlet(np.ones(M)))
        post = Posterior.initial(prior)
        truth = int(rng.integers(M))
        for t in range(1, T + 1):
            st = round_stats(post, t)
            recon = sum(st.alpha[j] * st.cond_row(j) for j in range(K))
            assert np.allclose(recon, st.mean, atol=1e-9)
            arm = int(rng.integers(K))
            post = post.update(t, arm, float(cube[truth, t - 1, arm]))


def test_alpha_is_martingale_under_resampling():
    rng = np.random.default_rng(2)
    cube = rng.integers(0, 3, size=(40, 2, 5)) / 2
    prior = cube_prior(cube, rng.dirichlet(np.ones(40)))
    post = Posterior.initial(prior)
    before = alpha(post).masses
    arm, n = 3, 4000
    draws = rng.choice(40, size=n, p=post.weights())
    samples = np.array([alpha(post.update(1, arm, float(cube[m, 0, arm]))).masses for m in draws])
    se = samples.std(axis=0, ddof=1) / np.sqrt(n)
    assert np.all(np.abs(samples.mean(axis=0) - before) <= 3 * se + 1e-12)


def test_xstar_tie_break_smallest_index():
    prior = cube_prior([[[0.2, 0.1, 0.1]]])
    assert prior.xstar[0] == 1


@pytest.mark.parametrize("name", PRIOR_NAMES)
def test_built_in_priors_are_valid(name):
    grid = Grid.uniform(40)
    prior = build_prior(name, grid, 12, 30, np.random.default_rng(3))
    assert abs(prior.weights.sum() - 1) < 1e-12
    pts = grid.points
    for t in range(1, 13):
        L = prior.losses(t)
        assert L.min() >= 0 and L.max() <= 1
        slopes = np.diff(L, axis=1) / np.diff(pts)
        assert np.all(np.diff(slopes, axis=1) >= -1e-9)
    assert np.array_equal(prior.xstar, np.argmin(prior.cumulative(), axis=1))


def test_prior_file_round_trip(tmp_path):
    prior = build_prior("drifting-min", Grid.uniform(9), 4, 5, np.random.default_rng(4))
    save_prior(prior, tmp_path)
    back = load_prior(tmp_path)
    assert np.allclose(back.weights, prior.weights)
    for t in range(1, 5):
        assert np.array_equal(back.losses(t), prior.losses(t))


def test_load_prior_missing(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_prior(tmp_path / "nothing")
