import math

import numpy as np
import pytest

from anytime_ppi.stats.running_moments import (
    Observation,
    StreamState,
    VarianceFlavor,
    cv_plus_variance,
    cv_variance,
    lambda_hat,
    two_pass_moments,
    update,
    var_estimators,
)
from anytime_ppi.utils.errors import (
    DataError,
    DegeneratePredictorError,
    InsufficientDataError,
    InvalidRatioError,
)

FIELDS = ["mean_y", "mean_f", "mean_ft", "s_yy", "s_ff", "s_yf", "s_ftft"]


def _assert_matches(state, expected, rel=1e-10):
    assert state.n == expected["n"]
    assert state.N == expected["N"]
    for name in FIELDS:
        assert getattr(state, name) == pytest.approx(expected[name], rel=rel, abs=1e-12), name


def test_single_point():
    state = update(StreamState(), Observation(prediction=1.0, label=1.0))
    assert state.n == 1
    assert state.t_total == 1
    assert state.mean_y == 1.0
    assert state.s_yy == 0.0


def test_two_points_by_hand():
    state = StreamState()
    state.push_labelled(0.0, 0.0).push_labelled(2.0, 2.0)
    assert state.mean_y == 1.0
    assert state.s_yy == 2.0
    assert state.s_yf == 2.0
    assert state.s_ff == 2.0
    assert lambda_hat(state) == 1.0


def test_unlabelled_records_only_touch_the_pool():
    state = StreamState()
    state.update(Observation(prediction=0.4))
    state.update(Observation(prediction=0.6, label=1.0))
    assert state.n == 1
    assert state.N == 1
    assert state.t_total == 2
    assert state.mean_ft == 0.4


def test_pool_labelled_counts_labelled_predictions():
    state = StreamState(pool_labelled=True)
    state.update(Observation(prediction=0.4))
    state.update(Observation(prediction=0.6, label=1.0))
    assert state.N == 2
    assert state.mean_ft == pytest.approx(0.5)


@pytest.mark.parametrize("pool_labelled", [False, True])
def test_streaming_matches_two_pass_on_every_prefix(rng, make_stream, pool_labelled):
    for _ in range(200):
        n, m = rng.integers(1, 40), rng.integers(0, 40)
        y = rng.normal(3.0, 2.0, n)
        f = y + rng.normal(0.5, 1.0, n)
        state = StreamState(buffered=True, pool_labelled=pool_labelled)
        records = [Observation(float(p), float(l)) for l, p in zip(y, f)]
        records += [Observation(float(p)) for p in rng.normal(3.0, 3.0, m)]
        order = rng.permutation(len(records))
        for i in order:
            state.update(records[i])
            _assert_matches(state, two_pass_moments(state.buffer, pool_labelled))


def test_permutation_invariance(rng, make_stream):
    y = rng.normal(size=300)
    f = 0.8 * y + rng.normal(size=300)
    pool = rng.normal(size=500)
    a = make_stream(y, f, pool, buffered=False)
    perm, perm_pool = rng.permutation(300), rng.permutation(500)
    b = make_stream(y[perm], f[perm], pool[perm_pool], buffered=False)
    for name in FIELDS:
        assert getattr(a, name) == pytest.approx(getattr(b, name), rel=1e-9, abs=1e-12)


def test_scale_equivariance(rng, make_stream):
    y = rng.normal(1.0, 1.0, 100)
    f = y + rng.normal(size=100)
    pool = rng.normal(1.0, 1.5, 100)
    c = 3.0
    a = make_stream(y, f, pool, buffered=False)
    b = make_stream(c * y, c * f, c * pool, buffered=False)
    for name in ("mean_y", "mean_f", "mean_ft"):
        assert getattr(b, name) == pytest.approx(c * getattr(a, name), rel=1e-10)
    for name in ("s_yy", "s_ff", "s_yf", "s_ftft"):
        assert getattr(b, name) == pytest.approx(c**2 * getattr(a, name), rel=1e-10)


def test_cauchy_schwarz_after_every_update(rng):
    state = StreamState()
    for y, f in zip(rng.normal(size=500), rng.normal(size=500)):
        state.push_labelled(y, f + 0.3 * y)
        assert state.s_yf**2 <= state.s_yy * state.s_ff * (1 + 1e-12)


def test_extend_equals_repeated_updates(rng, make_stream):
    y = rng.normal(5.0, 1.0, 257)
    f = y + rng.normal(size=257)
    pool = rng.normal(5.0, 1.0, 123)
    expected = make_stream(y, f, pool, buffered=False)
    state = StreamState()
    for chunk in np.array_split(np.arange(257), 7):
        state.extend(y[chunk], f[chunk])
    state.extend_unlabelled(pool[:50]).extend_unlabelled(pool[50:])
    assert state.t_total == expected.t_total
    for name in FIELDS:
        assert getattr(state, name) == pytest.approx(getattr(expected, name), rel=1e-10)


def test_merge_unlabelled_summary(rng):
    pool = rng.normal(2.0, 1.0, 1000)
    a = StreamState().extend_unlabelled(pool)
    b = StreamState().merge_unlabelled(len(pool), pool.mean(), ((pool - pool.mean()) ** 2).sum())
    assert b.N == a.N == 1000
    assert b.mean_ft == pytest.approx(a.mean_ft, rel=1e-12)
    assert b.s_ftft == pytest.approx(a.s_ftft, rel=1e-12)


def test_batched_state_advances_replications_independently(rng, make_stream):
    y = rng.normal(size=(4, 60))
    f = y + rng.normal(size=(4, 60))
    batch = StreamState.batch(4)
    for i in range(60):
        batch.push_labelled(y[:, i], f[:, i])
    for r in range(4):
        single = make_stream(y[r], f[r], buffered=False)
        assert batch.mean_y[r] == pytest.approx(single.mean_y, rel=1e-12)
        assert batch.s_yf[r] == pytest.approx(single.s_yf, rel=1e-12)


def test_non_finite_record_names_its_index():
    state = StreamState()
    state.update(Observation(1.0, 1.0))
    state.update(Observation(2.0))
    with pytest.raises(DataError) as info:
        state.update(Observation(math.nan, 1.0))
    assert info.value.index == 2
    with pytest.raises(DataError):
        state.update(Observation(1.0, math.inf))


def test_extend_rejects_non_finite():
    with pytest.raises(DataError):
        StreamState().extend([1.0, math.nan], [1.0, 2.0])


def test_lambda_hat_perfect_predictions(rng, make_stream):
    y = rng.normal(size=50)
    assert lambda_hat(make_stream(y, y)) == pytest.approx(1.0)


def test_lambda_hat_noisy_predictions(rng, make_stream):
    y = rng.normal(size=10_000)
    f = y + 3.0 * rng.normal(size=10_000)
    assert lambda_hat(make_stream(y, f, buffered=False)) == pytest.approx(0.1, abs=0.05)


def test_lambda_hat_preconditions(make_stream):
    with pytest.raises(InsufficientDataError):
        lambda_hat(make_stream([1.0], [1.0]))
    with pytest.raises(DegeneratePredictorError):
        lambda_hat(make_stream([0.0, 1.0, 2.0], [2.0, 2.0, 2.0]))


def test_cv_plus_with_independent_predictions_is_var_y(rng, make_stream):
    y = rng.normal(size=10_000)
    state = make_stream(y, rng.normal(size=10_000), buffered=False)
    nu = var_estimators(state, 0.0, VarianceFlavor.CV_PLUS, n_unlabelled=math.inf)
    assert nu == pytest.approx(state.s_yy / (state.n - 1), rel=0.01)


def test_cv_plus_with_perfect_predictions_vanishes(rng, make_stream):
    y = rng.normal(size=1000)
    state = make_stream(y, y, buffered=False)
    assert var_estimators(state, 0.0, "cv_plus", n_unlabelled=math.inf) == pytest.approx(0.0, abs=1e-12)


def test_cv_plus_limit_at_half_ratio(rng, make_stream):
    # rho^2 = 1/2, r = n/N = 1/2: nu -> var(Y) (1 - 0.5 * 0.5)
    n = 100_000
    y = rng.normal(size=n)
    state = make_stream(y, y + rng.normal(size=n), buffered=False)
    nu = var_estimators(state, 0.0, "cv_plus", n_unlabelled=2 * n)
    assert nu == pytest.approx(0.75, rel=0.02)


def test_cv_variance_formula():
    # S_YY = 10, S_YF = 4, S_FF = 5, S_FtFt = 20, n = 7, N = 11, lambda = 0.5
    expected = (10 - 2 * 0.5 * 4 + 0.25 * 5) / 5 + 7 * 0.25 * 20 / (11 * 10)
    assert cv_variance(7, 11, 10.0, 4.0, 5.0, 20.0, 0.5) == pytest.approx(expected, rel=1e-14)
    assert cv_variance(7, math.inf, 10.0, 4.0, 5.0, 20.0, 0.5) == pytest.approx(7.25 / 5, rel=1e-14)


def test_variance_preconditions():
    with pytest.raises(InsufficientDataError):
        cv_variance(2, 10, 1.0, 0.0, 1.0, 1.0, 1.0)
    with pytest.raises(InsufficientDataError):
        cv_variance(5, 1, 1.0, 0.0, 1.0, 1.0, 1.0)
    with pytest.raises(InvalidRatioError):
        cv_plus_variance(5, 4, 1.0, 0.0, 1.0, 0.5)


@pytest.mark.parametrize("sigma_y", [0.1, 0.8, 3.0])
def test_power_tuned_variance_never_exceeds_classical(rng, sigma_y):
    n = 100_000
    y = rng.standard_normal(n)
    f = y + sigma_y * rng.standard_normal(n)
    pool = rng.standard_normal(2 * n) + sigma_y * rng.standard_normal(2 * n)
    state = StreamState().extend(y, f).extend_unlabelled(pool)
    nu = cv_plus_variance(state.n, state.N, state.s_yy, state.s_yf, state.s_ff, lambda_hat(state))
    assert nu <= 1.02 * state.s_yy / (state.n - 1)
