import numpy as np
import pytest

from rlensemble.errors import ContractError, TrainingError, ValidationError
from rlensemble.forecasters import (
    ForecastPanel,
    ForecasterSpec,
    build_panel,
    default_specs,
    fit,
    load_model,
    predict_next,
    save_model,
)
from rlensemble.forecasters import gru
from rlensemble.forecasters.base import Scaler, lag_windows
from rlensemble.forecasters.crossfit import cross_fit
from rlensemble.forecasters.gru import GRUForecaster
from rlensemble.forecasters.registry import forecaster_class
from rlensemble.series import TimeSeries, block_split, synth_regimes

SMALL = {
    "ar-least-squares": {},
    "feedforward-net": {"hidden": [4, 4], "epochs": 30},
    "recurrent-net": {"hidden": 3, "epochs": 10},
    "bagged-trees": {"n_trees": 3, "max_depth": 3},
}


def small_specs(lag=3, seed=0):
    return [ForecasterSpec(kind, lag, hp, seed) for kind, hp in SMALL.items()]


def noisy_series(n=300, seed=0):
    rng = np.random.default_rng(seed)
    return 2.0 + np.sin(np.arange(n) / 5.0) + 0.1 * rng.normal(size=n)


def test_ar_recovers_line_coefficients():
    line = np.arange(1.0, 51.0)
    m = fit(ForecasterSpec("ar-least-squares", 2, {"intercept": False}), [line])
    assert np.allclose(m.coefficients, [2.0, -1.0], atol=1e-8)


def test_ar_with_intercept_still_predicts_a_line_exactly():
    line = np.arange(1.0, 51.0)
    m = fit(ForecasterSpec("ar-least-squares", 2), [line])
    assert predict_next(m, [50.0, 51.0]) == pytest.approx(52.0, abs=1e-8)


def test_ar_recovers_noiseless_ar3():
    phi = np.array([0.5, -0.3, 0.1])
    y = np.zeros(30)
    y[:3] = [1.0, -0.5, 0.25]
    for t in range(3, 30):
        y[t] = phi @ y[t - 3 : t][::-1]
    m = fit(ForecasterSpec("ar-least-squares", 3, {"intercept": False}), [y])
    assert np.allclose(m.coefficients, phi, atol=1e-6)


def test_ar_predict_next_example():
    cls = forecaster_class("ar-least-squares")
    m = cls(ForecasterSpec("ar-least-squares", 2, {"intercept": False}), np.array([2.0, -1.0]), 0.0)
    assert m.predict_next([4.0, 5.0]) == 6.0


def test_feedforward_learns_constant():
    c = 3.7
    m = fit(ForecasterSpec("feedforward-net", 5, {"epochs": 50}), [np.full(100, c)])
    X, _ = lag_windows([np.full(100, c)], 5)
    assert np.abs(m.predict_batch(X) - c).max() < 1e-3
    assert m.final_loss < 1e-6


def test_depth_zero_tree_predicts_target_mean():
    y = noisy_series(60)
    spec = ForecasterSpec("bagged-trees", 3, {"n_trees": 1, "max_depth": 0, "bootstrap": False})
    m = fit(spec, [y])
    _, targets = lag_windows([y], 3)
    rng = np.random.default_rng(0)
    out = m.predict_batch(rng.normal(size=(10, 3)))
    assert np.allclose(out, targets.mean(), rtol=0, atol=1e-12)


def test_gru_zero_input_weights_reduces_to_bias_path():
    H = 3
    rng = np.random.default_rng(2)
    theta = rng.normal(size=gru.n_params(H))
    p = gru.unpack(theta, H)
    for key in ("Wz", "Wr", "Wn", "Uz", "Ur", "Un"):
        p[key][...] = 0.0
    spec = ForecasterSpec("recurrent-net", 4, {"hidden": H})
    m = GRUForecaster(spec, theta, Scaler(0.0, 1.0))
    z = 1.0 / (1.0 + np.exp(-p["bz"]))
    r = 1.0 / (1.0 + np.exp(-p["br"]))
    n = np.tanh(p["bn"] + r * p["bhn"])
    h = n * (1.0 - z**4)
    expected = float(h @ p["wo"] + p["bo"])
    assert m.predict_next([0.0, 0.0, 0.0, 0.0]) == pytest.approx(expected, abs=1e-12)


@pytest.mark.parametrize("kind", list(SMALL))
def test_predict_next_is_pure_and_checks_history(kind):
    y = noisy_series()
    m = fit(ForecasterSpec(kind, 3, SMALL[kind]), [y[:150], y[150:]])
    h = y[-3:]
    assert m.predict_next(h) == m.predict_next(h)
    with pytest.raises(ContractError):
        m.predict_next(y[-2:])
    with pytest.raises(ContractError):
        m.predict_next([1.0, np.nan, 2.0])


@pytest.mark.parametrize("kind", list(SMALL))
def test_save_load_round_trip(tmp_path, kind):
    y = noisy_series()
    m = fit(ForecasterSpec(kind, 3, SMALL[kind], seed=4, name="m"), [y])
    save_model(m, tmp_path / "m.json")
    back = load_model(tmp_path / "m.json")
    X, _ = lag_windows([y], 3)
    assert np.array_equal(back.predict_batch(X), m.predict_batch(X))
    assert np.array_equal(back.predict_in_sample(X), m.predict_in_sample(X))


@pytest.mark.parametrize("kind", list(SMALL))
def test_training_is_deterministic(kind):
    y = noisy_series()
    a = fit(ForecasterSpec(kind, 3, SMALL[kind], seed=9), [y])
    b = fit(ForecasterSpec(kind, 3, SMALL[kind], seed=9), [y])
    X, _ = lag_windows([y], 3)
    assert np.array_equal(a.predict_batch(X), b.predict_batch(X))


def test_bagged_trees_invariant_to_row_order():
    y = noisy_series(200)
    X, t = lag_windows([y], 4)
    spec = ForecasterSpec("bagged-trees", 4, {"n_trees": 5, "max_depth": 4, "max_features": 2}, seed=3)
    cls = forecaster_class("bagged-trees")
    perm = np.random.default_rng(0).permutation(len(t))
    a = cls.fit_windows(spec, X, t)
    b = cls.fit_windows(spec, X[perm], t[perm])
    probe = np.random.default_rng(1).normal(2.0, 1.0, size=(50, 4))
    assert np.array_equal(a.predict_batch(probe), b.predict_batch(probe))


def test_bagged_trees_out_of_bag_differs_from_in_sample():
    y = noisy_series(200)
    X, t = lag_windows([y], 3)
    m = forecaster_class("bagged-trees").fit_windows(ForecasterSpec("bagged-trees", 3, {"n_trees": 10}), X, t)
    oob = m.predict_in_sample(X)
    full = m.predict_batch(X)
    assert np.mean((oob - t) ** 2) > np.mean((full - t) ** 2)


def test_fit_errors():
    with pytest.raises(TrainingError):
        fit(ForecasterSpec("ar-least-squares", 5), [np.ones(6)])
    with pytest.raises(ValidationError):
        fit(ForecasterSpec("recurrent-net", 2, {"bptt_window": 50}), [np.ones(30), np.ones(30)])
    with pytest.raises(ValidationError):
        ForecasterSpec("feedforward-net", 3, {"hidden": [4]})
    with pytest.raises(ValidationError):
        ForecasterSpec("bagged-trees", 3, {"trees": 4})
    with pytest.raises(ValidationError):
        ForecasterSpec("svm", 3)


def test_joint_fit_windows_never_cross_segments():
    X, y = lag_windows([np.array([1.0, 2.0, 3.0]), np.array([10.0, 20.0, 30.0])], 2)
    assert X.tolist() == [[1.0, 2.0], [10.0, 20.0]]
    assert y.tolist() == [3.0, 30.0]


def ar_model(coefs, name):
    spec = ForecasterSpec("ar-least-squares", len(coefs), {"intercept": False}, name=name)
    return forecaster_class(spec.kind)(spec, np.asarray(coefs, dtype=float), 0.0)


def test_build_panel_shape_and_definition():
    y = noisy_series(40)
    s = TimeSeries(y)
    models = [ar_model([0.5, 0.2], "a"), ar_model([1.0], "b")]
    panel = build_panel(models, s, [10, 11, 12])
    assert panel.predictions.shape == (2, 3)
    assert panel.model_names == ("a", "b")
    for k, t in enumerate([10, 11, 12]):
        for i, m in enumerate(models):
            hist = y[t - 1 - m.lag_order : t - 1]
            assert panel.predictions[i, k] == m.predict_next(hist)


def test_build_panel_rolls_over_missing_block():
    vals = np.array([1.0, 2.0, 3.0, 4.0, np.nan, np.nan, 7.0])
    s = TimeSeries(vals, 1, ((5, 6),))
    m = ar_model([0.5, 0.25], "a")
    panel = build_panel([m, ar_model([1.0], "b")], s, [5, 6, 7])
    p5 = 0.5 * 4.0 + 0.25 * 3.0
    p6 = 0.5 * p5 + 0.25 * 4.0
    p7 = 0.5 * p6 + 0.25 * p5
    assert panel.row("a").tolist() == [p5, p6, p7]
    assert panel.row("b").tolist() == [4.0, 4.0, 4.0]


def test_build_panel_errors():
    s = TimeSeries(noisy_series(20))
    with pytest.raises(ContractError):
        build_panel([ar_model([1.0, 0.0], "a"), ar_model([1.0], "b")], s, [2, 3])
    with pytest.raises(ContractError):
        ForecastPanel(np.ones((1, 3)), ("a",), [1, 2, 3])
    with pytest.raises(ContractError):
        ForecastPanel(np.ones((2, 2)), ("a", "b"), [2, 1])


@pytest.mark.parametrize("kind", list(SMALL))
def test_build_panel_is_finite_on_random_series(kind):
    y = noisy_series(120, seed=5)
    s = TimeSeries(y).with_missing_blocks([(50, 60), (100, 110)])
    m = fit(ForecasterSpec(kind, 3, SMALL[kind], name="x"), [y[:49], y[61:99]])
    panel = build_panel([m, ar_model([1.0], "naive")], s, range(4, 121))
    assert np.isfinite(panel.predictions).all()


def cross_fit_setup(seed=0):
    segs = [{"kind": "ar2", "coefficients": [0.6, -0.2], "innovation_std": 0.3, "offset": 2.0, "length": 100}] * 2
    s = synth_regimes(segs, seed)
    return s, block_split(s, 100, 10)


def test_cross_fit_shape_and_alignment():
    s, plan = cross_fit_setup()
    specs = [ForecasterSpec("ar-least-squares", 2, name="a"), ForecasterSpec("ar-least-squares", 3, name="b")]
    idx, out = cross_fit(specs, s, plan, 3)
    assert out.shape == (2, idx.size)
    # rows start after the largest lag order in each training segment
    assert idx.tolist() == list(range(4, 91)) + list(range(104, 191))
    assert np.isfinite(out).all()


def test_cross_fit_does_not_see_held_out_targets():
    s, plan = cross_fit_setup()
    spec = [ForecasterSpec("ar-least-squares", 2)]
    idx, base = cross_fit(spec, s, plan, 3)
    # position 15 lies in fold 0 of the first segment
    vals = s.values.copy()
    vals[14] += 5.0
    idx2, moved = cross_fit(spec, TimeSeries(vals), plan, 3)
    fold0 = (idx >= 3) & (idx <= 31)
    untouched = fold0 & ((idx < 15) | (idx > 17))
    assert np.array_equal(base[0, untouched], moved[0, untouched])
    assert not np.array_equal(base[0, ~fold0], moved[0, ~fold0])


def test_cross_fit_rejects_one_fold():
    s, plan = cross_fit_setup()
    with pytest.raises(ValidationError):
        cross_fit([ForecasterSpec("ar-least-squares", 2)], s, plan, 1)


def test_default_specs_are_the_four_kinds():
    names = [s.label for s in default_specs(0)]
    assert names == ["linear", "ann", "rnn", "forest"]
