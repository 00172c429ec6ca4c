import math
import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from xqml.dataio import synthesize
from xqml.model import init_model
from xqml.training import (
    Adam, TrainConfig, TrainingError, bce_loss, rademacher, spsa_gains, spsa_minimize, spsa_step, train,
)


def small_model(seed=0, in_dim=4):
    return init_model(in_dim=in_dim, n_qubits=4, encoding="AngleY", ansatz="SimplifiedTwoDesign", n_layers=1,
                      seed=seed)


@pytest.fixture(scope="module")
def separable():
    return synthesize(120, 4, 8.0, seed=3)


def test_bce_values():
    assert bce_loss([0.5, 0.5, 0.5], [0, 1, 1]) == pytest.approx(math.log(2))
    assert bce_loss([0.7311], [1]) == pytest.approx(-math.log(0.7311))
    assert bce_loss([0.7311], [1]) == pytest.approx(0.3133, abs=1e-4)
    with pytest.raises(ValueError):
        bce_loss([0.5], [0, 1])


@given(st.lists(st.tuples(st.floats(0.01, 0.99), st.integers(0, 1)), min_size=1, max_size=20), st.randoms())
def test_bce_permutation_invariant(pairs, rnd):
    y, lab = zip(*pairs)
    order = list(range(len(y)))
    rnd.shuffle(order)
    assert bce_loss(y, lab) == pytest.approx(bce_loss([y[i] for i in order], [lab[i] for i in order]), rel=1e-12)


def test_bce_clamps_with_warning():
    with pytest.warns(RuntimeWarning):
        val = bce_loss([0.0, 1.0], [1, 0])
    assert val == pytest.approx(-math.log(1e-12))


def test_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(phase="noisy")
    with pytest.raises(ValueError):
        TrainConfig(lr=-1)
    with pytest.raises(ValueError):
        TrainConfig(epochs=0)
    with pytest.raises(ValueError):
        TrainConfig(optimizer="sgd")


def test_adam_first_step_is_lr_times_sign():
    opt = Adam(lr=0.1)
    out = opt.step(np.zeros(3), np.array([2.0, -0.5, 1e-3]))
    assert np.allclose(out, [-0.1, 0.1, -0.1], atol=1e-6)


def test_spsa_gain_sequences_and_perturbations():
    cks = [spsa_gains(k, 0.2, 0.1)[1] for k in range(1, 50)]
    aks = [spsa_gains(k, 0.2, 0.1)[0] for k in range(1, 50)]
    assert all(b < a for a, b in zip(cks, cks[1:]))
    assert all(b < a for a, b in zip(aks, aks[1:]))
    assert spsa_gains(8, 1.0, 1.0) == pytest.approx((8 ** -0.602, 8 ** -0.101))
    d = rademacher(1000, np.random.default_rng(0))
    assert set(np.unique(d)) == {-1.0, 1.0}
    with pytest.raises(ValueError):
        spsa_gains(0, 1, 1)


def test_spsa_converges_on_quadratic():
    optimum = np.array([1.0, -2.0, 0.5, 3.0])

    def f(x):
        return float(np.sum((x - optimum) ** 2) + 0.5 * (x[0] - optimum[0]) * (x[1] - optimum[1]))

    dists = [np.linalg.norm(spsa_minimize(f, np.zeros(4), 500, seed=s) - optimum) for s in range(10)]
    assert np.mean(dists) < 1e-2


def test_spsa_step_on_model(separable):
    m = small_model()
    cfg = TrainConfig(optimizer="spsa", seed=1)
    a = spsa_step(m, separable.features[:16], separable.labels[:16], 1, cfg)
    b = spsa_step(m, separable.features[:16], separable.labels[:16], 1, cfg)
    assert a == b and a != m
    diff = a.parameters() - m.parameters()
    # every coordinate moves by the same magnitude
    assert np.allclose(np.abs(diff), np.abs(diff[0]))


def test_adam_fits_separable_set(separable):
    best, hist = train(small_model(), separable, TrainConfig(epochs=40, lr=0.05, batch_size=16, seed=0))
    assert max(hist.accuracy) >= 0.95
    assert len(hist.loss) == len(hist.accuracy) == len(hist.seconds) == 40
    assert hist.best_epoch is not None


def test_loss_decreases_over_first_epochs(separable):
    _, hist = train(small_model(1), separable, TrainConfig(epochs=10, lr=0.01, batch_size=16, seed=2))
    for a, b in zip(hist.loss, hist.loss[1:]):
        assert b <= a + 1e-3


def test_zero_learning_rate_keeps_weights(separable):
    m = small_model()
    best, _ = train(m, separable, TrainConfig(epochs=1, lr=0.0))
    assert best == m


def test_training_is_deterministic(separable):
    cfg = TrainConfig(epochs=3, lr=0.05, batch_size=16, seed=5)
    a, ha = train(small_model(), separable, cfg)
    b, hb = train(small_model(), separable, cfg)
    assert a == b
    assert ha.loss == hb.loss and ha.accuracy == hb.accuracy and ha.val_loss == hb.val_loss


def test_topology_phase_matches_noiseless(separable):
    base = dict(epochs=3, lr=0.05, batch_size=16, seed=4)
    _, h0 = train(small_model(), separable, TrainConfig(**base))
    for dev in ("all-to-all", "heavy-hex-127"):
        _, h1 = train(small_model(), separable, TrainConfig(phase="topology", device=dev, **base))
        assert np.allclose(h0.loss, h1.loss, atol=1e-6, rtol=0)
    _, h2 = train(small_model(), separable, TrainConfig(phase="noisy", device="all-to-all", **base))
    assert np.allclose(h0.loss, h2.loss, atol=1e-6, rtol=0)


def test_noisy_phase_runs(separable):
    small = separable.subset(range(20))
    _, hist = train(small_model(), small, TrainConfig(phase="noisy", device="heavy-hex-127", epochs=1,
                                                      batch_size=20, lr=0.05))
    assert len(hist) == 1 and math.isfinite(hist.loss[0])


def test_spsa_training_runs(separable):
    _, hist = train(small_model(), separable, TrainConfig(optimizer="spsa", epochs=3, batch_size=16))
    assert len(hist) == 3


def test_early_stopping(separable):
    _, hist = train(small_model(), separable, TrainConfig(epochs=50, lr=0.5, batch_size=8, patience=2, seed=0))
    assert len(hist) < 50


def test_non_finite_loss_aborts(separable, monkeypatch):
    from xqml import model as hm

    def broken(*a, **k):
        return float("nan"), np.zeros(small_model().n_params)

    monkeypatch.setattr(hm, "gradient", broken)
    with pytest.raises(TrainingError, match="non-finite"):
        train(small_model(), separable, TrainConfig(epochs=1))


def test_history_csv(tmp_path, separable):
    _, hist = train(small_model(), separable, TrainConfig(epochs=2, lr=0.05))
    path = tmp_path / "h.csv"
    hist.to_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0] == "epoch,loss,accuracy,seconds"
    assert len(lines) == 3
    assert float(lines[1].split(",")[1]) == hist.loss[0]
