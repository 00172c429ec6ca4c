import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import sigmoid
from xqml.devices import load_device_spec
from xqml.layers import LayerSpec
from xqml.model import (
    ExecutionConfig, HybridModel, ModelFileError, forward, gradient, init_model, load_model, loss, predict,
    save_model, scores,
)
from xqml.training import bce_score_gradient

HEAVY = load_device_spec("heavy-hex-127")
FLAT = load_device_spec("all-to-all")
S_LO, S_HI = sigmoid(-1.0), sigmoid(1.0)


def angle_model(n=2, bias=None, weights=None, ansatz="SimplifiedTwoDesign"):
    spec = LayerSpec(ansatz, n, 1)
    w = np.zeros(spec.param_count) if weights is None else weights
    b = np.zeros(n) if bias is None else bias
    return HybridModel(np.zeros((n, 3)), b, LayerSpec("AngleY", n), spec, w)


def test_engineered_one_state_gives_sigmoid_one():
    m = angle_model(bias=[math.pi, 0.0])
    assert forward(m, np.zeros(3)) == pytest.approx(sigmoid(1.0), abs=1e-12)
    assert forward(m, np.zeros(3)) == pytest.approx(0.7311, abs=1e-4)
    assert predict(m, np.zeros(3)) == 1
    m0 = angle_model(bias=[0.0, 0.0])
    assert forward(m0, np.zeros(3)) == pytest.approx(0.2689, abs=1e-4)
    assert predict(m0, np.zeros(3)) == 0


def test_tie_goes_to_class_one():
    m = angle_model(bias=[math.pi / 2, 0.0])
    assert forward(m, np.zeros(3)) == pytest.approx(0.5, abs=1e-15)
    dev = load_device_spec("full-depolarizing")
    m = init_model(in_dim=4, n_qubits=3, n_layers=1, seed=1)
    out = forward(m, np.ones(4), ExecutionConfig.noisy(dev))
    assert out == 0.5
    assert predict(m, np.ones(4), ExecutionConfig.noisy(dev)) == 1


def test_input_validation():
    m = init_model(in_dim=4, n_qubits=3, n_layers=1)
    with pytest.raises(ValueError):
        forward(m, np.zeros(5))
    with pytest.raises(ValueError):
        ExecutionConfig("noisy")
    with pytest.raises(ValueError):
        ExecutionConfig.sampled(0)
    with pytest.raises(ValueError):
        gradient(m, np.zeros((1, 4)), [1], ExecutionConfig.sampled(100))
    with pytest.raises(ValueError):
        HybridModel(np.zeros((3, 2)), np.zeros(3), LayerSpec("AngleY", 3), LayerSpec("Bellman", 3), [0, 0])
    with pytest.raises(ValueError):
        HybridModel(np.zeros((2, 2)), np.zeros(2), LayerSpec("AngleY", 2), LayerSpec("Bellman", 2), [0, 0], 2)


def test_dimension_invariant():
    m = init_model(in_dim=26)
    assert m.out_dim == 256 and m.linear_w.shape == (256, 26)
    a = init_model(in_dim=5, n_qubits=4, encoding="AngleX", n_layers=1)
    assert a.out_dim == 4
    assert m.n_params == 256 * 26 + 256 + 8 + 3 * 14


@given(st.integers(0, 2**31), st.sampled_from(["noiseless", "noisy"]))
def test_outputs_stay_in_reachable_range(seed, mode):
    m = init_model(in_dim=3, n_qubits=3, n_layers=2, seed=seed, weight_scale=2.0)
    x = np.random.default_rng(seed).normal(scale=3, size=(8, 3))
    cfg = ExecutionConfig() if mode == "noiseless" else ExecutionConfig.noisy(HEAVY)
    out = forward(m, x, cfg)
    assert (out >= S_LO - 1e-12).all() and (out <= S_HI + 1e-12).all()


@pytest.mark.parametrize("encoding", ["AmplitudeEmbedding", "AngleY"])
@pytest.mark.parametrize("device", [FLAT, HEAVY])
def test_zero_noise_pipeline_matches_noiseless(encoding, device):
    m = init_model(in_dim=6, n_qubits=4, encoding=encoding, n_layers=2, seed=3, weight_scale=1.5)
    x = np.random.default_rng(0).normal(size=(20, 6))
    ref = forward(m, x)
    assert np.abs(forward(m, x, ExecutionConfig.topology(device)) - ref).max() < 1e-9
    if device is FLAT:
        assert np.abs(forward(m, x, ExecutionConfig.noisy(device)) - ref).max() < 1e-9


def test_nontrivial_layout_matches_noiseless():
    m = init_model(in_dim=6, n_qubits=3, n_layers=2, seed=3, weight_scale=1.5, measured_qubit=2)
    x = np.random.default_rng(0).normal(size=(10, 6))
    cfg = ExecutionConfig.topology(HEAVY, layout=(18, 14, 0))
    assert np.abs(forward(m, x, cfg) - forward(m, x)).max() < 1e-9


def test_noise_limits():
    m = init_model(in_dim=5, n_qubits=4, n_layers=2, seed=8, weight_scale=1.0)
    x = np.random.default_rng(2).normal(size=(30, 5))
    full = forward(m, x, ExecutionConfig.noisy("full-depolarizing"))
    assert np.abs(full - 0.5).max() < 1e-6
    relaxed = ExecutionConfig.noisy("strong-relaxation")
    assert (predict(m, x, relaxed) == 0).all()
    assert np.abs(scores(m, x, relaxed) + 1).max() < 1e-6


def test_shot_estimate_concentrates_on_exact_output():
    m = init_model(in_dim=5, n_qubits=3, n_layers=2, seed=5, weight_scale=1.0)
    x = np.random.default_rng(1).normal(size=(10, 5))
    shots = 10**6
    exact = forward(m, x)
    sampled = forward(m, x, ExecutionConfig.sampled(shots, seed=11))
    # binomial oracle: |dp| <= 6 sigma w.p. ~1 - 2e-9 per sample; sigmoid' <= 1/4 and s = 2p - 1
    bound = 0.25 * 2 * 6 * math.sqrt(0.25 / shots)
    assert bound < 0.01
    assert np.abs(sampled - exact).max() < bound
    again = forward(m, x, ExecutionConfig.sampled(shots, seed=11))
    assert np.array_equal(sampled, again)


def test_shift_rule_matches_explicit_evaluation():
    n = 3
    spec = LayerSpec("SimplifiedTwoDesign", n, 1)
    m = HybridModel(np.zeros((n, 2)), [0.3, -0.2, 0.5], LayerSpec("AngleY", n), spec, np.zeros(spec.param_count))
    x = np.zeros(2)
    for k in range(spec.param_count):
        def s(theta_k):
            w = np.zeros(spec.param_count)
            w[k] = theta_k
            return scores(m.with_quantum_weights(w), x)[0]
        _, g = gradient(m, x[None], [1.0])
        out = forward(m, x)
        # dL/ds for label 1 is (y - 1)
        expected = (out - 1.0) * (s(np.pi / 2) - s(-np.pi / 2)) / 2
        assert g[m.linear_w.size + n + k] == pytest.approx(expected, abs=1e-12)


def full_fd(m, x, y, h=1e-5):
    p = m.parameters()
    out = np.empty_like(p)
    for i in range(p.size):
        e = np.zeros_like(p)
        e[i] = h
        out[i] = (loss(m.with_parameters(p + e), x, y) - loss(m.with_parameters(p - e), x, y)) / (2 * h)
    return out


@pytest.mark.parametrize("encoding,ansatz", [
    ("AngleY", "SimplifiedTwoDesign"), ("AngleX", "Bellman"), ("AmplitudeEmbedding", "StronglyEntangling"),
])
def test_gradient_matches_finite_differences(encoding, ansatz):
    rng = np.random.default_rng(7)
    m = init_model(in_dim=3, n_qubits=4, encoding=encoding, ansatz=ansatz, n_layers=2, seed=2, weight_scale=1.0)
    x, y = rng.normal(size=(5, 3)), rng.integers(0, 2, 5)
    _, g = gradient(m, x, y)
    fd = full_fd(m, x, y)
    assert np.linalg.norm(g - fd) / np.linalg.norm(fd) < 1e-5


@pytest.mark.parametrize("cfg", [ExecutionConfig.noisy(HEAVY), ExecutionConfig.topology(HEAVY, layout=(18, 14, 0))],
                         ids=["noisy", "topology"])
def test_device_gradient_matches_finite_differences(cfg):
    rng = np.random.default_rng(9)
    m = init_model(in_dim=3, n_qubits=3, encoding="AngleY", n_layers=1, seed=4, weight_scale=1.0)
    x, y = rng.normal(size=(4, 3)), rng.integers(0, 2, 4)
    _, g = gradient(m, x, y, cfg)
    p = m.parameters()
    fd = np.empty_like(p)
    for i in range(p.size):
        e = np.zeros_like(p)
        e[i] = 1e-5
        fd[i] = (loss(m.with_parameters(p + e), x, y, cfg) - loss(m.with_parameters(p - e), x, y, cfg)) / 2e-5
    assert np.linalg.norm(g - fd) / np.linalg.norm(fd) < 1e-5


def test_bce_gradient_vanishes_at_exact_fit():
    labels = np.array([0.0, 1.0, 1.0])
    outputs = labels + np.array([1e-10, -1e-10, -5e-10])
    assert np.abs(bce_score_gradient(outputs, labels)).max() < 1e-6


def test_save_load_round_trip(tmp_path):
    m = init_model(in_dim=7, n_qubits=3, n_layers=2, seed=12, weight_scale=1.0)
    path = tmp_path / "m.json"
    save_model(m, path)
    back = load_model(path)
    assert back == m
    for a, b in zip((m.linear_w, m.linear_b, m.quantum_weights), (back.linear_w, back.linear_b, back.quantum_weights)):
        assert a.tobytes() == b.tobytes()
    x = np.random.default_rng(0).normal(size=(4, 7))
    assert np.abs(forward(m, x) - forward(back, x)).max() <= 1e-12
    raw = json.loads(path.read_text())
    assert set(raw) == {"schema_version", "config", "linear_w", "linear_b", "quantum_weights", "checksum"}


@pytest.mark.parametrize("edit,match", [
    (lambda r: r.pop("quantum_weights"), "quantum_weights"),
    (lambda r: r["quantum_weights"].__setitem__(0, 1.0), "checksum"),
    (lambda r: r.update(schema_version=7), "schema"),
    (lambda r: r.pop("checksum"), "checksum"),
])
def test_corrupted_model_files_refused(tmp_path, edit, match):
    m = init_model(in_dim=3, n_qubits=2, n_layers=1)
    path = tmp_path / "m.json"
    save_model(m, path)
    raw = json.loads(path.read_text())
    edit(raw)
    path.write_text(json.dumps(raw))
    with pytest.raises(ModelFileError, match=match):
        load_model(path)
