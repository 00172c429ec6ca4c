import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import equal_up_to_phase
from xqml.layers import (
    LayerSpec, amplitude_embedding, amplitude_state, angle_encoding, angle_state, bellman_layer, build_ansatz,
    encoding_states, normalize_amplitudes, param_count, simplified_two_design, strongly_entangling,
    weight_shape,
)
from xqml.sim import QubitState, run_circuit


def test_parameter_counts():
    assert param_count("SimplifiedTwoDesign", 8, 3) == 8 + 3 * 14
    assert param_count("StronglyEntangling", 4, 2) == 24
    assert param_count("Bellman", 5, 3) == 15
    assert param_count("AmplitudeEmbedding", 8) == 0
    assert weight_shape("StronglyEntangling", 4, 2) == {"layers": (2, 4, 3)}
    with pytest.raises(ValueError):
        LayerSpec("Unknown", 2)
    with pytest.raises(ValueError):
        LayerSpec("Bellman", 2, 0)


@given(st.lists(st.floats(-6, 6), min_size=1, max_size=5), st.sampled_from(["X", "Y"]))
def test_angle_encoding_matches_product_state(features, axis):
    out = run_circuit(angle_encoding(features, axis)).data
    assert np.allclose(out, angle_state(features, axis), atol=1e-12)
    spec = LayerSpec("Angle" + axis, len(features))
    assert np.allclose(encoding_states(spec, [features])[0], out, atol=1e-12)


def test_angle_y_single_qubit_probability():
    out = run_circuit(angle_encoding([1.2], "Y")).data
    assert abs(out[1]) ** 2 == pytest.approx(math.sin(0.6) ** 2)


@pytest.mark.parametrize("seed", range(20))
def test_mottonen_reproduces_real_and_complex_targets(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 5))
    dim = 1 << n
    size = int(rng.integers(1, dim + 1))
    vec = rng.normal(size=size)
    if seed % 2:
        vec = vec + 1j * rng.normal(size=size)
    target = normalize_amplitudes(vec, n)
    out = run_circuit(amplitude_embedding(vec, n)).data
    assert equal_up_to_phase(out, target.astype(complex), 1e-10)


def test_amplitude_padding_and_errors():
    state = amplitude_state([3.0, 4.0], 2).data
    assert np.allclose(state, [0.6, 0.8, 0, 0])
    with pytest.raises(ValueError):
        normalize_amplitudes(np.zeros(4), 2)
    with pytest.raises(ValueError):
        normalize_amplitudes(np.ones(5), 2)


def test_amplitude_batch_states_are_normalized_inputs():
    rng = np.random.default_rng(1)
    batch = rng.normal(size=(6, 5))
    states = encoding_states(LayerSpec("AmplitudeEmbedding", 3), batch)
    assert np.allclose(np.linalg.norm(states, axis=1), 1)
    assert np.allclose(states[:, :5] * np.linalg.norm(batch, axis=1, keepdims=True), batch)


def test_simplified_two_design_structure():
    n, layers = 4, 2
    init = np.arange(n) * 0.1
    w = np.arange(layers * 2 * (n - 1)).reshape(layers, -1) * 0.01
    c = simplified_two_design(init, w)
    names = [g.name for g in c.gates]
    assert names[:n] == ["ry"] * n
    layer = names[n:n + 2 + 3 + 1 + 3]
    assert layer == ["cz", "cz", "ry", "ry", "ry", "cz", "ry", "ry", "ry"]
    cz = [g.qubits for g in c.gates if g.name == "cz"][:3]
    assert cz == [(0, 1), (2, 3), (1, 2)]
    assert sum(1 for g in c.gates if g.name == "ry") == param_count("SimplifiedTwoDesign", n, layers)


def test_strongly_entangling_and_bellman_structure():
    c = strongly_entangling(np.zeros((2, 3, 3)))
    assert [g.name for g in c.gates] == (["rot"] * 3 + ["cz"] * 2) * 2
    b = bellman_layer(np.zeros(4))
    assert [g.name for g in b.gates] == ["h"] + ["cnot"] * 3 + ["ry"] * 4 + ["cnot"] * 3
    assert [g.qubits for g in b.gates if g.name == "cnot"] == [(0, 1), (1, 2), (2, 3), (2, 3), (1, 2), (0, 1)]


def test_build_ansatz_checks_sizes():
    spec = LayerSpec("SimplifiedTwoDesign", 3, 2)
    c = build_ansatz(spec, np.zeros(spec.param_count))
    assert c.n_qubits == 3
    with pytest.raises(ValueError):
        build_ansatz(spec, np.zeros(spec.param_count + 1))
    with pytest.raises(ValueError):
        build_ansatz(LayerSpec("AngleY", 3), [])


def test_zero_weight_two_design_keeps_basis_populations():
    spec = LayerSpec("SimplifiedTwoDesign", 3, 2)
    c = build_ansatz(spec, np.zeros(spec.param_count))
    psi = amplitude_state([0.1, 0.5, -0.3, 0.2, 0.7], 3)
    out = run_circuit(c, psi).data
    assert np.allclose(np.abs(out), np.abs(psi.data))
