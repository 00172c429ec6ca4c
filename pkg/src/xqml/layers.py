"""Data-encoding and trainable circuit layers.

Trainable layers take a flat weight vector; :func:`weight_shape` gives the
canonical shape each flat vector is reshaped to.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .sim import Circuit, Gate, QubitState

ENCODINGS = ("AngleX", "AngleY", "AmplitudeEmbedding")
ANSATZE = ("SimplifiedTwoDesign", "StronglyEntangling", "Bellman")
KINDS = ENCODINGS + ANSATZE


@dataclass(frozen=True)
class LayerSpec:
    kind: str
    n_qubits: int
    n_layers: int = 1

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown layer kind {self.kind!r}; expected one of {KINDS}")
        if self.n_qubits < 1:
            raise ValueError("n_qubits must be positive")
        if self.n_layers < 1:
            raise ValueError("n_layers must be at least 1")

    @property
    def trainable(self):
        return self.kind in ANSATZE

    @property
    def param_count(self):
        return param_count(self.kind, self.n_qubits, self.n_layers)


def param_count(kind, n_qubits, n_layers=1):
    """Number of trainable angles of a layer kind."""
    if kind in ENCODINGS:
        return 0
    if kind == "SimplifiedTwoDesign":
        return n_qubits + n_layers * 2 * (n_qubits - 1)
    if kind == "StronglyEntangling":
        return 3 * n_qubits * n_layers
    if kind == "Bellman":
        return n_qubits * n_layers
    raise ValueError(f"unknown layer kind {kind!r}")


def weight_shape(kind, n_qubits, n_layers=1):
    if kind == "SimplifiedTwoDesign":
        return {"init": (n_qubits,), "layers": (n_layers, 2 * (n_qubits - 1))}
    if kind == "StronglyEntangling":
        return {"layers": (n_layers, n_qubits, 3)}
    if kind == "Bellman":
        return {"layers": (n_layers, n_qubits)}
    raise ValueError(f"{kind!r} has no trainable weights")


# --- encodings ---------------------------------------------------------------


def angle_encoding(features, axis="Y"):
    """One ``RX(f_i)`` or ``RY(f_i)`` on qubit ``i``."""
    features = np.asarray(features, dtype=float).ravel()
    axis = axis.upper()
    if axis not in ("X", "Y"):
        raise ValueError("axis must be 'X' or 'Y'")
    if features.size < 1:
        raise ValueError("need at least one feature")
    name = "rx" if axis == "X" else "ry"
    return Circuit(features.size, [Gate(name, (i,), (f,)) for i, f in enumerate(features)])


def angle_state(features, axis="Y"):
    """Product state prepared by :func:`angle_encoding` from ``|0...0>``."""
    state = np.ones(1, dtype=complex)
    for f in np.asarray(features, dtype=float).ravel():
        c, s = math.cos(f / 2), math.sin(f / 2)
        q = np.array([c, s], dtype=complex) if axis.upper() == "Y" else np.array([c, -1j * s])
        state = np.kron(state, q)
    return state


def normalize_amplitudes(vector, n_qubits):
    """Zero-pad ``vector`` at the tail to ``2**n_qubits`` and L2-normalize it."""
    vec = np.asarray(vector).ravel()
    dim = 1 << n_qubits
    if vec.size > dim:
        raise ValueError(f"{vec.size} amplitudes do not fit into {n_qubits} qubits")
    dtype = complex if np.iscomplexobj(vec) else float
    padded = np.zeros(dim, dtype=dtype)
    padded[: vec.size] = vec
    norm = np.linalg.norm(padded)
    if not np.isfinite(norm) or norm < 1e-12:
        raise ValueError("cannot amplitude-embed a (near-)zero vector")
    return padded / norm


def _gray(i):
    return i ^ (i >> 1)


def _uniform_rotation(name, alphas, controls, target):
    """Uniformly controlled rotation decomposed into rotations and CNOTs."""
    k = len(controls)
    if k == 0:
        return [Gate(name, (target,), (alphas[0],))]
    size = 1 << k
    # theta = M^T alpha with M_ij = (-1)^(b_j . g_i) / 2^k
    m = np.array(
        [[(-1) ** bin(j & _gray(i)).count("1") for j in range(size)] for i in range(size)],
        dtype=float,
    ) / size
    thetas = m @ np.asarray(alphas, dtype=float)
    gates = []
    for i in range(size):
        gates.append(Gate(name, (target,), (thetas[i],)))
        # control flips where the Gray code changes; the last one closes the cycle
        changed = _gray(i) ^ _gray((i + 1) % size)
        bit = changed.bit_length() - 1
        gates.append(Gate("cnot", (controls[k - 1 - bit], target)))
    return gates


def amplitude_embedding(vector, n_qubits):
    """Mottonen state preparation of the padded, normalized ``vector``.

    The returned circuit maps ``|0...0>`` to the target state up to a global
    phase.
    """
    target = normalize_amplitudes(vector, n_qubits)
    mags = np.abs(target)
    phases = np.angle(target) if np.iscomplexobj(target) else np.where(target < 0, math.pi, 0.0)
    gates = []
    for k in range(n_qubits):
        # amplitude tree: angle splitting the weight of each prefix node
        span = 1 << (n_qubits - k)
        alphas = []
        for j in range(1 << k):
            block = mags[j * span:(j + 1) * span] ** 2
            total = block.sum()
            upper = block[span // 2:].sum()
            alphas.append(2 * math.asin(math.sqrt(min(upper / total, 1.0))) if total > 0 else 0.0)
        gates += _uniform_rotation("ry", alphas, list(range(k)), k)
    if np.any(np.abs(phases) > 1e-15):
        for k in range(n_qubits):
            span = 1 << (n_qubits - k)
            half = span // 2
            alphas = []
            for j in range(1 << k):
                block = phases[j * span:(j + 1) * span]
                alphas.append(float(np.sum(block[half:] - block[:half]) / half))
            gates += _uniform_rotation("rz", alphas, list(range(k)), k)
    return Circuit(n_qubits, gates)


def amplitude_state(vector, n_qubits):
    """Target state of :func:`amplitude_embedding` as a direct statevector."""
    return QubitState(normalize_amplitudes(vector, n_qubits).astype(complex))


# --- trainable layers --------------------------------------------------------


def _as_array(weights, shape, what):
    arr = np.asarray(weights, dtype=float)
    if arr.size != int(np.prod(shape)):
        raise ValueError(f"{what} expects {int(np.prod(shape))} weights {shape}, got {arr.shape}")
    return arr.reshape(shape)


def simplified_two_design(init_weights, layer_weights):
    """Initial RY layer, then per layer CZ(even pairs), RY(0..n-2), CZ(odd pairs), RY(1..n-1)."""
    init = np.asarray(init_weights, dtype=float).ravel()
    n = init.size
    if n < 1:
        raise ValueError("need at least one qubit")
    layers = np.asarray(layer_weights, dtype=float)
    if layers.ndim == 1 and layers.size % max(2 * (n - 1), 1) == 0 and n > 1:
        layers = layers.reshape(-1, 2 * (n - 1))
    if layers.ndim != 2 or layers.shape[1] != 2 * (n - 1):
        raise ValueError(f"layer weights must have shape (L, {2 * (n - 1)}), got {layers.shape}")
    gates = [Gate("ry", (q,), (w,)) for q, w in enumerate(init)]
    for row in layers:
        first, second = row[: n - 1], row[n - 1:]
        gates += [Gate("cz", (q, q + 1)) for q in range(0, n - 1, 2)]
        gates += [Gate("ry", (q,), (w,)) for q, w in zip(range(0, n - 1), first)]
        gates += [Gate("cz", (q, q + 1)) for q in range(1, n - 1, 2)]
        gates += [Gate("ry", (q,), (w,)) for q, w in zip(range(1, n), second)]
    return Circuit(n, gates)


def strongly_entangling(weights):
    """Per layer: ROT on every qubit, then the CZ chain (0,1), ..., (n-2,n-1)."""
    w = np.asarray(weights, dtype=float)
    if w.ndim != 3 or w.shape[2] != 3:
        raise ValueError(f"weights must have shape (L, n, 3), got {w.shape}")
    n = w.shape[1]
    gates = []
    for layer in w:
        gates += [Gate("rot", (q,), tuple(layer[q])) for q in range(n)]
        gates += [Gate("cz", (q, q + 1)) for q in range(n - 1)]
    return Circuit(n, gates)


def bellman_layer(weights, n_layers=None):
    """Per layer: H(0), CNOT cascade down, RY on every qubit, CNOT cascade up."""
    w = np.asarray(weights, dtype=float)
    if w.ndim == 1:
        w = w.reshape(1 if n_layers is None else n_layers, -1)
    if w.ndim != 2 or (n_layers is not None and w.shape[0] != n_layers):
        raise ValueError(f"weights must have shape (n_layers, n), got {w.shape}")
    n = w.shape[1]
    gates = []
    for row in w:
        gates.append(Gate("h", (0,)))
        gates += [Gate("cnot", (q, q + 1)) for q in range(n - 1)]
        gates += [Gate("ry", (q,), (a,)) for q, a in enumerate(row)]
        gates += [Gate("cnot", (q - 1, q)) for q in range(n - 1, 0, -1)]
    return Circuit(n, gates)


def build_ansatz(spec, weights):
    """Trainable circuit for ``spec`` from a flat weight vector."""
    if not spec.trainable:
        raise ValueError(f"{spec.kind} is not a trainable layer")
    flat = np.asarray(weights, dtype=float).ravel()
    if flat.size != spec.param_count:
        raise ValueError(f"{spec.kind} needs {spec.param_count} weights, got {flat.size}")
    n, L = spec.n_qubits, spec.n_layers
    if spec.kind == "SimplifiedTwoDesign":
        return simplified_two_design(flat[:n], flat[n:].reshape(L, 2 * (n - 1)))
    if spec.kind == "StronglyEntangling":
        return strongly_entangling(flat.reshape(L, n, 3))
    return bellman_layer(flat.reshape(L, n), L)


def encoding_circuit(spec, features):
    if spec.kind == "AmplitudeEmbedding":
        return amplitude_embedding(features, spec.n_qubits)
    return angle_encoding(features, spec.kind[-1])


def encoding_states(spec, batch):
    """Encoded input statevectors for a batch of layer inputs, shape ``(B, 2**n)``.

    Equivalent (up to global phase) to running :func:`encoding_circuit` on
    ``|0...0>``; built directly because it is applied once per sample.
    """
    batch = np.atleast_2d(np.asarray(batch, dtype=float))
    n = spec.n_qubits
    if spec.kind == "AmplitudeEmbedding":
        if batch.shape[1] > 1 << n:
            raise ValueError(f"{batch.shape[1]} amplitudes do not fit into {n} qubits")
        padded = np.zeros((batch.shape[0], 1 << n))
        padded[:, : batch.shape[1]] = batch
        norms = np.linalg.norm(padded, axis=1, keepdims=True)
        if (norms < 1e-12).any() or not np.isfinite(norms).all():
            raise ValueError("cannot amplitude-embed a (near-)zero vector")
        return (padded / norms).astype(complex)
    if batch.shape[1] != n:
        raise ValueError(f"angle encoding needs {n} features, got {batch.shape[1]}")
    half = batch / 2
    if spec.kind == "AngleY":
        q0, q1 = np.cos(half), np.sin(half) + 0j
    else:
        q0, q1 = np.cos(half) + 0j, -1j * np.sin(half)
    out = np.ones((batch.shape[0], 1), dtype=complex)
    for i in range(n):
        pair = np.stack([q0[:, i], q1[:, i]], axis=1)
        out = (out[:, :, None] * pair[:, None, :]).reshape(batch.shape[0], -1)
    return out
