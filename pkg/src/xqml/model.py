"""Hybrid classifier: linear layer, encoding, ansatz, one-qubit readout, sigmoid.

The quantum layer is evaluated in the Heisenberg picture: for a fixed set of
ansatz weights and an execution backend, the score operator is pulled back
through the (possibly noisy) ansatz once, after which every sample costs a
single quadratic form ``psi^dag O psi`` on its encoded state.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass

import numpy as np

from .devices import DeviceSpec, load_device_spec
from .layers import LayerSpec, build_ansatz, encoding_states, param_count
from .sim import circuit_unitary, evolve_batch, heisenberg, make_rng, score_observable
from .transpile import noise_schedule, transpile

SCHEMA_VERSION = 1
FD_STEP = 1e-4
SHIFT = math.pi / 2


class ModelFileError(ValueError):
    pass


def sigmoid(s):
    return 1.0 / (1.0 + np.exp(-np.asarray(s, dtype=float)))


# --- execution backends ------------------------------------------------------


MODES = ("noiseless", "topology", "noisy", "shots")


@dataclass(frozen=True, eq=False)
class ExecutionConfig:
    """How the quantum layer is executed.

    ``noiseless`` runs the ideal ansatz. ``topology`` transpiles it to
    ``device`` without noise. ``noisy`` adds the device noise schedule and
    readout error. ``shots`` samples ``shots`` outcomes per sample from the
    exact distribution, noisy when a device is given.
    """

    mode: str = "noiseless"
    device: DeviceSpec | None = None
    layout: tuple | None = None
    shots: int | None = None
    seed: int = 0
    route_seed: int = 0

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown execution mode {self.mode!r}; expected one of {MODES}")
        if self.mode in ("topology", "noisy") and self.device is None:
            raise ValueError(f"{self.mode} mode needs a device spec")
        if self.mode == "shots":
            if self.shots is None or int(self.shots) < 1:
                raise ValueError("shots mode needs a shot count >= 1")
        elif self.shots is not None:
            raise ValueError("shots only apply to shots mode")
        if isinstance(self.device, str):
            object.__setattr__(self, "device", load_device_spec(self.device))

    @classmethod
    def noiseless(cls):
        return cls("noiseless")

    @classmethod
    def topology(cls, device, layout=None, route_seed=0):
        return cls("topology", device, layout, route_seed=route_seed)

    @classmethod
    def noisy(cls, device, layout=None, route_seed=0):
        return cls("noisy", device, layout, route_seed=route_seed)

    @classmethod
    def sampled(cls, shots, seed=0, device=None, layout=None):
        return cls("shots", device, layout, shots=shots, seed=seed)

    @property
    def exact(self):
        return self.mode != "shots"

    @property
    def tag(self):
        if self.mode == "noiseless":
            return "noiseless"
        if self.mode == "shots":
            base = f"noisy:{self.device.name}" if self.device is not None else "noiseless"
            return f"{base}@{self.shots}shots"
        return f"{self.mode}:{self.device.name}"


# --- model -------------------------------------------------------------------


def _frozen(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


class HybridModel:
    """Immutable model: ``W`` (out x in), ``b``, encoding, ansatz and its weights."""

    def __init__(self, linear_w, linear_b, encoding, ansatz, quantum_weights, measured_qubit=0):
        self.linear_w = _frozen(linear_w)
        self.linear_b = _frozen(linear_b).ravel()
        self.quantum_weights = _frozen(quantum_weights).ravel()
        self.encoding = encoding
        self.ansatz = ansatz
        self.measured_qubit = int(measured_qubit)
        self._validate()

    def _validate(self):
        if self.encoding.trainable or not self.ansatz.trainable:
            raise ValueError("encoding must be an encoding layer and ansatz a trainable layer")
        n = self.ansatz.n_qubits
        if self.encoding.n_qubits != n:
            raise ValueError("encoding and ansatz act on different qubit counts")
        if not 0 <= self.measured_qubit < n:
            raise ValueError(f"measured qubit {self.measured_qubit} outside 0..{n - 1}")
        if self.linear_w.ndim != 2 or self.linear_w.shape[0] != self.out_dim:
            raise ValueError(f"linear weights must have shape ({self.out_dim}, in_dim)")
        if self.linear_b.shape != (self.out_dim,):
            raise ValueError(f"bias must have length {self.out_dim}")
        if self.quantum_weights.size != self.ansatz.param_count:
            raise ValueError(
                f"{self.ansatz.kind} needs {self.ansatz.param_count} weights, got {self.quantum_weights.size}"
            )
        for a in (self.linear_w, self.linear_b, self.quantum_weights):
            if not np.isfinite(a).all():
                raise ValueError("model weights must be finite")

    @property
    def n_qubits(self):
        return self.ansatz.n_qubits

    @property
    def out_dim(self):
        n = self.n_qubits
        return 1 << n if self.encoding.kind == "AmplitudeEmbedding" else n

    @property
    def in_dim(self):
        return self.linear_w.shape[1]

    @property
    def n_params(self):
        return self.linear_w.size + self.linear_b.size + self.quantum_weights.size

    def parameters(self):
        """Flat ``[W, b, quantum weights]``."""
        return np.concatenate([self.linear_w.ravel(), self.linear_b, self.quantum_weights])

    def with_parameters(self, flat):
        flat = np.asarray(flat, dtype=float).ravel()
        if flat.size != self.n_params:
            raise ValueError(f"expected {self.n_params} parameters, got {flat.size}")
        nw, nb = self.linear_w.size, self.linear_b.size
        return HybridModel(
            flat[:nw].reshape(self.linear_w.shape), flat[nw:nw + nb], self.encoding, self.ansatz,
            flat[nw + nb:], self.measured_qubit,
        )

    def with_quantum_weights(self, weights):
        return HybridModel(self.linear_w, self.linear_b, self.encoding, self.ansatz, weights, self.measured_qubit)

    def config(self):
        return {
            "in_dim": self.in_dim,
            "n_qubits": self.n_qubits,
            "encoding": {"kind": self.encoding.kind},
            "ansatz": {"kind": self.ansatz.kind, "n_layers": self.ansatz.n_layers},
            "measured_qubit": self.measured_qubit,
        }

    def __eq__(self, other):
        return (
            isinstance(other, HybridModel)
            and self.config() == other.config()
            and np.array_equal(self.parameters(), other.parameters())
        )

    def __repr__(self):
        return (
            f"HybridModel(in_dim={self.in_dim}, {self.encoding.kind}->{self.ansatz.kind}"
            f"x{self.ansatz.n_layers}, n_qubits={self.n_qubits}, params={self.n_params})"
        )


def init_model(in_dim=26, n_qubits=8, encoding="AmplitudeEmbedding", ansatz="SimplifiedTwoDesign",
               n_layers=3, measured_qubit=0, seed=0, weight_scale=0.1):
    """Seeded initial model.

    Linear weights are ``N(0, 1/in_dim)``. Angle encodings start with bias
    ``pi/2`` so every qubit sits where its rotation is most sensitive.
    Ansatz weights are ``N(0, weight_scale^2)``: near the identity, which
    keeps the single-qubit readout away from a flat landscape.
    """
    rng = make_rng(seed)
    enc = LayerSpec(encoding, n_qubits)
    ans = LayerSpec(ansatz, n_qubits, n_layers)
    out_dim = 1 << n_qubits if encoding == "AmplitudeEmbedding" else n_qubits
    w = rng.normal(scale=1 / math.sqrt(in_dim), size=(out_dim, in_dim))
    if encoding == "AmplitudeEmbedding":
        b = rng.normal(scale=1 / math.sqrt(in_dim), size=out_dim)
    else:
        b = np.full(out_dim, math.pi / 2)
    q = rng.normal(scale=weight_scale, size=param_count(ansatz, n_qubits, n_layers))
    return HybridModel(w, b, enc, ans, q, measured_qubit)


# --- quantum layer -----------------------------------------------------------


class QuantumLayer:
    """Score operator of one ansatz-weight setting on one backend.

    ``scores(states)`` gives ``s = 2 P(report 1) - 1`` for encoded input
    states on the virtual register. Noisy backends pull the score operator
    back through the noisy circuit once. Pure backends evolve small batches
    directly and only build the dense operator for batches wider than the
    state dimension.
    """

    def __init__(self, model, cfg, weights=None):
        weights = model.quantum_weights if weights is None else np.asarray(weights, dtype=float)
        n = model.n_qubits
        circ = build_ansatz(model.ansatz, weights)
        self.n_qubits = n
        self.perm = None
        self._observable = None
        noisy = cfg.mode == "noisy" or (cfg.mode == "shots" and cfg.device is not None)
        if cfg.mode == "noiseless" or (cfg.mode == "shots" and cfg.device is None):
            self.circuit = circ
            self.score = score_observable(n, model.measured_qubit).diagonal().real
            return
        t = transpile(circ, cfg.device, cfg.layout, seed=cfg.route_seed)
        if t.circuit.n_qubits != n:
            raise ValueError("layout must use exactly the model's qubit count")
        # virtual qubit v enters at compact position t.position(v, final=False)
        self.perm = tuple(t.position(v, final=False) for v in range(n))
        out_pos = t.position(model.measured_qubit, final=True)
        if noisy:
            nc = noise_schedule(t.circuit, cfg.device, t.physical)
            obs = heisenberg(nc, score_observable(n, out_pos, nc.readout_for(out_pos)))
            self.circuit = None
            self._observable = (obs + obs.conj().T) / 2
        else:
            self.circuit = t.circuit
            self.score = score_observable(n, out_pos).diagonal().real

    @property
    def observable(self):
        if self._observable is None:
            u = circuit_unitary(self.circuit)
            # U^dag diag(score) U
            self._observable = (u.conj().T * self.score) @ u
        return self._observable

    def place(self, states):
        """Move virtual-register amplitudes onto the compact device register."""
        if self.perm is None or self.perm == tuple(range(self.n_qubits)):
            return states
        b = states.shape[0]
        t = states.reshape((b,) + (2,) * self.n_qubits)
        # axis for virtual v goes to position perm[v]
        dest = [1 + p for p in self.perm]
        return np.moveaxis(t, list(range(1, self.n_qubits + 1)), dest).reshape(b, -1)

    def expect(self, states):
        psi = self.place(np.atleast_2d(states))
        if self._observable is None and psi.shape[0] <= psi.shape[1]:
            out = evolve_batch(self.circuit, psi)
            return (out.real ** 2 + out.imag ** 2) @ self.score
        return np.einsum("bi,bi->b", psi.conj() @ self.observable, psi).real

    def scores(self, states):
        # clip only removes rounding outside the physical range
        return np.clip(self.expect(states), -1.0, 1.0)


_LAYER_CACHE = {}


def quantum_layer(model, cfg, weights=None):
    """Cached :class:`QuantumLayer` (keyed on the backend object and the weight bytes)."""
    w = model.quantum_weights if weights is None else np.asarray(weights, dtype=float).ravel()
    key = (id(cfg), model.ansatz, model.measured_qubit, w.tobytes())
    hit = _LAYER_CACHE.get(key)
    if hit is not None and hit[0] is cfg:
        return hit[1]
    layer = QuantumLayer(model, cfg, w)
    if len(_LAYER_CACHE) >= 8:
        _LAYER_CACHE.pop(next(iter(_LAYER_CACHE)))
    _LAYER_CACHE[key] = (cfg, layer)
    return layer


def _features(model, x):
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    x = np.atleast_2d(x)
    if x.shape[1] != model.in_dim:
        raise ValueError(f"model expects {model.in_dim} features, got {x.shape[1]}")
    if not np.isfinite(x).all():
        raise ValueError("features must be finite")
    return x, single


def _linear(model, x):
    return x @ model.linear_w.T + model.linear_b


def scores(model, features, cfg=None):
    """Exact ``s = 2 P(report 1) - 1`` per sample (shot noise is not applied here)."""
    cfg = cfg or ExecutionConfig()
    x, _ = _features(model, features)
    layer = quantum_layer(model, cfg)
    return layer.scores(encoding_states(model.encoding, _linear(model, x)))


def forward(model, features, cfg=None):
    """Model output ``sigmoid(s)`` for one sample (scalar) or a batch (vector)."""
    cfg = cfg or ExecutionConfig()
    x, single = _features(model, features)
    s = scores(model, x, cfg)
    if cfg.mode == "shots":
        p1 = (1.0 + s) / 2
        ones = make_rng(cfg.seed).binomial(int(cfg.shots), np.clip(p1, 0.0, 1.0))
        s = 2.0 * ones / cfg.shots - 1.0
    out = sigmoid(s)
    return float(out[0]) if single else out


def predict(model, features, cfg=None):
    """Class 1 when the output is at least 0.5."""
    out = np.atleast_1d(forward(model, features, cfg))
    cls = (out >= 0.5).astype(np.int64)
    return int(cls[0]) if np.asarray(features).ndim == 1 else cls


def bce(outputs, labels):
    # imported lazily: training imports this module
    from .training import bce_loss
    return bce_loss(outputs, labels)


def _bce_grad(outputs, labels):
    from .training import bce_score_gradient
    return bce_score_gradient(outputs, labels)


def _score_jacobian(model, layer, z):
    """``ds/dz`` per sample by central differences with step ``FD_STEP``."""
    b, d = z.shape
    eye = np.eye(d) * FD_STEP
    plus = (z[:, None, :] + eye).reshape(-1, d)
    minus = (z[:, None, :] - eye).reshape(-1, d)
    sp = layer.expect(encoding_states(model.encoding, plus)).reshape(b, d)
    sm = layer.expect(encoding_states(model.encoding, minus)).reshape(b, d)
    return (sp - sm) / (2 * FD_STEP)


def gradient(model, features, labels, cfg=None, chunk=64):
    """Mean-BCE loss and its gradient over ``model.parameters()``.

    Ansatz weights use the parameter-shift rule; ``W`` and ``b`` use the chain
    rule with a finite-difference Jacobian of the quantum layer.
    """
    cfg = cfg or ExecutionConfig()
    if not cfg.exact:
        raise ValueError("gradients need an exact backend; shots mode cannot be trained")
    x, _ = _features(model, features)
    y_lab = np.asarray(labels, dtype=float).ravel()
    if y_lab.size != x.shape[0]:
        raise ValueError("features and labels differ in length")
    z = _linear(model, x)
    layer = quantum_layer(model, cfg)
    states = encoding_states(model.encoding, z)
    s = layer.expect(states)
    out = sigmoid(s)
    loss = bce(out, y_lab)
    g_s = _bce_grad(out, y_lab)  # dL/ds

    g_z = np.empty_like(z)
    for lo in range(0, z.shape[0], chunk):
        jac = _score_jacobian(model, layer, z[lo:lo + chunk])
        g_z[lo:lo + chunk] = g_s[lo:lo + chunk, None] * jac
    g_w = g_z.T @ x
    g_b = g_z.sum(axis=0)

    theta = model.quantum_weights
    g_q = np.empty_like(theta)
    for k in range(theta.size):
        diff = 0.0
        for sign in (1.0, -1.0):
            shifted = theta.copy()
            shifted[k] += sign * SHIFT
            lyr = QuantumLayer(model, cfg, shifted)
            diff = diff + sign * lyr.expect(states)
        g_q[k] = g_s @ (diff / 2)
    return loss, np.concatenate([g_w.ravel(), g_b, g_q])


def loss(model, features, labels, cfg=None):
    out = np.atleast_1d(forward(model, features, cfg))
    return bce(out, labels)


# --- persistence -------------------------------------------------------------


def _checksum(payload):
    body = {k: payload[k] for k in ("schema_version", "config", "linear_w", "linear_b", "quantum_weights")}
    return hashlib.sha256(json.dumps(body, sort_keys=True).encode()).hexdigest()


def model_to_dict(model):
    payload = {
        "schema_version": SCHEMA_VERSION,
        "config": model.config(),
        "linear_w": model.linear_w.tolist(),
        "linear_b": model.linear_b.tolist(),
        "quantum_weights": model.quantum_weights.tolist(),
    }
    payload["checksum"] = _checksum(payload)
    return payload


def save_model(model, path):
    with open(path, "w") as fh:
        json.dump(model_to_dict(model), fh, indent=1, sort_keys=True)
        fh.write("\n")


def model_from_dict(raw):
    required = ("schema_version", "config", "linear_w", "linear_b", "quantum_weights", "checksum")
    missing = [k for k in required if k not in raw]
    if missing:
        # never fall back to fresh weights: an untrained quantum layer must not run silently
        raise ModelFileError(f"model file lacks required field(s) {missing}; refusing to re-initialize")
    if raw["schema_version"] != SCHEMA_VERSION:
        raise ModelFileError(f"unsupported schema_version {raw['schema_version']!r}")
    if _checksum(raw) != raw["checksum"]:
        raise ModelFileError("model checksum mismatch: weights were modified or truncated")
    cfg = raw["config"]
    try:
        n = int(cfg["n_qubits"])
        enc = LayerSpec(cfg["encoding"]["kind"], n)
        ans = LayerSpec(cfg["ansatz"]["kind"], n, int(cfg["ansatz"]["n_layers"]))
        q = np.array(raw["quantum_weights"], dtype=float)
        if q.size != ans.param_count:
            raise ModelFileError(f"quantum_weights has {q.size} entries, {ans.kind} needs {ans.param_count}")
        model = HybridModel(raw["linear_w"], raw["linear_b"], enc, ans, q, cfg["measured_qubit"])
    except (KeyError, TypeError) as exc:
        raise ModelFileError(f"model config does not match the schema: {exc}") from None
    except ValueError as exc:
        raise ModelFileError(str(exc)) from None
    if model.in_dim != cfg.get("in_dim", model.in_dim):
        raise ModelFileError("in_dim does not match the linear weight shape")
    return model


def load_model(path):
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ModelFileError(f"{path}: not a model file ({exc})") from None
    if not isinstance(raw, dict):
        raise ModelFileError(f"{path}: not a model file")
    return model_from_dict(raw)
