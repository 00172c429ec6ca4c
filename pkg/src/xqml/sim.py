"""Statevector and density-matrix simulation with Kraus-channel noise.

Conventions
-----------
* Qubit 0 is the most significant bit of a basis-state index, so
  ``|q0 q1 ... q_{n-1}>`` has index ``sum(q_i << (n - 1 - i))``.
* ``<Z>`` is +1 on ``|0>`` and -1 on ``|1>``.
* A density matrix on ``n`` qubits is processed as a ``2n``-qubit vector
  (row-major flattening), so row qubit ``q`` is register qubit ``q`` and column
  qubit ``q`` is register qubit ``n + q``. A unitary ``U`` then acts as
  ``U`` on the row qubits and ``conj(U)`` on the column qubits, and a channel
  ``{K_i}`` acts as the superoperator ``sum_i kron(K_i, conj(K_i))``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from itertools import product

import numpy as np

from .kernels import apply_diagonal, apply_matrix

MAX_QUBITS = 12
TOL = 1e-10

GATE_ARITY = {
    "h": 1, "x": 1, "sx": 1, "rx": 1, "ry": 1, "rz": 1, "rot": 1,
    "cnot": 2, "cz": 2, "ecr": 2, "swap": 2,
}
GATE_NPARAMS = {"rx": 1, "ry": 1, "rz": 1, "rot": 3}
_ALIASES = {"cx": "cnot"}

_I2 = np.eye(2, dtype=complex)
_X = np.array([[0, 1], [1, 0]], dtype=complex)
_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
_Z = np.array([[1, 0], [0, -1]], dtype=complex)
PAULIS = (_I2, _X, _Y, _Z)


def rx(theta):
    c, s = math.cos(theta / 2), math.sin(theta / 2)
    return np.array([[c, -1j * s], [-1j * s, c]], dtype=complex)


def ry(theta):
    c, s = math.cos(theta / 2), math.sin(theta / 2)
    return np.array([[c, -s], [s, c]], dtype=complex)


def rz(theta):
    return np.array([[np.exp(-0.5j * theta), 0], [0, np.exp(0.5j * theta)]], dtype=complex)


def rot(phi, theta, omega):
    """General rotation ``RZ(omega) RY(theta) RZ(phi)``."""
    return rz(omega) @ ry(theta) @ rz(phi)


_FIXED = {
    "h": np.array([[1, 1], [1, -1]], dtype=complex) / math.sqrt(2),
    "x": _X,
    "sx": 0.5 * np.array([[1 + 1j, 1 - 1j], [1 - 1j, 1 + 1j]], dtype=complex),
    "cnot": np.array(
        [[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=complex
    ),
    "cz": np.diag([1, 1, 1, -1]).astype(complex),
    # echoed cross-resonance, (XI - YX)/sqrt(2) with the first qubit as control
    "ecr": (np.kron(_X, _I2) - np.kron(_Y, _X)) / math.sqrt(2),
    "swap": np.array(
        [[1, 0, 0, 0], [0, 0, 1, 0], [0, 1, 0, 0], [0, 0, 0, 1]], dtype=complex
    ),
}
_PARAMETRIC = {"rx": rx, "ry": ry, "rz": rz, "rot": rot}
_DIAGONAL = {"rz", "cz"}


def gate_matrix(name, params=()):
    """Dense unitary of a gate kind."""
    if name in _PARAMETRIC:
        return _PARAMETRIC[name](*params)
    return _FIXED[name]


@dataclass(frozen=True)
class KrausChannel:
    """Completely positive trace-preserving map given by Kraus operators."""

    operators: tuple
    name: str = "kraus"

    def __post_init__(self):
        ops = tuple(np.asarray(k, dtype=complex) for k in self.operators)
        if not ops:
            raise ValueError("channel needs at least one Kraus operator")
        dim = ops[0].shape[0]
        if dim not in (2, 4) or any(k.shape != (dim, dim) for k in ops):
            raise ValueError("Kraus operators must be equal-size 2x2 or 4x4 matrices")
        total = sum(k.conj().T @ k for k in ops)
        if not np.allclose(total, np.eye(dim), atol=TOL, rtol=0):
            raise ValueError("channel is not trace preserving (sum K^dag K != I)")
        object.__setattr__(self, "operators", ops)

    @property
    def arity(self):
        return int(self.operators[0].shape[0]).bit_length() - 1

    @cached_property
    def superop(self):
        return sum(np.kron(k, k.conj()) for k in self.operators)

    @cached_property
    def is_identity(self):
        d = self.operators[0].shape[0]
        return bool(np.allclose(self.superop, np.eye(d * d), atol=1e-14, rtol=0))


def identity_channel(arity=1):
    return KrausChannel((np.eye(2**arity),), name="identity")


def depolarizing_channel(p, arity=1):
    """``rho -> (1 - p) rho + p I / 2**arity`` on ``arity`` qubits."""
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"depolarizing probability must be in [0, 1], got {p}")
    if arity not in (1, 2):
        raise ValueError("depolarizing arity must be 1 or 2")
    d2 = 4**arity
    ops = []
    for paulis in product(PAULIS, repeat=arity):
        op = paulis[0]
        for extra in paulis[1:]:
            op = np.kron(op, extra)
        weight = p / d2
        if not ops:
            weight += 1.0 - p
        if weight > 0.0:
            ops.append(math.sqrt(weight) * op)
    return KrausChannel(tuple(ops), name="depolarizing")


def thermal_relaxation_channel(t1, t2, duration, excited_population=0.0):
    """Amplitude damping toward equilibrium combined with pure dephasing.

    Populations relax as ``exp(-duration / t1)`` toward ``excited_population``
    in ``|1>``; coherences decay as ``exp(-duration / t2)``.
    """
    if t1 <= 0 or t2 <= 0:
        raise ValueError("t1 and t2 must be positive")
    if duration < 0:
        raise ValueError("duration must be non-negative")
    if t2 > 2 * t1 * (1 + 1e-12):
        raise ValueError(f"t2 ({t2}) must not exceed 2*t1 ({2 * t1})")
    if not 0.0 <= excited_population <= 1.0:
        raise ValueError("excited_population must be in [0, 1]")
    if duration == 0:
        return identity_channel(1)
    gamma = -math.expm1(-duration / t1)
    keep = math.sqrt(1.0 - gamma)
    lam = min(1.0, math.exp(-duration / t2 + duration / (2 * t1)))
    pe = excited_population
    g = math.sqrt(gamma)
    damping = [
        math.sqrt(1 - pe) * np.array([[1, 0], [0, keep]], dtype=complex),
        math.sqrt(1 - pe) * np.array([[0, g], [0, 0]], dtype=complex),
        math.sqrt(pe) * np.array([[keep, 0], [0, 1]], dtype=complex),
        math.sqrt(pe) * np.array([[0, 0], [g, 0]], dtype=complex),
    ]
    dephasing = [math.sqrt((1 + lam) / 2) * _I2, math.sqrt((1 - lam) / 2) * _Z]
    ops = [p @ a for p in dephasing for a in damping]
    ops = [k for k in ops if np.linalg.norm(k) > 1e-15]
    return KrausChannel(tuple(ops), name="thermal_relaxation")


@dataclass(frozen=True)
class Gate:
    """A gate on ``qubits`` followed by optional noise ``(channel, targets)`` pairs."""

    name: str
    qubits: tuple
    params: tuple = ()
    noise: tuple = field(default=(), compare=False)

    def __post_init__(self):
        name = _ALIASES.get(self.name.lower(), self.name.lower())
        if name not in GATE_ARITY:
            raise ValueError(f"unknown gate kind {self.name!r}")
        qubits = tuple(int(q) for q in self.qubits)
        params = tuple(float(p) for p in self.params)
        if len(qubits) != GATE_ARITY[name]:
            raise ValueError(f"{name} acts on {GATE_ARITY[name]} qubit(s), got {qubits}")
        if len(set(qubits)) != len(qubits):
            raise ValueError(f"gate targets must be distinct, got {qubits}")
        if any(q < 0 for q in qubits):
            raise ValueError("negative qubit index")
        if len(params) != GATE_NPARAMS.get(name, 0):
            raise ValueError(
                f"{name} takes {GATE_NPARAMS.get(name, 0)} parameter(s), got {len(params)}"
            )
        object.__setattr__(self, "name", name)
        object.__setattr__(self, "qubits", qubits)
        object.__setattr__(self, "params", params)
        object.__setattr__(self, "noise", tuple(self.noise))

    @property
    def matrix(self):
        return gate_matrix(self.name, self.params)

    def inverse(self):
        if self.name in ("rx", "ry", "rz"):
            return [Gate(self.name, self.qubits, (-self.params[0],))]
        if self.name == "rot":
            phi, theta, omega = self.params
            return [Gate("rot", self.qubits, (-omega, -theta, -phi))]
        if self.name == "sx":
            q = self.qubits
            return [Gate("rz", q, (math.pi,)), Gate("sx", q), Gate("rz", q, (math.pi,))]
        return [Gate(self.name, self.qubits)]

    def without_noise(self):
        return Gate(self.name, self.qubits, self.params)


@dataclass(frozen=True)
class Circuit:
    """Ordered gate list on ``n_qubits`` with optional readout confusion tags."""

    n_qubits: int
    gates: tuple = ()
    readout: tuple = ()  # ((qubit, 2x2 confusion), ...)

    def __post_init__(self):
        if self.n_qubits < 1:
            raise ValueError("circuit needs at least one qubit")
        gates = tuple(self.gates)
        for g in gates:
            if max(g.qubits) >= self.n_qubits:
                raise ValueError(f"gate {g.name} on {g.qubits} exceeds {self.n_qubits} qubits")
        object.__setattr__(self, "gates", gates)
        object.__setattr__(self, "readout", tuple(self.readout))

    def __len__(self):
        return len(self.gates)

    def __iter__(self):
        return iter(self.gates)

    def __add__(self, other):
        if other.n_qubits != self.n_qubits:
            raise ValueError("cannot concatenate circuits of different width")
        return Circuit(self.n_qubits, self.gates + other.gates, self.readout + other.readout)

    def inverse(self):
        gates = [h for g in reversed(self.gates) for h in g.inverse()]
        return Circuit(self.n_qubits, gates)

    def without_noise(self):
        return Circuit(self.n_qubits, [g.without_noise() for g in self.gates])

    @property
    def has_noise(self):
        return any(not ch.is_identity for g in self.gates for ch, _ in g.noise)

    def readout_for(self, qubit):
        for q, conf in self.readout:
            if q == qubit:
                return np.asarray(conf, dtype=float)
        return None


class QubitState:
    """Pure (statevector) or mixed (density matrix) state of ``n_qubits``.

    Instances are treated as immutable: the underlying array is read-only and
    every operation returns a new state.
    """

    __slots__ = ("n_qubits", "data")

    def __init__(self, data, n_qubits=None, check=True):
        data = np.array(data, dtype=complex)
        if data.ndim not in (1, 2):
            raise ValueError("state must be a vector or a square matrix")
        dim = data.shape[0]
        n = int(dim).bit_length() - 1
        if dim != 1 << n or (data.ndim == 2 and data.shape != (dim, dim)):
            raise ValueError("state dimension must be a power of two")
        if n_qubits is not None and n != n_qubits:
            raise ValueError(f"state has {n} qubits, expected {n_qubits}")
        if not 1 <= n <= MAX_QUBITS:
            raise ValueError(f"supported register size is 1..{MAX_QUBITS} qubits")
        if check:
            _validate(data)
        data.setflags(write=False)
        self.n_qubits = n
        self.data = data

    @property
    def is_pure(self):
        return self.data.ndim == 1

    def density_matrix(self):
        if self.is_pure:
            return np.outer(self.data, self.data.conj())
        return self.data

    def to_mixed(self):
        return self if not self.is_pure else QubitState(self.density_matrix(), check=False)

    def probabilities(self):
        if self.is_pure:
            return np.abs(self.data) ** 2
        return np.clip(np.real(np.diag(self.data)), 0.0, None)

    def __repr__(self):
        kind = "pure" if self.is_pure else "mixed"
        return f"QubitState({kind}, n_qubits={self.n_qubits})"


def _validate(data):
    if data.ndim == 1:
        norm = float(np.vdot(data, data).real)
        if abs(norm - 1.0) > TOL:
            raise ValueError(f"statevector norm^2 is {norm}, expected 1")
        return
    if abs(np.trace(data) - 1.0) > TOL:
        raise ValueError("density matrix trace must be 1")
    if not np.allclose(data, data.conj().T, atol=TOL, rtol=0):
        raise ValueError("density matrix must be Hermitian")
    if np.linalg.eigvalsh(data).min() < -1e-9:
        raise ValueError("density matrix must be positive semidefinite")


def zero_state(n_qubits, mixed=False):
    vec = np.zeros(1 << n_qubits, dtype=complex)
    vec[0] = 1.0
    state = QubitState(vec, check=False)
    return state.to_mixed() if mixed else state


def basis_state(bits):
    n = len(bits)
    vec = np.zeros(1 << n, dtype=complex)
    vec[int("".join(str(int(b)) for b in bits), 2)] = 1.0
    return QubitState(vec, check=False)


def maximally_mixed(n_qubits):
    dim = 1 << n_qubits
    return QubitState(np.eye(dim, dtype=complex) / dim, check=False)


def _check_targets(targets, n_qubits):
    for q in targets:
        if not 0 <= q < n_qubits:
            raise ValueError(f"qubit {q} out of range for {n_qubits}-qubit state")


def _apply_unitary_vec(vec, name, params, qubits, n):
    if name in _DIAGONAL:
        return apply_diagonal(vec, np.ascontiguousarray(np.diag(gate_matrix(name, params))), qubits, n)
    return apply_matrix(vec, gate_matrix(name, params), qubits, n)


def _apply_unitary_rho(flat, mat, qubits, n, diagonal=False):
    cols = [q + n for q in qubits]
    if diagonal:
        d = np.ascontiguousarray(np.diag(mat))
        flat = apply_diagonal(flat, d, list(qubits), 2 * n)
        return apply_diagonal(flat, d.conj(), cols, 2 * n)
    flat = apply_matrix(flat, np.ascontiguousarray(mat), list(qubits), 2 * n)
    return apply_matrix(flat, np.ascontiguousarray(mat.conj()), cols, 2 * n)


def apply_gate(state, gate):
    """Apply a gate's unitary (its noise attachments are ignored here)."""
    _check_targets(gate.qubits, state.n_qubits)
    n = state.n_qubits
    if state.is_pure:
        out = _apply_unitary_vec(state.data, gate.name, gate.params, gate.qubits, n)
        return QubitState(out, check=False)
    flat = _apply_unitary_rho(
        state.data.reshape(-1), gate.matrix, gate.qubits, n, gate.name in _DIAGONAL
    )
    return QubitState(flat.reshape(state.data.shape), check=False)


def apply_channel(state, channel, targets):
    """``rho -> sum_i K_i rho K_i^dag`` on ``targets``; pure input is promoted."""
    targets = tuple(int(t) for t in targets)
    if len(targets) != channel.arity:
        raise ValueError(f"channel arity {channel.arity} does not match targets {targets}")
    if len(set(targets)) != len(targets):
        raise ValueError("channel targets must be distinct")
    _check_targets(targets, state.n_qubits)
    n = state.n_qubits
    rho = state.to_mixed().data
    doubled = list(targets) + [t + n for t in targets]
    flat = apply_matrix(rho.reshape(-1), np.ascontiguousarray(channel.superop), doubled, 2 * n)
    return QubitState(flat.reshape(rho.shape), check=False)


def probability_one(state, qubit):
    """Exact probability of measuring ``|1>`` on ``qubit``."""
    _check_targets([qubit], state.n_qubits)
    probs = state.probabilities().reshape((2,) * state.n_qubits)
    return float(np.clip(np.moveaxis(probs, qubit, 0)[1].sum(), 0.0, 1.0))


def expectation_z(state, qubit):
    """``<Z>`` of one qubit, +1 for ``|0>``."""
    return 1.0 - 2.0 * probability_one(state, qubit)


@dataclass(frozen=True)
class ShotCounts:
    """Measurement outcome counts keyed by bitstring."""

    counts: dict
    shots: int

    def __post_init__(self):
        if self.shots < 1:
            raise ValueError("shots must be positive")
        if any(c < 0 for c in self.counts.values()):
            raise ValueError("counts must be non-negative")
        if sum(self.counts.values()) != self.shots:
            raise ValueError("counts must sum to the number of shots")

    @property
    def p1(self):
        return self.counts.get("1", 0) / self.shots


def make_rng(seed):
    """Seedable, splittable generator (``rng.spawn`` gives independent streams)."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(np.random.SeedSequence(seed))


def sample_p1(p1, shots, seed):
    """Draw single-qubit outcome counts for a known ``P(1)``."""
    if shots < 1:
        raise ValueError("shots must be at least 1")
    ones = int(make_rng(seed).binomial(shots, min(max(p1, 0.0), 1.0)))
    counts = {b: c for b, c in (("0", shots - ones), ("1", ones)) if c}
    return ShotCounts(counts, shots)


def sample_shots(state, qubit, shots, seed):
    """Sample measurement outcomes of ``qubit`` from its exact marginal."""
    return sample_p1(probability_one(state, qubit), shots, seed)


def check_confusion(confusion):
    conf = np.asarray(confusion, dtype=float)
    if conf.shape != (2, 2):
        raise ValueError("confusion matrix must be 2x2")
    if (conf < 0).any() or not np.allclose(conf.sum(axis=1), 1.0, atol=TOL, rtol=0):
        raise ValueError("confusion matrix must be row-stochastic")
    return conf


def apply_readout_error(outcome, confusion, seed=None):
    """Push a measured distribution through ``confusion[true, reported]``.

    ``outcome`` is either a probability pair ``(p0, p1)`` (exact result) or a
    :class:`ShotCounts` (resampled per shot using ``seed``).
    """
    conf = check_confusion(confusion)
    if isinstance(outcome, ShotCounts):
        rng = make_rng(seed)
        out = np.zeros(2, dtype=int)
        for bit in (0, 1):
            n = outcome.counts.get(str(bit), 0)
            if n:
                out += rng.multinomial(n, conf[bit])
        counts = {str(b): int(c) for b, c in enumerate(out) if c}
        return ShotCounts(counts, outcome.shots)
    probs = np.asarray(outcome, dtype=float)
    if probs.shape != (2,):
        raise ValueError("probability form must be a pair (p0, p1)")
    return probs @ conf


# ---------------------------------------------------------------------------
# whole-circuit execution


def embed_operator(op, sub_targets, frame):
    """Express ``op`` on ``sub_targets`` as a matrix on the ordered qubit ``frame``."""
    frame = list(frame)
    sub = list(sub_targets)
    if sub == frame:
        return op
    rest = [q for q in frame if q not in sub]
    k, m = len(sub), len(frame)
    full = _kron(op, np.eye(1 << (m - k), dtype=complex)).reshape((2,) * (2 * m))
    order = sub + rest
    perm = [order.index(q) for q in frame]
    full = full.transpose(perm + [m + p for p in perm])
    return full.reshape(1 << m, 1 << m)


def _kron(a, b):
    # np.kron without its generic-shape overhead; square 2-D inputs only
    ra, rb = a.shape[0], b.shape[0]
    return (a[:, None, :, None] * b[None, :, None, :]).reshape(ra * rb, ra * rb)


def _superop_of(mat):
    return _kron(mat, mat.conj())


def _embed_superop(sup, sub_targets, frame):
    """Embed a superoperator on ``sub_targets`` into ``frame`` (row and column parts)."""
    if list(sub_targets) == list(frame):
        return sup
    doubled_frame = list(frame) + [("c", q) for q in frame]
    doubled_sub = list(sub_targets) + [("c", q) for q in sub_targets]
    return embed_operator(sup, doubled_sub, doubled_frame)


@dataclass(frozen=True)
class _Op:
    matrix: np.ndarray  # dense matrix, or diagonal when ``diagonal``
    targets: tuple  # register qubits on the doubled (2n) register
    diagonal: bool = False

    def adjoint(self):
        m = self.matrix.conj() if self.diagonal else np.ascontiguousarray(self.matrix.conj().T)
        return _Op(m, self.targets, self.diagonal)


class _Block:
    """Fused piece of a circuit on ``frame``: a unitary, or a superoperator once noisy."""

    __slots__ = ("frame", "unitary", "superop")

    def __init__(self, frame, unitary=None, superop=None):
        self.frame = tuple(frame)
        self.unitary = unitary
        self.superop = superop

    def as_superop(self, frame):
        sup = _superop_of(self.unitary) if self.superop is None else self.superop
        return _embed_superop(sup, self.frame, frame)

    def then(self, later, frame):
        """Block for ``self`` followed by ``later`` on the (super)set ``frame``."""
        if self.superop is None and later.superop is None:
            u1 = self.unitary if self.frame == tuple(frame) else embed_operator(self.unitary, self.frame, list(frame))
            u2 = later.unitary if later.frame == tuple(frame) else embed_operator(later.unitary, later.frame, list(frame))
            return _Block(frame, unitary=u2 @ u1)
        return _Block(frame, superop=later.as_superop(list(frame)) @ self.as_superop(list(frame)))


def _gate_blocks(circuit):
    for g in circuit.gates:
        yield _Block(g.qubits, unitary=g.matrix)
        for ch, t in g.noise:
            if not ch.is_identity:
                yield _Block(t, superop=ch.superop)


def _fuse(blocks):
    out = []
    last = {}
    for b in blocks:
        frame = set(b.frame)
        owners = {last.get(q) for q in b.frame}
        # fold into the single preceding block that owns all of our qubits
        if len(owners) == 1 and None not in owners:
            i = owners.pop()
            if frame <= set(out[i].frame):
                out[i] = out[i].then(b, out[i].frame)
                continue
        # absorb preceding blocks that live entirely inside our frame
        for q in b.frame:
            i = last.get(q)
            if i is None or out[i] is None:
                continue
            prev = out[i]
            if set(prev.frame) <= frame and all(last.get(p) == i for p in prev.frame):
                b = prev.then(b, b.frame)
                out[i] = None
        for q in b.frame:
            last[q] = len(out)
        out.append(b)
    return [b for b in out if b is not None]


def compile_density_ops(circuit, fuse=True):
    """Lower a (possibly noisy) circuit to steps on the doubled register.

    Gates and their noise channels are fused into blocks of at most two
    qubits. Unitary blocks become row/column passes (diagonal when possible);
    noisy blocks become one superoperator on the doubled frame.
    """
    n = circuit.n_qubits
    blocks = list(_gate_blocks(circuit))
    if fuse:
        blocks = _fuse(blocks)
    ops = []
    for b in blocks:
        rows = tuple(b.frame)
        cols = tuple(q + n for q in b.frame)
        if b.superop is None:
            u = b.unitary
            if np.count_nonzero(u - np.diag(np.diag(u))) == 0:
                d = np.ascontiguousarray(np.diag(u))
                ops.append(_Op(d, rows, True))
                ops.append(_Op(d.conj(), cols, True))
            else:
                ops.append(_Op(np.ascontiguousarray(u), rows))
                ops.append(_Op(np.ascontiguousarray(u.conj()), cols))
        else:
            ops.append(_Op(np.ascontiguousarray(b.superop), rows + cols))
    return ops


def _run_ops(flat, ops, width):
    for op in ops:
        if op.diagonal:
            flat = apply_diagonal(flat, op.matrix, list(op.targets), width)
        else:
            flat = apply_matrix(flat, op.matrix, list(op.targets), width)
    return flat


def run_circuit(circuit, state=None, mixed=None):
    """Simulate ``circuit`` from ``state`` (default ``|0...0>``).

    Noiseless circuits on pure input stay pure unless ``mixed=True``; any
    non-trivial noise attachment switches to the density-matrix path.
    """
    n = circuit.n_qubits
    if state is None:
        state = zero_state(n)
    if state.n_qubits != n:
        raise ValueError("state width does not match circuit")
    if mixed is None:
        mixed = circuit.has_noise or not state.is_pure
    if not mixed:
        vec = state.data
        for g in circuit.gates:
            vec = _apply_unitary_vec(vec, g.name, g.params, g.qubits, n)
        return QubitState(vec, check=False)
    rho = state.to_mixed().data
    flat = _run_ops(rho.reshape(-1), compile_density_ops(circuit), 2 * n)
    return QubitState(flat.reshape(rho.shape), check=False)


def evolve_batch(circuit, states):
    """Apply the noiseless part of ``circuit`` to each row of ``states`` (B x 2**n)."""
    n = circuit.n_qubits
    states = np.asarray(states, dtype=complex)
    b = states.shape[0]
    if states.shape != (b, 1 << n):
        raise ValueError("states must have shape (batch, 2**n_qubits)")
    # the padded batch index acts as extra leading qubits the gates never touch
    kb = max(b - 1, 0).bit_length()
    flat = np.zeros((1 << kb) << n, dtype=complex)
    flat[: b << n] = states.reshape(-1)
    for g in circuit.gates:
        flat = _apply_unitary_vec(flat, g.name, g.params, [q + kb for q in g.qubits], n + kb)
    return flat[: b << n].reshape(b, 1 << n)


def heisenberg(circuit, observable, ops=None):
    """Adjoint-propagate ``observable`` through ``circuit``: returns ``E^dag(O)``.

    For any input ``rho``, ``Tr(O E(rho)) == Tr(E^dag(O) rho)``.
    """
    n = circuit.n_qubits
    obs = np.asarray(observable, dtype=complex)
    if obs.shape != (1 << n, 1 << n):
        raise ValueError("observable shape does not match circuit width")
    if ops is None:
        ops = compile_density_ops(circuit)
    adj = [op.adjoint() for op in reversed(ops)]
    flat = _run_ops(np.ascontiguousarray(obs).reshape(-1), adj, 2 * n)
    return flat.reshape(obs.shape)


def circuit_unitary(circuit):
    """Dense unitary of the noiseless part of ``circuit``."""
    n = circuit.n_qubits
    # U acting on the row qubits of the identity gives U itself
    flat = np.eye(1 << n, dtype=complex).reshape(-1)
    for g in circuit.gates:
        flat = _apply_unitary_vec(flat, g.name, g.params, g.qubits, 2 * n)
    return flat.reshape(1 << n, 1 << n)


def z_observable(n_qubits, qubit):
    diag = np.ones(1 << n_qubits)
    idx = np.arange(1 << n_qubits)
    diag[(idx >> (n_qubits - 1 - qubit)) & 1 == 1] = -1.0
    return np.diag(diag).astype(complex)


def score_observable(n_qubits, qubit, confusion=None):
    """Operator whose expectation is ``2 P(report 1) - 1`` on ``qubit``.

    Without readout error this is ``-Z``; with ``confusion[true, reported]``
    the reported probability is ``P0 c01 + P1 c11``.
    """
    conf = np.eye(2) if confusion is None else check_confusion(confusion)
    idx = np.arange(1 << n_qubits)
    bit = (idx >> (n_qubits - 1 - qubit)) & 1
    report1 = np.where(bit == 1, conf[1, 1], conf[0, 1])
    return np.diag(2.0 * report1 - 1.0).astype(complex)
