"""Lowering circuits onto a device: native gates, routing, noise and metadata."""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .devices import DeviceSpecError
from .sim import Circuit, Gate, depolarizing_channel, make_rng, thermal_relaxation_channel

PI = math.pi
METADATA_KEYS = ("n_qubits", "depth", "rz", "sx", "ecr", "x")


class TranspileError(ValueError):
    pass


# --- native decomposition ----------------------------------------------------


def _zsx(q, phi, theta, lam):
    """``U3(theta, phi, lam)`` as rz(lam) sx rz(theta+pi) sx rz(phi+pi), up to phase."""
    return [
        Gate("rz", (q,), (lam,)),
        Gate("sx", (q,)),
        Gate("rz", (q,), (theta + PI,)),
        Gate("sx", (q,)),
        Gate("rz", (q,), (phi + PI,)),
    ]


def _rule(g, natives):
    """One rewriting step for a non-native gate; ``None`` if no rule applies."""
    q = g.qubits
    one = {"rz", "sx"} <= natives
    if g.name == "ry" and one:
        return _zsx(q[0], 0.0, g.params[0], 0.0)[1:]
    if g.name == "rx" and one:
        return _zsx(q[0], -PI / 2, g.params[0], PI / 2)
    if g.name == "rot" and one:
        phi, theta, omega = g.params
        return [Gate("rz", q, (phi,))] + _zsx(q[0], omega, theta, 0.0)[1:]
    if g.name == "h" and one:
        return [Gate("rz", q, (PI / 2,)), Gate("sx", q), Gate("rz", q, (PI / 2,))]
    if g.name == "x" and "sx" in natives:
        return [Gate("sx", q), Gate("sx", q)]
    if g.name == "cnot" and "ecr" in natives:
        c, t = q
        # CNOT = RZ_c(-pi/2) RX_t(-pi/2) X_c ECR, up to phase
        return [
            Gate("ecr", (c, t)),
            Gate("x", (c,)),
            Gate("rz", (c,), (-PI / 2,)),
            Gate("rz", (t,), (PI,)),
            Gate("sx", (t,)),
            Gate("rz", (t,), (PI,)),
        ]
    if g.name == "ecr" and "cnot" in natives:
        c, t = q
        return [
            Gate("cnot", (c, t)),
            Gate("rz", (c,), (PI / 2,)),
            Gate("rx", (t,), (PI / 2,)),
            Gate("x", (c,)),
        ]
    if g.name == "cz":
        a, b = q
        return [Gate("h", (b,)), Gate("cnot", (a, b)), Gate("h", (b,))]
    if g.name == "swap":
        a, b = q
        return [Gate("cnot", (a, b)), Gate("cnot", (b, a)), Gate("cnot", (a, b))]
    return None


def decompose_to_native(circuit, natives, merge_rz=True):
    """Rewrite ``circuit`` into the gate set ``natives``.

    Parametric gates map onto fixed native templates in which every angle
    enters one ``rz`` linearly, so shift-rule derivatives remain exact after
    lowering. With ``merge_rz`` consecutive ``rz`` on a qubit are summed.
    """
    natives = frozenset(g.lower() for g in natives)
    out = []
    todo = list(reversed(circuit.gates))
    depth_guard = 0
    while todo:
        g = todo.pop()
        if g.name in natives:
            out.append(g.without_noise())
            continue
        repl = _rule(g, natives)
        if repl is None:
            raise TranspileError(f"no decomposition of {g.name} into {sorted(natives)}")
        depth_guard += 1
        if depth_guard > 100 * (len(circuit.gates) + 10):
            raise TranspileError("decomposition did not terminate")
        todo.extend(reversed(repl))
    if merge_rz:
        out = _merge_rz(out)
    return Circuit(circuit.n_qubits, out, circuit.readout)


def _merge_rz(gates):
    out = []
    last_rz = {}  # qubit -> index in out of a trailing rz on that qubit
    for g in gates:
        if g.name == "rz":
            q = g.qubits[0]
            i = last_rz.get(q)
            if i is not None:
                out[i] = Gate("rz", (q,), (out[i].params[0] + g.params[0],))
                continue
            last_rz[q] = len(out)
            out.append(g)
            continue
        for q in g.qubits:
            last_rz.pop(q, None)
        out.append(g)
    return out


# --- layout and routing ------------------------------------------------------


@dataclass(frozen=True)
class Layout:
    """Virtual-to-physical qubit maps before and after routing."""

    initial: tuple
    final: tuple | None = None

    def __post_init__(self):
        initial = tuple(int(p) for p in self.initial)
        final = initial if self.final is None else tuple(int(p) for p in self.final)
        for m in (initial, final):
            if len(set(m)) != len(m):
                raise TranspileError(f"layout {m} is not injective")
        object.__setattr__(self, "initial", initial)
        object.__setattr__(self, "final", final)

    @property
    def physical_qubits(self):
        return tuple(sorted(self.initial))


def auto_layout(n, device):
    """A connected block of ``n`` device qubits, preferring a simple path."""
    if n > device.n_qubits:
        raise TranspileError(f"circuit needs {n} qubits, device has {device.n_qubits}")
    for start in range(device.n_qubits):
        path = _path_from(start, n, device)
        if path is not None:
            return Layout(tuple(path))
    # no simple path: breadth-first block
    seen = [0]
    queue = deque([0])
    while queue and len(seen) < n:
        for nb in sorted(device.neighbors(queue.popleft())):
            if nb not in seen and len(seen) < n:
                seen.append(nb)
                queue.append(nb)
    return Layout(tuple(seen))


def _path_from(start, n, device, limit=20000):
    stack = [(start, [start])]
    steps = 0
    while stack and steps < limit:
        node, path = stack.pop()
        steps += 1
        if len(path) == n:
            return path
        for nb in sorted(device.neighbors(node), reverse=True):
            if nb not in path:
                stack.append((nb, path + [nb]))
    return None


def _shortest_path(a, b, allowed, device, rng):
    prev = {a: None}
    queue = deque([a])
    while queue:
        node = queue.popleft()
        if node == b:
            break
        nbs = sorted(nb for nb in device.neighbors(node) if nb in allowed and nb not in prev)
        rng.shuffle(nbs)
        for nb in nbs:
            prev[nb] = node
            queue.append(nb)
    if b not in prev:
        raise TranspileError(f"qubits {a} and {b} are not connected within the layout")
    path = [b]
    while path[-1] != a:
        path.append(prev[path[-1]])
    return path[::-1]


def route(circuit, device, initial_layout=None, seed=0):
    """Place ``circuit`` on ``device`` and insert SWAPs so 2-qubit gates are coupled.

    Routing is greedy: the first operand of an uncoupled gate is swapped
    along a shortest path (restricted to the layout's qubits) until it neighbours
    the second. Ties between shortest paths are broken by ``seed``. Returns the
    circuit on device qubit indices and the :class:`Layout`.
    """
    n = circuit.n_qubits
    if n > device.n_qubits:
        raise TranspileError(f"circuit needs {n} qubits, device has {device.n_qubits}")
    if initial_layout is None:
        layout = auto_layout(n, device)
    elif isinstance(initial_layout, Layout):
        layout = initial_layout
    else:
        layout = Layout(tuple(initial_layout))
    if len(layout.initial) != n:
        raise TranspileError(f"layout has {len(layout.initial)} entries for {n} virtual qubits")
    if any(not 0 <= p < device.n_qubits for p in layout.initial):
        raise TranspileError("layout maps outside the device")
    rng = make_rng(seed)
    allowed = set(layout.initial)
    v2p = list(layout.initial)
    out = []
    for g in circuit.gates:
        if len(g.qubits) == 1:
            out.append(Gate(g.name, (v2p[g.qubits[0]],), g.params))
            continue
        a, b = (v2p[q] for q in g.qubits)
        if not device.coupled(a, b):
            path = _shortest_path(a, b, allowed, device, rng)
            p2v = {p: v for v, p in enumerate(v2p)}
            for x, y in zip(path[:-2], path[1:-1]):
                out.append(Gate("swap", (x, y)))
                vx, vy = p2v.get(x), p2v.get(y)
                if vx is not None:
                    v2p[vx] = y
                if vy is not None:
                    v2p[vy] = x
                p2v = {p: v for v, p in enumerate(v2p)}
        out.append(Gate(g.name, tuple(v2p[q] for q in g.qubits), g.params))
    routed = Circuit(device.n_qubits, out)
    return routed, Layout(layout.initial, tuple(v2p))


def check_routed(circuit, device, physical=None):
    """Raise if any 2-qubit gate acts on an uncoupled pair."""
    phys = physical or tuple(range(circuit.n_qubits))
    for g in circuit.gates:
        if len(g.qubits) == 2 and not device.coupled(phys[g.qubits[0]], phys[g.qubits[1]]):
            raise TranspileError(f"{g.name} on uncoupled pair {tuple(phys[q] for q in g.qubits)}")


def compact(circuit, qubits):
    """Relabel a circuit acting on ``qubits`` (device indices) to ``0..len-1``."""
    index = {p: i for i, p in enumerate(qubits)}
    try:
        gates = [Gate(g.name, tuple(index[q] for q in g.qubits), g.params, g.noise) for g in circuit.gates]
    except KeyError as exc:
        raise TranspileError(f"gate acts on qubit {exc} outside {qubits}") from None
    return Circuit(len(qubits), gates)


@dataclass(frozen=True)
class Transpiled:
    """A native, routed circuit on the compact register ``0..len(physical)-1``."""

    circuit: Circuit
    physical: tuple  # compact index -> device qubit
    layout: Layout  # virtual -> device qubit
    n_swaps: int

    def position(self, virtual, final=True):
        """Compact register index holding ``virtual`` at the start or end."""
        m = self.layout.final if final else self.layout.initial
        return self.physical.index(m[virtual])


def transpile(circuit, device, initial_layout=None, seed=0, merge_rz=True):
    """Route onto ``device``, lower to its native gates and compact the register."""
    routed, layout = route(circuit, device, initial_layout, seed)
    n_swaps = sum(1 for g in routed.gates if g.name == "swap")
    native = decompose_to_native(routed, device.native_gates, merge_rz=merge_rz)
    physical = layout.physical_qubits
    small = compact(native, physical)
    check_routed(small, device, physical)
    return Transpiled(small, physical, layout, n_swaps)


# --- noise -------------------------------------------------------------------


@lru_cache(maxsize=4096)
def _depolarizing(p, arity):
    return depolarizing_channel(p, arity)


@lru_cache(maxsize=4096)
def _relaxation(t1, t2, duration, excited_population):
    return thermal_relaxation_channel(t1, t2, duration, excited_population)


def noise_schedule(circuit, device, physical=None, readout=True):
    """Attach device noise after every gate.

    Each gate gets ``depolarizing(error)`` on all its qubits followed by a
    thermal-relaxation channel (gate duration) on each acted qubit. Every
    qubit's readout confusion is tagged on the circuit when ``readout``.
    """
    phys = tuple(physical) if physical is not None else tuple(range(circuit.n_qubits))
    if len(phys) != circuit.n_qubits:
        raise TranspileError("physical map length does not match circuit width")
    natives = set(device.native_gates)
    gates = []
    cache = {}
    for g in circuit.gates:
        if g.name not in natives:
            raise TranspileError(f"{g.name} is not native on {device.name}; transpile first")
        pq = tuple(phys[q] for q in g.qubits)
        if len(pq) == 2 and not device.coupled(*pq):
            raise TranspileError(f"{g.name} on uncoupled pair {pq}; route first")
        key = (g.name, pq)
        if key not in cache:
            gp = device.gate_props_for(g.name, pq)
            chans = [(_depolarizing(gp.error, len(pq)), None)]
            for i, p in enumerate(pq):
                qp = device.qubit_props[p]
                chans.append((_relaxation(qp.t1, qp.t2, gp.duration, qp.excited_population), i))
            cache[key] = chans
        noise = tuple(
            (ch, g.qubits if i is None else (g.qubits[i],)) for ch, i in cache[key]
        )
        gates.append(Gate(g.name, g.qubits, g.params, noise))
    tags = ()
    if readout:
        tags = tuple((i, device.qubit_props[p].readout_confusion) for i, p in enumerate(phys))
    return Circuit(circuit.n_qubits, gates, tags)


# --- metadata and export -----------------------------------------------------


@dataclass(frozen=True)
class CircuitMetadata:
    n_qubits: int
    depth: int
    counts: dict

    @property
    def total(self):
        return sum(self.counts.values())

    def row(self):
        """Row in the column order #qubits, depth, #rz, #sx, #ecr, #x."""
        row = {"n_qubits": self.n_qubits, "depth": self.depth}
        for k in METADATA_KEYS[2:]:
            row[k] = int(self.counts.get(k, 0))
        return row


def circuit_metadata(circuit):
    """Width, depth (longest gate-dependency chain) and per-kind gate counts."""
    level = [0] * circuit.n_qubits
    counts = {}
    for g in circuit.gates:
        d = max(level[q] for q in g.qubits) + 1
        for q in g.qubits:
            level[q] = d
        counts[g.name] = counts.get(g.name, 0) + 1
    return CircuitMetadata(circuit.n_qubits, max(level, default=0), counts)


def to_text(circuit):
    """One gate per line: ``name q0[,q1] [p0,p1,...]``."""
    lines = [f"# qubits {circuit.n_qubits}"]
    for g in circuit.gates:
        line = f"{g.name} {','.join(str(q) for q in g.qubits)}"
        if g.params:
            line += " " + ",".join(repr(float(p)) for p in g.params)
        lines.append(line)
    return "\n".join(lines) + "\n"


def from_text(text, n_qubits=None):
    gates = []
    width = n_qubits
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            parts = line[1:].split()
            if len(parts) == 2 and parts[0] == "qubits" and width is None:
                width = int(parts[1])
            continue
        fields = line.split()
        try:
            qubits = tuple(int(q) for q in fields[1].split(","))
            params = tuple(float(p) for p in fields[2].split(",")) if len(fields) > 2 else ()
            gates.append(Gate(fields[0], qubits, params))
        except (IndexError, ValueError) as exc:
            raise TranspileError(f"line {lineno}: cannot parse {raw!r}: {exc}") from None
    if width is None:
        width = 1 + max((max(g.qubits) for g in gates), default=0)
    return Circuit(width, gates)


def to_qasm3(circuit, natives=("rz", "sx", "x", "ecr")):
    """OpenQASM 3 text for a circuit over the native gate set."""
    lines = ["OPENQASM 3.0;", 'include "stdgates.inc";']
    if "ecr" in natives:
        lines.append("gate ecr a, b { rzx(pi/4) a, b; x a; rzx(-pi/4) a, b; }")
    lines.append(f"qubit[{circuit.n_qubits}] q;")
    for g in circuit.gates:
        if g.name not in natives:
            raise TranspileError(f"{g.name} is outside the export gate set {natives}")
        args = ", ".join(f"q[{q}]" for q in g.qubits)
        if g.params:
            lines.append(f"{g.name}({', '.join(repr(float(p)) for p in g.params)}) {args};")
        else:
            lines.append(f"{g.name} {args};")
    return "\n".join(lines) + "\n"


__all__ = [
    "CircuitMetadata",
    "DeviceSpecError",
    "Layout",
    "METADATA_KEYS",
    "Transpiled",
    "TranspileError",
    "auto_layout",
    "check_routed",
    "circuit_metadata",
    "compact",
    "decompose_to_native",
    "from_text",
    "noise_schedule",
    "route",
    "to_qasm3",
    "to_text",
    "transpile",
]
