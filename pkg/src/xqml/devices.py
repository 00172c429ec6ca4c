"""Device specifications: topology, native gates and noise parameters.

Device files are JSON::

    {
      "schema_version": 1,
      "name": "...",
      "n_qubits": 127,
      "coupling_map": [[0, 1], ...],          # undirected
      "native_gates": ["rz", "sx", "x", "ecr"],
      "qubit_props": [{"t1_us": .., "t2_us": .., "readout_confusion": [[..], [..]]}, ...],
      "gate_props": [{"gate": "sx", "qubits": [0], "duration_ns": 60, "error": 2e-4}, ...]
    }

``qubit_props`` entries may also carry ``excited_population`` (default 0), and
a ``gate_props`` entry with ``"qubits": null`` is a default for that gate on
any qubits.
"""

from __future__ import annotations

import json
import math
from collections import deque
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from .sim import GATE_ARITY, check_confusion

SCHEMA_VERSION = 1
BUNDLED = ("all-to-all", "heavy-hex-127", "full-depolarizing", "strong-relaxation")


class DeviceSpecError(ValueError):
    """Raised for malformed or physically inconsistent device files."""


@dataclass(frozen=True)
class QubitProps:
    t1: float  # seconds
    t2: float  # seconds
    readout_confusion: tuple
    excited_population: float = 0.0

    @property
    def confusion(self):
        return np.asarray(self.readout_confusion, dtype=float)


@dataclass(frozen=True)
class GateProps:
    gate: str
    qubits: tuple | None
    duration: float  # seconds
    error: float


@dataclass(frozen=True)
class DeviceSpec:
    name: str
    n_qubits: int
    coupling_map: tuple
    native_gates: tuple
    qubit_props: tuple
    gate_props: tuple
    schema_version: int = SCHEMA_VERSION

    def __post_init__(self):
        _validate(self)
        index = {}
        for gp in self.gate_props:
            index.setdefault((gp.gate, gp.qubits), gp)
        adj = {q: set() for q in range(self.n_qubits)}
        for a, b in self.coupling_map:
            adj[a].add(b)
            adj[b].add(a)
        object.__setattr__(self, "_gate_index", index)
        object.__setattr__(self, "_adjacency", {q: frozenset(v) for q, v in adj.items()})

    def neighbors(self, q):
        return self._adjacency[q]

    def coupled(self, a, b):
        return b in self._adjacency[a]

    def degree(self, q):
        return len(self._adjacency[q])

    def gate_props_for(self, gate, qubits):
        qubits = tuple(qubits)
        for key in ((gate, qubits), (gate, tuple(reversed(qubits))), (gate, None)):
            if key in self._gate_index:
                return self._gate_index[key]
        raise DeviceSpecError(f"{self.name}: no noise parameters for {gate} on {qubits}")

    @property
    def is_noiseless(self):
        return all(gp.error == 0 and gp.duration == 0 for gp in self.gate_props) and all(
            np.allclose(qp.confusion, np.eye(2)) for qp in self.qubit_props
        )

    def to_dict(self):
        return {
            "schema_version": self.schema_version,
            "name": self.name,
            "n_qubits": self.n_qubits,
            "coupling_map": [list(e) for e in self.coupling_map],
            "native_gates": list(self.native_gates),
            "qubit_props": [
                {
                    "t1_us": qp.t1 * 1e6,
                    "t2_us": qp.t2 * 1e6,
                    "readout_confusion": [list(r) for r in qp.readout_confusion],
                    **({"excited_population": qp.excited_population} if qp.excited_population else {}),
                }
                for qp in self.qubit_props
            ],
            "gate_props": [
                {
                    "gate": gp.gate,
                    "qubits": None if gp.qubits is None else list(gp.qubits),
                    "duration_ns": gp.duration * 1e9,
                    "error": gp.error,
                }
                for gp in self.gate_props
            ],
        }

    @classmethod
    def from_dict(cls, raw):
        try:
            version = raw["schema_version"]
            if version != SCHEMA_VERSION:
                raise DeviceSpecError(f"unsupported schema_version {version}")
            qubit_props = tuple(
                QubitProps(
                    t1=float(q["t1_us"]) * 1e-6,
                    t2=float(q["t2_us"]) * 1e-6,
                    readout_confusion=tuple(tuple(float(x) for x in row) for row in q["readout_confusion"]),
                    excited_population=float(q.get("excited_population", 0.0)),
                )
                for q in raw["qubit_props"]
            )
            gate_props = tuple(
                GateProps(
                    gate=str(g["gate"]).lower(),
                    qubits=None if g.get("qubits") is None else tuple(int(x) for x in g["qubits"]),
                    duration=float(g["duration_ns"]) * 1e-9,
                    error=float(g["error"]),
                )
                for g in raw["gate_props"]
            )
            return cls(
                name=str(raw["name"]),
                n_qubits=int(raw["n_qubits"]),
                coupling_map=tuple(tuple(int(x) for x in e) for e in raw["coupling_map"]),
                native_gates=tuple(str(g).lower() for g in raw["native_gates"]),
                qubit_props=qubit_props,
                gate_props=gate_props,
                schema_version=version,
            )
        except (KeyError, TypeError) as exc:
            raise DeviceSpecError(f"device file does not match schema: {exc!r}") from exc


def _validate(spec):
    n = spec.n_qubits
    if n < 1:
        raise DeviceSpecError("n_qubits must be positive")
    unknown = set(spec.native_gates) - set(GATE_ARITY)
    if unknown:
        raise DeviceSpecError(f"unsupported native gates {sorted(unknown)}")
    for e in spec.coupling_map:
        if len(e) != 2 or e[0] == e[1] or not all(0 <= q < n for q in e):
            raise DeviceSpecError(f"bad coupling edge {e}")
    if len(spec.qubit_props) != n:
        raise DeviceSpecError(f"expected {n} qubit_props entries, got {len(spec.qubit_props)}")
    for i, qp in enumerate(spec.qubit_props):
        if qp.t1 <= 0 or qp.t2 <= 0:
            raise DeviceSpecError(f"qubit {i}: t1 and t2 must be positive")
        if qp.t2 > 2 * qp.t1 * (1 + 1e-12):
            raise DeviceSpecError(f"qubit {i}: t2 = {qp.t2} exceeds 2*t1 = {2 * qp.t1}")
        if not 0 <= qp.excited_population <= 1:
            raise DeviceSpecError(f"qubit {i}: excited_population outside [0, 1]")
        try:
            check_confusion(qp.readout_confusion)
        except ValueError as exc:
            raise DeviceSpecError(f"qubit {i}: {exc}") from exc
    for gp in spec.gate_props:
        if gp.gate not in GATE_ARITY:
            raise DeviceSpecError(f"gate_props names unknown gate {gp.gate!r}")
        if not 0 <= gp.error <= 1 or not math.isfinite(gp.error):
            raise DeviceSpecError(f"{gp.gate} on {gp.qubits}: error probability outside [0, 1]")
        if gp.duration < 0:
            raise DeviceSpecError(f"{gp.gate} on {gp.qubits}: negative duration")
        if gp.qubits is not None and (
            len(gp.qubits) != GATE_ARITY[gp.gate] or not all(0 <= q < n for q in gp.qubits)
        ):
            raise DeviceSpecError(f"{gp.gate}: bad qubits {gp.qubits}")
    if n > 1 and not _connected(n, spec.coupling_map):
        raise DeviceSpecError(f"{spec.name}: coupling map is disconnected")


def _connected(n, edges):
    adj = {q: [] for q in range(n)}
    for a, b in edges:
        adj[a].append(b)
        adj[b].append(a)
    seen = {0}
    todo = deque([0])
    while todo:
        for nb in adj[todo.popleft()]:
            if nb not in seen:
                seen.add(nb)
                todo.append(nb)
    return len(seen) == n


def load_device_spec(source):
    """Load a device from a JSON path or a bundled device name."""
    if isinstance(source, DeviceSpec):
        return source
    path = Path(source)
    if not path.exists() and str(source) in BUNDLED:
        text = resources.files("xqml.data").joinpath(f"{source}.json").read_text()
    elif path.exists():
        text = path.read_text()
    else:
        raise FileNotFoundError(f"no device file {source!r} (bundled: {', '.join(BUNDLED)})")
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise DeviceSpecError(f"device file is not valid JSON: {exc}") from exc
    return DeviceSpec.from_dict(raw)


def save_device_spec(spec, path):
    Path(path).write_text(json.dumps(spec.to_dict(), indent=1) + "\n")


# --- generators for the bundled devices --------------------------------------


def heavy_hex_coupling_map():
    """127-qubit heavy-hex lattice: 7 rows joined by bridge qubits.

    Rows hold 14, 15, 15, 15, 15, 15, 14 qubits; rows 0 and 6 are shifted so
    that bridges sit at columns 0, 4, 8, 12 below even rows and 2, 6, 10, 14
    below odd rows.
    """
    rows = [(14, 0)] + [(15, 0)] * 5 + [(14, 1)]  # (length, first column)
    edges = []
    starts = []
    index = 0
    for r, (length, _) in enumerate(rows):
        starts.append(index)
        edges += [(index + i, index + i + 1) for i in range(length - 1)]
        index += length + (4 if r < len(rows) - 1 else 0)
    for r in range(len(rows) - 1):
        first_bridge = starts[r] + rows[r][0]
        cols = (0, 4, 8, 12) if r % 2 == 0 else (2, 6, 10, 14)
        for i, c in enumerate(cols):
            b = first_bridge + i
            edges.append((starts[r] + c - rows[r][1], b))
            edges.append((b, starts[r + 1] + c - rows[r + 1][1]))
    return index, sorted(edges)


def _ideal_props(n):
    return [{"t1_us": 1e9, "t2_us": 1e9, "readout_confusion": [[1.0, 0.0], [0.0, 1.0]]} for _ in range(n)]


def _complete_graph(n):
    return [[a, b] for a in range(n) for b in range(a + 1, n)]


def all_to_all_spec(n=12):
    return {
        "schema_version": SCHEMA_VERSION,
        "name": "all-to-all",
        "n_qubits": n,
        "coupling_map": _complete_graph(n),
        "native_gates": sorted(GATE_ARITY),
        "qubit_props": _ideal_props(n),
        "gate_props": [{"gate": g, "qubits": None, "duration_ns": 0.0, "error": 0.0} for g in sorted(GATE_ARITY)],
    }


def limit_spec(kind, n=12):
    """All-to-all devices realizing the two noise limits (full depolarization, full relaxation)."""
    natives = ["rz", "sx", "x", "ecr"]
    if kind == "full-depolarizing":
        props = _ideal_props(n)
        gates = [{"gate": g, "qubits": None, "duration_ns": 0.0, "error": 1.0} for g in natives]
    elif kind == "strong-relaxation":
        props = [{"t1_us": 1.0, "t2_us": 1.0, "readout_confusion": [[1.0, 0.0], [0.0, 1.0]]} for _ in range(n)]
        gates = [{"gate": g, "qubits": None, "duration_ns": 1e6, "error": 0.0} for g in natives]
    else:
        raise ValueError(kind)
    return {
        "schema_version": SCHEMA_VERSION,
        "name": kind,
        "n_qubits": n,
        "coupling_map": _complete_graph(n),
        "native_gates": natives,
        "qubit_props": props,
        "gate_props": gates,
    }


def heavy_hex_spec(seed=127):
    """Heavy-hex device with IBM-Eagle-class noise figures drawn per qubit/edge."""
    rng = np.random.default_rng(seed)
    n, edges = heavy_hex_coupling_map()
    props = []
    for _ in range(n):
        t1 = float(np.round(rng.uniform(150, 300), 1))
        t2 = float(np.round(min(rng.uniform(60, 250), 2 * t1), 1))
        e0 = float(np.round(rng.uniform(0.004, 0.02), 4))
        e1 = float(np.round(rng.uniform(0.008, 0.035), 4))
        props.append({"t1_us": t1, "t2_us": t2, "readout_confusion": [[1 - e0, e0], [e1, 1 - e1]]})
    gates = []
    for q in range(n):
        sx_err = float(np.round(rng.uniform(1.5e-4, 4e-4), 6))
        gates.append({"gate": "rz", "qubits": [q], "duration_ns": 0.0, "error": 0.0})
        gates.append({"gate": "sx", "qubits": [q], "duration_ns": 60.0, "error": sx_err})
        gates.append({"gate": "x", "qubits": [q], "duration_ns": 60.0, "error": sx_err})
    for a, b in edges:
        gates.append({"gate": "ecr", "qubits": [a, b], "duration_ns": 660.0,
                      "error": float(np.round(rng.uniform(4e-3, 1.2e-2), 5))})
    return {
        "schema_version": SCHEMA_VERSION,
        "name": "heavy-hex-127",
        "n_qubits": n,
        "coupling_map": [list(e) for e in edges],
        "native_gates": ["rz", "sx", "x", "ecr"],
        "qubit_props": props,
        "gate_props": gates,
    }


def bundled_spec_dicts():
    return {
        "all-to-all": all_to_all_spec(),
        "heavy-hex-127": heavy_hex_spec(),
        "full-depolarizing": limit_spec("full-depolarizing"),
        "strong-relaxation": limit_spec("strong-relaxation"),
    }


def write_bundled(directory):
    for name, raw in bundled_spec_dicts().items():
        Path(directory, f"{name}.json").write_text(json.dumps(raw, indent=1) + "\n")


if __name__ == "__main__":
    write_bundled(Path(__file__).parent / "data")
