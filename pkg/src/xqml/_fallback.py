"""Pure numpy versions of the register kernels in ``_kernels.pyx``."""

import numpy as np

MAX_K = 4


def _check(vec, k, n_qubits, targets):
    if k < 1 or k > MAX_K:
        raise ValueError(f"kernel supports 1..{MAX_K} target qubits, got {k}")
    if vec.shape[0] != 1 << n_qubits:
        raise ValueError("vector length does not match qubit count")
    for t in targets:
        if t < 0 or t >= n_qubits:
            raise ValueError(f"target {t} out of range")


def apply_matrix(vec, mat, targets, n_qubits):
    """Return ``mat`` applied to ``vec`` on the qubits ``targets``."""
    targets = [int(t) for t in targets]
    k = len(targets)
    _check(vec, k, n_qubits, targets)
    if mat.shape != (1 << k, 1 << k):
        raise ValueError("matrix shape does not match target count")
    psi = vec.reshape((2,) * n_qubits)
    op = mat.reshape((2,) * (2 * k))
    out = np.tensordot(op, psi, axes=(list(range(k, 2 * k)), targets))
    out = np.moveaxis(out, list(range(k)), targets)
    return np.ascontiguousarray(out).reshape(-1)


def apply_diagonal(vec, diag, targets, n_qubits):
    """Return ``diag(diag)`` applied to ``vec`` on the qubits ``targets``."""
    targets = [int(t) for t in targets]
    k = len(targets)
    _check(vec, k, n_qubits, targets)
    if diag.shape[0] != 1 << k:
        raise ValueError("diagonal length does not match target count")
    shape = [1] * n_qubits
    for t in targets:
        shape[t] = 2
    # reorder diag axes to ascending qubit order before broadcasting
    d = diag.reshape((2,) * k)
    order = np.argsort(targets)
    d = np.transpose(d, order).reshape(shape)
    return (vec.reshape((2,) * n_qubits) * d).reshape(-1)
