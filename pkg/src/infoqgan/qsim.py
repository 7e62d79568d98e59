"""Exact statevector simulation for small parameterized circuits.

Conventions used throughout the package:

* qubit 0 is the most significant bit of a basis index, so ``|10>`` on two
  qubits is index 2;
* ``RX(t) = exp(-i t X / 2)``, ``RY(t) = exp(-i t Y / 2)``,
  ``RZ(t) = exp(-i t Z / 2) = diag(e^{-it/2}, e^{it/2})``.

Most of the heavy lifting happens in the batched helpers (``run_batch`` and
``probability_vjp``), which act on an array of shape ``(batch, 2**n)`` so a
whole minibatch of latent samples is pushed through the circuit at once.
Gradients use the adjoint (reverse-pass) method; ``parameter_shift_jacobian``
is kept as an independent route.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Optional, Sequence

import numpy as np

MAX_QUBITS = 12
ROTATIONS = ("RX", "RY", "RZ")
KINDS = ROTATIONS + ("CNOT",)


class CircuitError(ValueError):
    """Raised for malformed gates, templates or out-of-range sizes."""


@dataclass(frozen=True)
class Gate:
    """One gate of a circuit.

    Rotations take their angle either from ``angle`` (fixed, radians) or from
    ``param`` (index into the trainable parameter vector), never both.
    """

    kind: str
    target: int
    control: Optional[int] = None
    angle: Optional[float] = None
    param: Optional[int] = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise CircuitError(f"unknown gate kind {self.kind!r}")
        if self.target < 0:
            raise IndexError(f"negative target qubit {self.target}")
        if self.kind == "CNOT":
            if self.control is None:
                raise CircuitError("CNOT needs a control qubit")
            if self.control == self.target:
                raise CircuitError("CNOT control and target must differ")
            if self.control < 0:
                raise IndexError(f"negative control qubit {self.control}")
            if self.angle is not None or self.param is not None:
                raise CircuitError("CNOT takes no angle")
        else:
            if self.control is not None:
                raise CircuitError(f"{self.kind} takes no control qubit")
            if (self.angle is None) == (self.param is None):
                raise CircuitError(f"{self.kind} needs exactly one of angle/param")

    @property
    def qubits(self) -> tuple:
        if self.control is None:
            return (self.target,)
        return (self.control, self.target)

    def resolve_angle(self, params: Sequence[float]) -> float:
        if self.param is None:
            return float(self.angle)
        if not 0 <= self.param < len(params):
            raise IndexError(f"parameter slot {self.param} outside [0, {len(params)})")
        return float(params[self.param])


def rx(target, angle=None, param=None):
    return Gate("RX", target, angle=angle, param=param)


def ry(target, angle=None, param=None):
    return Gate("RY", target, angle=angle, param=param)


def rz(target, angle=None, param=None):
    return Gate("RZ", target, angle=angle, param=param)


def cnot(control, target):
    return Gate("CNOT", target, control=control)


@dataclass(frozen=True)
class CircuitTemplate:
    num_qubits: int
    gates: tuple
    num_params: int

    def __post_init__(self):
        _check_qubit_count(self.num_qubits)
        object.__setattr__(self, "gates", tuple(self.gates))
        used = set()
        for g in self.gates:
            for q in g.qubits:
                if q >= self.num_qubits:
                    raise IndexError(f"gate {g} touches qubit {q} of {self.num_qubits}")
            if g.param is not None:
                if not 0 <= g.param < self.num_params:
                    raise CircuitError(f"slot {g.param} outside [0, {self.num_params})")
                used.add(g.param)
        if len(used) != self.num_params:
            missing = sorted(set(range(self.num_params)) - used)
            raise CircuitError(f"parameter slots never referenced: {missing[:10]}")


@dataclass(frozen=True)
class StateVector:
    amplitudes: np.ndarray = field(repr=False)

    def __post_init__(self):
        amps = np.asarray(self.amplitudes, dtype=np.complex128)
        if amps.ndim != 1:
            raise CircuitError("amplitudes must be one-dimensional")
        n = amps.size.bit_length() - 1
        if amps.size != 1 << n:
            raise CircuitError(f"amplitude count {amps.size} is not a power of two")
        _check_qubit_count(n)
        object.__setattr__(self, "amplitudes", amps)

    @property
    def num_qubits(self) -> int:
        return self.amplitudes.size.bit_length() - 1

    def norm(self) -> float:
        return float(np.sum(np.abs(self.amplitudes) ** 2))


@dataclass(frozen=True)
class OutputSelector:
    """Which measurement-derived quantities a gradient is taken of.

    ``qubits=None`` selects all basis probabilities; otherwise one output per
    listed qubit, the probability of measuring it in ``|0>``.
    """

    qubits: Optional[tuple] = None

    @classmethod
    def basis(cls):
        return cls(None)

    @classmethod
    def qubit_zero(cls, *qubits):
        return cls(tuple(int(q) for q in qubits))

    def matrix(self, num_qubits: int) -> np.ndarray:
        """Linear map from basis probabilities to the selected outputs."""
        dim = 1 << num_qubits
        if self.qubits is None:
            return np.eye(dim)
        rows = []
        for q in self.qubits:
            if not 0 <= q < num_qubits:
                raise IndexError(f"qubit {q} outside register of {num_qubits}")
            rows.append(zero_mask(num_qubits, q).astype(float))
        return np.array(rows)


def _check_qubit_count(n):
    if not 1 <= n <= MAX_QUBITS:
        raise CircuitError(f"qubit count {n} outside [1, {MAX_QUBITS}]")


@lru_cache(maxsize=None)
def zero_mask(num_qubits: int, qubit: int) -> np.ndarray:
    """Boolean mask over basis indices whose ``qubit`` bit is 0."""
    idx = np.arange(1 << num_qubits)
    return ((idx >> (num_qubits - 1 - qubit)) & 1) == 0


@lru_cache(maxsize=None)
def _cnot_perm(num_qubits: int, control: int, target: int) -> np.ndarray:
    idx = np.arange(1 << num_qubits)
    cbit = (idx >> (num_qubits - 1 - control)) & 1
    return idx ^ (cbit << (num_qubits - 1 - target))


def new_zero_state(num_qubits: int) -> StateVector:
    _check_qubit_count(num_qubits)
    amps = np.zeros(1 << num_qubits, dtype=np.complex128)
    amps[0] = 1.0
    return StateVector(amps)


# --- batched kernels -------------------------------------------------------
# ``states`` is (batch, 2**n); ``theta`` is a scalar or a (batch,) array.

# registers up to this size apply product stages as one dense matrix
DENSE_MAX_QUBITS = 7

_PAULI = {
    "RX": np.array([[0, 1], [1, 0]], dtype=np.complex128),
    "RY": np.array([[0, -1j], [1j, 0]], dtype=np.complex128),
    "RZ": np.array([[1, 0], [0, -1]], dtype=np.complex128),
}
_EYE2 = np.eye(2, dtype=np.complex128)


def rotation_matrix(kind, theta) -> np.ndarray:
    c, s = np.cos(theta / 2), np.sin(theta / 2)
    if kind == "RX":
        return np.array([[c, -1j * s], [-1j * s, c]])
    if kind == "RY":
        return np.array([[c, -s], [s, c]], dtype=np.complex128)
    ph = np.exp(-0.5j * theta)
    return np.array([[ph, 0], [0, np.conj(ph)]])


def _rotation_matrices(kinds, thetas) -> np.ndarray:
    """Stack of 2x2 rotation matrices, shape (len(thetas), 2, 2)."""
    c, s = np.cos(thetas / 2), np.sin(thetas / 2)
    out = np.zeros((len(thetas), 2, 2), dtype=np.complex128)
    x, y, z = kinds == "RX", kinds == "RY", kinds == "RZ"
    out[x] = np.stack([np.stack([c[x], -1j * s[x]], -1), np.stack([-1j * s[x], c[x]], -1)], -2)
    out[y] = np.stack([np.stack([c[y], -s[y]], -1), np.stack([s[y], c[y]], -1)], -2)
    ph = np.exp(-0.5j * thetas[z])
    out[z, 0, 0], out[z, 1, 1] = ph, ph.conj()
    return out


def _split(states, n, q):
    b = states.shape[0]
    return states.reshape(b, 1 << q, 2, 1 << (n - q - 1))


def _apply_matrix(states, n, q, m):
    """Apply a 2x2 matrix to qubit q of every state in the batch."""
    v = _split(states, n, q)
    out = np.empty_like(v)
    a, b = v[:, :, 0, :], v[:, :, 1, :]
    out[:, :, 0, :] = m[0, 0] * a + m[0, 1] * b
    out[:, :, 1, :] = m[1, 0] * a + m[1, 1] * b
    return out.reshape(states.shape)


def _rotate(states, n, kind, q, theta):
    theta = np.asarray(theta, dtype=float)
    if theta.ndim == 0:
        return _apply_matrix(states, n, q, rotation_matrix(kind, float(theta)))
    # one angle per batch row
    t = theta.reshape(-1, 1, 1)
    v = _split(states, n, q)
    a, b = v[:, :, 0, :], v[:, :, 1, :]
    c, s = np.cos(t / 2), np.sin(t / 2)
    out = np.empty_like(v)
    if kind == "RY":
        out[:, :, 0, :] = c * a - s * b
        out[:, :, 1, :] = s * a + c * b
    elif kind == "RX":
        out[:, :, 0, :] = c * a - 1j * s * b
        out[:, :, 1, :] = -1j * s * a + c * b
    else:
        ph = np.exp(-0.5j * t)
        out[:, :, 0, :] = ph * a
        out[:, :, 1, :] = np.conj(ph) * b
    return out.reshape(states.shape)


def _apply(states, n, gate, theta):
    if gate.kind == "CNOT":
        return states[:, _cnot_perm(n, gate.control, gate.target)]
    return _rotate(states, n, gate.kind, gate.target, theta)


def embed_ry(states, n, angles):
    """Apply RY(angles[:, i]) on every qubit i; ``angles`` is (batch, n)."""
    angles = np.asarray(angles, dtype=float)
    for q in range(n):
        states = _rotate(states, n, "RY", q, angles[:, q])
    return states


def zero_states(batch, n):
    states = np.zeros((batch, 1 << n), dtype=np.complex128)
    states[:, 0] = 1.0
    return states


class _Compiled:
    """A template as alternating stages.

    Rotations between two CNOTs commute across qubits, so they form a
    product stage ``{qubit: [rotation indices in order]}``; runs of CNOTs
    fold into one basis permutation.
    """

    def __init__(self, template):
        n = template.num_qubits
        rots = [g for g in template.gates if g.kind != "CNOT"]
        self.kinds = np.array([g.kind for g in rots])
        self.slots = np.array([-1 if g.param is None else g.param for g in rots])
        self.fixed = np.array([0.0 if g.angle is None else g.angle for g in rots])
        self.stages = []
        k = 0
        for g in template.gates:
            if g.kind == "CNOT":
                perm = _cnot_perm(n, g.control, g.target)
                if self.stages and self.stages[-1][0] == "perm":
                    prev = self.stages[-1][1]
                    self.stages[-1] = ("perm", prev[perm], None)
                else:
                    self.stages.append(("perm", perm, None))
            else:
                if not self.stages or self.stages[-1][0] != "prod":
                    self.stages.append(("prod", {}, None))
                self.stages[-1][1].setdefault(g.target, []).append(k)
                k += 1
        self.stages = [(kind, a, np.argsort(a) if kind == "perm" else None)
                       for kind, a, _ in self.stages]

    def matrices(self, params):
        thetas = np.where(self.slots >= 0, params[np.maximum(self.slots, 0)], self.fixed)
        return _rotation_matrices(self.kinds, thetas)


def _compiled(template) -> _Compiled:
    comp = template.__dict__.get("_compiled")
    if comp is None:
        comp = _Compiled(template)
        object.__setattr__(template, "_compiled", comp)
    return comp


def _qubit_matrix(mats, idx):
    total = mats[idx[0]]
    for i in idx[1:]:
        total = mats[i] @ total
    return total


def _kron(a, b):
    # np.kron is general but slow for many tiny square matrices
    return (a[:, None, :, None] * b[None, :, None, :]).reshape(
        a.shape[0] * b.shape[0], a.shape[1] * b.shape[1])


def _apply_product(states, n, blocks):
    """Apply ``{qubit: 2x2}`` to every state."""
    if n <= DENSE_MAX_QUBITS:
        dense = np.ones((1, 1), dtype=np.complex128)
        for q in range(n):
            dense = _kron(dense, blocks.get(q, _EYE2))
        return states @ dense.T
    for q, m in blocks.items():
        states = _apply_matrix(states, n, q, m)
    return states


def _reduced_overlaps(psi, lam, n, qubits):
    """Per qubit q, the 2x2 sum over batch and spectators of conj(lam_i) psi_j."""
    out = {}
    if n <= DENSE_MAX_QUBITS:
        full = lam.conj().T @ psi
        for q in qubits:
            a, s = 1 << q, 1 << (n - q - 1)
            out[q] = np.einsum("xiyxjy->ij", full.reshape(a, 2, s, a, 2, s))
        return out
    for q in qubits:
        out[q] = np.einsum("xaiy,xajy->ij", _split(lam, n, q).conj(), _split(psi, n, q))
    return out


def _check_inputs(template, params, prefix_angles):
    n = template.num_qubits
    prefix_angles = np.atleast_2d(np.asarray(prefix_angles, dtype=float))
    if prefix_angles.shape[1] != n:
        raise CircuitError(f"expected {n} embedding angles, got {prefix_angles.shape[1]}")
    params = np.asarray(params, dtype=float)
    if params.shape != (template.num_params,):
        raise CircuitError(f"expected {template.num_params} params, got {params.shape}")
    return params, prefix_angles


def run_batch(template: CircuitTemplate, params, prefix_angles) -> np.ndarray:
    """Final states for a batch of RY-embedded inputs.

    ``prefix_angles`` has shape (batch, num_qubits); row b is the list of RY
    angles applied to |0...0> before the template.
    """
    n = template.num_qubits
    params, prefix_angles = _check_inputs(template, params, prefix_angles)
    comp = _compiled(template)
    mats = comp.matrices(params)
    states = embed_ry(zero_states(len(prefix_angles), n), n, prefix_angles)
    for kind, a, _ in comp.stages:
        if kind == "perm":
            states = states[:, a]
        else:
            states = _apply_product(states, n, {q: _qubit_matrix(mats, idx)
                                                for q, idx in a.items()})
    return states


def probability_vjp(template: CircuitTemplate, params, prefix_angles, prob_grads,
                    final_states=None) -> np.ndarray:
    """Vector-Jacobian product of basis probabilities, summed over the batch.

    Returns ``sum_b sum_k prob_grads[b, k] * d p_k(b) / d params`` using one
    reverse sweep through the circuit (adjoint differentiation). With psi the
    state and lam the cotangent right after a rotation generated by Pauli P,
    the derivative is Im <lam|P|psi>. Within a product stage the Pauli is
    conjugated by the rotations that follow it on the same qubit; rotations
    on other qubits commute with it and drop out.
    """
    n = template.num_qubits
    params, prefix_angles = _check_inputs(template, params, prefix_angles)
    comp = _compiled(template)
    mats = comp.matrices(params)
    psi = final_states if final_states is not None else run_batch(template, params, prefix_angles)
    lam = np.asarray(prob_grads, dtype=float) * psi
    grad = np.zeros(template.num_params)
    for kind, a, inv in reversed(comp.stages):
        if kind == "perm":
            psi, lam = psi[:, inv], lam[:, inv]
            continue
        overlaps = _reduced_overlaps(psi, lam, n, a.keys())
        undo = {}
        for q, idx in a.items():
            after = _EYE2
            for i in reversed(idx):
                if comp.slots[i] >= 0:
                    op = after @ _PAULI[comp.kinds[i]] @ after.conj().T
                    grad[comp.slots[i]] += np.sum(op * overlaps[q]).imag
                after = after @ mats[i]
            undo[q] = after.conj().T
        psi = _apply_product(psi, n, undo)
        lam = _apply_product(lam, n, undo)
    return grad


# --- single-state API ------------------------------------------------------

def apply_gate(state: StateVector, gate: Gate, params=()) -> StateVector:
    n = state.num_qubits
    for q in gate.qubits:
        if q >= n:
            raise IndexError(f"qubit {q} outside register of {n}")
    theta = None if gate.kind == "CNOT" else gate.resolve_angle(params)
    out = _apply(state.amplitudes[None, :], n, gate, theta)
    return StateVector(out[0])


def basis_probabilities(state: StateVector) -> np.ndarray:
    return np.abs(state.amplitudes) ** 2


def qubit_zero_probability(state: StateVector, qubit: int) -> float:
    n = state.num_qubits
    if not 0 <= qubit < n:
        raise IndexError(f"qubit {qubit} outside register of {n}")
    return float(np.sum(basis_probabilities(state)[zero_mask(n, qubit)]))


def run_circuit(template: CircuitTemplate, params, fixed_prefix=()) -> StateVector:
    """Run ``fixed_prefix`` (non-trainable gates) then the template from |0...0>."""
    state = new_zero_state(template.num_qubits)
    for g in fixed_prefix:
        state = apply_gate(state, g)
    for g in template.gates:
        state = apply_gate(state, g, params)
    return state


def _prefix_template(template, fixed_prefix):
    """Template with the fixed prefix gates prepended (slots unchanged)."""
    for g in fixed_prefix:
        if g.param is not None:
            raise CircuitError("fixed prefix gates must carry fixed angles")
    return CircuitTemplate(template.num_qubits, tuple(fixed_prefix) + template.gates,
                           template.num_params)


def circuit_output_gradient(template: CircuitTemplate, params, fixed_prefix=(),
                            output_selector: OutputSelector = OutputSelector()) -> np.ndarray:
    """Jacobian (outputs x params) of the selected outputs, via adjoint sweeps."""
    n = template.num_qubits
    sel = output_selector.matrix(n)
    full = _prefix_template(template, fixed_prefix)
    zero_prefix = np.zeros((1, n))
    psi = run_batch(full, params, zero_prefix)
    return np.array([probability_vjp(full, params, zero_prefix, row[None, :], psi)
                     for row in sel])


def parameter_shift_jacobian(template: CircuitTemplate, params, fixed_prefix=(),
                             output_selector: OutputSelector = OutputSelector()) -> np.ndarray:
    """Same Jacobian as ``circuit_output_gradient`` by the two-term shift rule.

    Each gate occurrence of a slot is shifted by +-pi/2 separately and the
    contributions summed, so shared slots are handled correctly.
    """
    n = template.num_qubits
    sel = output_selector.matrix(n)
    params = np.asarray(params, dtype=float)
    prefix = list(fixed_prefix)
    bound = [Gate(g.kind, g.target, g.control,
                  None if g.kind == "CNOT" else g.resolve_angle(params))
             for g in template.gates]

    def outputs(gates):
        state = new_zero_state(n)
        for g in prefix + gates:
            state = apply_gate(state, g)
        return sel @ basis_probabilities(state)

    jac = np.zeros((sel.shape[0], template.num_params))
    for i, g in enumerate(template.gates):
        if g.param is None:
            continue
        shifted = []
        for sign in (1.0, -1.0):
            gates = list(bound)
            gates[i] = Gate(g.kind, g.target, angle=bound[i].angle + sign * np.pi / 2)
            shifted.append(outputs(gates))
        jac[:, g.param] += (shifted[0] - shifted[1]) / 2
    return jac
