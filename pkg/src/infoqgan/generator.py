"""Quantum generator: ansatz families, latent embedding and readouts.

Latent vectors are laid out as ``z = (noise..., code...)``; entry i drives the
RY embedding on qubit i, so the codes sit on the last qubits.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import qsim
from .qsim import CircuitTemplate, Gate, OutputSelector

POINT2D = "point2d"
DISTRIBUTION = "distribution"
READOUTS = (POINT2D, DISTRIBUTION)

# latent domain per readout; the 2D experiments embed [-1, 1], finance [0, 1]
DOMAINS = {POINT2D: (-1.0, 1.0), DISTRIBUTION: (0.0, 1.0)}

PROB_CLIP = 1e-9


class LatentDomainError(ValueError):
    pass


@dataclass(frozen=True)
class LatentSample:
    noise: np.ndarray
    code: np.ndarray = field(default_factory=lambda: np.zeros(0))
    domain: tuple = (-1.0, 1.0)

    def __post_init__(self):
        noise = np.atleast_1d(np.asarray(self.noise, dtype=float))
        code = np.atleast_1d(np.asarray(self.code, dtype=float))
        lo, hi = self.domain
        z = np.concatenate([noise, code])
        if np.any(z < lo) or np.any(z > hi):
            raise LatentDomainError(f"latent entries must lie in [{lo}, {hi}]")
        object.__setattr__(self, "noise", noise)
        object.__setattr__(self, "code", code)

    @property
    def z(self) -> np.ndarray:
        return np.concatenate([self.noise, self.code])


def _check_domain(z, lo, hi):
    z = np.asarray(z, dtype=float)
    if np.any(z < lo) or np.any(z > hi):
        raise LatentDomainError(f"latent entries must lie in [{lo}, {hi}]")
    return z


def angles_2d(z):
    """RY angles for the [-1, 1] embedding; works on any array shape."""
    return np.pi * _check_domain(z, -1.0, 1.0) / 2


def angles_finance(z):
    """RY angles for the [0, 1] embedding."""
    return np.pi * (_check_domain(z, 0.0, 1.0) - 0.5) / 2


def _z_of(z):
    return z.z if isinstance(z, LatentSample) else np.asarray(z, dtype=float)


def embed_noise_2d(z) -> list:
    return [qsim.ry(i, angle=float(a)) for i, a in enumerate(angles_2d(_z_of(z)))]


def embed_noise_finance(z) -> list:
    return [qsim.ry(i, angle=float(a)) for i, a in enumerate(angles_finance(_z_of(z)))]


def build_ansatz_2d(qubits: int, layers: int) -> CircuitTemplate:
    """RX, RY, RZ on every qubit, then a CNOT ring, repeated ``layers`` times."""
    if qubits < 2 or layers < 1:
        raise ValueError("need qubits >= 2 and layers >= 1")
    gates, slot = [], 0
    for _ in range(layers):
        for q in range(qubits):
            for kind in ("RX", "RY", "RZ"):
                gates.append(Gate(kind, q, param=slot))
                slot += 1
        gates.extend(qsim.cnot(q, q + 1) for q in range(qubits - 1))
        gates.append(qsim.cnot(qubits - 1, 0))
    return CircuitTemplate(qubits, gates, slot)


def build_ansatz_finance(qubits: int, layers: int) -> CircuitTemplate:
    """Initial RY layer, then ``layers`` x (CNOT chain, RY on every qubit).

    ``layers=0`` is accepted and yields only the initial rotation layer.
    """
    if qubits < 2 or layers < 0:
        raise ValueError("need qubits >= 2 and layers >= 0")
    gates = [qsim.ry(q, param=q) for q in range(qubits)]
    slot = qubits
    for _ in range(layers):
        gates.extend(qsim.cnot(q, q + 1) for q in range(qubits - 1))
        for q in range(qubits):
            gates.append(qsim.ry(q, param=slot))
            slot += 1
    return CircuitTemplate(qubits, gates, slot)


def param_count(readout, qubits, layers):
    if readout == POINT2D:
        return 3 * qubits * layers
    return qubits * (layers + 1)


@dataclass
class GeneratorSpec:
    qubits: int
    layers: int
    readout: str
    template: CircuitTemplate
    params: np.ndarray

    def __post_init__(self):
        if self.readout not in READOUTS:
            raise ValueError(f"unknown readout {self.readout!r}")
        if self.readout == POINT2D and self.qubits < 2:
            raise ValueError("point2d readout needs at least 2 qubits")
        self.params = np.asarray(self.params, dtype=float)
        if self.params.shape != (self.template.num_params,):
            raise ValueError(f"expected {self.template.num_params} params, got {self.params.shape}")

    @classmethod
    def create(cls, qubits, layers, readout, params=None, rng=None, init_scale=np.pi):
        """Build the ansatz for ``readout``; params default to U(-init_scale, init_scale)."""
        build = build_ansatz_2d if readout == POINT2D else build_ansatz_finance
        template = build(qubits, layers)
        if params is None:
            rng = rng if rng is not None else np.random.default_rng()
            params = rng.uniform(-init_scale, init_scale, template.num_params)
        return cls(qubits, layers, readout, template, params)

    @property
    def domain(self) -> tuple:
        return DOMAINS[self.readout]

    @property
    def output_dim(self) -> int:
        return 2 if self.readout == POINT2D else 1 << self.qubits

    def embedding_angles(self, z) -> np.ndarray:
        z = np.atleast_2d(_z_of(z))
        if z.shape[1] != self.qubits:
            raise ValueError(f"latent width {z.shape[1]} != {self.qubits} qubits")
        return angles_2d(z) if self.readout == POINT2D else angles_finance(z)

    def to_dict(self) -> dict:
        return {"qubits": self.qubits, "layers": self.layers, "readout": self.readout,
                "params": [float(p) for p in self.params]}

    @classmethod
    def from_dict(cls, d) -> "GeneratorSpec":
        return cls.create(int(d["qubits"]), int(d["layers"]), d["readout"],
                          params=np.asarray(d["params"], dtype=float))

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh)

    @classmethod
    def load(cls, path) -> "GeneratorSpec":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def sample_latents(rng, batch, spec: GeneratorSpec) -> np.ndarray:
    lo, hi = spec.domain
    return rng.uniform(lo, hi, size=(batch, spec.qubits))


def point_from_probability(p):
    """Map a zero-probability P in [0, 1] to a coordinate in [-0.5, 1.5]."""
    return (4 / np.pi) * np.arcsin(np.sqrt(np.clip(p, 0.0, 1.0))) - 0.5


def point_slope(p):
    """d coordinate / dP with P clipped away from 0 and 1."""
    p = np.clip(p, PROB_CLIP, 1 - PROB_CLIP)
    return (2 / np.pi) / np.sqrt(p * (1 - p))


def _qubit_probs(probs, qubits):
    n = qubits
    return np.stack([probs[:, qsim.zero_mask(n, q)].sum(axis=1) for q in (0, 1)], axis=1)


def forward_batch(spec: GeneratorSpec, z):
    """Outputs for a batch of latent rows, plus the final states for reuse."""
    states = qsim.run_batch(spec.template, spec.params, spec.embedding_angles(z))
    probs = np.abs(states) ** 2
    if spec.readout == POINT2D:
        return point_from_probability(_qubit_probs(probs, spec.qubits)), states
    return probs, states


def generate_batch(spec: GeneratorSpec, z) -> np.ndarray:
    return forward_batch(spec, z)[0]


def generate_point(spec: GeneratorSpec, z) -> tuple:
    if spec.readout != POINT2D:
        raise ValueError("generate_point needs a point2d generator")
    x, y = generate_batch(spec, z)[0]
    return float(x), float(y)


def generate_distribution(spec: GeneratorSpec, z) -> np.ndarray:
    if spec.readout != DISTRIBUTION:
        raise ValueError("generate_distribution needs a distribution generator")
    return generate_batch(spec, z)[0]


def generator_vjp(spec: GeneratorSpec, z, output_grads, states=None) -> np.ndarray:
    """sum_b output_grads[b] . d G(z_b) / d params, in one reverse sweep."""
    angles = spec.embedding_angles(z)
    if states is None:
        states = qsim.run_batch(spec.template, spec.params, angles)
    output_grads = np.asarray(output_grads, dtype=float)
    if spec.readout == POINT2D:
        probs = np.abs(states) ** 2
        coef = output_grads * point_slope(_qubit_probs(probs, spec.qubits))
        masks = np.stack([qsim.zero_mask(spec.qubits, q) for q in (0, 1)]).astype(float)
        prob_grads = coef @ masks
    else:
        prob_grads = output_grads
    return qsim.probability_vjp(spec.template, spec.params, angles, prob_grads, states)


def generator_jacobian(spec: GeneratorSpec, z) -> np.ndarray:
    """Jacobian (output_dim x num_params) of the generator at one latent sample."""
    embed = embed_noise_2d if spec.readout == POINT2D else embed_noise_finance
    prefix = embed(z)
    if spec.readout == DISTRIBUTION:
        return qsim.circuit_output_gradient(spec.template, spec.params, prefix,
                                            OutputSelector.basis())
    sel = OutputSelector.qubit_zero(0, 1)
    jac = qsim.circuit_output_gradient(spec.template, spec.params, prefix, sel)
    state = qsim.run_circuit(spec.template, spec.params, prefix)
    p = np.array([qsim.qubit_zero_probability(state, q) for q in (0, 1)])
    return point_slope(p)[:, None] * jac
