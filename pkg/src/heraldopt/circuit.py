"""The heralding device: squeezed/displaced vacua, a passive mesh, PNR detection.

Modes ``0 .. N-2`` are ancillas that are measured; mode ``N-1`` is the output.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .config import CONVENTIONS
from .fock import FockState, apply_op, beamsplitter_matrix, displace_matrix, squeeze_matrix


class VoidOutcome(ValueError):
    """Raised when a heralding pattern has numerically zero probability."""


def mesh_pairs(num_modes: int) -> list[tuple[int, int]]:
    """Nearest-neighbour rectangular mesh with N(N-1)/2 beam splitters.

    Layer ``l`` couples (i, i+1) for every i with i = l (mod 2); N layers of
    this brickwork, followed by output phases, reach every unitary in U(N).
    """
    pairs = []
    for layer in range(num_modes):
        pairs.extend((i, i + 1) for i in range(layer % 2, num_modes - 1, 2))
    return pairs


@dataclass
class CircuitParams:
    """All classical control parameters of an N-mode device.

    The flat-vector layout (``to_vector``/``from_vector``) is
    ``[r_0..r_{N-1}, phi_0..phi_{N-1}, Re alpha_0..Re alpha_{N-1},
    Im alpha_0..Im alpha_{N-1}, theta_0, varphi_0, theta_1, varphi_1, ...,
    out_phase_0..out_phase_{N-1}]`` with the beam splitters in ``mesh_pairs``
    order.
    """

    num_modes: int
    r: np.ndarray = None
    phi: np.ndarray = None
    alpha: np.ndarray = None
    mesh_theta: np.ndarray = None
    mesh_phi: np.ndarray = None
    out_phase: np.ndarray = None
    pairs: list[tuple[int, int]] = field(init=False)

    def __post_init__(self):
        N = self.num_modes
        if N < 1:
            raise ValueError("num_modes must be at least 1")
        self.pairs = mesh_pairs(N)
        nb = len(self.pairs)

        def arr(value, n, dtype=float):
            if value is None:
                return np.zeros(n, dtype=dtype)
            value = np.asarray(value, dtype=dtype).reshape(-1)
            if value.size != n:
                raise ValueError(f"expected {n} entries, got {value.size}")
            return value

        self.r = arr(self.r, N)
        self.phi = arr(self.phi, N)
        self.alpha = arr(self.alpha, N, complex)
        self.mesh_theta = arr(self.mesh_theta, nb)
        self.mesh_phi = arr(self.mesh_phi, nb)
        self.out_phase = arr(self.out_phase, N)
        if np.any(self.r < 0):
            raise ValueError("squeezing magnitudes must be non-negative")

    @staticmethod
    def vector_size(num_modes: int) -> int:
        return 5 * num_modes + 2 * len(mesh_pairs(num_modes))

    @staticmethod
    def vector_labels(num_modes: int) -> list[str]:
        N = num_modes
        labels = [f"r{i}" for i in range(N)] + [f"phi{i}" for i in range(N)]
        labels += [f"re_alpha{i}" for i in range(N)] + [f"im_alpha{i}" for i in range(N)]
        for k, (i, j) in enumerate(mesh_pairs(N)):
            labels += [f"bs{k}_theta({i},{j})", f"bs{k}_phi({i},{j})"]
        return labels + [f"out_phase{i}" for i in range(N)]

    def to_vector(self) -> np.ndarray:
        mesh = np.column_stack([self.mesh_theta, self.mesh_phi]).reshape(-1)
        return np.concatenate(
            [self.r, self.phi, self.alpha.real, self.alpha.imag, mesh, self.out_phase]
        )

    @classmethod
    def from_vector(cls, x, num_modes: int) -> "CircuitParams":
        x = np.asarray(x, dtype=float)
        N = num_modes
        if x.size != cls.vector_size(N):
            raise ValueError(f"expected {cls.vector_size(N)} parameters for {N} modes, got {x.size}")
        nb = len(mesh_pairs(N))
        mesh = x[4 * N : 4 * N + 2 * nb].reshape(nb, 2)
        return cls(
            num_modes=N,
            r=x[:N],
            phi=x[N : 2 * N],
            alpha=x[2 * N : 3 * N] + 1j * x[3 * N : 4 * N],
            mesh_theta=mesh[:, 0],
            mesh_phi=mesh[:, 1],
            out_phase=x[4 * N + 2 * nb :],
        )


@dataclass(frozen=True)
class HeraldResult:
    probability: float
    output: FockState


def build_state(params: CircuitParams, D: int) -> FockState:
    """Pre-detection N-mode state of the device at cutoff ``D``.

    Squeezing and displacement act on a product of vacua, so each mode is
    prepared separately and the product tensor is formed before the mesh.
    """
    factors = []
    for i in range(params.num_modes):
        col = squeeze_matrix(params.r[i], params.phi[i], D).entries[:, 0]
        if params.alpha[i] != 0:
            col = displace_matrix(params.alpha[i], D).entries @ col
        factors.append(col)
    amps = factors[0]
    for f in factors[1:]:
        amps = np.multiply.outer(amps, f)
    state = FockState(amps)
    for (i, j), theta, phi in zip(params.pairs, params.mesh_theta, params.mesh_phi):
        if theta == 0:
            continue
        state = apply_op(beamsplitter_matrix(theta, phi, D), state, [i, j])
    if np.any(params.out_phase):
        amps = state.amplitudes
        n = np.arange(D)
        for i, theta in enumerate(params.out_phase):
            if theta:
                shape = [1] * params.num_modes
                shape[i] = D
                amps = amps * np.exp(1j * theta * n).reshape(shape)
        state = FockState(amps)
    return state


def ancilla_marginals(state: FockState) -> np.ndarray:
    """Joint photon-number distribution of the ancillas.

    Returns an array of shape ``(D,) * (N-1)``; entry ``[n_1, ..., n_{N-1}]``
    is the probability of that pattern (output mode summed out).
    """
    if state.num_modes < 2:
        raise ValueError("need at least one ancilla mode")
    return np.sum(np.abs(state.amplitudes) ** 2, axis=-1)


def herald(state: FockState, pattern, eps: float | None = None) -> HeraldResult:
    """Condition the output mode on the ancilla photon counts ``pattern``."""
    pattern = tuple(int(n) for n in pattern)
    if len(pattern) != state.num_modes - 1:
        raise ValueError(f"pattern {pattern} does not match {state.num_modes - 1} ancilla modes")
    if any(n < 0 or n >= state.cutoff for n in pattern):
        raise ValueError(f"pattern {pattern} outside cutoff {state.cutoff}")
    eps = CONVENTIONS.eps_herald if eps is None else eps
    branch = state.amplitudes[pattern]
    p = float(np.vdot(branch, branch).real)
    if p < eps:
        raise VoidOutcome(f"pattern {pattern} has probability {p:.3e}")
    return HeraldResult(p, FockState(branch / np.sqrt(p)))


def truncation_leakage(state: FockState) -> float:
    return 1.0 - state.norm2()
