"""Photon loss before detection, simulated on density matrices."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import gammaln

from .circuit import CircuitParams, VoidOutcome, build_state
from .config import CONVENTIONS
from .fock import FockState
from .objective import _grid_argmax
from .targets import TargetState


@dataclass(frozen=True)
class DensityMatrix:
    """N-mode density operator stored as a tensor ``rho[n_0..n_{N-1}, m_0..m_{N-1}]``."""

    tensor: np.ndarray

    @property
    def num_modes(self) -> int:
        return self.tensor.ndim // 2

    @property
    def cutoff(self) -> int:
        return self.tensor.shape[0]

    @property
    def matrix(self) -> np.ndarray:
        dim = self.cutoff**self.num_modes
        return self.tensor.reshape(dim, dim)

    def trace(self) -> float:
        return float(np.trace(self.matrix).real)

    def check(self, herm_tol: float = 1e-10, psd_tol: float = 1e-8, trace_tol: float = 1e-10) -> None:
        """Raise ValueError unless the matrix is Hermitian, PSD and has trace <= 1."""
        m = self.matrix
        if np.max(np.abs(m - m.conj().T), initial=0.0) > herm_tol:
            raise ValueError("density matrix is not Hermitian")
        if np.linalg.eigvalsh((m + m.conj().T) / 2).min() < -psd_tol:
            raise ValueError("density matrix has a negative eigenvalue")
        if self.trace() > 1 + trace_tol:
            raise ValueError(f"density matrix trace {self.trace():.12f} exceeds 1")

    @classmethod
    def from_state(cls, state: FockState) -> "DensityMatrix":
        psi = state.amplitudes
        return cls(np.multiply.outer(psi, psi.conj()))

    @classmethod
    def from_matrix(cls, matrix, num_modes: int = 1) -> "DensityMatrix":
        matrix = np.asarray(matrix, dtype=complex)
        D = round(matrix.shape[0] ** (1 / num_modes))
        return cls(matrix.reshape((D,) * (2 * num_modes)))


@dataclass(frozen=True)
class LossChannel:
    """Pure-loss channel with transmissivity ``eta`` and Kraus operators K_0..K_{D-1}."""

    eta: float
    kraus: np.ndarray  # shape (D, D, D): kraus[k] = K_k


def kraus_weights(eta: float, D: int) -> np.ndarray:
    """w[k, n] = <n-k| K_k |n> = sqrt(C(n, k) eta^(n-k) (1-eta)^k), zero for k > n."""
    n = np.arange(D)
    k = n[:, None]
    ok = n[None, :] >= k
    with np.errstate(divide="ignore", invalid="ignore"):
        log_binom = gammaln(n + 1) - gammaln(k + 1) - gammaln(np.maximum(n - k, 0) + 1)
        log_w = 0.5 * log_binom
        if eta > 0:
            log_w = log_w + 0.5 * (n - k) * math.log(eta)
        else:
            log_w = np.where(n - k == 0, log_w, -np.inf)
        if eta < 1:
            log_w = log_w + 0.5 * k * math.log1p(-eta)
        else:
            log_w = np.where(k == 0, log_w, -np.inf)
    return np.exp(np.where(ok, log_w, -np.inf))


def loss_kraus(eta: float, D: int) -> LossChannel:
    """K_k = sqrt((1-eta)^k / k!) eta^(n/2) a^k as D x D matrices."""
    if not 0 <= eta <= 1:
        raise ValueError(f"transmissivity must lie in [0, 1], got {eta}")
    w = kraus_weights(eta, D)
    K = np.zeros((D, D, D))
    for k in range(D):
        K[k, np.arange(D - k), np.arange(k, D)] = w[k, k:]
    return LossChannel(eta, K)


def apply_loss(dm: DensityMatrix, mode: int, channel: LossChannel) -> DensityMatrix:
    """sum_k K_k rho K_k^dag on one mode."""
    N, D = dm.num_modes, dm.cutoff
    if channel.kraus.shape[1] != D:
        raise ValueError(f"channel cutoff {channel.kraus.shape[1]} does not match state cutoff {D}")
    if not 0 <= mode < N:
        raise ValueError(f"mode {mode} out of range")
    if channel.eta == 1:
        return dm
    # Move this mode's ket and bra axes to the end: rho[..., n, m].
    rho = np.moveaxis(dm.tensor, [mode, N + mode], [-2, -1])
    w = kraus_weights(channel.eta, D)
    out = np.zeros_like(rho)
    for k in range(D):
        wk = w[k, k:]  # K_k maps |n'+k> to |n'>, n' = 0..D-1-k
        if not wk.any():
            continue
        out[..., : D - k, : D - k] += wk[:, None] * wk[None, :] * rho[..., k:, k:]
    return DensityMatrix(np.moveaxis(out, [-2, -1], [mode, N + mode]))


def herald_dm(dm: DensityMatrix, pattern: Sequence[int], eps: float | None = None):
    """Project the ancillas on ``pattern``; returns (probability, output DensityMatrix)."""
    pattern = tuple(int(n) for n in pattern)
    N = dm.num_modes
    if len(pattern) != N - 1 or any(n < 0 or n >= dm.cutoff for n in pattern):
        raise ValueError(f"invalid pattern {pattern} for {N} modes at cutoff {dm.cutoff}")
    eps = CONVENTIONS.eps_herald if eps is None else eps
    idx = pattern + (slice(None),) + pattern + (slice(None),)
    block = dm.tensor[idx]
    p = float(np.trace(block).real)
    if p < eps:
        raise VoidOutcome(f"pattern {pattern} has probability {p:.3e}")
    return p, DensityMatrix(block / p)


def rotation_fidelity_dm(target, rho, n_angles: int | None = None) -> tuple[float, float]:
    """max over the angle grid of <t| R(phi) rho R(phi)^dag |t>, R(phi) = e^{i n phi}."""
    n_angles = n_angles or CONVENTIONS.n_angles
    t = np.asarray(getattr(target, "amplitudes", target), dtype=complex)
    rho = rho.matrix if isinstance(rho, DensityMatrix) else np.asarray(rho)
    D = rho.shape[0]
    t = np.pad(t, (0, max(0, D - t.size)))[:D]
    # <t|R rho R^dag|t> = sum_d e^{i d phi} sum_{m-n=d} conj(t_m) rho_mn t_n
    M = np.conj(t)[:, None] * rho * t[None, :]
    coeffs = np.zeros(n_angles, dtype=complex)
    for d in range(-(D - 1), D):
        coeffs[d % n_angles] += np.trace(M, offset=-d)
    prof = (np.fft.ifft(coeffs) * n_angles).real
    j = _grid_argmax(prof)
    return float(prof[j]), 2 * math.pi * j / n_angles


def lossy_state(params: CircuitParams, eta: float, D: int) -> DensityMatrix:
    """Pure device state at cutoff D with loss eta applied to every mode."""
    dm = DensityMatrix.from_state(build_state(params, D))
    channel = loss_kraus(eta, D)
    for mode in range(params.num_modes):
        dm = apply_loss(dm, mode, channel)
    return dm


def lossy_pipeline(
    params: CircuitParams, pattern: Sequence[int], eta: float, D: int, target: TargetState
) -> tuple[float, float]:
    """Herald probability and rotation-maximized fidelity for one pattern under loss."""
    p, out = herald_dm(lossy_state(params, eta, D), pattern)
    F, _ = rotation_fidelity_dm(target, out)
    return p, F


def loss_sweep(
    params: CircuitParams,
    assignment: Sequence[tuple[tuple[int, ...], TargetState]],
    etas: Sequence[float],
    D: int = 15,
) -> list[dict]:
    """Rows of (target, pattern, eta, p, fidelity) for every pattern and transmissivity."""
    rows = []
    for eta in etas:
        dm = lossy_state(params, eta, D)
        for pattern, target in assignment:
            try:
                p, out = herald_dm(dm, pattern)
                F, _ = rotation_fidelity_dm(target, out)
            except VoidOutcome:
                p, F = 0.0, 0.0
            rows.append(
                {"target": target.label, "pattern": tuple(pattern), "eta": float(eta), "p": p, "fidelity": F}
            )
    return rows
