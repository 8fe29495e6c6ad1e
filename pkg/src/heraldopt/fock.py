"""Truncated Fock-space representations of Gaussian primitives.

Matrices are built by three-term recursions in the Fock indices, never from
factorials, so they stay accurate up to cutoffs of a few hundred. Every matrix
entry that is computed is the exact element of the infinite-dimensional
operator; truncation only drops rows and columns.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numba
import numpy as np
from scipy.integrate import trapezoid
from scipy.special import gammaln

from .config import CONVENTIONS


@dataclass(frozen=True)
class FockState:
    """Pure state of ``num_modes`` oscillators truncated at ``cutoff`` levels.

    ``amplitudes`` has shape ``(cutoff,) * num_modes``; its C-order flattening
    puts mode 0 as the slowest index, so |n_0, ..., n_{N-1}> sits at
    sum(n_i * D**(N-1-i)).
    """

    amplitudes: np.ndarray

    def __post_init__(self):
        amps = np.asarray(self.amplitudes, dtype=complex)
        if amps.ndim < 1 or len(set(amps.shape)) != 1:
            raise ValueError(f"amplitudes must be a hypercube, got shape {amps.shape}")
        if amps.shape[0] < 2:
            raise ValueError("cutoff must be at least 2")
        object.__setattr__(self, "amplitudes", amps)

    @property
    def num_modes(self) -> int:
        return self.amplitudes.ndim

    @property
    def cutoff(self) -> int:
        return self.amplitudes.shape[0]

    @property
    def vector(self) -> np.ndarray:
        return self.amplitudes.reshape(-1)

    def norm2(self) -> float:
        return float(np.vdot(self.amplitudes, self.amplitudes).real)

    @classmethod
    def vacuum(cls, num_modes: int, cutoff: int) -> "FockState":
        amps = np.zeros((cutoff,) * num_modes, dtype=complex)
        amps[(0,) * num_modes] = 1.0
        return cls(amps)

    @classmethod
    def basis(cls, occupations: Sequence[int], cutoff: int) -> "FockState":
        amps = np.zeros((cutoff,) * len(occupations), dtype=complex)
        amps[tuple(occupations)] = 1.0
        return cls(amps)

    @classmethod
    def from_vector(cls, vector, num_modes: int = 1) -> "FockState":
        vector = np.asarray(vector, dtype=complex)
        cutoff = round(vector.size ** (1 / num_modes))
        return cls(vector.reshape((cutoff,) * num_modes))


@dataclass(frozen=True)
class OperatorMatrix:
    """A one- or two-mode operator as a ``D**arity`` square matrix.

    Beam splitters are stored as ``compact``: the entries
    <m, n| U |p, m+n-p> indexed as ``[m, n, p]``. Photon-number conservation
    makes this the whole operator; ``entries`` is expanded from it on first
    access, and ``apply_op`` never needs the dense form.
    """

    arity: int
    cutoff: int
    dense: np.ndarray | None = field(default=None, repr=False)
    compact: np.ndarray | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.arity not in (1, 2):
            raise ValueError("arity must be 1 or 2")
        if self.dense is None and self.compact is None:
            raise ValueError("either dense or compact entries are required")
        dim = self.cutoff**self.arity
        if self.dense is not None and self.dense.shape != (dim, dim):
            raise ValueError(f"expected a {dim}x{dim} matrix, got {self.dense.shape}")

    @cached_property
    def entries(self) -> np.ndarray:
        if self.dense is not None:
            return self.dense
        D = self.cutoff
        full = np.zeros((D, D, D, D), dtype=complex)
        m, n, p = np.meshgrid(*(np.arange(D),) * 3, indexing="ij")
        q = m + n - p
        ok = (q >= 0) & (q < D)
        full[m[ok], n[ok], p[ok], q[ok]] = self.compact[ok]
        return full.reshape(D * D, D * D)


# ---------------------------------------------------------------- kernels


@numba.njit(cache=True)
def _squeeze_kernel(r, phi, cutoff):
    S = np.zeros((cutoff, cutoff), dtype=np.complex128)
    sqrt = np.sqrt(np.arange(cutoff, dtype=np.float64))
    eiphi_tanh = np.exp(1j * phi) * np.tanh(r)
    sech = 1.0 / np.cosh(r)
    S[0, 0] = np.sqrt(sech)
    for m in range(2, cutoff, 2):
        S[m, 0] = -eiphi_tanh * sqrt[m - 1] / sqrt[m] * S[m - 2, 0]
    for n in range(1, cutoff):
        for m in range(cutoff):
            if (m + n) % 2:
                continue
            val = 0j
            if m > 0:
                val += sech * sqrt[m] * S[m - 1, n - 1]
            if n > 1:
                val += np.conj(eiphi_tanh) * sqrt[n - 1] * S[m, n - 2]
            S[m, n] = val / sqrt[n]
    return S


@numba.njit(cache=True)
def _displace_kernel(alpha, cutoff):
    Dm = np.zeros((cutoff, cutoff), dtype=np.complex128)
    sqrt = np.sqrt(np.arange(cutoff, dtype=np.float64))
    Dm[0, 0] = np.exp(-0.5 * abs(alpha) ** 2)
    for m in range(1, cutoff):
        Dm[m, 0] = alpha / sqrt[m] * Dm[m - 1, 0]
    ca = np.conj(alpha)
    for n in range(1, cutoff):
        Dm[0, n] = -ca * Dm[0, n - 1] / sqrt[n]
        for m in range(1, cutoff):
            Dm[m, n] = (sqrt[m] * Dm[m - 1, n - 1] - ca * Dm[m, n - 1]) / sqrt[n]
    return Dm


@numba.njit(cache=True)
def _beamsplitter_kernel(theta, phi, cutoff, log_binom):
    # C[m, n, p] = <m, n| BS |p, q> with q = m + n - p; entries with q outside
    # [0, cutoff) are left at zero.
    C = np.zeros((cutoff, cutoff, cutoff), dtype=np.complex128)
    sqrt = np.sqrt(np.arange(2 * cutoff, dtype=np.float64))
    c = np.cos(theta)
    s = np.sin(theta)
    ea = np.exp(-1j * phi) * s
    eb = np.exp(1j * phi) * s
    for m in range(cutoff):
        for n in range(cutoff - m):
            C[m, n, 0] = np.exp(0.5 * log_binom[m, n]) * ea**m * c**n
    for p in range(1, cutoff):
        for m in range(cutoff):
            for n in range(cutoff):
                q = m + n - p
                if q < 0 or q >= cutoff:
                    continue
                val = 0j
                if m > 0:
                    val += c * sqrt[m] * C[m - 1, n, p - 1]
                if n > 0:
                    val -= eb * sqrt[n] * C[m, n - 1, p - 1]
                C[m, n, p] = val / sqrt[p]
    return C


@numba.njit(cache=True)
def _apply_compact_kernel(C, psi):
    # psi: (R, D, D) with the two acted-on modes last.
    R, D, _ = psi.shape
    out = np.zeros_like(psi)
    for r in range(R):
        for m in range(D):
            for n in range(D):
                lo = max(0, m + n - D + 1)
                hi = min(D - 1, m + n)
                acc = 0j
                for p in range(lo, hi + 1):
                    acc += C[m, n, p] * psi[r, p, m + n - p]
                out[r, m, n] = acc
    return out


_LOG_BINOM_CACHE: dict[int, np.ndarray] = {}


def _log_binom(cutoff: int) -> np.ndarray:
    if cutoff not in _LOG_BINOM_CACHE:
        k = np.arange(cutoff)
        m, n = np.meshgrid(k, k, indexing="ij")
        _LOG_BINOM_CACHE[cutoff] = gammaln(m + n + 1) - gammaln(m + 1) - gammaln(n + 1)
    return _LOG_BINOM_CACHE[cutoff]


def _check_cutoff(D: int):
    if D < 2:
        raise ValueError(f"cutoff must be at least 2, got {D}")


# ---------------------------------------------------------------- operators


def squeeze_matrix(r: float, phi: float, D: int) -> OperatorMatrix:
    """Matrix elements <m|S(r e^{i phi})|n> for m, n < D."""
    _check_cutoff(D)
    return OperatorMatrix(1, D, _squeeze_kernel(float(r), float(phi), D))


def displace_matrix(alpha: complex, D: int) -> OperatorMatrix:
    """Matrix elements <m|D(alpha)|n> for m, n < D."""
    _check_cutoff(D)
    return OperatorMatrix(1, D, _displace_kernel(complex(alpha), D))


def phase_matrix(theta: float, D: int) -> OperatorMatrix:
    _check_cutoff(D)
    return OperatorMatrix(1, D, np.diag(np.exp(1j * theta * np.arange(D))))


def beamsplitter_compact(theta: float, phi: float, D: int) -> np.ndarray:
    _check_cutoff(D)
    return _beamsplitter_kernel(float(theta), float(phi), D, _log_binom(D))


def beamsplitter_matrix(theta: float, phi: float, D: int) -> OperatorMatrix:
    """Two-mode matrix of BS(theta, phi) on the D**2 product basis.

    Row/column index of |m, n> is m*D + n. The matrix is block diagonal in
    total photon number; blocks with total < D are exactly unitary.
    """
    return OperatorMatrix(2, D, compact=beamsplitter_compact(theta, phi, D))


def apply_op(op: OperatorMatrix, state: FockState, modes: Sequence[int]) -> FockState:
    """Contract ``op`` against the listed mode indices of ``state``."""
    modes = [int(k) for k in modes]
    if len(modes) != op.arity:
        raise ValueError(f"operator acts on {op.arity} mode(s), got {len(modes)} indices")
    if len(set(modes)) != len(modes):
        raise ValueError(f"repeated mode index in {modes}")
    if op.cutoff != state.cutoff:
        raise ValueError(f"cutoff mismatch: operator {op.cutoff}, state {state.cutoff}")
    N, D = state.num_modes, state.cutoff
    if any(k < 0 or k >= N for k in modes):
        raise ValueError(f"mode index out of range for {N} modes: {modes}")

    psi = np.moveaxis(state.amplitudes, modes, list(range(N - op.arity, N)))
    moved_shape = psi.shape
    if op.arity == 1:
        out = psi @ op.entries.T
    elif op.compact is not None:
        flat = np.ascontiguousarray(psi.reshape(-1, D, D))
        out = _apply_compact_kernel(op.compact, flat).reshape(moved_shape)
    else:
        flat = psi.reshape(-1, D * D)
        out = (flat @ op.entries.T).reshape(moved_shape)
    return FockState(np.moveaxis(out, list(range(N - op.arity, N)), modes))


# ---------------------------------------------------------------- Wigner


@dataclass(frozen=True)
class WignerGrid:
    x_axis: np.ndarray
    p_axis: np.ndarray
    values: np.ndarray  # indexed [ix, ip]
    hbar: float = 1.0

    def integral(self) -> float:
        return float(trapezoid(trapezoid(self.values, self.p_axis, axis=1), self.x_axis))


def as_density_matrix(state) -> np.ndarray:
    """Single-mode density matrix from a FockState, ket vector or matrix."""
    if isinstance(state, FockState):
        if state.num_modes != 1:
            raise ValueError("expected a single-mode state")
        psi = state.amplitudes
        return np.outer(psi, psi.conj())
    arr = np.asarray(state, dtype=complex)
    if arr.ndim == 1:
        return np.outer(arr, arr.conj())
    if arr.ndim == 2 and arr.shape[0] == arr.shape[1]:
        return arr
    raise ValueError(f"expected a single-mode ket or density matrix, got shape {arr.shape}")


def wigner(state, x_axis, p_axis, hbar: float | None = None) -> WignerGrid:
    """Wigner function W(x, p) of a single-mode state on a rectangular grid.

    Uses the Laguerre expansion of the Fock-basis density matrix, evaluated by
    the usual upward recursion over |m><n| so no factorials appear.

    Args:
        state: single-mode FockState, ket vector, or density matrix.
        x_axis: position grid.
        p_axis: momentum grid.
        hbar: value of hbar in [x, p] = i hbar; defaults to the global convention.

    Returns:
        WignerGrid with ``values[ix, ip]``.
    """
    if isinstance(state, FockState) and state.num_modes != 1:
        raise ValueError("wigner requires a single-mode state")
    if hbar is None:
        hbar = CONVENTIONS.hbar
    rho = as_density_matrix(state)
    M = rho.shape[0]
    x_axis = np.asarray(x_axis, dtype=float)
    p_axis = np.asarray(p_axis, dtype=float)
    X, P = np.meshgrid(x_axis, p_axis, indexing="ij")
    A = (X + 1j * P) / np.sqrt(2 * hbar)  # complex amplitude alpha at (x, p)

    wl = [np.exp(-2.0 * np.abs(A) ** 2) / np.pi]
    W = rho[0, 0].real * wl[0].real
    for n in range(1, M):
        wl.append(2.0 * A * wl[n - 1] / np.sqrt(n))
        W = W + 2 * np.real(rho[0, n] * wl[n])
    for m in range(1, M):
        temp = wl[m]
        wl[m] = (2 * np.conj(A) * temp - np.sqrt(m) * wl[m - 1]) / np.sqrt(m)
        W = W + np.real(rho[m, m] * wl[m])
        for n in range(m + 1, M):
            temp2 = (2 * A * wl[n - 1] - np.sqrt(m) * temp) / np.sqrt(n)
            temp = wl[n]
            wl[n] = temp2
            W = W + 2 * np.real(rho[m, n] * wl[n])
    return WignerGrid(x_axis, p_axis, W / hbar, hbar)
