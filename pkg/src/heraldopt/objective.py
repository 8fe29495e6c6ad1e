"""Scoring heralded outputs: rotation-maximized fidelity and the two losses."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .circuit import CircuitParams, VoidOutcome, build_state, herald, truncation_leakage
from .config import CONVENTIONS
from .fock import FockState
from .targets import TargetState

# Relative tolerance under which two grid fidelities count as tied.
_TIE_RTOL = 1e-12


@dataclass(frozen=True)
class PatternScore:
    pattern: tuple[int, ...]
    probability: float
    fidelity: float
    phi_star: float
    target: str = ""


@dataclass(frozen=True)
class LossConfig:
    """Weights of the fixed-pattern and beam-search losses.

    ``lambda_mode`` picks the denominator of the logarithmic weight:
    ``"as-printed"`` uses log10(1 - eps), ``"normalized"`` uses log10(eps)
    so the weight is exactly 1 at the fidelity cap.
    """

    alpha: float = 1.0
    eps: float = 2e-2
    delta: float = 1e-72
    lam: float = 1e4
    w_trunc: float = 10.0
    lambda_mode: str = "as-printed"

    def __post_init__(self):
        if not 0 < self.eps < 1:
            raise ValueError("eps must lie in (0, 1)")
        if min(self.alpha, self.delta, self.lam, self.w_trunc) < 0:
            raise ValueError("loss weights must be non-negative")
        if self.lambda_mode not in ("as-printed", "normalized"):
            raise ValueError(f"unknown lambda_mode {self.lambda_mode!r}")


def _grid_argmax(values: np.ndarray) -> int:
    best = values.max()
    return int(np.flatnonzero(values >= best - _TIE_RTOL * max(best, 1e-300))[0])


def rotation_profile(target, state, n_angles: int | None = None) -> np.ndarray:
    """|<t| e^{i n phi} |psi>|^2 at phi_j = 2 pi j / n_angles, via one FFT."""
    n_angles = n_angles or CONVENTIONS.n_angles
    t = np.asarray(getattr(target, "amplitudes", target), dtype=complex)
    psi = np.asarray(getattr(state, "amplitudes", state), dtype=complex)
    if psi.ndim != 1:
        raise ValueError("rotation fidelity needs a single-mode state")
    D = max(t.size, psi.size)
    seq = np.zeros(D, dtype=complex)
    seq[: min(t.size, psi.size)] = np.conj(t[: psi.size]) * psi[: t.size]
    if D > n_angles:  # e^{i n phi_j} is periodic in n with period n_angles
        seq = np.pad(seq, (0, -D % n_angles)).reshape(-1, n_angles).sum(axis=0)
    return np.abs(np.fft.ifft(seq, n_angles) * n_angles) ** 2


def rotation_fidelity(target, state, n_angles: int | None = None) -> tuple[float, float]:
    """Best fidelity over the rotation grid and the (smallest) angle that attains it."""
    prof = rotation_profile(target, state, n_angles)
    j = _grid_argmax(prof)
    return float(prof[j]), 2 * math.pi * j / prof.size


def loss_fixed(scores: Sequence[PatternScore], cfg: LossConfig = LossConfig(), leakage: float = 0.0) -> float:
    if not scores:
        raise ValueError("need at least one pattern score")
    total = sum(cfg.alpha * s.probability + s.fidelity for s in scores)
    return -total + cfg.w_trunc * leakage


def log_weight(fidelity, cfg: LossConfig = LossConfig()):
    """Logarithmic weight Lambda of a (capped) fidelity."""
    f = np.minimum(fidelity, 1 - cfg.eps)
    denom = math.log10(1 - cfg.eps) if cfg.lambda_mode == "as-printed" else math.log10(cfg.eps)
    return np.log10(1 - f) / denom


def beam_score(scores: Sequence[PatternScore], cfg: LossConfig = LossConfig()) -> float:
    p = np.array([s.probability for s in scores])
    f = np.minimum(np.array([s.fidelity for s in scores]), 1 - cfg.eps)
    return float(np.sum(p * (f**2 * log_weight(f, cfg)) ** 4))


def loss_beam(scores: Sequence[PatternScore], cfg: LossConfig = LossConfig(), leakage: float = 0.0) -> float:
    if not scores:
        raise ValueError("need at least one pattern score")
    S = beam_score(scores, cfg)
    return -math.log(S + cfg.delta) - cfg.lam * S + cfg.w_trunc * leakage


def score_state(
    state: FockState,
    assignment: Sequence[tuple[tuple[int, ...], TargetState]],
) -> list[PatternScore]:
    """Herald every assigned pattern of ``state`` and score it against its target.

    Void outcomes score p = 0, F = 0.
    """
    scores = []
    for pattern, target in assignment:
        pattern = tuple(int(n) for n in pattern)
        try:
            res = herald(state, pattern)
        except VoidOutcome:
            scores.append(PatternScore(pattern, 0.0, 0.0, 0.0, target.label))
            continue
        F, phi = rotation_fidelity(target, res.output)
        scores.append(PatternScore(pattern, res.probability, F, phi, target.label))
    return scores


def score_patterns(
    params: CircuitParams,
    assignment: Sequence[tuple[tuple[int, ...], TargetState]],
    D: int,
) -> tuple[list[PatternScore], float]:
    """Build the device state and score each (pattern, target) pair.

    Returns the scores and the truncation leakage of the full state.
    """
    state = build_state(params, D)
    return score_state(state, assignment), truncation_leakage(state)
