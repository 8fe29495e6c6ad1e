"""Fock-basis target states: squeezed cats, binomial codewords, GKP cores, cubic phase."""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import expm
from scipy.optimize import minimize_scalar
from scipy.special import comb

from .config import CONVENTIONS
from .fock import displace_matrix, squeeze_matrix

log = logging.getLogger(__name__)

# Extra Fock levels used internally before truncating to the requested cutoff.
_PAD = 60


@dataclass(frozen=True)
class TargetState:
    label: str
    amplitudes: np.ndarray
    params: dict = field(default_factory=dict, compare=False)

    @property
    def cutoff(self) -> int:
        return self.amplitudes.size

    def padded(self, D: int) -> np.ndarray:
        """Amplitudes zero-padded (or truncated) to length ``D``."""
        out = np.zeros(D, dtype=complex)
        n = min(D, self.cutoff)
        out[:n] = self.amplitudes[:n]
        return out

    def rotation_period(self, tol: float = 1e-10) -> float:
        """Smallest angle phi > 0 with e^{i n phi}|t> equal to |t> up to a phase."""
        support = np.flatnonzero(np.abs(self.amplitudes) > tol)
        if support.size < 2:
            return 2 * np.pi
        step = int(np.gcd.reduce(np.diff(support)))
        return 2 * np.pi / step

    def to_json(self) -> str:
        pairs = [[float(c.real), float(c.imag)] for c in self.amplitudes]
        return json.dumps({"label": self.label, "params": self.params, "amplitudes": pairs})


def _normalize(vec: np.ndarray) -> np.ndarray:
    return vec / np.linalg.norm(vec)


def _truncate(vec: np.ndarray, D: int, max_leakage: float, what: str) -> np.ndarray:
    vec = _normalize(vec)
    leakage = 1.0 - float(np.vdot(vec[:D], vec[:D]).real)
    if leakage > max_leakage:
        raise ValueError(f"{what}: truncation leakage {leakage:.2e} at D={D} exceeds {max_leakage:.0e}")
    return _normalize(vec[:D])


def fock_target(n: int, D: int) -> TargetState:
    amps = np.zeros(D, dtype=complex)
    amps[n] = 1.0
    return TargetState(f"fock{n}", amps, {"family": "fock", "n": n})


def cat_state(alpha: complex, r: float, parity: str, D: int, max_leakage: float = 1e-6) -> TargetState:
    """Squeezed cat S(r) N(|alpha> +/- |-alpha>), renormalized after truncation."""
    if parity not in ("even", "odd"):
        raise ValueError("parity must be 'even' or 'odd'")
    Dw = D + _PAD
    coh = displace_matrix(alpha, Dw).entries[:, 0]
    sign = 1 if parity == "even" else -1
    cat = coh + sign * coh * (-1.0) ** np.arange(Dw)
    if np.linalg.norm(cat) == 0:
        raise ValueError("odd cat is undefined at alpha = 0")
    cat = _normalize(cat)
    if r != 0:
        phase = 0.0 if r > 0 else np.pi
        cat = squeeze_matrix(abs(r), phase, Dw).entries @ cat
    amps = _truncate(cat, D, max_leakage, "cat_state")
    label = f"cat{'+' if parity == 'even' else '-'}"
    return TargetState(label, amps, {"family": "cat", "alpha": _jsonable(alpha), "r": r, "parity": parity})


def binomial_codeword(N: int, S: int, mu: int, D: int) -> TargetState:
    if mu not in (0, 1):
        raise ValueError("mu must be 0 or 1")
    if (N + 1) * (S + 1) >= D:
        raise ValueError(f"binomial code (N={N}, S={S}) needs cutoff > {(N + 1) * (S + 1)}")
    amps = np.zeros(D, dtype=complex)
    for p in range(mu, N + 2, 2):
        amps[p * (S + 1)] = math.sqrt(comb(N + 1, p, exact=True) / 2**N)
    return TargetState(f"bin{mu}_N{N}_S{S}", amps, {"family": "binomial", "N": N, "S": S, "mu": mu})


# ---------------------------------------------------------------- GKP


def envelope_damping(envelope_db: float, mapping: str = "log") -> float:
    """Fock damping beta of e^{-beta n} for a GKP envelope given in dB.

    ``log`` (default): Delta^2 = 10^(-dB/10), beta = -ln(1 - Delta^2)/2.
    ``linear``: beta = Delta^2, the common e^{-Delta^2 n} envelope.
    """
    delta2 = 10 ** (-envelope_db / 10)
    if mapping == "log":
        return -math.log(1 - delta2) / 2
    if mapping == "linear":
        return delta2
    raise ValueError(f"unknown envelope mapping {mapping!r}")


def hermite_functions(n_max: int, q: np.ndarray) -> np.ndarray:
    """Normalized oscillator eigenfunctions psi_n(q), n = 0..n_max-1, shape (n_max, len(q))."""
    q = np.asarray(q, dtype=float)
    out = np.zeros((n_max, q.size))
    out[0] = np.pi**-0.25 * np.exp(-(q**2) / 2)
    if n_max > 1:
        out[1] = np.sqrt(2.0) * q * out[0]
    for n in range(1, n_max - 1):
        out[n + 1] = np.sqrt(2.0 / (n + 1)) * q * out[n] - np.sqrt(n / (n + 1)) * out[n - 1]
    return out


def _gkp_comb(mu: int, beta: float, n_levels: int) -> np.ndarray:
    # e^{-beta n} sum_k psi_n(q_k), teeth at q_k = (2k + mu) sqrt(pi); teeth
    # beyond |q| ~ 37 underflow and contribute nothing at these n.
    q_lim = math.sqrt(2 * n_levels + 1) + 12
    k_max = int(q_lim / (2 * math.sqrt(math.pi))) + 1
    teeth = (2 * np.arange(-k_max, k_max + 1) + mu) * math.sqrt(math.pi)
    amps = hermite_functions(n_levels, teeth).sum(axis=1)
    return amps * np.exp(-beta * np.arange(n_levels))


def _gkp_levels(beta: float, tail: float = 1e-10) -> int:
    # e^{-2 beta n} bounds the relative weight of level n.
    return int(math.ceil(math.log(1 / tail) / (2 * beta))) + 40


def ideal_gkp_fock(
    mu: int,
    envelope_db: float,
    D: int,
    mapping: str = "log",
    max_leakage: float = 1.0,
) -> TargetState:
    """Envelope-damped square-lattice GKP codeword e^{-beta n}|mu> in the Fock basis.

    The series over comb teeth is summed at a cutoff large enough that the
    discarded tail is below 1e-10, then truncated to ``D`` and renormalized.
    """
    if mu not in (0, 1):
        raise ValueError("mu must be 0 or 1")
    if envelope_db <= 0:
        raise ValueError("envelope must be positive")
    beta = envelope_damping(envelope_db, mapping)
    amps = _normalize(_gkp_comb(mu, beta, max(D, _gkp_levels(beta))))
    if abs(amps[-1]) ** 2 > 1e-10:
        raise ValueError("GKP Fock series did not converge")
    amps = _truncate(amps, D, max_leakage, "ideal_gkp_fock").astype(complex)
    return TargetState(
        f"gkp{mu}_ideal",
        amps,
        {"family": "gkp_ideal", "mu": mu, "envelope_db": envelope_db, "mapping": mapping},
    )


def _core_projection(gkp: np.ndarray, xi: float, n_max: int) -> np.ndarray:
    # Rows 0..n_max of S(xi)^dag = S(-xi), applied to the (untruncated) GKP vector.
    phase = np.pi if xi >= 0 else 0.0
    S = squeeze_matrix(abs(xi), phase, gkp.size).entries
    return S[: n_max + 1] @ gkp


def gkp_core_fidelity(gkp: np.ndarray, xi: float, n_max: int) -> float:
    """Fidelity of D(0)S(xi)|core> with ``gkp`` when the core is the best one for this xi."""
    proj = _core_projection(gkp, xi, n_max)
    return float(np.vdot(proj, proj).real)


def gkp_core_state(
    mu: int,
    n_max: int,
    envelope_db: float,
    D: int,
    mapping: str = "log",
    xi_bounds: tuple[float, float] = (-2.5, 2.5),
    fidelity_goal: float = 0.99,
) -> TargetState:
    """Finite-Fock core of an approximate GKP codeword.

    For a fixed squeezing xi the fidelity of S(xi)|c> with the enveloped
    codeword is maximized by c proportional to the projection of
    S(xi)^dag|GKP> onto levels 0..n_max, and equals that projection's squared
    norm; xi is then chosen by a grid scan followed by bounded Brent search.
    The displacement stays at zero: both codewords are parity symmetric.
    """
    if n_max >= D:
        raise ValueError(f"n_max={n_max} must be below the cutoff D={D}")
    if n_max < 0:
        raise ValueError("n_max must be non-negative")
    beta = envelope_damping(envelope_db, mapping)
    gkp = _normalize(_gkp_comb(mu, beta, _gkp_levels(beta)))

    grid = np.linspace(*xi_bounds, 101)
    vals = [gkp_core_fidelity(gkp, x, n_max) for x in grid]
    i = int(np.argmax(vals))
    lo, hi = grid[max(i - 1, 0)], grid[min(i + 1, grid.size - 1)]
    res = minimize_scalar(
        lambda x: -gkp_core_fidelity(gkp, x, n_max),
        bounds=(lo, hi),
        method="bounded",
        options={"xatol": 1e-10},
    )
    xi = float(res.x) if -res.fun >= vals[i] else float(grid[i])
    fid = gkp_core_fidelity(gkp, xi, n_max)
    if fid < fidelity_goal:
        log.info("GKP core mu=%d n_max=%d reaches fidelity %.4f < %.2f", mu, n_max, fid, fidelity_goal)

    core = _core_projection(gkp, xi, n_max).astype(complex)
    amps = np.zeros(D, dtype=complex)
    amps[: n_max + 1] = _normalize(core)
    return TargetState(
        f"gkp{mu}_A{n_max}",
        amps,
        {
            "family": "gkp_core",
            "mu": mu,
            "n_max": n_max,
            "envelope_db": envelope_db,
            "mapping": mapping,
            "xi": xi,
            "fidelity": fid,
            "meets_goal": fid >= fidelity_goal,
        },
    )


# ---------------------------------------------------------------- cubic phase


def quadrature_q(D: int, hbar: float | None = None) -> np.ndarray:
    hbar = CONVENTIONS.hbar if hbar is None else hbar
    a = np.diag(np.sqrt(np.arange(1, D)), 1)
    return np.sqrt(hbar / 2) * (a + a.T)


def cubic_phase_state(
    gamma: float,
    r: float,
    alpha: float,
    D: int,
    hbar: float | None = None,
    max_leakage: float = 1e-3,
) -> TargetState:
    """D(alpha) exp(i gamma Q^3) S(r)|0>, with Q from the truncated ladder operators."""
    if D < 2:
        raise ValueError("cutoff must be at least 2")
    Dw = D + _PAD
    Q = quadrature_q(Dw, hbar)
    cubic = expm(1j * gamma * (Q @ Q @ Q))
    phase = 0.0 if r >= 0 else np.pi
    vac_sq = squeeze_matrix(abs(r), phase, Dw).entries[:, 0]
    vec = displace_matrix(alpha, Dw).entries @ (cubic @ vac_sq)
    # The last few rows of the truncated Q^3 are wrong; judge leakage well inside.
    amps = _truncate(vec, D, max_leakage, "cubic_phase_state")
    return TargetState(
        "cubic", amps, {"family": "cubic", "gamma": gamma, "r": r, "alpha": _jsonable(alpha)}
    )


def _jsonable(z):
    z = complex(z)
    return z.real if z.imag == 0 else [z.real, z.imag]


def make_target(spec: dict, D: int) -> TargetState:
    """Build a target from a config mapping such as ``{"family": "cat", ...}``."""
    spec = dict(spec)
    family = spec.pop("family")
    label = spec.pop("label", None)
    if family == "cat":
        alpha = spec.get("alpha", math.sqrt(6))
        if isinstance(alpha, (list, tuple)):
            alpha = complex(*alpha)
        t = cat_state(alpha, spec.get("r", 0.5), spec.get("parity", "even"), D)
    elif family == "binomial":
        t = binomial_codeword(spec["N"], spec["S"], spec.get("mu", 0), D)
    elif family == "gkp_core":
        t = gkp_core_state(
            spec.get("mu", 0), spec["n_max"], spec.get("envelope_db", 10.0), D, spec.get("mapping", "log")
        )
    elif family == "gkp_ideal":
        t = ideal_gkp_fock(spec.get("mu", 0), spec.get("envelope_db", 10.0), D, spec.get("mapping", "log"))
    elif family == "cubic":
        t = cubic_phase_state(
            spec.get("gamma", -0.2), spec.get("r", -0.7), spec.get("alpha", 1.25), D,
            max_leakage=spec.get("max_leakage", 1e-3),
        )
    elif family == "fock":
        t = fock_target(spec["n"], D)
    else:
        raise ValueError(f"unknown target family {family!r}")
    if label is not None:
        t = TargetState(label, t.amplitudes, t.params)
    return t
