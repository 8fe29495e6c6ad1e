"""Pattern discovery, bounded basin-hopping and run orchestration."""

from __future__ import annotations

import json
import math
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import minimize

from .circuit import CircuitParams, VoidOutcome, ancilla_marginals, build_state, herald, truncation_leakage
from .config import CONVENTIONS
from .objective import LossConfig, PatternScore, _grid_argmax, loss_beam, loss_fixed, score_state
from .targets import TargetState

Pattern = tuple[int, ...]


# ---------------------------------------------------------------- patterns


def top_b_patterns(marginals: np.ndarray, B: int) -> list[Pattern]:
    """The ``B`` most probable ancilla patterns, ties broken lexicographically.

    Patterns with zero probability are never returned.
    """
    if B < 1:
        raise ValueError("beam width must be at least 1")
    marginals = np.asarray(marginals)
    flat = marginals.reshape(-1)
    # C-order flattening is lexicographic, and a stable sort keeps it for ties.
    order = np.argsort(-flat, kind="stable")[:B]
    order = order[flat[order] > 0]
    return [tuple(int(i) for i in np.unravel_index(k, marginals.shape)) for k in order]


# ---------------------------------------------------------------- local search


class _NonFinite(Exception):
    pass


@dataclass
class LocalResult:
    x: np.ndarray
    fun: float
    nfev: int
    success: bool
    message: str


def _box_maps(lower, upper):
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    if lower.shape != upper.shape or np.any(upper < lower):
        raise ValueError("bounds must satisfy lower <= upper elementwise")
    if not (np.all(np.isfinite(lower)) and np.all(np.isfinite(upper))):
        raise ValueError("bounds must be finite")
    free = upper > lower
    width = upper - lower
    return lower, upper, free, width


def local_minimize(
    f: Callable[[np.ndarray], float],
    x0,
    lower,
    upper,
    maxiter: int = 200,
    grad_step: float = 1e-6,
    tol: float = 1e-9,
    edge: float = 1e-4,
) -> LocalResult:
    """Quasi-Newton descent inside a box.

    Each free coordinate is written as ``x = lo + (hi - lo)(1 + tanh u)/2`` and
    L-BFGS runs unconstrained in ``u`` with central-difference gradients. A start
    exactly on a face is nudged ``edge`` (relative) inside, where tanh is not
    flat. Coordinates with ``lo == hi`` stay fixed.

    Args:
        f: Objective on the original coordinates.
        x0: Start point inside the box.
        lower, upper: Box bounds.
        maxiter: L-BFGS iteration cap.
        grad_step: Finite-difference step in ``u``.
        tol: Function-change tolerance (gradient tolerance is ``tol`` too).
        edge: Relative distance from faces used for the starting ``u``.

    Returns:
        The best point seen; ``fun <= f(x0)`` always holds. ``success`` is
        False if the objective returned a non-finite value.
    """
    lower, upper, free, width = _box_maps(lower, upper)
    x0 = np.asarray(x0, dtype=float)
    if np.any(x0 < lower) or np.any(x0 > upper):
        raise ValueError("x0 lies outside the bounds")
    nfev = 0
    best = {"x": x0.copy(), "f": np.inf}

    def evaluate(x):
        nonlocal nfev
        nfev += 1
        val = float(f(x))
        if not math.isfinite(val):
            raise _NonFinite(f"objective returned {val}")
        if val < best["f"]:
            best["x"], best["f"] = x.copy(), val
        return val

    try:
        evaluate(x0)
    except _NonFinite as exc:
        return LocalResult(x0, math.inf, nfev, False, str(exc))
    if not free.any():
        return LocalResult(x0, best["f"], nfev, True, "no free coordinates")

    lo, w = lower[free], width[free]

    def to_x(u):
        x = x0.copy()
        x[free] = lo + w * 0.5 * (1.0 + np.tanh(u))
        return x

    s = np.clip((x0[free] - lo) / w, edge, 1 - edge)
    u0 = np.arctanh(2 * s - 1)

    def fun(u):
        return evaluate(to_x(u))

    def jac(u):
        g = np.empty_like(u)
        for i in range(u.size):
            e = np.zeros_like(u)
            e[i] = grad_step
            g[i] = (fun(u + e) - fun(u - e)) / (2 * grad_step)
        return g

    try:
        res = minimize(
            fun, u0, jac=jac, method="L-BFGS-B",
            options={"maxiter": maxiter, "ftol": tol, "gtol": tol},
        )
        msg, ok = str(res.message), True
    except _NonFinite as exc:
        msg, ok = str(exc), False
    return LocalResult(best["x"], best["f"], nfev, ok, msg)


# ---------------------------------------------------------------- basin hopping


@dataclass
class BasinConfig:
    hops: int = 150
    step: float = 0.4
    temperature: float = 1.0
    restarts: int = 10
    seed: int = 0
    local_maxiter: int = 200
    grad_step: float = 1e-6
    tol: float = 1e-9

    def __post_init__(self):
        if self.hops < 0 or self.restarts < 1:
            raise ValueError("need hops >= 0 and restarts >= 1")
        if self.step < 0 or self.temperature < 0:
            raise ValueError("step and temperature must be non-negative")


@dataclass
class BasinResult:
    x: np.ndarray
    fun: float
    trace: list[float]  # global best after every local search
    restart_best: list[float]
    accepted: list[list[float]]  # accepted-loss chain of each restart
    nfev: int
    failures: int


def save_checkpoint(path, payload: dict) -> None:
    """Atomically write a JSON checkpoint."""
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    os.replace(tmp, path)


def load_checkpoint(path) -> dict:
    return json.loads(Path(path).read_text(encoding="utf-8"))


def basin_hop(
    f: Callable[[np.ndarray], float],
    lower,
    upper,
    cfg: BasinConfig = BasinConfig(),
    x0=None,
    checkpoint: str | os.PathLike | None = None,
    tag: str | None = None,
) -> BasinResult:
    """Seeded multi-restart basin hopping with Metropolis acceptance.

    Restart ``k`` draws from the ``k``-th child of ``SeedSequence(cfg.seed)``;
    it starts at ``x0`` (restart 0 only, if given) or a uniform point in the
    box. Each hop perturbs the accepted point by ``U(-step, step)`` per free
    coordinate, clips to the box and runs ``local_minimize``.

    With ``checkpoint`` set, progress is saved after every restart. A
    checkpoint on disk is resumed only if its settings and ``tag`` (an
    identifier of the objective, such as a config hash) both match.
    """
    lower, upper, free, _ = _box_maps(lower, upper)
    children = np.random.SeedSequence(cfg.seed).spawn(cfg.restarts)
    state = {
        "seed": cfg.seed, "config": asdict(cfg), "tag": tag, "next_restart": 0,
        "x": None, "fun": math.inf, "trace": [], "restart_best": [],
        "accepted": [], "nfev": 0, "failures": 0,
    }
    if checkpoint is not None and Path(checkpoint).exists():
        saved = load_checkpoint(checkpoint)
        if saved.get("config") == state["config"] and saved.get("tag") == tag:
            state = saved

    def local(x):
        res = local_minimize(f, x, lower, upper, cfg.local_maxiter, cfg.grad_step, cfg.tol)
        state["nfev"] += res.nfev
        state["failures"] += not res.success
        return res

    for k in range(state["next_restart"], cfg.restarts):
        rng = np.random.default_rng(children[k])
        start = rng.uniform(lower, upper)
        if k == 0 and x0 is not None:
            start = np.asarray(x0, dtype=float)
        cur = local(start)
        chain = [cur.fun]
        rbest = cur

        def offer(res):
            nonlocal rbest
            if res.fun < rbest.fun:
                rbest = res
            if res.fun < state["fun"]:
                state["x"], state["fun"] = res.x.tolist(), res.fun
            state["trace"].append(state["fun"])

        offer(cur)
        for _ in range(cfg.hops):
            trial = cur.x + np.where(free, rng.uniform(-cfg.step, cfg.step, cur.x.size), 0.0)
            res = local(np.clip(trial, lower, upper))
            offer(res)
            u = rng.random()
            if res.fun <= cur.fun:
                accept = True
            elif cfg.temperature > 0 and math.isfinite(res.fun):
                accept = u < math.exp(-(res.fun - cur.fun) / cfg.temperature)
            else:
                accept = False
            if accept:
                cur = res
                chain.append(cur.fun)
        state["restart_best"].append(rbest.fun)
        state["accepted"].append(chain)
        state["next_restart"] = k + 1
        if checkpoint is not None:
            save_checkpoint(checkpoint, state)

    return BasinResult(
        np.asarray(state["x"], dtype=float), float(state["fun"]), state["trace"],
        state["restart_best"], state["accepted"], state["nfev"], state["failures"],
    )


# ---------------------------------------------------------------- runs


@dataclass
class CircuitSpec:
    """Device size, cutoff and parameter box.

    ``displaced`` frees the coherent amplitudes (|Re|, |Im| <= ``alpha_max``).
    Output phases are fixed at 0 by default since the rotation-maximized
    fidelity absorbs the output phase and ancilla phases do not change
    photon-number statistics.
    """

    num_modes: int
    cutoff: int = 30
    displaced: bool = False
    alpha_max: float = 3.0
    free_out_phase: bool = False
    lower: np.ndarray | None = None
    upper: np.ndarray | None = None

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        if self.lower is not None and self.upper is not None:
            return np.asarray(self.lower, float), np.asarray(self.upper, float)
        N = self.num_modes
        nb = len(CircuitParams(N).pairs)
        two_pi = 2 * math.pi
        a = self.alpha_max if self.displaced else 0.0
        o = two_pi if self.free_out_phase else 0.0
        lo = np.concatenate([np.zeros(N), np.zeros(N), -a * np.ones(2 * N), np.zeros(2 * nb), np.zeros(N)])
        hi = np.concatenate(
            [CONVENTIONS.r_max * np.ones(N), two_pi * np.ones(N), a * np.ones(2 * N),
             two_pi * np.ones(2 * nb), o * np.ones(N)]
        )
        return lo, hi


@dataclass
class OptConfig:
    """Optimizer settings shared by fixed-pattern and beam-search runs."""

    mode: str = "fixed"
    beam_width: int = 150
    basin: BasinConfig = field(default_factory=BasinConfig)
    loss: LossConfig = field(default_factory=LossConfig)

    def __post_init__(self):
        if self.mode not in ("fixed", "beam"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.beam_width < 1:
            raise ValueError("beam width must be at least 1")


@dataclass
class OptResult:
    x: np.ndarray
    num_modes: int
    cutoff: int
    scores: list[PatternScore]
    loss: float
    leakage: float
    trace: list[float]
    seed: int
    mode: str = "fixed"
    periods: dict[str, float] = field(default_factory=dict)
    notes: list[str] = field(default_factory=list)

    @property
    def p_agg(self) -> float:
        return float(sum(s.probability for s in self.scores))

    @property
    def min_fidelity(self) -> float:
        return float(min(s.fidelity for s in self.scores))

    @property
    def params(self) -> CircuitParams:
        return CircuitParams.from_vector(self.x, self.num_modes)


def _assignment(assignment) -> list[tuple[Pattern, TargetState]]:
    out = [(tuple(int(n) for n in p), t) for p, t in assignment]
    if not out:
        raise ValueError("need at least one pattern/target pair")
    return out


def fixed_objective(spec: CircuitSpec, assignment, loss: LossConfig = LossConfig()):
    """``x -> loss_fixed`` for a fixed pattern/target assignment."""
    assignment = _assignment(assignment)
    D, N = spec.cutoff, spec.num_modes

    def f(x):
        state = build_state(CircuitParams.from_vector(x, N), D)
        return loss_fixed(score_state(state, assignment), loss, truncation_leakage(state))

    return f


def score_beam(state, targets: Sequence[TargetState], B: int) -> list[PatternScore]:
    """Score the top-B patterns of ``state``, each against its best target."""
    D = state.cutoff
    T = np.array([t.padded(D) for t in targets])
    scores = []
    for pattern in top_b_patterns(ancilla_marginals(state), B):
        try:
            res = herald(state, pattern)
        except VoidOutcome:
            scores.append(PatternScore(pattern, 0.0, 0.0, 0.0, ""))
            continue
        n_angles = CONVENTIONS.n_angles
        seq = np.conj(T) * res.output.amplitudes[None, :]
        if D > n_angles:
            seq = np.pad(seq, ((0, 0), (0, -D % n_angles))).reshape(len(targets), -1, n_angles).sum(axis=1)
        prof = np.abs(np.fft.ifft(seq, n_angles, axis=1) * n_angles) ** 2
        peak = prof.max(axis=1)
        k = int(np.argmax(peak))  # first target wins ties
        j = _grid_argmax(prof[k])
        scores.append(
            PatternScore(pattern, res.probability, float(prof[k, j]), 2 * math.pi * j / n_angles, targets[k].label)
        )
    return scores


def beam_objective(spec: CircuitSpec, targets: Sequence[TargetState], B: int, loss: LossConfig = LossConfig()):
    D, N = spec.cutoff, spec.num_modes

    def f(x):
        state = build_state(CircuitParams.from_vector(x, N), D)
        return loss_beam(score_beam(state, targets, B), loss, truncation_leakage(state))

    return f


def _periods(targets) -> dict[str, float]:
    return {t.label: t.rotation_period() for t in targets}


def run_fixed(
    spec: CircuitSpec, assignment, cfg: OptConfig = OptConfig(), x0=None, checkpoint=None, tag=None
) -> OptResult:
    """Basin-hop ``loss_fixed`` over the circuit box and score the best point."""
    assignment = _assignment(assignment)
    lo, hi = spec.bounds()
    if cfg.basin.hops == 0 and cfg.basin.restarts == 1 and x0 is not None:
        x = np.asarray(x0, dtype=float)
        trace = []
    else:
        res = basin_hop(fixed_objective(spec, assignment, cfg.loss), lo, hi, cfg.basin, x0, checkpoint, tag)
        x, trace = res.x, res.trace
    state = build_state(CircuitParams.from_vector(x, spec.num_modes), spec.cutoff)
    scores = score_state(state, assignment)
    leak = truncation_leakage(state)
    return OptResult(
        x, spec.num_modes, spec.cutoff, scores, loss_fixed(scores, cfg.loss, leak), leak, trace,
        cfg.basin.seed, "fixed", _periods(t for _, t in assignment),
    )


def run_beam(
    spec: CircuitSpec,
    targets: Sequence[TargetState],
    cfg: OptConfig = OptConfig(mode="beam"),
    x0=None,
    checkpoint=None,
    tag=None,
) -> OptResult:
    """Basin-hop ``loss_beam`` with top-B pattern discovery at every evaluation."""
    targets = list(targets)
    if not targets:
        raise ValueError("need at least one target")
    lo, hi = spec.bounds()
    res = basin_hop(beam_objective(spec, targets, cfg.beam_width, cfg.loss), lo, hi, cfg.basin, x0, checkpoint, tag)
    state = build_state(CircuitParams.from_vector(res.x, spec.num_modes), spec.cutoff)
    scores = score_beam(state, targets, cfg.beam_width)
    leak = truncation_leakage(state)
    notes = ["beam patterns matched to the best target of the list"] if len(targets) > 1 else []
    return OptResult(
        res.x, spec.num_modes, spec.cutoff, scores, loss_beam(scores, cfg.loss, leak), leak, res.trace,
        cfg.basin.seed, "beam", _periods(targets), notes,
    )


def select_scores(result: OptResult, min_fidelity: float) -> list[PatternScore]:
    """Discovered patterns whose fidelity clears ``min_fidelity``."""
    return [s for s in result.scores if s.fidelity >= min_fidelity]


# ---------------------------------------------------------------- rotation variance


def circular_distance(a: float, b: float, period: float = 2 * math.pi) -> float:
    d = (a - b) % period
    return min(d, period - d)


def classify_rotation(result: OptResult, tol: float | None = None) -> str:
    """"invariant" if same-target patterns share phi* (within ``tol``), else "variant".

    Angles are compared modulo the target's own rotation period, so a state
    with support on even levels only has phi* defined modulo pi.
    """
    tol = 2 * (2 * math.pi / CONVENTIONS.n_angles) if tol is None else tol
    groups: dict[str, list[float]] = {}
    for s in result.scores:
        if s.target:
            groups.setdefault(s.target, []).append(s.phi_star)
    groups = {k: v for k, v in groups.items() if len(v) >= 2}
    if not groups:
        raise ValueError("need at least two patterns sharing a target")
    for label, phis in groups.items():
        period = result.periods.get(label, 2 * math.pi)
        if any(circular_distance(a, b, period) > tol for a in phis for b in phis):
            return "variant"
    return "invariant"


# ---------------------------------------------------------------- serialization


def result_to_dict(result: OptResult) -> dict:
    return {
        "mode": result.mode,
        "num_modes": result.num_modes,
        "cutoff": result.cutoff,
        "seed": result.seed,
        "x": [float(v) for v in result.x],
        "labels": CircuitParams.vector_labels(result.num_modes),
        "loss": float(result.loss),
        "leakage": float(result.leakage),
        "p_agg": result.p_agg,
        "patterns": [
            {
                "pattern": list(s.pattern), "target": s.target, "probability": float(s.probability),
                "fidelity": float(s.fidelity), "phi_star": float(s.phi_star),
            }
            for s in result.scores
        ],
        "periods": {k: float(v) for k, v in result.periods.items()},
        "trace": [float(v) for v in result.trace],
        "notes": list(result.notes),
    }
