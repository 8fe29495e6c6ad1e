import json
import math

import numpy as np
import pytest
from scipy.special import eval_hermite, gammaln

from heraldopt.fock import squeeze_matrix
from heraldopt.targets import (
    TargetState, binomial_codeword, cat_state, cubic_phase_state, envelope_damping, gkp_core_state,
    hermite_functions, ideal_gkp_fock, make_target, quadrature_q,
)

import oracles

D = 30

# Frozen output of the inner optimization for mu=1, n_max=4, 10 dB log envelope.
GOLDEN_GKP1_A4 = np.array([9.76873506e-02, 0.0, 5.77229972e-01, 0.0, 8.10717423e-01])
GOLDEN_GKP1_A4_XI = 0.27944077063321593
GOLDEN_GKP1_A4_FID = 0.6001149572451377


def _hermite_oracle(n, q):
    # psi_n(q) = H_n(q) e^{-q^2/2} / sqrt(2^n n! sqrt(pi)) with scipy's Hermite polynomials
    log_norm = -0.5 * (n * math.log(2) + gammaln(n + 1) + 0.5 * math.log(math.pi))
    return eval_hermite(n, q) * np.exp(-(q**2) / 2 + log_norm)


def _gkp_mehler_oracle(mu, beta, D):
    """Fock amplitudes of e^{-beta n} sum_k |q_k> from Mehler's kernel, by quadrature."""
    t = math.exp(-beta)
    q = np.linspace(-25, 25, 50001)
    k = np.arange(-8, 9)
    qk = (2 * k + mu) * math.sqrt(math.pi)
    wave = np.zeros_like(q)
    for x in qk:
        wave += np.exp(-((1 + t * t) * (q * q + x * x) - 4 * t * q * x) / (2 * (1 - t * t)))
    dq = q[1] - q[0]
    amps = np.array([np.sum(_hermite_oracle(n, q) * wave) * dq for n in range(D)])
    return amps


# ---------------------------------------------------------------- cats


def test_cat_closed_form_without_squeezing():
    alpha = math.sqrt(6)
    t = cat_state(alpha, 0.0, "even", D)
    n_plus = (2 * (1 + math.exp(-2 * alpha**2))) ** -0.5
    assert t.amplitudes[0].real == pytest.approx(2 * n_plus * math.exp(-3), abs=1e-10)
    assert t.amplitudes[0].real == pytest.approx(0.0704, abs=1e-4)
    assert np.all(np.abs(t.amplitudes[1::2]) < 1e-15)
    ref = oracles.coherent(alpha, D) + oracles.coherent(-alpha, D)
    assert np.allclose(t.amplitudes, ref / np.linalg.norm(ref), atol=1e-10)


def test_cat_limits_and_parity():
    assert np.allclose(cat_state(0.0, 0.0, "even", 10).amplitudes, np.eye(10)[0])
    odd = cat_state(1.7 + 0.4j, 0.3, "odd", D)
    assert odd.amplitudes[0] == 0
    assert np.all(np.abs(odd.amplitudes[0::2]) < 1e-15)
    with pytest.raises(ValueError):
        cat_state(0.0, 0.0, "odd", D)
    with pytest.raises(ValueError):
        cat_state(1.0, 0.0, "weird", D)


def test_squeezed_cat_is_squeezed_after_superposition():
    alpha, r = math.sqrt(6), 0.5
    t = cat_state(alpha, r, "even", D)
    big = 120
    cat = oracles.coherent(alpha, big) + oracles.coherent(-alpha, big)
    ref = oracles.squeeze_expm(r, 0.0, big, pad=150) @ (cat / np.linalg.norm(cat))
    ref = ref[:D] / np.linalg.norm(ref[:D])
    assert abs(np.vdot(ref, t.amplitudes)) ** 2 == pytest.approx(1, abs=1e-10)
    assert np.linalg.norm(t.amplitudes) == pytest.approx(1, abs=1e-12)


def test_cat_leakage_guard():
    with pytest.raises(ValueError):
        cat_state(4.0, 0.5, "even", 12)


# ---------------------------------------------------------------- binomial


def test_binomial_codewords():
    t = binomial_codeword(2, 2, 0, D).amplitudes
    ref = np.zeros(D)
    ref[0], ref[6] = 0.5, math.sqrt(3) / 2
    assert np.allclose(t, ref, atol=1e-15)
    t = binomial_codeword(2, 3, 0, D).amplitudes
    ref = np.zeros(D)
    ref[0], ref[8] = 0.5, math.sqrt(3) / 2
    assert np.allclose(t, ref, atol=1e-15)


@pytest.mark.parametrize("N, S", [(1, 1), (2, 2), (2, 3), (3, 2)])
def test_binomial_orthonormal(N, S):
    z, o = binomial_codeword(N, S, 0, D).amplitudes, binomial_codeword(N, S, 1, D).amplitudes
    assert np.vdot(z, z).real == pytest.approx(1, abs=1e-12)
    assert np.vdot(o, o).real == pytest.approx(1, abs=1e-12)
    assert abs(np.vdot(z, o)) == 0


def test_binomial_cutoff_error():
    with pytest.raises(ValueError):
        binomial_codeword(2, 3, 0, 12)


# ---------------------------------------------------------------- GKP


def test_envelope_mapping():
    d2 = 10 ** -1
    assert envelope_damping(10.0) == pytest.approx(-math.log(1 - d2) / 2)
    assert envelope_damping(10.0, "linear") == pytest.approx(d2)
    with pytest.raises(ValueError):
        envelope_damping(10.0, "cubic")


def test_hermite_functions_match_scipy():
    q = np.linspace(-8, 8, 101)
    H = hermite_functions(40, q)
    ref = np.array([_hermite_oracle(n, q) for n in range(40)])
    assert np.max(np.abs(H - ref)) < 1e-12


@pytest.mark.parametrize("mu", [0, 1])
def test_ideal_gkp_matches_mehler_oracle(mu):
    beta = envelope_damping(10.0)
    ours = ideal_gkp_fock(mu, 10.0, 60).amplitudes
    ref = _gkp_mehler_oracle(mu, beta, 60)
    ref /= np.linalg.norm(ref)
    assert abs(np.vdot(ref, ours)) ** 2 == pytest.approx(1, abs=1e-9)


def test_ideal_gkp_properties():
    z = ideal_gkp_fock(0, 10.0, 120).amplitudes
    o = ideal_gkp_fock(1, 10.0, 120).amplitudes
    assert np.all(np.abs(z[1::2]) < 1e-12) and np.all(np.abs(o[1::2]) < 1e-12)
    assert abs(np.vdot(z, o)) < 1e-6
    # heavy damping collapses mu=0 onto the vacuum
    heavy = ideal_gkp_fock(0, 0.05, 10).amplitudes
    assert abs(heavy[0]) ** 2 > 0.99


def test_gkp_core_golden():
    t = gkp_core_state(1, 4, 10.0, D)
    assert np.allclose(t.amplitudes[:5].real, GOLDEN_GKP1_A4, atol=1e-8)
    assert np.max(np.abs(t.amplitudes[5:])) == 0
    assert t.params["xi"] == pytest.approx(GOLDEN_GKP1_A4_XI, abs=1e-6)
    assert t.params["fidelity"] == pytest.approx(GOLDEN_GKP1_A4_FID, abs=1e-9)
    assert t.label == "gkp1_A4"


def test_gkp_core_beats_dense_xi_grid():
    # the inner search must do at least as well as a brute-force scan
    from heraldopt.targets import _gkp_comb, _gkp_levels, gkp_core_fidelity

    beta = envelope_damping(10.0)
    gkp = _gkp_comb(1, beta, _gkp_levels(beta))
    gkp /= np.linalg.norm(gkp)
    grid = np.linspace(-2.5, 2.5, 2001)
    best = max(gkp_core_fidelity(gkp, x, 4) for x in grid)
    assert GOLDEN_GKP1_A4_FID >= best - 1e-12
    assert GOLDEN_GKP1_A4_FID - best < 1e-5


def test_gkp_core_fidelity_rebuilt_from_amplitudes():
    # S(xi)|core> overlapped with the enveloped ideal state reproduces the reported fidelity
    t = gkp_core_state(1, 4, 10.0, D)
    big = 200
    ideal = ideal_gkp_fock(1, 10.0, big).amplitudes
    core = np.zeros(big, complex)
    core[:5] = t.amplitudes[:5]
    xi = t.params["xi"]
    vec = squeeze_matrix(abs(xi), 0.0 if xi >= 0 else math.pi, big).entries @ core
    assert abs(np.vdot(ideal, vec)) ** 2 == pytest.approx(t.params["fidelity"], abs=1e-8)


@pytest.mark.parametrize("mu", [0, 1])
def test_gkp_core_parity_and_monotone_fidelity(mu):
    fids = []
    for n_max in (0, 2, 4, 6, 8, 10):
        t = gkp_core_state(mu, n_max, 10.0, D)
        assert np.all(np.abs(t.amplitudes[1::2]) < 1e-12)
        assert np.linalg.norm(t.amplitudes) == pytest.approx(1, abs=1e-12)
        fids.append(t.params["fidelity"])
    assert all(b >= a - 1e-12 for a, b in zip(fids, fids[1:]))
    assert np.allclose(gkp_core_state(mu, 0, 10.0, D).amplitudes, np.eye(D)[0])


def test_gkp_core_cutoff_error():
    with pytest.raises(ValueError):
        gkp_core_state(0, 12, 10.0, 10)


# ---------------------------------------------------------------- cubic phase


def test_cubic_reduces_to_squeezed_vacuum_and_coherent():
    sv = cubic_phase_state(0.0, 0.7, 0.0, D).amplitudes
    ref = squeeze_matrix(0.7, 0.0, D).entries[:, 0]
    assert np.allclose(sv, ref / np.linalg.norm(ref), atol=1e-10)
    coh = cubic_phase_state(0.0, 0.0, 1.25, D).amplitudes
    assert np.allclose(coh, oracles.coherent(1.25, D) / np.linalg.norm(oracles.coherent(1.25, D)), atol=1e-10)


def test_cubic_gate_unitary_on_inner_block():
    from scipy.linalg import expm

    Q = quadrature_q(D)
    U = expm(1j * -0.2 * (Q @ Q @ Q))
    inner = D - 10
    assert np.max(np.abs((U.conj().T @ U)[:inner, :inner] - np.eye(inner))) < 1e-8


def test_cubic_default_target_leakage():
    # r = -0.7 anti-squeezes q, and the cubic phase pushes that width into high
    # photon numbers: about 1.9e-2 of the weight sits above level 30.
    with pytest.raises(ValueError):
        cubic_phase_state(-0.2, -0.7, 1.25, D)
    t = cubic_phase_state(-0.2, -0.7, 1.25, D, max_leakage=0.05)
    assert np.linalg.norm(t.amplitudes) == pytest.approx(1, abs=1e-12)
    leaks = []
    for Dc in (30, 40, 50):
        amps = cubic_phase_state(-0.2, -0.7, 1.25, 120, max_leakage=1).amplitudes
        leaks.append(1 - np.sum(np.abs(amps[:Dc]) ** 2))
    assert leaks[0] > 1e-3 and leaks[0] > leaks[1] > leaks[2]
    assert make_target({"family": "cubic", "max_leakage": 0.05}, D).label == "cubic"


# ---------------------------------------------------------------- helpers


def test_rotation_period_and_padding():
    assert binomial_codeword(2, 2, 0, D).rotation_period() == pytest.approx(2 * math.pi / 6)
    assert cat_state(2.0, 0.0, "even", D).rotation_period() == pytest.approx(math.pi)
    t = TargetState("x", np.array([0.6, 0.8j]))
    assert t.padded(4).tolist() == [0.6, 0.8j, 0, 0]
    assert t.rotation_period() == pytest.approx(2 * math.pi)


def test_json_export_round_trip():
    t = cat_state(1.5, 0.2, "odd", 20)
    data = json.loads(t.to_json())
    amps = np.array([complex(*p) for p in data["amplitudes"]])
    assert np.array_equal(amps, t.amplitudes)
    assert data["params"]["parity"] == "odd"


def test_make_target_families():
    assert make_target({"family": "fock", "n": 2}, 5).amplitudes[2] == 1
    t = make_target({"family": "binomial", "N": 2, "S": 2, "label": "zero"}, D)
    assert t.label == "zero"
    assert make_target({"family": "gkp_core", "mu": 1, "n_max": 4}, D).label == "gkp1_A4"
    assert make_target({"family": "cat", "alpha": [1.0, 0.5]}, D).params["alpha"] == [1.0, 0.5]
    with pytest.raises(ValueError):
        make_target({"family": "nope"}, D)
