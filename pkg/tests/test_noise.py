from dataclasses import replace
from itertools import islice

import numpy as np
import pytest
from scipy.linalg import expm

import oracles
from otoc_lab.errors import ConfigError, DegenerateFitError
from otoc_lab.evolution import evolve_pair_matrix
from otoc_lab.hamiltonians import build_xy_chain
from otoc_lab.noise import (
    EPSILON_GRID,
    NoiseConfig,
    apply_readout,
    channel_series,
    channel_value,
    channel_values,
    depolarize_sites,
    imperfect_bell_distribution,
    imperfect_bell_ensemble,
    readout_distribution,
    scaling_exponent,
)
from otoc_lab.protocol import OtocModel, SeriesConfig
from otoc_lab.qstate import (
    PAULI,
    PhaseFrame,
    StateVector,
    apply_local_unitary,
    bell_state,
    expectation_vvt,
    pair_qubit,
)

BASE = SeriesConfig(n=4, w_site=1, v_site=4, times=(0.0, 1.0))


def test_noise_config_validation():
    assert NoiseConfig("imperfect-bell", 0.1).kind == "imperfect_bell"
    assert NoiseConfig("symmetry_breaking", -0.02).strength == -0.02
    for kind, s in [("readout", 0.6), ("imperfect_bell", 1.5), ("depolarizing", -1), ("nope", 0)]:
        with pytest.raises(ConfigError):
            NoiseConfig(kind, s)
    with pytest.raises(ConfigError):
        NoiseConfig("spontaneous_emission", 0.1, dt=0)


def test_readout_laws():
    counts = {(1, 1): 700, (1, -1): 100, (-1, 1): 50, (-1, -1): 150}
    assert apply_readout(counts, 0.0, seed=1) == counts
    flipped = apply_readout(counts, 0.2, seed=1)
    assert sum(flipped.values()) == 1000
    ideal = np.array([1.0, 0, 0, 0])
    assert readout_distribution(ideal, 0.1) @ [1, -1, -1, 1] == pytest.approx(0.64, abs=1e-15)
    big = apply_readout({(1, 1): 200_000}, 0.1, seed=3)
    mean = (big[(1, 1)] + big[(-1, -1)] - big[(1, -1)] - big[(-1, 1)]) / 200_000
    assert abs(mean - 0.64) < 5 * np.sqrt((1 - 0.64**2) / 200_000)


def test_readout_and_depolarizing_cancel():
    for kind, s in [("readout", 0.1), ("readout", 0.2), ("depolarizing", 0.5), ("depolarizing", 2.0)]:
        for t in (0.3, 1.0):
            est, bas = channel_value(NoiseConfig(kind, s), BASE, t)
            exact = OtocModel(BASE.build_hamiltonian()).exact(1, 4, t)
            assert abs(est / bas - exact) < 1e-12
            if kind == "depolarizing":
                assert bas == pytest.approx(np.exp(-s * t), abs=1e-12)
            else:
                assert bas == pytest.approx((1 - 2 * s) ** 2, abs=1e-12)


def test_depolarize_sites_on_paulis():
    n, d = 3, 0.3
    for word in ["III", "ZII", "XIY", "ZZZ"]:
        a = oracles.kron_word(word)
        weight = sum(c != "I" for c in word)
        assert np.allclose(depolarize_sites(a, n, d), (1 - d) ** weight * a, atol=1e-14)


def test_ensemble_without_errors_is_ideal():
    frame = PhaseFrame.odd_sites(3)
    ideal = bell_state(3, frame)
    for s in islice(imperfect_bell_ensemble(3, frame, None, 0.0, seed=1), 20):
        assert np.array_equal(s.amplitudes, ideal.amplitudes)
    a = [s.amplitudes for s in islice(imperfect_bell_ensemble(3, frame, None, 0.5, seed=4), 5)]
    b = [s.amplitudes for s in islice(imperfect_bell_ensemble(3, frame, None, 0.5, seed=4), 5)]
    assert all(np.array_equal(x, y) for x, y in zip(a, b))


def dense_noisy_otoc(n, delta, w_site, v_site, t):
    """Tr(rho(t) V (x) V^T) from the full 4^n x 4^n density matrix, frame coordinates."""
    mask = PhaseFrame.odd_sites(n).mask
    b = oracles.frame_unitary(mask, n)
    hf = b.conj().T @ oracles.dense(oracles.xy_chain_terms(n), n) @ b
    wf = b.conj().T @ oracles.local(oracles.Z, w_site - 1, n) @ b
    vf = b.conj().T @ oracles.local(oracles.X, v_site - 1, n) @ b
    u = expm(-1j * hf * t)
    rho = oracles.noisy_bell_rho(n, delta)
    big_w = oracles.pair_embed(wf, np.eye(2**n), n)
    big_u = oracles.pair_embed(u, u, n)
    rho = big_u @ big_w @ rho @ big_w.conj().T @ big_u.conj().T
    return np.trace(rho @ oracles.pair_embed(vf, vf.T, n)).real, rho


def test_imperfect_bell_exact_matches_dense_rho():
    n, delta = 3, 0.15
    model = OtocModel(build_xy_chain(n))
    w_local = model.frame.operator_in_frame(0, PAULI["Z"])
    wf = oracles.local(w_local, 0, n)
    v = model.observable(3)
    for t in (0.0, 0.6, 1.4):
        dist = imperfect_bell_distribution(model.eig_frame, n, wf, v, t, delta)
        ref, _ = dense_noisy_otoc(n, delta, 1, 3, t)
        assert dist @ [1, -1, -1, 1] == pytest.approx(ref, abs=1e-10)
        base = imperfect_bell_distribution(model.eig_frame, n, None, v, t, delta)
        assert abs(base.sum() - 1) < 1e-12 and np.all(base > -1e-12)


def test_ensemble_mean_matches_dense_rho():
    n, delta, t, draws = 3, 0.2, 0.8, 4000
    model = OtocModel(build_xy_chain(n))
    frame = model.frame
    w = frame.operator_in_frame(0, PAULI["Z"])
    v = model.observable(3)
    vals = []
    for s in islice(imperfect_bell_ensemble(n, frame, None, delta, seed=11), draws):
        sw = apply_local_unitary(s, pair_qubit(1, 1), w)
        out = StateVector.from_pair_matrix(evolve_pair_matrix(sw.pair_matrix(), model.eig_frame, t), frame)
        vals.append(expectation_vvt(out, v))
    ref, _ = dense_noisy_otoc(n, delta, 1, 3, t)
    err = np.std(vals, ddof=1) / np.sqrt(draws)
    assert abs(np.mean(vals) - ref) < 3 * err


def test_imperfect_bell_is_linear_in_delta():
    # O_est is a polynomial in delta; multi-site error terms bend it at larger delta
    slopes = scaling_exponent("imperfect_bell", [0.001, 0.002, 0.005, 0.01], [0.0, 1.0], BASE)
    assert np.allclose(slopes, 1.0, atol=0.05)
    est, _ = channel_value(NoiseConfig("imperfect_bell", 0.1), BASE, 0.0)
    assert est == pytest.approx(0.9, abs=1e-12)


def test_imperfect_bell_rejects_prepared_state():
    cfg = replace(BASE, initial_state=bell_state(4, PhaseFrame.odd_sites(4)),
                  noise=NoiseConfig("imperfect_bell", 0.1))
    with pytest.raises(ConfigError):
        channel_series(cfg.noise, cfg)


@pytest.mark.parametrize("kind", ["symmetry_breaking", "unequal_hamiltonians", "intercopy_coupling"])
def test_epsilon_channels_are_even(kind):
    vals = channel_values(kind, [0.03, -0.03, 0.0], [0.7, 1.5], BASE)
    assert np.max(np.abs(vals[0, :, 0] - vals[1, :, 0])) < 1e-10
    assert np.max(np.abs(vals[0, :, 0] - vals[2, :, 0])) > 1e-6
    if kind == "intercopy_coupling":
        assert np.max(np.abs(vals[:, :, 1] - 1)) < 1e-10


@pytest.mark.parametrize("kind", ["symmetry_breaking", "unequal_hamiltonians", "intercopy_coupling"])
def test_epsilon_channels_scale_quadratically(kind):
    # n=4 at Jt=1; the n=6 grid at Jt in {1, 1.5} lives in the acceptance suite
    slope = scaling_exponent(kind, EPSILON_GRID, 1.0, BASE)
    assert abs(slope - 2) < 0.1


def test_readout_is_linear():
    slope = scaling_exponent("readout", [0.001, 0.002, 0.005, 0.01], 1.0, BASE)
    assert slope == pytest.approx(1.0, abs=0.05)


def test_fit_guards():
    with pytest.raises(DegenerateFitError):
        scaling_exponent("depolarizing", [0.01, 0.02, 0.05, 0.1], 0.0, BASE)
    with pytest.raises(ValueError):
        scaling_exponent("readout", [0.01, 0.02], 1.0, BASE)
    with pytest.raises(ValueError):
        scaling_exponent("readout", [0.01, 0.02, 0.03, 0.05], 1.0, BASE)


def test_spontaneous_emission_small_system():
    base = SeriesConfig(n=2, w_site=1, v_site=2, times=(0.5, 1.0))
    vals = channel_values("spontaneous_emission", [0.0, 0.1, 0.3], [0.5, 1.0], base)
    ideal = channel_values("depolarizing", [0.0], [0.5, 1.0], base)
    assert np.max(np.abs(vals[0] - ideal[0])) < 1e-8  # RK4 at dt = 0.005
    assert np.all(np.diff(vals[:, 1, 1]) < 0)  # O' drops as gamma grows


def test_channel_series_columns():
    cfg = replace(BASE, times=(0.0, 0.5, 1.0), shots=500, seed=3)
    s = channel_series(NoiseConfig("readout", 0.1), cfg)
    header = s.to_csv().splitlines()[0].split(",")
    assert header[-2:] == ["channel", "strength"]
    assert np.all(np.abs(s.column("baseline") - 0.64) < 1e-12)
    est = s.column("sampled_mean")
    err = s.column("sampled_stderr")
    assert np.all(np.abs(est - s.column("protocol")) < 5 * err + 1e-12)
