import io
from dataclasses import replace

import numpy as np
import pytest

import oracles
from otoc_lab.errors import AntisymmetryWarning, UndefinedRatioError
from otoc_lab.hamiltonians import HamiltonianSpec, build_xy_chain
from otoc_lab.protocol import (
    CSV_FIELDS,
    OtocModel,
    SeriesConfig,
    otoc_baseline,
    otoc_exact_trace,
    otoc_protocol,
    otoc_rescaled,
    point_rng,
    run_series,
    run_series_many,
)
from otoc_lab.qstate import PhaseFrame
from otoc_lab.varprep import extend_to_w12, w1_target


def test_trace_values_at_zero():
    h = build_xy_chain(6)
    f = PhaseFrame.odd_sites(6)
    for i in (1, 3):
        for j in range(1, 7):
            expected = -1.0 if i == j else 1.0
            assert otoc_exact_trace(h, f, i, j, 0.0) == expected
            assert otoc_protocol(h, f, i, j, 0.0) == pytest.approx(expected, abs=1e-14)


def test_trace_matches_expm_oracle():
    n = 4
    h = build_xy_chain(n, 0.8)
    hd = oracles.dense(oracles.xy_chain_terms(n, 0.8), n)
    for (i, j, t) in [(1, 4, 0.7), (2, 3, 1.9), (4, 4, 0.3)]:
        ref = oracles.otoc_trace(hd, oracles.local(oracles.Z, i - 1, n), oracles.local(oracles.X, j - 1, n), t)
        assert otoc_exact_trace(h, None, i, j, t) == pytest.approx(ref, abs=1e-12)


def test_protocol_equals_trace_random_models():
    rng = np.random.default_rng(2024)
    for _ in range(12):
        n = int(rng.integers(2, 5))
        terms = oracles.random_odd_y_terms(n, rng, count=5)
        h = HamiltonianSpec(n, tuple(terms))
        i, j = (int(x) for x in rng.integers(1, n + 1, size=2))
        t = float(rng.uniform(0, 2))
        hd = oracles.dense(terms, n)
        ref = oracles.otoc_trace(hd, oracles.local(oracles.Z, i - 1, n), oracles.local(oracles.X, j - 1, n), t)
        trivial = PhaseFrame.trivial(n)
        assert abs(otoc_protocol(h, trivial, i, j, t) - ref) <= 1e-8
        assert abs(otoc_baseline(h, trivial, j, t) - 1.0) <= 1e-10


def test_exact_general_and_many():
    n = 4
    model = OtocModel(build_xy_chain(n))
    rng = np.random.default_rng(0)
    w = np.diag(rng.normal(size=2**n)).astype(complex)
    hd = oracles.dense(oracles.xy_chain_terms(n), n)
    v = oracles.local(oracles.X, 2, n)
    ref = oracles.otoc_trace(hd, w, v, 0.9)
    assert model.exact_general(w, v, 0.9) == pytest.approx(ref, abs=1e-12)
    many = model.exact_many(None, [3], 0.9, w)
    assert many[3] == pytest.approx(ref, abs=1e-12)
    z = model.exact_many(2, [1, 2, 3, 4], 1.1)
    for j in range(1, 5):
        assert z[j] == pytest.approx(model.exact(2, j, 1.1), abs=1e-13)


def test_hermitian_v_ordering():
    # <W^dag V^dag(t) W V(t)> = <V^dag(t) W^dag V(t) W> for Hermitian V
    n = 3
    hd = oracles.dense(oracles.xy_chain_terms(n), n)
    from scipy.linalg import expm

    u = expm(-1j * 0.8 * hd)
    w = oracles.local(oracles.Z, 0, n)
    vt = u.conj().T @ oracles.local(oracles.X, 2, n) @ u
    a = np.trace(w.conj().T @ vt.conj().T @ w @ vt)
    b = np.trace(vt.conj().T @ w.conj().T @ vt @ w)
    assert a == pytest.approx(b, abs=1e-12)


def test_broken_antisymmetry_warns_and_is_even():
    n = 4
    f = PhaseFrame.odd_sites(n)
    vals = {}
    for eps in (0.1, -0.1):
        h = (build_xy_chain(n) + build_xy_chain(n, part="AA+BB").scaled(eps)).simplified()
        model = OtocModel(h, f)
        with pytest.warns(AntisymmetryWarning):
            vals[eps] = model.protocol(1, 4, 1.2)
    assert vals[0.1] == pytest.approx(vals[-0.1], abs=1e-12)
    assert abs(vals[0.1] - OtocModel(h, f).exact(1, 4, 1.2)) > 1e-4


def test_rescaled():
    o, g = -0.37, 0.4
    assert otoc_rescaled(np.exp(-g) * o, np.exp(-g)) == pytest.approx(o, rel=1e-15)
    assert otoc_rescaled((1 - 0.2) ** 2 * o, (1 - 0.2) ** 2) == pytest.approx(o, rel=1e-15)
    assert otoc_rescaled(o, 1.0) == o
    with pytest.raises(UndefinedRatioError):
        otoc_rescaled(0.1, 1e-7)


def small_config(**kw):
    base = dict(n=4, w_site=1, v_site=4, times=tuple(np.linspace(0, 2, 9)))
    base.update(kw)
    return SeriesConfig(**base)


def test_series_basics():
    s = run_series(small_config())
    assert len(s) == 9
    assert np.max(np.abs(s.column("protocol") - s.column("exact"))) < 1e-10
    assert np.max(np.abs(s.column("baseline") - 1)) < 1e-10
    assert np.all(np.isnan(s.column("sampled_mean")))
    text = s.to_csv()
    assert text.splitlines()[0] == ",".join(CSV_FIELDS)
    assert len(run_series(small_config(times=()))) == 0
    with pytest.raises(ValueError):
        run_series(small_config(times=(0.0, 1.0, 1.0)))


def test_series_many_matches_single():
    cfg = small_config(shots=200, seed=5)
    many = run_series_many(cfg, [2, 3, 4])
    single = run_series(replace(cfg, v_site=2))
    assert np.array_equal(many[0].column("sampled_mean"), single.column("sampled_mean"))
    single4 = run_series(replace(cfg, v_site=4, stream=2))
    assert np.array_equal(many[2].column("sampled_mean"), single4.column("sampled_mean"))


def test_sampling_deterministic_and_thread_independent(monkeypatch):
    cfg = small_config(shots=300, seed=99)
    monkeypatch.setenv("OTOC_LAB_THREADS", "1")
    a = run_series(cfg).to_csv()
    monkeypatch.setenv("OTOC_LAB_THREADS", "3")
    b = run_series(cfg).to_csv()
    assert a == b
    c = run_series(replace(cfg, seed=100)).to_csv()
    assert a != c


def test_point_rng_streams():
    a = point_rng(1, 0).random(3)
    assert np.array_equal(a, point_rng(1, 0).random(3))
    assert not np.array_equal(a, point_rng(1, 1).random(3))
    assert not np.array_equal(a, point_rng(1, 0, 1).random(3))
    assert point_rng(2**64 - 1, 5).random() < 1


def test_reported_stderr_matches_scatter():
    cfg = small_config(times=(0.8,), shots=400)
    exact = run_series(cfg).points[0].protocol
    est, err = [], []
    for seed in range(200):
        p = run_series(replace(cfg, seed=seed)).points[0]
        est.append(p.sampled[0])
        err.append(p.sampled[1])
    spread = np.std(est, ddof=1)
    assert abs(spread / np.mean(err) - 1) < 0.2
    assert abs(np.mean(est) - exact) < 4 * spread / np.sqrt(200)


def test_prepared_state_reproduces_trace():
    # the ideal |W12> for a non-unitary diagonal W gives Tr(W^dag V(t) W V(t)) / Tr(W W^dag)
    n, k = 4, 2
    diag = np.array([2.0, 0.0, 0.0, -2.0])
    frame = PhaseFrame.odd_sites(n)
    state = extend_to_w12(w1_target(diag, n), frame)
    w = np.diag(np.tile(diag, 2 ** (n - k))).astype(complex)
    cfg = small_config(frame=frame, initial_state=state, w_operator=w)
    s = run_series(cfg)
    assert np.max(np.abs(s.column("protocol") - s.column("exact"))) < 1e-10
    hd = oracles.dense(oracles.xy_chain_terms(n), n)
    ref = oracles.otoc_trace(hd, w, oracles.local(oracles.X, 3, n), 2.0)
    assert s.points[-1].exact == pytest.approx(ref, abs=1e-12)


def test_series_csv_to_file():
    s = run_series(small_config(times=(0.0, 0.5)))
    buf = io.StringIO()
    assert s.to_csv(buf, extra={"tag": "x"}) is None
    assert buf.getvalue().splitlines()[0].endswith(",tag")
