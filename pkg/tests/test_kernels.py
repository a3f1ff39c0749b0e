import os
import subprocess
import sys

import numpy as np
import pytest

import oracles
from otoc_lab import kernels

BACKENDS = kernels.backends()


def rand(shape, seed):
    rng = np.random.default_rng(seed)
    return rng.normal(size=shape) + 1j * rng.normal(size=shape)


@pytest.mark.parametrize("name", sorted(BACKENDS))
def test_apply_1q_matches_kron(name):
    impl = BACKENDS[name]
    u = np.linalg.qr(rand((2, 2), 0))[0]
    for q in range(5):
        mat = rand((32, 3), q)
        ref = oracles.local(u, q, 5) @ mat
        impl.apply_1q(mat, q, np.ascontiguousarray(u))
        assert np.max(np.abs(mat - ref)) < 1e-13


@pytest.mark.parametrize("name", sorted(BACKENDS))
def test_apply_1q_on_transposed_view(name):
    impl = BACKENDS[name]
    u = np.linalg.qr(rand((2, 2), 1))[0]
    m = rand((8, 8), 2)
    ref = m @ oracles.local(u, 1, 3).T
    impl.apply_1q(m.T, 1, np.ascontiguousarray(u))
    assert np.max(np.abs(m - ref)) < 1e-13


@pytest.mark.parametrize("name", sorted(BACKENDS))
def test_flip_mask_apply(name):
    impl = BACKENDS[name]
    masks = np.array([0, 3, 5, 12], dtype=np.int64)
    diags = np.ascontiguousarray(rand((4, 16), 3))
    psi = np.ascontiguousarray(rand((16, 2), 4))
    out = np.zeros_like(psi)
    impl.flip_mask_apply(masks, diags, psi, out)
    dense = np.zeros((16, 16), dtype=complex)
    idx = np.arange(16)
    for m, d in zip(masks, diags):
        dense[idx, idx ^ m] += d
    assert np.max(np.abs(out - dense @ psi)) < 1e-13


@pytest.mark.parametrize("name", sorted(BACKENDS))
def test_decay_dissipator(name):
    impl = BACKENDS[name]
    n, gamma, jumps = 3, 0.7, [0, 2]
    rho = rand((8, 8), 5)
    rho = np.ascontiguousarray(rho @ rho.conj().T)
    out = np.zeros_like(rho)
    impl.decay_dissipator(rho, out, gamma, 0b101)
    sm = np.array([[0, 1], [0, 0]], dtype=complex)
    ref = np.zeros_like(rho)
    for q in jumps:
        c = oracles.local(sm, q, n)
        cdc = c.conj().T @ c
        ref += gamma * (c @ rho @ c.conj().T - 0.5 * (cdc @ rho + rho @ cdc))
    assert np.max(np.abs(out - ref)) < 1e-13


def test_backends_agree():
    if len(BACKENDS) < 2:
        pytest.skip("compiled kernels not built")
    py, cy = BACKENDS["python"], BACKENDS["cython"]
    masks = np.arange(0, 256, 17, dtype=np.int64)
    diags = np.ascontiguousarray(rand((len(masks), 256), 6))
    psi = np.ascontiguousarray(rand((256, 4), 7))
    a, b = np.zeros_like(psi), np.zeros_like(psi)
    py.flip_mask_apply(masks, diags, psi, a)
    cy.flip_mask_apply(masks, diags, psi, b)
    assert np.max(np.abs(a - b)) < 1e-12
    rho = np.ascontiguousarray(rand((64, 64), 8))
    a, b = np.zeros_like(rho), np.zeros_like(rho)
    py.decay_dissipator(rho, a, 0.3, 0b110101)
    cy.decay_dissipator(rho, b, 0.3, 0b110101)
    assert np.max(np.abs(a - b)) < 1e-12


def test_env_forces_fallback():
    env = dict(os.environ, OTOC_LAB_KERNELS="python")
    out = subprocess.run([sys.executable, "-c", "import otoc_lab.kernels as k; print(k.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"
