"""Pure numpy versions of the compiled kernels, same signatures and semantics."""

import numpy as np


def apply_1q(mat, qubit, u):
    dim = mat.shape[0]
    bit = 1 << qubit
    idx = np.arange(dim)
    i0 = idx[(idx & bit) == 0]
    i1 = i0 | bit
    a0 = mat[i0].copy()
    a1 = mat[i1].copy()
    mat[i0] = u[0, 0] * a0 + u[0, 1] * a1
    mat[i1] = u[1, 0] * a0 + u[1, 1] * a1


def flip_mask_apply(masks, diags, psi, out):
    idx = np.arange(psi.shape[0])
    for k, m in enumerate(masks):
        out += diags[k][:, None] * psi[idx ^ m]


def _popcount(arr):
    arr = np.asarray(arr, dtype=np.int64)
    count = np.zeros(arr.shape, dtype=np.int64)
    while np.any(arr):
        count += arr & 1
        arr = arr >> 1
    return count


def decay_dissipator(rho, out, gamma, jump_mask):
    dim = rho.shape[0]
    idx = np.arange(dim)
    pc = _popcount(idx & jump_mask).astype(float)
    out -= 0.5 * gamma * (pc[:, None] + pc[None, :]) * rho
    q = 0
    while (1 << q) <= jump_mask:
        b = 1 << q
        if jump_mask & b:
            i0 = idx[(idx & b) == 0]
            out[np.ix_(i0, i0)] += gamma * rho[np.ix_(i0 | b, i0 | b)]
        q += 1
