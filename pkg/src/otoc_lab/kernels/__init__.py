"""Hot inner loops with a compiled backend and a numpy fallback.

The compiled extension is used when it was built; setting
``OTOC_LAB_KERNELS=python`` forces the fallback. Both backends expose

apply_1q(mat, qubit, u)
    In place ``mat <- (u on row-bit qubit) @ mat`` for a 2-D complex array
    (strided views allowed, so ``mat.T`` acts on the column index).
flip_mask_apply(masks, diags, psi, out)
    ``out[x] += diags[k, x] * psi[x ^ masks[k]]`` summed over k.
decay_dissipator(rho, out, gamma, jump_mask)
    ``out += gamma * sum_j D[sigma^-_j](rho)`` over the qubits in jump_mask.
"""

import os

from . import _fallback

BACKEND = "python"

if os.environ.get("OTOC_LAB_KERNELS", "").lower() != "python":
    try:
        from . import _ckernels as _impl

        BACKEND = "cython"
    except ImportError:
        _impl = _fallback
else:
    _impl = _fallback

apply_1q = _impl.apply_1q
flip_mask_apply = _impl.flip_mask_apply
decay_dissipator = _impl.decay_dissipator

__all__ = ["BACKEND", "apply_1q", "flip_mask_apply", "decay_dissipator", "backends"]


def backends():
    """Return the available kernel modules keyed by name."""
    found = {"python": _fallback}
    try:
        from . import _ckernels

        found["cython"] = _ckernels
    except ImportError:
        pass
    return found
