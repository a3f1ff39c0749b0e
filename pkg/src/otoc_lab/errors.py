"""Exception and warning types plus the dense-memory budget."""

_DEFAULT_BUDGET = 2 * 1024**3
MEMORY_BUDGET_BYTES = _DEFAULT_BUDGET


class BudgetExceededError(MemoryError):
    """A dense object would not fit in the configured memory budget."""


class UndefinedRatioError(ArithmeticError):
    """The rescaled OTOC is undefined because the baseline is ~0."""


class IntegrationError(RuntimeError):
    """The master-equation integrator drifted beyond its tolerance."""


class DegenerateFitError(ValueError):
    """A scaling fit had no usable signal."""


class ConfigError(ValueError):
    """An experiment configuration failed validation."""


class AntisymmetryWarning(UserWarning):
    """The Hamiltonian is not antisymmetric in the chosen frame, so the
    protocol value is not the OTOC."""


def check_budget(nbytes, what="array"):
    if nbytes > MEMORY_BUDGET_BYTES:
        raise BudgetExceededError(
            f"{what} needs {nbytes / 2**20:.0f} MiB, budget is "
            f"{MEMORY_BUDGET_BYTES / 2**20:.0f} MiB"
        )


def set_memory_budget(nbytes):
    """Change the allocation cap (``None`` restores 2 GiB); returns the old value."""
    global MEMORY_BUDGET_BYTES
    old = MEMORY_BUDGET_BYTES
    MEMORY_BUDGET_BYTES = _DEFAULT_BUDGET if nbytes is None else int(nbytes)
    return old
