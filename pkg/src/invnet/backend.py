"""Kernel backend selection.

Two interchangeable kernel sets exist: the compiled Cython extension
``invnet._kernels`` and the numpy fallback ``invnet._kernels_np``.  The
compiled one is preferred when importable.  Set the environment variable
``INVNET_KERNELS`` to ``compiled`` or ``python`` to force a choice (forcing
``compiled`` raises if the extension was not built).

Numerical results are bitwise-reproducible within one backend; across
backends they agree to rounding (both sides do their matrix products in
BLAS, but elementwise transcendentals may differ in the last ulp).
"""

import os

_requested = os.environ.get("INVNET_KERNELS", "").strip().lower()
if _requested not in ("", "compiled", "python"):
    raise ImportError(
        f"INVNET_KERNELS must be 'compiled' or 'python', got {_requested!r}"
    )

if _requested == "python":
    from invnet import _kernels_np as kernels

    ACTIVE = "python"
else:
    try:
        from invnet import _kernels as kernels  # type: ignore[no-redef]

        ACTIVE = "compiled"
    except ImportError:
        if _requested == "compiled":
            raise
        from invnet import _kernels_np as kernels  # type: ignore[no-redef]

        ACTIVE = "python"


def active_backend() -> str:
    """Name of the kernel set in use: ``"compiled"`` or ``"python"``."""
    return ACTIVE
