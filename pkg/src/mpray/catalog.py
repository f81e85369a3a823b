"""Built-in MP-systems on the unit disk used throughout the examples and tests."""

from __future__ import annotations

from typing import Callable

from .geometry import MPSystem


def sys_e(dim: int = 2) -> MPSystem:
    """Flat metric, no magnetic field, no potential."""
    return MPSystem.build(dim, 1.0, name="SYS-E")


def sys_b(B: float = 0.2) -> MPSystem:
    """Constant magnetic field ``B dx1^dx2`` on the flat disk."""
    half = repr(B / 2)
    return MPSystem.build(2, 1.0, alpha=[f"-{half}*x2", f"{half}*x1"], name="SYS-B", params={"B": B})


def sys_u(eps: float = 0.1) -> MPSystem:
    """Isotropic oscillator potential ``eps |x|^2``."""
    return MPSystem.build(2, 1.0, potential=f"{eps!r}*(x1^2+x2^2)", name="SYS-U", params={"eps": eps})


def sys_c(lam: float = 0.05) -> MPSystem:
    """Conformal metric ``exp(2 lam |x|^2) delta``."""
    return MPSystem.build(2, 1.0, conformal=f"exp({2 * lam!r}*(x1^2+x2^2))", name="SYS-C", params={"lam": lam})


def sys_bu(B: float = 0.2, eps: float = 0.1) -> MPSystem:
    """Magnetic field and oscillator potential together."""
    half = repr(B / 2)
    return MPSystem.build(2, 1.0, alpha=[f"-{half}*x2", f"{half}*x1"], potential=f"{eps!r}*(x1^2+x2^2)",
                          name="SYS-BU", params={"B": B, "eps": eps})


def sys_x() -> MPSystem:
    """Anisotropic test system: non-diagonal metric, non-symmetric field and potential."""
    return MPSystem.build(
        2, 1.0,
        metric=[["1+0.1*x1^2", "0.05*x1*x2"], ["0.05*x1*x2", "1+0.08*x2^2+0.03*x1"]],
        alpha=["-0.1*x2+0.02*x1*x2", "0.1*x1+0.03*x2^2"],
        potential="0.05*x1^2+0.08*x2^2+0.02*x1*x2^2",
        name="SYS-X",
    )


CATALOG: dict[str, Callable[..., MPSystem]] = {
    "SYS-E": sys_e,
    "SYS-B": sys_b,
    "SYS-U": sys_u,
    "SYS-C": sys_c,
    "SYS-BU": sys_bu,
    "SYS-X": sys_x,
}

# Systems that the acceptance suite sweeps over.
CORE = ("SYS-E", "SYS-B", "SYS-U", "SYS-C")


def get(name: str, **params) -> MPSystem:
    try:
        factory = CATALOG[name]
    except KeyError:
        raise KeyError(f"unknown catalog system {name!r}; choose from {sorted(CATALOG)}") from None
    return factory(**params)
