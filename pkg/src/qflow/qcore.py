"""Dense complex linear algebra and quadrature primitives shared by all modules.

States are plain 1-d complex ndarrays over a fixed finite basis, operators are
square complex ndarrays of matching dimension.  Everything here is a pure
function over immutable inputs; nothing mutates its arguments.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.integrate import cumulative_trapezoid

ZERO_NORM_TOL = 1e-14
HERMITIAN_TOL = 1e-12
DENSITY_TOL = 1e-10


class QFlowError(Exception):
    """Base class for errors raised by this package."""


class ZeroNormError(QFlowError):
    """Normalization of a numerically zero vector.

    Signals an annihilated jump target; callers treat the channel as closed.
    """


class NumericError(QFlowError):
    """A numerical invariant was violated (negative probability, norm
    blow-up, trace drift)."""


def apply(op: np.ndarray, s: np.ndarray) -> np.ndarray:
    """Apply a dense operator to a state; the result is not normalized."""
    op = np.asarray(op)
    s = np.asarray(s)
    if op.ndim != 2 or op.shape[0] != op.shape[1]:
        raise ValueError(f"operator must be square, got shape {op.shape}")
    if s.ndim != 1 or s.shape[0] != op.shape[1]:
        raise ValueError(
            f"dimension mismatch: operator {op.shape} vs state {s.shape}"
        )
    return op @ s


def normalize(s: np.ndarray) -> tuple[np.ndarray, float]:
    """Return (s / ||s||, ||s||).

    Raises ZeroNormError when ||s|| < 1e-14, which marks a jump target that
    was annihilated by the channel operator.
    """
    s = np.asarray(s, dtype=complex)
    n = float(np.linalg.norm(s))
    if n < ZERO_NORM_TOL:
        raise ZeroNormError(f"cannot normalize vector with norm {n:.3e}")
    return s / n, n


@dataclass(frozen=True, eq=False)
class SampledFunction:
    """Real function sampled on a uniform, strictly increasing time grid.

    Evaluation between samples is linear interpolation; outside the grid the
    boundary values are held.
    """

    grid: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        grid = np.asarray(self.grid, dtype=float)
        values = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "values", values)
        if grid.ndim != 1 or grid.size < 2:
            raise ValueError("grid must be 1-d with at least 2 samples")
        if values.shape != grid.shape:
            raise ValueError("values must match the grid shape")
        steps = np.diff(grid)
        if np.any(steps <= 0):
            raise ValueError("grid must be strictly increasing")
        h = steps[0]
        if not np.allclose(steps, h, rtol=1e-8, atol=1e-12 * max(1.0, abs(h))):
            raise ValueError("grid must be uniformly spaced")

    @property
    def step(self) -> float:
        return float(self.grid[1] - self.grid[0])

    def __call__(self, t):
        return np.interp(t, self.grid, self.values)


def trapezoid_cumulative(f: SampledFunction) -> SampledFunction:
    """Running trapezoid integral of a sampled function, on the same grid.

    The first value is exactly 0; exact for linear integrands.
    """
    cum = cumulative_trapezoid(f.values, f.grid, initial=0.0)
    return SampledFunction(f.grid, cum)


def is_hermitian(m: np.ndarray, tol: float = HERMITIAN_TOL) -> bool:
    m = np.asarray(m)
    return bool(np.max(np.abs(m - m.conj().T)) <= tol)


def check_hermitian(m: np.ndarray, tol: float = HERMITIAN_TOL,
                    what: str = "operator") -> None:
    dev = float(np.max(np.abs(np.asarray(m) - np.asarray(m).conj().T)))
    if dev > tol:
        raise ValueError(f"{what} is not Hermitian (max deviation {dev:.3e})")


def check_density(rho: np.ndarray, weight: float = 1.0,
                  tol: float = DENSITY_TOL) -> None:
    """Validate a (possibly sub-normalized) density matrix.

    `weight` is the declared trace: 1 for a full density matrix, tr rho_i for
    a block of a generalized decomposition.
    """
    rho = np.asarray(rho)
    check_hermitian(rho, tol, what="density matrix")
    tr = complex(np.trace(rho))
    if abs(tr.imag) > tol:
        raise ValueError(f"density matrix trace is not real: {tr}")
    if abs(tr.real - weight) > tol:
        raise ValueError(
            f"density matrix trace {tr.real} differs from weight {weight}"
        )
