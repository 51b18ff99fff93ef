"""Model definitions: time-local master equations, generalized block equations,
and the two worked examples (detuned atom in a lossy cavity, two-band bath).

Conventions: hbar = 1, time in units of the inverse spectral width of the
cavity example.  Two-level basis order is (excited, ground), so rho[0, 0] is
the excited-state population.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np
from scipy.special import sici

from . import qcore

EXCITED = np.array([1.0, 0.0], dtype=complex)
GROUND = np.array([0.0, 1.0], dtype=complex)
SIGMA_MINUS = np.array([[0.0, 0.0], [1.0, 0.0]], dtype=complex)  # |g><e|
SIGMA_PLUS = np.array([[0.0, 1.0], [0.0, 0.0]], dtype=complex)   # |e><g|
NUMBER = SIGMA_PLUS @ SIGMA_MINUS                                # |e><e|

RateFunction = Callable[[float], float]


@dataclass(frozen=True, eq=False)
class TimeDependentOperator:
    """Operator of the form  constant + sum_k f_k(t) * basis_k.

    Every constant part and every basis operator must be Hermitian, so the
    whole operator is Hermitian at all times.
    """

    constant: np.ndarray
    terms: tuple[tuple[RateFunction, np.ndarray], ...] = ()

    def __post_init__(self):
        const = np.asarray(self.constant, dtype=complex)
        object.__setattr__(self, "constant", const)
        qcore.check_hermitian(const, what="Hamiltonian constant part")
        terms = tuple((fn, np.asarray(op, dtype=complex)) for fn, op in self.terms)
        for _, op in terms:
            if op.shape != const.shape:
                raise ValueError("Hamiltonian term dimension mismatch")
            qcore.check_hermitian(op, what="Hamiltonian term")
        object.__setattr__(self, "terms", terms)

    @property
    def dim(self) -> int:
        return self.constant.shape[0]

    def __call__(self, t: float) -> np.ndarray:
        h = self.constant
        for fn, op in self.terms:
            h = h + float(fn(t)) * op
        return h


def as_time_dependent(h, dim: int | None = None) -> TimeDependentOperator:
    """Coerce a constant matrix (or None meaning zero) to TimeDependentOperator."""
    if isinstance(h, TimeDependentOperator):
        return h
    if h is None:
        if dim is None:
            raise ValueError("dim required for a zero Hamiltonian")
        return TimeDependentOperator(np.zeros((dim, dim), dtype=complex))
    return TimeDependentOperator(np.asarray(h, dtype=complex))


@dataclass(frozen=True, eq=False)
class Channel:
    """Normal form of one dissipation channel.

    The jump operator direction `op` is constant; `rate(t)` multiplies
    ||op psi||^2 in every rate expression.  For standard models the rate is a
    decay rate and may be negative; for generalized block models it is an
    operator-magnitude-squared factor and must stay non-negative.
    """

    source: int
    target: int
    op: np.ndarray
    rate: RateFunction


@dataclass(frozen=True, eq=False)
class TimeLocalModel:
    """Time-local master equation: Hamiltonian plus (jump operator, rate) pairs."""

    hamiltonian: TimeDependentOperator
    channels: tuple[tuple[np.ndarray, RateFunction], ...]

    def __post_init__(self):
        ham = as_time_dependent(self.hamiltonian)
        object.__setattr__(self, "hamiltonian", ham)
        chans = tuple((np.asarray(op, dtype=complex), fn) for op, fn in self.channels)
        if not chans:
            raise ValueError("a time-local model needs at least one channel")
        for op, _ in chans:
            if op.shape != (ham.dim, ham.dim):
                raise ValueError("jump operator dimension mismatch")
        object.__setattr__(self, "channels", chans)

    @property
    def dim(self) -> int:
        return self.hamiltonian.dim


@dataclass(frozen=True, eq=False)
class Coupling:
    """One block coupling operator, acting on states of block `source` and
    producing states in block `target` (source == target is allowed).

    `strength(t)` is an optional non-negative scalar factor multiplying
    ||op psi||^2; None means constant 1 (all time dependence inside `op`
    would then have to be trivial, which is the only supported case)."""

    source: int
    target: int
    op: np.ndarray
    strength: RateFunction | None = None

    def __post_init__(self):
        object.__setattr__(self, "op", np.asarray(self.op, dtype=complex))


@dataclass(frozen=True, eq=False)
class GeneralizedModel:
    """Coupled block master equation; the physical state is the block sum."""

    n: int
    block_hamiltonians: tuple[TimeDependentOperator, ...]
    couplings: tuple[Coupling, ...]

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("block count must be >= 1")
        hams = tuple(as_time_dependent(h) for h in self.block_hamiltonians)
        if len(hams) != self.n:
            raise ValueError("need one Hamiltonian per block")
        dim = hams[0].dim
        if any(h.dim != dim for h in hams):
            raise ValueError("all blocks must share the Hilbert dimension")
        object.__setattr__(self, "block_hamiltonians", hams)
        coups = tuple(self.couplings)
        for c in coups:
            if not (0 <= c.source < self.n and 0 <= c.target < self.n):
                raise ValueError(f"coupling references invalid block: {c}")
            if c.op.shape != (dim, dim):
                raise ValueError("coupling operator dimension mismatch")
        object.__setattr__(self, "couplings", coups)

    @property
    def dim(self) -> int:
        return self.block_hamiltonians[0].dim


@dataclass(frozen=True, eq=False)
class Prepared:
    """Unified solver view of a model: per-block Hamiltonians plus channels."""

    n_blocks: int
    hamiltonians: tuple[TimeDependentOperator, ...]
    channels: tuple[Channel, ...]
    signed: bool  # True when channel rates may be negative (standard models)
    dim: int


def _const_one(t):
    return np.ones_like(np.asarray(t, dtype=float)) if np.ndim(t) else 1.0


@lru_cache(maxsize=None)
def normal_form(model) -> Prepared:
    """Reduce either model class to the unified (blocks, channels) form."""
    if isinstance(model, TimeLocalModel):
        channels = tuple(
            Channel(0, 0, op, fn) for op, fn in model.channels
        )
        return Prepared(1, (model.hamiltonian,), channels, True, model.dim)
    if isinstance(model, GeneralizedModel):
        channels = tuple(
            Channel(c.source, c.target, c.op,
                    c.strength if c.strength is not None else _const_one)
            for c in model.couplings
        )
        return Prepared(model.n, model.block_hamiltonians, channels, False,
                        model.dim)
    raise TypeError(f"not a model: {type(model)!r}")


# ---------------------------------------------------------------------------
# Example 1: two-level atom in a detuned lossy cavity with a Lorentzian
# spectral profile.  Second-order time-local coefficients in closed form.

@dataclass(frozen=True)
class JCParams:
    gamma0: float = 4.0   # base decay rate
    lam: float = 1.0      # spectral width (sets the time unit)
    delta: float = 12.0   # detuning between atom and cavity mode

    def __post_init__(self):
        if self.lam <= 0:
            raise ValueError("spectral width must be positive")
        if self.gamma0 < 0:
            raise ValueError("base rate must be non-negative")


def jc_decay_rate(t, p: JCParams):
    """Time-dependent decay rate; negative on intervals when detuned."""
    t = np.asarray(t, dtype=float)
    pref = p.gamma0 * p.lam**2 / (p.lam**2 + p.delta**2)
    bracket = 1.0 - np.exp(-p.lam * t) * (
        np.cos(p.delta * t) - (p.delta / p.lam) * np.sin(p.delta * t)
    )
    out = pref * bracket
    return out if out.ndim else float(out)


def jc_lamb_shift(t, p: JCParams):
    """Environment-induced level shift; vanishes identically on resonance."""
    t = np.asarray(t, dtype=float)
    if p.delta == 0.0:
        out = np.zeros_like(t)
        return out if out.ndim else 0.0
    pref = p.gamma0 * p.lam * p.delta / (p.lam**2 + p.delta**2)
    bracket = 1.0 - np.exp(-p.lam * t) * (
        np.cos(p.delta * t) + (p.lam / p.delta) * np.sin(p.delta * t)
    )
    out = pref * bracket
    return out if out.ndim else float(out)


def jc_spectral_density(omega_offset, p: JCParams):
    """Lorentzian coupling profile, parameterized by the offset from its peak."""
    x = np.asarray(omega_offset, dtype=float)
    out = p.gamma0 * p.lam**2 / (2.0 * np.pi * (x**2 + p.lam**2))
    return out if out.ndim else float(out)


def make_jc_model(p: JCParams) -> TimeLocalModel:
    """Two-level model: shift Hamiltonian S(t)/2 * |e><e| and one lowering
    channel with rate gamma(t)."""
    ham = TimeDependentOperator(
        np.zeros((2, 2), dtype=complex),
        ((lambda t: 0.5 * jc_lamb_shift(t, p), NUMBER),),
    )
    return TimeLocalModel(ham, ((SIGMA_MINUS, lambda t: jc_decay_rate(t, p)),))


# ---------------------------------------------------------------------------
# Example 2: two-state system exchanging excitation with two finite energy
# bands; a block master equation whose memory kernel integrates to a
# time-local flow strength F(t).

@dataclass(frozen=True)
class TwoBandParams:
    delta_eps: float = 0.31   # band width
    gamma1: float = 1.0
    gamma2: float = 1.0

    def __post_init__(self):
        if self.delta_eps <= 0:
            raise ValueError("band width must be positive")
        if self.gamma1 < 0 or self.gamma2 < 0:
            raise ValueError("coupling rates must be non-negative")


def two_band_kernel(t, p: TwoBandParams):
    """Band correlation kernel h(t) >= 0, with h(0) = delta_eps / (2 pi)."""
    t = np.asarray(t, dtype=float)
    u = p.delta_eps * t / 2.0
    safe = np.where(u == 0.0, 1.0, u)
    out = np.where(
        u == 0.0,
        p.delta_eps / (2.0 * np.pi),
        p.delta_eps * np.sin(safe) ** 2 / (2.0 * np.pi * safe**2),
    )
    return out if out.ndim else float(out)


def two_band_flow_strength(t, p: TwoBandParams):
    """F(t) = integral of the kernel from 0 to t, in closed form.

    F(t) = [Si(x) - sin^2(x/2)/(x/2)] / pi with x = delta_eps * t; F is
    monotone and saturates at 1/2.
    """
    x = p.delta_eps * np.asarray(t, dtype=float)
    si, _ = sici(x)
    half = x / 2.0
    safe = np.where(half == 0.0, 1.0, half)
    tail = np.where(half == 0.0, 0.0, np.sin(safe) ** 2 / safe)
    out = (si - tail) / np.pi
    return out if out.ndim else float(out)


def make_two_band_model(p: TwoBandParams) -> GeneralizedModel:
    """Two blocks, zero Hamiltonians; raising/lowering couplings whose
    magnitude-squared factors are 2 * gamma_i * F(t)."""
    zero = np.zeros((2, 2), dtype=complex)
    couplings = (
        # block 2 -> block 1: re-excitation
        Coupling(1, 0, SIGMA_PLUS, lambda t: 2.0 * p.gamma1 * two_band_flow_strength(t, p)),
        # block 1 -> block 2: decay
        Coupling(0, 1, SIGMA_MINUS, lambda t: 2.0 * p.gamma2 * two_band_flow_strength(t, p)),
    )
    return GeneralizedModel(2, (zero, zero), couplings)


# ---------------------------------------------------------------------------
# Randomized three-level cascade used as a non-example validation model:
# diagonal Hamiltonian plus two lowering-ladder jump operators, so the
# effective ensemble stays exactly closed while the rates oscillate through
# negative values.

def make_cascade_model(seed: int = 7) -> tuple[TimeLocalModel, list]:
    """Seeded random 3-level cascade with sign-changing rates.

    Returns (model, initial ensemble).  The two ladder operators map level
    2 -> 1 and 1 -> 0 with random complex amplitudes, so the closure of any
    superposition consists of the state itself plus the two lower rungs.
    The initial ensemble puts nonzero weight on every rung, which keeps all
    probabilities well away from zero when the rates turn negative."""
    rng = np.random.default_rng(seed)
    energies = rng.uniform(-1.0, 1.0, size=3)
    ham = TimeDependentOperator(np.diag(energies).astype(complex))

    def ladder(i, j):
        amp = rng.uniform(0.6, 1.0) * np.exp(1j * rng.uniform(0, 2 * np.pi))
        op = np.zeros((3, 3), dtype=complex)
        op[i, j] = amp
        return op

    c1 = ladder(1, 2)
    c2 = ladder(0, 1)
    model = TimeLocalModel(ham, (
        (c1, lambda t: np.sin(2.0 * t)),
        (c2, lambda t: 0.5 * np.cos(3.0 * t)),
    ))
    psi0 = rng.normal(size=3) + 1j * rng.normal(size=3)
    psi0, _ = qcore.normalize(psi0)
    e1 = np.array([0.0, 1.0, 0.0], dtype=complex)
    e0 = np.array([1.0, 0.0, 0.0], dtype=complex)
    initial = [(0, psi0, 0.5), (0, e1, 0.3), (0, e0, 0.2)]
    return model, initial
