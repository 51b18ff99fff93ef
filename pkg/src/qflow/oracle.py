"""Independent ground truth: dense fixed-step RK4 integration of the master
equations on full (block) density matrices, plus closed-form solutions for
both example models.

Nothing here touches the ensemble machinery; agreement between this module
and the flow solver is the main correctness check of the package.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import sici

from . import models
from .qcore import NumericError

TRACE_DRIFT_TOL = 1e-8
EULER_GAMMA = 0.5772156649015329


@dataclass(eq=False)
class DensityTrajectory:
    times: np.ndarray
    blocks: np.ndarray   # (n_samples, n_blocks, dim, dim)

    @property
    def total(self) -> np.ndarray:
        return self.blocks.sum(axis=1)

    @property
    def block_traces(self) -> np.ndarray:
        return np.einsum("tbii->tb", self.blocks).real


def dense_rhs_standard(rho: np.ndarray, model: models.TimeLocalModel,
                       t: float) -> np.ndarray:
    """d rho / dt of the time-local master equation."""
    rho = np.asarray(rho, dtype=complex)
    h = model.hamiltonian(t)
    out = -1j * (h @ rho - rho @ h)
    for op, rate in model.channels:
        g = float(rate(t))
        if g == 0.0:
            continue
        gram = op.conj().T @ op
        out += g * (op @ rho @ op.conj().T
                    - 0.5 * (gram @ rho + rho @ gram))
    return out


def dense_rhs_generalized(blocks, model: models.GeneralizedModel, t: float):
    """Block derivatives of the coupled Lindblad-like system."""
    blocks = [np.asarray(b, dtype=complex) for b in blocks]
    out = []
    for i in range(model.n):
        h = model.block_hamiltonians[i](t)
        d = -1j * (h @ blocks[i] - blocks[i] @ h)
        for c in model.couplings:
            g = 1.0 if c.strength is None else float(c.strength(t))
            if g == 0.0:
                continue
            if c.target == i:       # gain from the source block
                d += g * (c.op @ blocks[c.source] @ c.op.conj().T)
            if c.source == i:       # loss out of this block
                gram = c.op.conj().T @ c.op
                d -= 0.5 * g * (gram @ blocks[i] + blocks[i] @ gram)
        out.append(d)
    return out


def _stacked_rhs(model):
    if isinstance(model, models.TimeLocalModel):
        def rhs(y, t):
            return dense_rhs_standard(y[0], model, t)[None, :, :]
        return rhs, 1
    if isinstance(model, models.GeneralizedModel):
        def rhs(y, t):
            return np.stack(dense_rhs_generalized(list(y), model, t))
        return rhs, model.n
    raise TypeError(f"not a model: {type(model)!r}")


def dense_integrate(model, initial, dt: float, t_max: float,
                    record_stride: int = 1) -> DensityTrajectory:
    """Classical fixed-step RK4 on the dense right-hand side.

    `initial` is a full density matrix (standard) or a sequence of block
    density matrices (generalized).  Total-trace drift beyond 1e-8 aborts.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    rhs, n_blocks = _stacked_rhs(model)
    if isinstance(model, models.TimeLocalModel):
        y = np.asarray(initial, dtype=complex)[None, :, :].copy()
    else:
        y = np.stack([np.asarray(b, dtype=complex) for b in initial])
        if y.shape[0] != n_blocks:
            raise ValueError("need one initial matrix per block")

    n_steps = int(round(t_max / dt))
    rec = np.arange(0, n_steps + 1, record_stride, dtype=np.int64)
    if rec[-1] != n_steps:
        rec = np.append(rec, n_steps)
    out = np.empty((rec.size, n_blocks) + y.shape[1:], dtype=complex)

    trace0 = float(np.einsum("bii->", y).real)
    ri = 0
    for k in range(n_steps + 1):
        if ri < rec.size and rec[ri] == k:
            out[ri] = y
            tr = complex(np.einsum("bii->", y))
            if abs(tr - trace0) > TRACE_DRIFT_TOL:
                raise NumericError(
                    f"oracle trace drifted to {tr} at t={k * dt:g}")
            ri += 1
        if k == n_steps:
            break
        t = k * dt
        k1 = rhs(y, t)
        k2 = rhs(y + 0.5 * dt * k1, t + 0.5 * dt)
        k3 = rhs(y + 0.5 * dt * k2, t + 0.5 * dt)
        k4 = rhs(y + dt * k3, t + dt)
        y = y + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)

    return DensityTrajectory(times=rec * dt, blocks=out)


# ---------------------------------------------------------------------------
# closed forms for the detuned-cavity example

def jc_rate_integral(t, p: models.JCParams):
    """Exact antiderivative of the decay rate, from 0 to t."""
    t = np.asarray(t, dtype=float)
    lam, de = p.lam, p.delta
    denom = lam**2 + de**2
    pref = p.gamma0 * lam**2 / denom
    ic = (np.exp(-lam * t) * (-lam * np.cos(de * t) + de * np.sin(de * t))
          + lam) / denom
    is_ = (np.exp(-lam * t) * (-lam * np.sin(de * t) - de * np.cos(de * t))
           + de) / denom
    out = pref * (t - ic + (de / lam) * is_)
    return out if out.ndim else float(out)


def jc_shift_integral(t, p: models.JCParams):
    """Exact antiderivative of the level shift, from 0 to t."""
    t = np.asarray(t, dtype=float)
    if p.delta == 0.0:
        out = np.zeros_like(t)
        return out if out.ndim else 0.0
    lam, de = p.lam, p.delta
    denom = lam**2 + de**2
    pref = p.gamma0 * lam * de / denom
    ic = (np.exp(-lam * t) * (-lam * np.cos(de * t) + de * np.sin(de * t))
          + lam) / denom
    is_ = (np.exp(-lam * t) * (-lam * np.sin(de * t) - de * np.cos(de * t))
           + de) / denom
    out = pref * (t - ic - (lam / de) * is_)
    return out if out.ndim else float(out)


def jc_closed_form(t, p: models.JCParams, rho0: np.ndarray):
    """(rho_ee(t), rho_eg(t)) of the time-local cavity equation.

    rho_ee decays by exp(-Int gamma), the coherence by half that rate with a
    phase set by the accumulated level shift."""
    rho0 = np.asarray(rho0, dtype=complex)
    big_gamma = jc_rate_integral(t, p)
    big_sigma = jc_shift_integral(t, p)
    rho_ee = rho0[0, 0].real * np.exp(-big_gamma)
    rho_eg = rho0[0, 1] * np.exp(-0.5 * big_gamma - 0.5j * big_sigma)
    return rho_ee, rho_eg


# ---------------------------------------------------------------------------
# closed forms for the two-band example

def two_band_flow_integral(t, p: models.TwoBandParams):
    """Integral of the flow strength F from 0 to t, in closed form.

    With x = delta_eps * t:  [x Si(x) + cos x - 1 - Cin(x)] / (pi delta_eps),
    where Cin(x) = euler_gamma + ln x - Ci(x)."""
    t = np.asarray(t, dtype=float)
    x = p.delta_eps * t
    with np.errstate(divide="ignore", invalid="ignore"):
        si, ci = sici(x)
        safe = np.where(x == 0.0, 1.0, x)
        cin = np.where(x == 0.0, 0.0, EULER_GAMMA + np.log(safe) - ci)
    out = np.where(
        x == 0.0, 0.0,
        (x * si + np.cos(x) - 1.0 - cin) / (np.pi * p.delta_eps))
    return out if out.ndim else float(out)


def two_band_closed_form(t, p: models.TwoBandParams, p0: float = 1.0):
    """Excited population of the two-band model started from a pure upper
    block: fixed point gamma1/(gamma1+gamma2), approached at twice the total
    rate times the accumulated flow."""
    gsum = p.gamma1 + p.gamma2
    fp = p.gamma1 / gsum
    out = fp + (p0 - fp) * np.exp(-2.0 * gsum * two_band_flow_integral(t, p))
    return out if np.ndim(out) else float(out)
