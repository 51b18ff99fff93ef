"""Deterministic flow solver: the effective states evolve under a nonlinear
norm-preserving drift while their probabilities obey a paired out/in flow
over the jump transition map.  Standard (single block, signed rates) and
generalized (multi-block, non-negative rates) models run through the same
machinery.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from functools import cached_property

import numpy as np

from . import ensemble, models, qcore
from .qcore import NumericError

try:
    from . import _kernels
    _HAVE_COMPILED = True
except ImportError:  # numba missing; the pure-Python engine still works
    _kernels = None
    _HAVE_COMPILED = False

NEGATIVE_PROB_TOL = -1e-9
NORM_DRIFT_TOL = 1e-6


@dataclass(frozen=True)
class SolverConfig:
    dt: float
    t_max: float
    method: str = "euler"           # "euler" or "rk4"
    renormalize_each_step: bool = True
    record_stride: int = 1

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.t_max < self.dt:
            raise ValueError("t_max must be at least one step")
        if self.method not in ("euler", "rk4"):
            raise ValueError(f"unknown method {self.method!r}")
        if self.record_stride < 1:
            raise ValueError("record_stride must be >= 1")

    @property
    def n_steps(self) -> int:
        return int(round(self.t_max / self.dt))


@dataclass(eq=False)
class Trajectory:
    """Sampled run output: probabilities and states on the record grid, with
    density matrices, observables and diagnostics derived lazily."""

    times: np.ndarray
    probabilities: np.ndarray        # (n_samples, n_states)
    states: np.ndarray               # (n_samples, n_states, dim)
    state_blocks: np.ndarray
    n_blocks: int
    metadata: dict = field(default_factory=dict)
    model: object = field(default=None, repr=False)
    _observable_ops: dict = field(default_factory=dict, repr=False)

    @property
    def n_samples(self) -> int:
        return self.times.shape[0]

    @cached_property
    def density(self) -> np.ndarray:
        """Total density matrix at every sample, (n_samples, dim, dim)."""
        return np.einsum("ts,tsi,tsj->tij", self.probabilities,
                         self.states, self.states.conj())

    @cached_property
    def block_densities(self) -> np.ndarray:
        """(n_samples, n_blocks, dim, dim) per-block density matrices."""
        outer = np.einsum("ts,tsi,tsj->tsij", self.probabilities,
                          self.states, self.states.conj())
        d = self.states.shape[2]
        out = np.zeros((self.n_samples, self.n_blocks, d, d), dtype=complex)
        for b in range(self.n_blocks):
            mask = self.state_blocks == b
            if mask.any():
                out[:, b] = outer[:, mask].sum(axis=1)
        return out

    @cached_property
    def block_traces(self) -> np.ndarray:
        return np.einsum("tbii->tb", self.block_densities).real

    def expectation(self, op: np.ndarray) -> np.ndarray:
        """tr(rho O) at every sample (real part for Hermitian O)."""
        return np.einsum("tij,ji->t", self.density, np.asarray(op)).real

    @cached_property
    def observables(self) -> dict:
        return {name: self.expectation(op)
                for name, op in self._observable_ops.items()}

    @cached_property
    def diagnostics(self) -> dict:
        out = {
            "prob_sum_drift": float(np.max(np.abs(
                self.probabilities.sum(axis=1) - 1.0))),
            "norm_drift": float(np.max(np.abs(
                np.linalg.norm(self.states, axis=2) - 1.0))),
        }
        if self.model is not None:
            # re-verify the fixed transition map on (up to) 16 sampled times
            idx = np.unique(np.linspace(0, self.n_samples - 1,
                                        min(16, self.n_samples)).astype(int))
            worst = 0.0
            base = ensemble.build_closure(_registry_entries(self), self.model)
            for k in idx:
                reg = ensemble.EnsembleRegistry(
                    base.blocks, np.ascontiguousarray(self.states[k]),
                    base.probabilities, base.edges, base.n_blocks)
                worst = max(worst, ensemble.verify_edges(reg, self.model))
            out["edge_mismatch"] = worst
        return out


def _registry_entries(traj: Trajectory):
    p0 = traj.probabilities[0]
    return [(int(b), psi, float(p))
            for b, psi, p in zip(traj.state_blocks, traj.states[0], p0)]


# ---------------------------------------------------------------------------
# elementary operations

def compute_rates(registry: ensemble.EnsembleRegistry, model, t: float
                  ) -> np.ndarray:
    """Rate table Gamma[s, c] = rate_c(t) * ||C_c psi_s||^2; zero when the
    channel does not act on the state's block (or annihilates the state)."""
    prep = models.normal_form(model)
    gam = np.zeros((registry.n_eff, len(prep.channels)))
    for c, ch in enumerate(prep.channels):
        mask = registry.blocks == ch.source
        if not mask.any():
            continue
        v = registry.states[mask] @ ch.op.T
        n2 = np.einsum("si,si->s", v, v.conj()).real
        gam[mask, c] = float(ch.rate(t)) * n2
    return gam


def drift_generator(state: np.ndarray, block: int, model, t: float
                    ) -> np.ndarray:
    """dpsi/dt for one effective state.

    The generator combines the block Hamiltonian, the rate-weighted C^+C
    damping, and a scalar compensation that keeps d||psi||^2/dt = 0."""
    prep = models.normal_form(model)
    psi = np.asarray(state, dtype=complex)
    hpsi = prep.hamiltonians[block](t) @ psi
    diss = np.zeros_like(psi)
    scal = 0.0
    for ch in prep.channels:
        if ch.source != block:
            continue
        g = float(ch.rate(t))
        if g == 0.0:
            continue
        v = ch.op @ psi
        n2 = float(np.vdot(v, v).real)
        diss += g * (ch.op.conj().T @ v)
        scal += g * n2
    return -1j * hpsi - 0.5 * (diss - scal * psi)


def step_probabilities(probs: np.ndarray, rates: np.ndarray,
                       transitions, dt: float) -> np.ndarray:
    """One explicit Euler step of the probability flow.

    Each out-flow appears verbatim as an in-flow, so the probability sum is
    conserved up to rounding regardless of rate signs."""
    p0 = np.asarray(probs, dtype=float)
    p = p0.copy()
    for e in transitions:
        flow = dt * rates[e.source, e.channel] * p0[e.source]
        p[e.source] -= flow
        p[e.target] += flow
    if p.min() < NEGATIVE_PROB_TOL:
        raise NumericError(
            f"probability went negative ({p.min():.3e}); reduce dt"
        )
    return p


def step_states(registry: ensemble.EnsembleRegistry, model, t: float,
                config: SolverConfig) -> ensemble.EnsembleRegistry:
    """Advance every registry state independently by one dt."""
    prep = models.normal_form(model)
    dt = config.dt
    new = np.empty_like(registry.states)
    for s in range(registry.n_eff):
        psi = registry.states[s]
        b = int(registry.blocks[s])
        if config.method == "euler":
            nxt = psi + dt * drift_generator(psi, b, model, t)
        else:
            k1 = drift_generator(psi, b, model, t)
            k2 = drift_generator(psi + 0.5 * dt * k1, b, model, t + 0.5 * dt)
            k3 = drift_generator(psi + 0.5 * dt * k2, b, model, t + 0.5 * dt)
            k4 = drift_generator(psi + dt * k3, b, model, t + dt)
            nxt = psi + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        norm = np.linalg.norm(nxt)
        if config.renormalize_each_step:
            nxt = nxt / norm
        elif abs(norm - np.linalg.norm(psi)) > NORM_DRIFT_TOL:
            raise NumericError(
                f"state norm drifted by {abs(norm - 1):.3e} in one step; "
                "reduce dt or enable renormalization"
            )
        new[s] = nxt
    return replace(registry, states=new)


# ---------------------------------------------------------------------------
# full runs

def _tabulate(fn, ts: np.ndarray) -> np.ndarray:
    out = np.asarray(fn(ts), dtype=float)
    if out.shape != ts.shape:
        out = np.array([float(fn(t)) for t in ts])
    return out


def _record_steps(n_steps: int, stride: int) -> np.ndarray:
    steps = np.arange(0, n_steps + 1, stride, dtype=np.int64)
    if steps[-1] != n_steps:
        steps = np.append(steps, n_steps)
    return steps


def run(model, initial, config: SolverConfig, observables: dict | None = None,
        engine: str = "auto") -> Trajectory:
    """Build the closure once, then march states and probabilities to t_max.

    engine: "compiled" (numba), "python", or "auto" which picks the compiled
    loop when available.
    """
    prep = models.normal_form(model)
    registry = ensemble.build_closure(initial, model)
    n_steps = config.n_steps
    rec_steps = _record_steps(n_steps, config.record_stride)

    if engine == "auto":
        engine = "compiled" if _HAVE_COMPILED else "python"
    if engine not in ("compiled", "python"):
        raise ValueError(f"unknown engine {engine!r}")

    out_p = np.empty((rec_steps.size, registry.n_eff))
    out_psi = np.empty((rec_steps.size, registry.n_eff, registry.dim),
                       dtype=complex)

    if engine == "compiled":
        _run_compiled(prep, registry, config, n_steps, rec_steps,
                      out_p, out_psi)
    else:
        _run_python(prep, registry, config, n_steps, rec_steps,
                    out_p, out_psi)

    traj = Trajectory(
        times=rec_steps * config.dt,
        probabilities=out_p,
        states=out_psi,
        state_blocks=registry.blocks.copy(),
        n_blocks=registry.n_blocks,
        metadata={
            "engine": engine,
            "method": config.method,
            "dt": config.dt,
            "t_max": config.t_max,
            "n_steps": n_steps,
            "n_eff": registry.n_eff,
            "record_stride": config.record_stride,
            "renormalize_each_step": config.renormalize_each_step,
        },
        model=model,
        _observable_ops=dict(observables or {}),
    )
    return traj


def _run_compiled(prep, registry, config, n_steps, rec_steps, out_p, out_psi):
    dt = config.dt
    d = registry.dim
    use_rk4 = config.method == "rk4"
    # Euler samples the coefficients at step starts, RK4 at half steps too
    if use_rk4:
        step_times = np.arange(2 * n_steps + 1) * (dt / 2.0)
    else:
        step_times = np.arange(n_steps) * dt
    n_tab = step_times.size
    n_ch = len(prep.channels)
    rate_tab = np.zeros((n_ch, n_tab))
    for c, ch in enumerate(prep.channels):
        rate_tab[c] = _tabulate(ch.rate, step_times)
    if not prep.signed and n_ch and rate_tab.min() < -1e-12:
        raise NumericError("negative channel strength in a generalized model")

    ch_ops = (np.stack([ch.op for ch in prep.channels])
              if n_ch else np.zeros((0, d, d), dtype=complex))
    ch_gram = (np.stack([ch.op.conj().T @ ch.op for ch in prep.channels])
               if n_ch else np.zeros((0, d, d), dtype=complex))
    ch_src = np.array([ch.source for ch in prep.channels], dtype=np.int64)

    h_const = np.stack([h.constant for h in prep.hamiltonians])
    term_blocks, term_ops, term_tab = [], [], []
    for b, h in enumerate(prep.hamiltonians):
        for fn, op in h.terms:
            term_blocks.append(b)
            term_ops.append(op)
            term_tab.append(_tabulate(fn, step_times))
    term_blocks = np.array(term_blocks, dtype=np.int64)
    term_ops = (np.stack(term_ops) if term_ops
                else np.zeros((0, d, d), dtype=complex))
    term_tab = (np.stack(term_tab) if len(term_tab)
                else np.zeros((0, n_tab)))

    e_src = np.array([e.source for e in registry.edges], dtype=np.int64)
    e_ch = np.array([e.channel for e in registry.edges], dtype=np.int64)
    e_tgt = np.array([e.target for e in registry.edges], dtype=np.int64)

    psis = np.ascontiguousarray(registry.states, dtype=complex)
    probs = registry.probabilities.astype(float).copy()

    status, bad = _kernels.flow_loop(
        psis, probs, registry.blocks.astype(np.int64),
        ch_ops, ch_gram, ch_src, rate_tab,
        h_const, term_blocks, term_ops, term_tab,
        e_src, e_ch, e_tgt,
        dt, n_steps, rec_steps,
        config.renormalize_each_step, use_rk4,
        out_p, out_psi)
    if status == _kernels.STATUS_NEGATIVE_PROB:
        raise NumericError(
            f"probability went negative at step {bad} (t={bad * dt:g}); "
            "reduce dt")
    if status == _kernels.STATUS_NORM_DRIFT:
        raise NumericError(
            f"state norm drifted by more than {NORM_DRIFT_TOL:g} at step "
            f"{bad}; reduce dt or enable renormalization")


def _run_python(prep, registry, config, n_steps, rec_steps, out_p, out_psi):
    dt = config.dt
    blocks = registry.blocks
    grams = [ch.op.conj().T @ ch.op for ch in prep.channels]
    edges = registry.edges
    psis = registry.states.astype(complex).copy()
    probs = registry.probabilities.astype(float).copy()
    prev_norms = np.linalg.norm(psis, axis=1)

    def rates_and_norm2(ps, t):
        gam = np.zeros((ps.shape[0], len(prep.channels)))
        n2s = np.zeros_like(gam)
        gvals = np.zeros(len(prep.channels))
        for c, ch in enumerate(prep.channels):
            g = float(ch.rate(t))
            if not prep.signed and g < -1e-12:
                raise NumericError(
                    "negative channel strength in a generalized model")
            gvals[c] = g
            mask = blocks == ch.source
            if not mask.any():
                continue
            v = ps[mask] @ ch.op.T
            n2 = np.einsum("si,si->s", v, v.conj()).real
            n2s[mask, c] = n2
            gam[mask, c] = g * n2
        return gam, n2s, gvals

    def drift_all(ps, t, gam=None, n2s=None, gvals=None):
        if gam is None:
            gam, n2s, gvals = rates_and_norm2(ps, t)
        dps = np.zeros_like(ps)
        scal = np.zeros(ps.shape[0])
        for b, h in enumerate(prep.hamiltonians):
            mask = blocks == b
            if mask.any():
                dps[mask] = -1j * (ps[mask] @ h(t).T)
        for c, ch in enumerate(prep.channels):
            mask = blocks == ch.source
            if mask.any() and gvals[c] != 0.0:
                dps[mask] -= 0.5 * gvals[c] * (ps[mask] @ grams[c].T)
                scal += gam[:, c]
        dps += 0.5 * scal[:, None] * ps
        return dps

    def flow_delta(p, gam):
        dp = np.zeros_like(p)
        for e in edges:
            f = gam[e.source, e.channel] * p[e.source]
            dp[e.source] -= f
            dp[e.target] += f
        return dp

    ri = 0
    for k in range(n_steps + 1):
        if ri < rec_steps.size and rec_steps[ri] == k:
            out_p[ri] = probs
            out_psi[ri] = psis
            ri += 1
        if k == n_steps:
            break
        t = k * dt
        if config.method == "euler":
            gam, n2s, gvals = rates_and_norm2(psis, t)
            probs = probs + dt * flow_delta(probs, gam)
            if probs.min() < NEGATIVE_PROB_TOL:
                raise NumericError(
                    f"probability went negative at step {k} (t={t:g}); "
                    "reduce dt")
            psis = psis + dt * drift_all(psis, t, gam, n2s, gvals)
        else:
            # classical RK4 on the joint (states, probabilities) system
            def deriv(ps, p, tt):
                gam, n2s, gvals = rates_and_norm2(ps, tt)
                return drift_all(ps, tt, gam, n2s, gvals), flow_delta(p, gam)

            k1s, k1p = deriv(psis, probs, t)
            k2s, k2p = deriv(psis + 0.5 * dt * k1s, probs + 0.5 * dt * k1p,
                             t + 0.5 * dt)
            k3s, k3p = deriv(psis + 0.5 * dt * k2s, probs + 0.5 * dt * k2p,
                             t + 0.5 * dt)
            k4s, k4p = deriv(psis + dt * k3s, probs + dt * k3p, t + dt)
            psis = psis + (dt / 6.0) * (k1s + 2 * k2s + 2 * k3s + k4s)
            probs = probs + (dt / 6.0) * (k1p + 2 * k2p + 2 * k3p + k4p)
            if probs.min() < NEGATIVE_PROB_TOL:
                raise NumericError(
                    f"probability went negative at step {k} (t={t:g}); "
                    "reduce dt")

        norms = np.linalg.norm(psis, axis=1)
        if config.renormalize_each_step:
            psis = psis / norms[:, None]
        else:
            if np.max(np.abs(norms - prev_norms)) > NORM_DRIFT_TOL:
                raise NumericError(
                    f"state norm drifted by more than {NORM_DRIFT_TOL:g} at "
                    f"step {k}; reduce dt or enable renormalization")
            prev_norms = norms
