"""Stochastic baselines: particle-ensemble jump simulation for standard
models (with occupancy-weighted reverse jumps on negative-rate intervals) and
the Monte Carlo unraveling of the generalized block equation.

Both share the deterministic state evolution with the flow solver; only the
probabilities are replaced by particle counting.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import detsolver, ensemble, models
from .qcore import NumericError
from .ensemble import EnsembleError

RNG_NAME = "numpy.random.Generator(PCG64)"


@dataclass(frozen=True)
class StochasticConfig:
    n_particles: int
    seed: int
    dt: float
    t_max: float
    record_stride: int = 1

    def __post_init__(self):
        if self.n_particles < 1:
            raise ValueError("need at least one particle")
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.record_stride < 1:
            raise ValueError("record_stride must be >= 1")

    @property
    def n_steps(self) -> int:
        return int(round(self.t_max / self.dt))


def _initial_counts(probs: np.ndarray, n: int) -> np.ndarray:
    counts = np.rint(n * probs).astype(np.int64)
    counts[np.argmax(counts)] += n - counts.sum()  # fix rounding residual
    if counts.min() < 0:
        raise ValueError("initial occupancy went negative")
    return counts


def nmqj_run(model: models.TimeLocalModel, initial,
             config: StochasticConfig) -> detsolver.Trajectory:
    """Particle-ensemble jump simulation of a standard time-local model.

    Positive-rate channels move each particle forward along its edge with
    probability dt * Gamma; on negative-rate intervals particles in the jump
    target return to the source with probability weighted by the occupancy
    ratio n_source / n_target (zero when the target is empty)."""
    if not isinstance(model, models.TimeLocalModel):
        raise TypeError("nmqj_run expects a standard time-local model")
    return _jump_run(model, initial, config, signed=True)


def mc_unravel_run(model: models.GeneralizedModel, initial,
                   config: StochasticConfig) -> detsolver.Trajectory:
    """Monte Carlo unraveling of the generalized block equation: particles
    carry (block, state) and jump along coupling edges with probability
    dt * ||R psi||^2; block weights are occupancy fractions."""
    if not isinstance(model, models.GeneralizedModel):
        raise TypeError("mc_unravel_run expects a generalized block model")
    return _jump_run(model, initial, config, signed=False)


def _jump_run(model, initial, config: StochasticConfig,
              signed: bool) -> detsolver.Trajectory:
    prep = models.normal_form(model)
    registry = ensemble.build_closure(initial, model)
    n_states = registry.n_eff
    n_ch = len(prep.channels)
    edges = registry.edges
    n_steps = config.n_steps
    rec_steps = detsolver._record_steps(n_steps, config.record_stride)
    dt = config.dt
    n = config.n_particles

    # one reverse transition per (state, channel) slot is representable;
    # two forward edges never collide because closure is deterministic.
    tgt_by_slot = {}
    for e in edges:
        if (e.target, e.channel) in tgt_by_slot:
            raise EnsembleError(
                "two edges share a reverse (state, channel) slot; the "
                "occupancy-weighted reverse jump is ambiguous here")
        tgt_by_slot[(e.target, e.channel)] = e.source

    rng = np.random.default_rng(config.seed)
    counts = _initial_counts(registry.probabilities, n)
    loc = np.repeat(np.arange(n_states), counts)

    cfg_states = detsolver.SolverConfig(
        dt=dt, t_max=config.t_max, method="euler",
        renormalize_each_step=True, record_stride=config.record_stride)

    out_p = np.empty((rec_steps.size, n_states))
    out_psi = np.empty((rec_steps.size, n_states, registry.dim),
                       dtype=complex)

    reg = registry
    ri = 0
    for k in range(n_steps + 1):
        if ri < rec_steps.size and rec_steps[ri] == k:
            out_p[ri] = counts / n
            out_psi[ri] = reg.states
            ri += 1
        if k == n_steps:
            break
        t = k * dt

        rates = detsolver.compute_rates(reg, model, t)
        jump_p = np.zeros((n_states, n_ch))
        jump_to = np.full((n_states, n_ch), -1, dtype=np.int64)
        for e in edges:
            gam = rates[e.source, e.channel]
            if (not signed) or gam >= 0.0:
                jump_p[e.source, e.channel] = dt * gam
                jump_to[e.source, e.channel] = e.target
            elif counts[e.target] > 0:
                # reverse jump out of the target, weighted by occupancy
                jump_p[e.target, e.channel] = (
                    dt * (counts[e.source] / counts[e.target]) * (-gam))
                jump_to[e.target, e.channel] = e.source
        if jump_p.max() > 1.0:
            raise NumericError(
                f"jump probability {jump_p.max():.3f} exceeds 1 at step {k}; "
                "reduce dt")

        # one draw per particle per channel, particle-major order
        u = rng.random((n, n_ch))
        trig = u < jump_p[loc]
        moved = trig.any(axis=1)
        if moved.any():
            first = trig.argmax(axis=1)
            loc = np.where(moved, jump_to[loc, first], loc)
            counts = np.bincount(loc, minlength=n_states)

        reg = detsolver.step_states(reg, model, t, cfg_states)

    traj = detsolver.Trajectory(
        times=rec_steps * dt,
        probabilities=out_p,
        states=out_psi,
        state_blocks=registry.blocks.copy(),
        n_blocks=registry.n_blocks,
        metadata={
            "engine": "stochastic",
            "method": "nmqj" if signed else "mc-unravel",
            "dt": dt,
            "t_max": config.t_max,
            "n_steps": n_steps,
            "n_eff": n_states,
            "n_particles": n,
            "seed": config.seed,
            "rng": RNG_NAME,
            "record_stride": config.record_stride,
        },
        model=model,
    )
    return traj
