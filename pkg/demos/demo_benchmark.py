"""Deterministic flow vs stochastic jump simulation: cost and accuracy.

The flow solver advances N_eff = 2 coupled quantities per step, while the
jump baseline draws one random number per particle per channel per step.
This script times both on the same workload and measures their deviation
from the closed-form solution.

Run:  python3 demos/demo_benchmark.py
"""
import time

import numpy as np

from qflow import detsolver, models, oracle, stochastic

params = models.JCParams()
model = models.make_jc_model(params)
psi1 = np.array([0.8, 0.6], dtype=complex)
initial = [(0, psi1, 1.0)]
dt, t_max = 0.005, 5.0

config = detsolver.SolverConfig(dt=dt, t_max=t_max)
detsolver.run(model, initial, config)          # warm-up (jit compilation)
t0 = time.perf_counter()
det = detsolver.run(model, initial, config)
det_wall = time.perf_counter() - t0

exact, _ = oracle.jc_closed_form(det.times, params,
                                 np.outer(psi1, psi1.conj()))

print(f"{'method':<22} {'wall [s]':>10} {'max dev':>12}")
dev = np.max(np.abs(det.density[:, 0, 0].real - exact))
print(f"{'deterministic flow':<22} {det_wall:>10.4f} {dev:>12.2e}")

for n in (10**2, 10**3, 10**4):
    cfg = stochastic.StochasticConfig(n_particles=n, seed=1, dt=dt,
                                      t_max=t_max)
    t0 = time.perf_counter()
    st = stochastic.nmqj_run(model, initial, cfg)
    wall = time.perf_counter() - t0
    dev = np.max(np.abs(st.density[:, 0, 0].real - exact))
    print(f"{f'jump sim, N = {n}':<22} {wall:>10.4f} {dev:>12.2e}")

print(f"\nspeed-up over N = 10^4 jump simulation: "
      f"{wall / det_wall:.0f}x")
