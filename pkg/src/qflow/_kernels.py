"""Compiled inner loops for the flow solver (explicit Euler and classical
RK4 on the joint states + probabilities system).

The derivative routine mirrors the pure-Python engine in detsolver: rates
from the current states, paired out/in probability flows over the edge list
in ascending order (all computed from the frozen probability vector), and
the norm-preserving nonlinear state drift.
"""
from __future__ import annotations

import numpy as np
from numba import njit

STATUS_OK = 0
STATUS_NEGATIVE_PROB = 2
STATUS_NORM_DRIFT = 3


@njit(cache=True)
def _deriv(psis, probs, state_blocks,
           ch_ops, ch_gram, ch_src, rate_tab, m,
           h_const, term_blocks, term_ops, term_tab,
           e_src, e_ch, e_tgt,
           dpsis, dprobs, gam, cnorm2):
    """Joint derivative at tabulation column m; writes dpsis/dprobs."""
    n_states, d = psis.shape
    n_ch = ch_src.shape[0]

    # rates Gamma[s, c] = rate_c * ||C_c psi_s||^2
    for s in range(n_states):
        b = state_blocks[s]
        for c in range(n_ch):
            if ch_src[c] == b:
                nv = 0.0
                for i in range(d):
                    acc = 0.0 + 0.0j
                    for j in range(d):
                        acc += ch_ops[c, i, j] * psis[s, j]
                    nv += acc.real ** 2 + acc.imag ** 2
                cnorm2[s, c] = nv
                gam[s, c] = rate_tab[c, m] * nv
            else:
                cnorm2[s, c] = 0.0
                gam[s, c] = 0.0

    # paired probability flows from the frozen probability vector
    for s in range(n_states):
        dprobs[s] = 0.0
    for e in range(e_src.shape[0]):
        s = e_src[e]
        flow = gam[s, e_ch[e]] * probs[s]
        dprobs[s] -= flow
        dprobs[e_tgt[e]] += flow

    # dpsi = -i H psi - 1/2 sum_c g_c (C^+C psi - ||C psi||^2 psi)
    for s in range(n_states):
        b = state_blocks[s]
        for i in range(d):
            acc = 0.0 + 0.0j
            for j in range(d):
                acc += h_const[b, i, j] * psis[s, j]
            dpsis[s, i] = -1j * acc
        for t in range(term_blocks.shape[0]):
            if term_blocks[t] == b:
                cv = term_tab[t, m]
                if cv != 0.0:
                    for i in range(d):
                        acc = 0.0 + 0.0j
                        for j in range(d):
                            acc += term_ops[t, i, j] * psis[s, j]
                        dpsis[s, i] += -1j * cv * acc
        scal = 0.0
        for c in range(n_ch):
            if ch_src[c] == b:
                g = rate_tab[c, m]
                if g != 0.0:
                    for i in range(d):
                        acc = 0.0 + 0.0j
                        for j in range(d):
                            acc += ch_gram[c, i, j] * psis[s, j]
                        dpsis[s, i] -= 0.5 * g * acc
                    scal += g * cnorm2[s, c]
        for i in range(d):
            dpsis[s, i] += 0.5 * scal * psis[s, i]


@njit(cache=True)
def flow_loop(psis, probs, state_blocks,
              ch_ops, ch_gram, ch_src, rate_tab,
              h_const, term_blocks, term_ops, term_tab,
              e_src, e_ch, e_tgt,
              dt, n_steps, rec_steps, renorm, use_rk4,
              out_p, out_psi):
    """March n_steps; rate_tab/term_tab columns are step times for Euler and
    half-step times (2 * n_steps + 1 columns) for RK4.  Samples are written
    at the step indices in rec_steps.  Returns (status, failing step)."""
    n_states, d = psis.shape
    n_ch = ch_src.shape[0]

    gam = np.zeros((n_states, n_ch))
    cnorm2 = np.zeros((n_states, n_ch))
    k1s = np.zeros((n_states, d), dtype=np.complex128)
    k2s = np.zeros((n_states, d), dtype=np.complex128)
    k3s = np.zeros((n_states, d), dtype=np.complex128)
    k4s = np.zeros((n_states, d), dtype=np.complex128)
    k1p = np.zeros(n_states)
    k2p = np.zeros(n_states)
    k3p = np.zeros(n_states)
    k4p = np.zeros(n_states)
    stage_s = np.zeros((n_states, d), dtype=np.complex128)
    stage_p = np.zeros(n_states)

    prev_norm = np.empty(n_states)
    for s in range(n_states):
        acc = 0.0
        for i in range(d):
            acc += psis[s, i].real ** 2 + psis[s, i].imag ** 2
        prev_norm[s] = np.sqrt(acc)

    ri = 0
    for k in range(n_steps + 1):
        if ri < rec_steps.shape[0] and rec_steps[ri] == k:
            for s in range(n_states):
                out_p[ri, s] = probs[s]
                for i in range(d):
                    out_psi[ri, s, i] = psis[s, i]
            ri += 1
        if k == n_steps:
            break

        if not use_rk4:
            _deriv(psis, probs, state_blocks, ch_ops, ch_gram, ch_src,
                   rate_tab, k, h_const, term_blocks, term_ops, term_tab,
                   e_src, e_ch, e_tgt, k1s, k1p, gam, cnorm2)
            for s in range(n_states):
                probs[s] += dt * k1p[s]
                for i in range(d):
                    psis[s, i] += dt * k1s[s, i]
        else:
            m = 2 * k
            _deriv(psis, probs, state_blocks, ch_ops, ch_gram, ch_src,
                   rate_tab, m, h_const, term_blocks, term_ops, term_tab,
                   e_src, e_ch, e_tgt, k1s, k1p, gam, cnorm2)
            for s in range(n_states):
                stage_p[s] = probs[s] + 0.5 * dt * k1p[s]
                for i in range(d):
                    stage_s[s, i] = psis[s, i] + 0.5 * dt * k1s[s, i]
            _deriv(stage_s, stage_p, state_blocks, ch_ops, ch_gram, ch_src,
                   rate_tab, m + 1, h_const, term_blocks, term_ops, term_tab,
                   e_src, e_ch, e_tgt, k2s, k2p, gam, cnorm2)
            for s in range(n_states):
                stage_p[s] = probs[s] + 0.5 * dt * k2p[s]
                for i in range(d):
                    stage_s[s, i] = psis[s, i] + 0.5 * dt * k2s[s, i]
            _deriv(stage_s, stage_p, state_blocks, ch_ops, ch_gram, ch_src,
                   rate_tab, m + 1, h_const, term_blocks, term_ops, term_tab,
                   e_src, e_ch, e_tgt, k3s, k3p, gam, cnorm2)
            for s in range(n_states):
                stage_p[s] = probs[s] + dt * k3p[s]
                for i in range(d):
                    stage_s[s, i] = psis[s, i] + dt * k3s[s, i]
            _deriv(stage_s, stage_p, state_blocks, ch_ops, ch_gram, ch_src,
                   rate_tab, m + 2, h_const, term_blocks, term_ops, term_tab,
                   e_src, e_ch, e_tgt, k4s, k4p, gam, cnorm2)
            for s in range(n_states):
                probs[s] += (dt / 6.0) * (k1p[s] + 2 * k2p[s]
                                          + 2 * k3p[s] + k4p[s])
                for i in range(d):
                    psis[s, i] += (dt / 6.0) * (k1s[s, i] + 2 * k2s[s, i]
                                                + 2 * k3s[s, i] + k4s[s, i])

        for s in range(n_states):
            if probs[s] < -1e-9:
                return STATUS_NEGATIVE_PROB, k

        for s in range(n_states):
            acc = 0.0
            for i in range(d):
                acc += psis[s, i].real ** 2 + psis[s, i].imag ** 2
            norm = np.sqrt(acc)
            if renorm:
                for i in range(d):
                    psis[s, i] /= norm
            else:
                if abs(norm - prev_norm[s]) > 1e-6:
                    return STATUS_NORM_DRIFT, k
                prev_norm[s] = norm

    return STATUS_OK, n_steps
