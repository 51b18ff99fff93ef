"""Effective pure-state ensemble: closure under jump operators, the jump
transition map, and density-matrix assembly."""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import models, qcore
from .qcore import QFlowError

MATCH_TOL = 1e-8
DEFAULT_CAP = 64


class EnsembleError(QFlowError):
    """Registry construction or consistency failure."""


@dataclass(frozen=True)
class TransitionEdge:
    """(source state, channel) -> target state; exists iff the channel maps
    the source state to a nonzero vector."""

    source: int
    channel: int
    target: int


@dataclass(eq=False)
class EnsembleRegistry:
    """The effective states, their probabilities, and the jump transition map.

    States are stored row-wise in a (n_states, dim) array, each normalized;
    `blocks[s]` is the block index of state s (always 0 for standard models).
    """

    blocks: np.ndarray
    states: np.ndarray
    probabilities: np.ndarray
    edges: tuple[TransitionEdge, ...]
    n_blocks: int = 1

    @property
    def n_eff(self) -> int:
        return self.states.shape[0]

    @property
    def dim(self) -> int:
        return self.states.shape[1]

    def copy(self) -> "EnsembleRegistry":
        return EnsembleRegistry(self.blocks.copy(), self.states.copy(),
                                self.probabilities.copy(), self.edges,
                                self.n_blocks)

    def check(self, prob_tol: float = 1e-10, norm_tol: float = 1e-10) -> None:
        p = self.probabilities
        if abs(p.sum() - 1.0) > prob_tol:
            raise EnsembleError(f"probabilities sum to {p.sum()!r}, not 1")
        if p.min() < -1e-9:
            raise EnsembleError(f"negative probability {p.min()!r}")
        norms = np.linalg.norm(self.states, axis=1)
        if np.max(np.abs(norms - 1.0)) > norm_tol:
            raise EnsembleError("registry contains a non-normalized state")
        for e in self.edges:
            if not (0 <= e.source < self.n_eff and 0 <= e.target < self.n_eff):
                raise EnsembleError(f"edge references invalid state: {e}")


def match_state(candidate: np.ndarray, registry: EnsembleRegistry,
                block: int, tol: float = MATCH_TOL):
    """Index of the registry state in `block` matching `candidate` up to a
    global phase, or None.  Two simultaneous matches mean the registry is
    corrupt and raise EnsembleError."""
    overlaps = np.abs(registry.states.conj() @ np.asarray(candidate))
    hits = np.nonzero(
        (np.abs(1.0 - overlaps) <= tol) & (registry.blocks == block)
    )[0]
    if hits.size > 1:
        raise EnsembleError(
            f"states {hits.tolist()} all match the candidate within {tol}"
        )
    return int(hits[0]) if hits.size == 1 else None


def _normalize_initial(initial):
    """Accept (psi, prob) or (block, psi, prob) tuples."""
    out = []
    for item in initial:
        if len(item) == 2:
            psi, prob = item
            block = 0
        else:
            block, psi, prob = item
        psi = np.asarray(psi, dtype=complex)
        n = np.linalg.norm(psi)
        if abs(n - 1.0) > 1e-9:
            raise ValueError(f"initial state has norm {n}, expected 1")
        out.append((int(block), psi / n, float(prob)))
    if abs(sum(p for _, _, p in out) - 1.0) > 1e-9:
        raise ValueError("initial probabilities must sum to 1")
    return out


def build_closure(initial, model, cap: int = DEFAULT_CAP,
                  tol: float = MATCH_TOL) -> EnsembleRegistry:
    """Close the initial decomposition under all channel operators.

    Newly produced states enter with probability 0 together with the edge
    that produced them; channels that annihilate a state add no edge.  The
    transition map is computed once (at t = 0 operator directions) and held
    fixed for the whole run.
    """
    prep = models.normal_form(model)
    entries = _normalize_initial(initial)
    blocks = [b for b, _, _ in entries]
    states = [s for _, s, _ in entries]
    probs = [p for _, _, p in entries]

    registry = EnsembleRegistry(
        np.array(blocks, dtype=np.int64),
        np.array(states, dtype=complex),
        np.array(probs, dtype=float),
        (),
        prep.n_blocks,
    )

    edges: list[TransitionEdge] = []
    queue = list(range(registry.n_eff))
    while queue:
        s = queue.pop(0)
        for c, ch in enumerate(prep.channels):
            if ch.source != registry.blocks[s]:
                continue
            vec = qcore.apply(ch.op, registry.states[s])
            try:
                vec, _ = qcore.normalize(vec)
            except qcore.ZeroNormError:
                continue  # annihilated: channel closed for this state
            tgt = match_state(vec, registry, ch.target, tol)
            if tgt is None:
                if registry.n_eff >= cap:
                    raise EnsembleError(
                        f"jump-operator closure exceeds cap={cap}; the model "
                        "is not ensemble-representable at this cap"
                    )
                registry = EnsembleRegistry(
                    np.append(registry.blocks, ch.target),
                    np.vstack([registry.states, vec[None, :]]),
                    np.append(registry.probabilities, 0.0),
                    (),
                    prep.n_blocks,
                )
                tgt = registry.n_eff - 1
                queue.append(tgt)
            edges.append(TransitionEdge(s, c, tgt))

    registry = replace(registry, edges=tuple(edges))
    registry.check(prob_tol=1e-9)
    return registry


def assemble_density(registry: EnsembleRegistry):
    """(per-block density matrices, total density matrix).

    rho_i = sum_alpha p_i^alpha |psi><psi|; the total is the block sum and
    carries unit trace whenever the registry invariants hold."""
    psi = registry.states
    outer = np.einsum("s,si,sj->sij", registry.probabilities, psi, psi.conj())
    blocks = [
        outer[registry.blocks == b].sum(axis=0) if np.any(registry.blocks == b)
        else np.zeros((registry.dim, registry.dim), dtype=complex)
        for b in range(registry.n_blocks)
    ]
    total = outer.sum(axis=0)
    return blocks, total


def verify_edges(registry: EnsembleRegistry, model,
                 tol: float = MATCH_TOL) -> float:
    """Largest deviation | 1 - |<target | C source / ||.|| >| | over edges.

    The transition map is built once at t = 0; this re-checks that the
    evolved states still satisfy it (channel directions are constant)."""
    prep = models.normal_form(model)
    worst = 0.0
    for e in registry.edges:
        vec = prep.channels[e.channel].op @ registry.states[e.source]
        n = np.linalg.norm(vec)
        if n < qcore.ZERO_NORM_TOL:
            worst = max(worst, 1.0)
            continue
        ov = abs(np.vdot(registry.states[e.target], vec / n))
        worst = max(worst, abs(1.0 - ov))
    return worst
