"""Config-file handling for the command-line runner.

The format is flat INI-style key-value text.  Complex matrices are row-major
whitespace-separated lists of "re,im" pairs; tabulated rate functions are
inline "t:value" pairs or a reference to a two-column CSV file.  A [meta]
section (as written into output sidecars) is ignored on load, so a sidecar
is itself a valid config.
"""
from __future__ import annotations

import configparser
import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import models, qcore
from .detsolver import SolverConfig
from .qcore import QFlowError

VALID_METHODS = ("det-euler", "det-rk4", "nmqj", "mc-unravel", "oracle")


class ConfigError(QFlowError):
    """Invalid or inconsistent run configuration."""


@dataclass(eq=False)
class RunConfig:
    model: object
    kind: str
    initial: list
    solver: SolverConfig
    n_particles: int
    seed: int
    methods: list[str]
    precision: int
    out_prefix: str
    parser: configparser.ConfigParser

    @property
    def is_generalized(self) -> bool:
        return isinstance(self.model, models.GeneralizedModel)


def _parse_complex_list(text: str, what: str) -> np.ndarray:
    vals = []
    for tok in text.split():
        parts = tok.split(",")
        if len(parts) != 2:
            raise ConfigError(f"{what}: token {tok!r} is not a re,im pair")
        try:
            vals.append(complex(float(parts[0]), float(parts[1])))
        except ValueError as exc:
            raise ConfigError(f"{what}: bad number in {tok!r}") from exc
    if not vals:
        raise ConfigError(f"{what}: empty value")
    return np.array(vals, dtype=complex)


def _parse_matrix(text: str, dim: int, what: str) -> np.ndarray:
    flat = _parse_complex_list(text, what)
    if flat.size != dim * dim:
        raise ConfigError(
            f"{what}: expected {dim * dim} entries for a {dim}x{dim} matrix, "
            f"got {flat.size}")
    return flat.reshape(dim, dim)


def _parse_rate(text: str, base_dir: Path, what: str):
    """Rate spec: 'const X' | 'inline t:v t:v ...' | 'file PATH'."""
    parts = text.split(None, 1)
    if len(parts) != 2:
        raise ConfigError(f"{what}: expected 'const|inline|file ...'")
    kind, rest = parts
    if kind == "const":
        try:
            v = float(rest)
        except ValueError as exc:
            raise ConfigError(f"{what}: bad constant {rest!r}") from exc
        return lambda t, v=v: np.full(np.shape(t), v) if np.ndim(t) else v
    if kind == "inline":
        ts, vs = [], []
        for tok in rest.split():
            tv = tok.split(":")
            if len(tv) != 2:
                raise ConfigError(f"{what}: token {tok!r} is not t:value")
            ts.append(float(tv[0]))
            vs.append(float(tv[1]))
        try:
            return qcore.SampledFunction(np.array(ts), np.array(vs))
        except ValueError as exc:
            raise ConfigError(f"{what}: {exc}") from exc
    if kind == "file":
        path = base_dir / rest.strip()
        if not path.exists():
            raise ConfigError(f"{what}: referenced file {path} does not exist")
        ts, vs = [], []
        with open(path, newline="") as fh:
            for row in csv.reader(fh):
                if not row or not row[0].strip():
                    continue
                try:
                    t, v = float(row[0]), float(row[1])
                except (ValueError, IndexError):
                    continue  # header line
                ts.append(t)
                vs.append(v)
        if len(ts) < 2:
            raise ConfigError(f"{what}: {path} holds fewer than 2 samples")
        try:
            return qcore.SampledFunction(np.array(ts), np.array(vs))
        except ValueError as exc:
            raise ConfigError(f"{what}: {exc}") from exc
    raise ConfigError(f"{what}: unknown rate kind {kind!r}")


def _build_model(cp: configparser.ConfigParser, base_dir: Path):
    if not cp.has_section("model"):
        raise ConfigError("missing [model] section")
    sec = cp["model"]
    kind = sec.get("kind", "").strip()
    try:
        if kind == "jc":
            params = models.JCParams(
                gamma0=sec.getfloat("gamma0", 4.0),
                lam=sec.getfloat("lambda", 1.0),
                delta=sec.getfloat("delta", 12.0))
            return models.make_jc_model(params), kind, params
        if kind == "two-band":
            params = models.TwoBandParams(
                delta_eps=sec.getfloat("delta_eps", 0.31),
                gamma1=sec.getfloat("gamma1", 1.0),
                gamma2=sec.getfloat("gamma2", 1.0))
            return models.make_two_band_model(params), kind, params
        if kind == "custom":
            dim = sec.getint("dim", 0)
            if dim < 1:
                raise ConfigError("custom model needs dim >= 1")
            if "hamiltonian" in sec:
                ham = _parse_matrix(sec["hamiltonian"], dim,
                                    "model.hamiltonian")
            else:
                ham = np.zeros((dim, dim), dtype=complex)
            channels = []
            i = 1
            while f"channel{i}_op" in sec:
                op = _parse_matrix(sec[f"channel{i}_op"], dim,
                                   f"model.channel{i}_op")
                rate_key = f"channel{i}_rate"
                if rate_key not in sec:
                    raise ConfigError(f"model.{rate_key} missing")
                rate = _parse_rate(sec[rate_key], base_dir,
                                   f"model.{rate_key}")
                channels.append((op, rate))
                i += 1
            if not channels:
                raise ConfigError("custom model needs channel1_op/_rate")
            return models.TimeLocalModel(ham, tuple(channels)), kind, None
    except ValueError as exc:
        raise ConfigError(f"invalid model: {exc}") from exc
    raise ConfigError(f"model.kind must be jc, two-band or custom, "
                      f"got {kind!r}")


def _default_initial(kind: str):
    if kind == "jc":
        return [(0, np.array([0.8, 0.6], dtype=complex), 1.0)]
    if kind == "two-band":
        return [(0, models.EXCITED, 1.0)]
    raise ConfigError("custom models require an [initial] section")


def _build_initial(cp: configparser.ConfigParser, kind: str, dim: int):
    if not cp.has_section("initial") or not any(
            k.startswith("state") for k in cp["initial"]):
        return _default_initial(kind)
    sec = cp["initial"]
    entries = []
    i = 1
    while f"state{i}" in sec:
        vec = _parse_complex_list(sec[f"state{i}"], f"initial.state{i}")
        if vec.size != dim:
            raise ConfigError(
                f"initial.state{i} has dimension {vec.size}, model has {dim}")
        prob = sec.getfloat(f"prob{i}", fallback=None)
        if prob is None:
            raise ConfigError(f"initial.prob{i} missing")
        block = sec.getint(f"block{i}", 0)
        entries.append((block, vec, prob))
        i += 1
    if not entries:
        raise ConfigError("[initial] section holds no state1/prob1 keys")
    return entries


def load_config(path, seed: int | None = None, dt: float | None = None,
                methods: list[str] | None = None) -> RunConfig:
    """Parse and validate a config file, applying CLI overrides.

    Overrides are folded back into the returned parser so the metadata
    sidecar echoes the run exactly as performed."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file {path} does not exist")
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        cp.read(path)
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc

    model, kind, _params = _build_model(cp, path.parent)
    initial = _build_initial(cp, kind, model.dim)
    try:
        probs = [p for _, _, p in initial]
        if abs(sum(probs) - 1.0) > 1e-9:
            raise ConfigError(
                f"initial probabilities sum to {sum(probs)}, not 1")
    except TypeError as exc:
        raise ConfigError(f"bad initial decomposition: {exc}") from exc

    sol = cp["solver"] if cp.has_section("solver") else {}
    try:
        solver = SolverConfig(
            dt=dt if dt is not None else float(sol.get("dt", 0.01)),
            t_max=float(sol.get("t_max", 1.0)),
            method=str(sol.get("method", "euler")).strip(),
            renormalize_each_step=str(sol.get("renormalize", "true")
                                      ).strip().lower() in ("1", "true", "yes"),
            record_stride=int(sol.get("record_stride", 1)),
        )
    except ValueError as exc:
        raise ConfigError(f"invalid solver section: {exc}") from exc

    sto = cp["stochastic"] if cp.has_section("stochastic") else {}
    try:
        n_particles = int(sto.get("n", 0))
        resolved_seed = seed if seed is not None else int(sto.get("seed", 0))
    except ValueError as exc:
        raise ConfigError(f"invalid stochastic section: {exc}") from exc
    if n_particles < 0:
        raise ConfigError("stochastic.n must be >= 0")

    runsec = cp["run"] if cp.has_section("run") else {}
    if methods:
        method_list = list(methods)
    else:
        raw = str(runsec.get("methods", "det-euler"))
        method_list = [m.strip() for m in raw.split(",") if m.strip()]
    for m in method_list:
        if m not in VALID_METHODS:
            raise ConfigError(
                f"unknown method {m!r}; valid: {', '.join(VALID_METHODS)}")
        if m == "nmqj" and isinstance(model, models.GeneralizedModel):
            raise ConfigError("nmqj applies only to standard models")
        if m == "mc-unravel" and isinstance(model, models.TimeLocalModel):
            raise ConfigError("mc-unravel applies only to generalized models")

    outsec = cp["output"] if cp.has_section("output") else {}
    try:
        precision = int(outsec.get("precision", 15))
    except ValueError as exc:
        raise ConfigError(f"invalid output.precision: {exc}") from exc
    if not (1 <= precision <= 17):
        raise ConfigError("output.precision must be in [1, 17]")

    out_prefix = str(runsec.get("out_prefix", kind)).strip()

    # fold resolved overrides back in, so the sidecar reproduces this run
    for section, key, value in (
            ("solver", "dt", repr(solver.dt)),
            ("solver", "t_max", repr(solver.t_max)),
            ("solver", "method", solver.method),
            ("solver", "record_stride", str(solver.record_stride)),
            ("solver", "renormalize",
             "true" if solver.renormalize_each_step else "false"),
            ("stochastic", "n", str(n_particles)),
            ("stochastic", "seed", str(resolved_seed)),
            ("run", "methods", ", ".join(method_list)),
            ("run", "out_prefix", out_prefix),
            ("output", "precision", str(precision))):
        if not cp.has_section(section):
            cp.add_section(section)
        cp[section][key] = value

    return RunConfig(
        model=model, kind=kind, initial=initial, solver=solver,
        n_particles=n_particles, seed=resolved_seed, methods=method_list,
        precision=precision, out_prefix=out_prefix, parser=cp)
