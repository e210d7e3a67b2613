"""Command-line orchestration: configs, sweeps and deterministic result files.

Every run writes into ``<out-dir>/<command>-<hash>/``: a copy of the
resolved config, CSV tables, ``summary.json``, ``manifest.json`` (file
digests plus the config hash) and ``run.log``. Exit codes: 0 success,
2 when a hypothesis of the stability theorem fails (degenerate steady
state, no rapid mixing, inconsistent sweep), 1 on errors.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import math
import sys
from dataclasses import asdict, dataclass, field, fields
from importlib import resources
from pathlib import Path

import numpy as np
import yaml

from . import diagnostics as dg
from . import glauber as gl
from . import stability as st
from .evolution import DegenerateFixedPoint, EvolutionEngine, FixedPoint, fixed_point, infinite_time_limit
from .lattice import Lattice, region_diameter
from .liouvillian import DEFAULT_DIMENSION_CAP, DimensionCapExceeded, is_unital
from .presets import (
    DEFAULTS,
    PERTURBATIONS,
    PRESETS,
    dump_preset,
    load_model,
    make_model,
    make_perturbation,
    parse_observable,
)
from .quantum_algebra import SX, SZ, load_operator, operator_norm, save_operator, vectorize

log = logging.getLogger("lindstab")

SCHEMA_VERSION = 1
COMMANDS = ("evolve", "mixing", "lr", "envelope", "stability", "glauber", "counterexample")
EXIT_OK, EXIT_ERROR, EXIT_HYPOTHESIS = 0, 1, 2
DENSE_SOLVER_CAP = 4**5
AUDIT_LR_TIMES = "0:4:17"  # Lieb-Robinson fits are short-time statements


class ConfigError(ValueError):
    pass


def parse_sizes(spec) -> list[int]:
    """``"3..7"``, ``"4,6,8"``, an int or a list."""
    if isinstance(spec, int):
        return [spec]
    if isinstance(spec, (list, tuple)):
        return [int(s) for s in spec]
    spec = str(spec).strip()
    if ".." in spec:
        lo, hi = spec.split("..")
        return list(range(int(lo), int(hi) + 1))
    return [int(s) for s in spec.split(",") if s.strip()]


def parse_floats(spec) -> list[float]:
    if isinstance(spec, (int, float)):
        return [float(spec)]
    if isinstance(spec, (list, tuple)):
        return [float(s) for s in spec]
    return [float(s) for s in str(spec).split(",") if s.strip()]


def parse_times(spec) -> np.ndarray:
    """``"start:stop:count"`` (inclusive, evenly spaced) or an explicit list."""
    if isinstance(spec, (list, tuple)):
        return np.array([float(t) for t in spec])
    parts = str(spec).split(":")
    if len(parts) == 3:
        return np.linspace(float(parts[0]), float(parts[1]), int(parts[2]))
    return np.array(parse_floats(spec))


@dataclass
class ExperimentConfig:
    command: str = "stability"
    model: str = "depolarizing"
    dimension: int = 1
    size: int = 6
    params: dict = field(default_factory=dict)
    observable: str = "Z0"
    perturbation: str = "field-x"
    sizes: str | list = "3..7"
    eps: str | list = "1e-3,1e-2,1e-1"
    times: str | list = "0:20:201"
    lr_times: str | list | None = None
    distances: str | list | None = None
    max_radius: int | None = None
    slopes: str | list | None = None
    rtol: float = 1e-9
    krylov_dim: int = 30
    solver: str = "krylov"
    seed: int = 0
    chains: int = 1000
    threads: int = 1
    tolerance: float = 0.2
    audit: bool = False
    mode: str = "exact"
    kind: str = "asymmetric"
    out_dir: str = "runs"
    report: str = "report.json"
    probes: str | list | None = None
    out: str | None = None

    @classmethod
    def from_mapping(cls, data) -> "ExperimentConfig":
        if data is None or data == {}:
            raise ConfigError("config is empty")
        if not isinstance(data, dict):
            raise ConfigError("config must be a mapping of fields")
        known = {f.name for f in fields(cls)}
        for key in data:
            if key not in known:
                raise ConfigError(f"unknown field {key!r}")
        cfg = cls(**data)
        if cfg.command not in COMMANDS:
            raise ConfigError(f"field 'command': unknown command {cfg.command!r}")
        return cfg

    @classmethod
    def from_yaml(cls, text: str, source: str = "<config>") -> "ExperimentConfig":
        try:
            data = yaml.safe_load(text)
        except yaml.YAMLError as exc:
            mark = getattr(exc, "problem_mark", None)
            where = f"{source}:{mark.line + 1}:{mark.column + 1}" if mark else source
            raise ConfigError(f"{where}: {getattr(exc, 'problem', exc)}") from None
        return cls.from_mapping(data)

    def canonical(self) -> dict:
        d = asdict(self)
        d.pop("out_dir")
        d.pop("threads")  # parallelism does not change results
        d.pop("out")  # an extra copy of a table, not an input
        return d

    def digest(self) -> str:
        blob = json.dumps(self.canonical(), sort_keys=True, default=str).encode()
        return hashlib.sha256(blob).hexdigest()

    @property
    def engine_options(self) -> dict:
        return {"rtol": self.rtol, "krylov_dim": self.krylov_dim}

    @property
    def glauber_params(self) -> dict:
        return {**DEFAULTS["glauber-ising"], **self.params}


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    return str(o)


def _json_safe(o):
    """Non-finite floats become strings so the output stays strict JSON."""
    if isinstance(o, dict):
        return {str(k): _json_safe(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_json_safe(v) for v in o]
    if isinstance(o, (np.generic,)):
        o = o.item()
    if isinstance(o, float) and not math.isfinite(o):
        return "inf" if o > 0 else ("-inf" if o < 0 else "nan")
    return o


class ResultStore:
    """Run directory keyed by the config hash."""

    def __init__(self, root: str | Path, config: ExperimentConfig):
        self.config = config
        self.config_hash = config.digest()
        self.path = Path(root) / f"{config.command}-{self.config_hash[:12]}"
        self.path.mkdir(parents=True, exist_ok=True)
        self.files: dict[str, str] = {}
        self._handler = logging.FileHandler(self.path / "run.log", mode="w")
        self._handler.setFormatter(logging.Formatter("%(asctime)s %(levelname)s %(name)s: %(message)s"))
        log.addHandler(self._handler)
        self._write_text("config.yaml", yaml.safe_dump(config.canonical(), sort_keys=True))

    def _write_text(self, name: str, text: str):
        data = text.encode()
        (self.path / name).write_bytes(data)
        self.files[name] = hashlib.sha256(data).hexdigest()

    def write_csv(self, name: str, header, rows):
        buf = io.StringIO()
        w = csv.writer(buf)  # RFC 4180: CRLF line ends, minimal quoting
        w.writerow(header)
        for r in rows:
            w.writerow([repr(float(x)) if isinstance(x, (float, np.floating)) else x for x in r])
        self._write_text(name, buf.getvalue())

    def write_json(self, name: str, obj):
        payload = {"schema_version": SCHEMA_VERSION, "config_hash": self.config_hash, **obj}
        self._write_text(name, json.dumps(_json_safe(payload), indent=2, sort_keys=True, default=_json_default) + "\n")

    def close(self):
        manifest = {
            "schema_version": SCHEMA_VERSION,
            "config_hash": self.config_hash,
            "files": dict(sorted(self.files.items())),
        }
        (self.path / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
        log.removeHandler(self._handler)
        self._handler.close()


def load_schemas() -> dict:
    return json.loads(resources.files("lindstab").joinpath("schemas.json").read_text())


# ---------------------------------------------------------------------------
# validation


def validate(cfg: ExperimentConfig) -> list[str]:
    """Static checks; returns human-readable diagnostics (empty when valid)."""
    out = []
    try:
        sizes = parse_sizes(cfg.sizes)
    except ValueError:
        return [f"sizes: cannot parse {cfg.sizes!r}"]
    try:
        eps = parse_floats(cfg.eps)
    except ValueError:
        return [f"eps: cannot parse {cfg.eps!r}"]
    if any(e < 0 for e in eps):
        out.append("epsilon must be >= 0")
    try:
        times = parse_times(cfg.times)
        if times.size == 0:
            out.append("time grid is empty")
        elif np.any(times < 0) or np.any(np.diff(times) < 0):
            out.append("time grid must be non-negative and sorted")
    except ValueError:
        out.append(f"times: cannot parse {cfg.times!r}")
    if cfg.dimension < 1:
        out.append("dimension must be >= 1")
        return out
    if cfg.command == "counterexample":
        if any(N < 1 for N in sizes):
            out.append("counterexample sizes must be >= 1")
        if any(e > 1 for e in eps):
            out.append("epsilon must be <= 1 for the counterexample")
        return out
    single = cfg.command in ("evolve", "lr", "envelope")
    all_sizes = sorted(set([cfg.size] if single else sizes))
    if any(L < 2 for L in all_sizes):
        out.append("linear sizes must be >= 2")
    if cfg.command == "glauber":
        if any(L < 3 for L in all_sizes):
            out.append("glauber lattices need linear size >= 3")
        if cfg.mode not in ("exact", "kmc", "embedded"):
            out.append(f"unknown glauber mode {cfg.mode!r}")
        if cfg.mode == "kmc" and cfg.chains < 100:
            out.append("kmc needs at least 100 chains")
        return out
    for L in all_sizes:
        n = L**cfg.dimension
        if 4**n > DEFAULT_DIMENSION_CAP:
            out.append(f"L={L}, D={cfg.dimension}: superoperator dimension 4^{n} exceeds cap 4^12")
        elif cfg.solver == "dense" and 4**n > DENSE_SOLVER_CAP:
            out.append(f"L={L}, D={cfg.dimension}: dense solver limited to dimension 4^5, got 4^{n}")
    if cfg.solver not in ("krylov", "dense"):
        out.append(f"unknown solver {cfg.solver!r}")
    if cfg.model not in PRESETS and not Path(cfg.model).exists():
        out.append(f"model {cfg.model!r} is neither a preset nor a file")
        return out
    if cfg.command == "mixing" and len(sizes) < 3:
        out.append("mixing fits need three or more sizes")
    if cfg.command == "stability" and cfg.audit and len(sizes) < 3:
        out.append("the bound audit fits mixing rates and needs three or more sizes")
    try:
        model = _model(cfg, max(2, min(all_sizes)))
        parse_observable(cfg.observable, model.lattice)
        if cfg.command == "stability":
            p = make_perturbation(cfg.perturbation, model, 1.0, cfg.params.get("gamma"))
            term = p.local_term()
            if not is_unital(term.data, atol=1e-12):
                out.append(f"perturbation {cfg.perturbation!r} does not annihilate the identity")
    except (KeyError, ValueError) as exc:
        out.append(str(exc).strip("'\""))
    return out


# ---------------------------------------------------------------------------
# pipelines


def _model(cfg: ExperimentConfig, L: int):
    if cfg.model in PRESETS:
        return make_model(cfg.model, cfg.dimension, L, **cfg.params)
    return load_model(cfg.model, cfg.dimension, L)


def _observable(cfg):
    return lambda lattice: parse_observable(cfg.observable, lattice)


_PROBE_STATES = {"0": (np.eye(2) + SZ) / 2, "1": (np.eye(2) - SZ) / 2,
                 "+": (np.eye(2) + SX) / 2, "-": (np.eye(2) - SX) / 2}


def probe_state(label: str, n: int) -> np.ndarray:
    """Product state from a string over 0, 1, +, -; one character is repeated on every site."""
    if len(label) == 1:
        label = label * n
    if len(label) != n or any(c not in _PROBE_STATES for c in label):
        raise ValueError(f"probe state {label!r}: need one of 0, 1, +, - per site ({n} sites)")
    rho = np.ones((1, 1))
    for c in label:
        rho = np.kron(rho, _PROBE_STATES[c])
    return rho


def _lindblad_record(data) -> dict:
    """Raw local Lindblad data as nested [re, im] pairs."""

    def mat(M):
        return [[[float(z.real), float(z.imag)] for z in row] for row in np.asarray(M)]

    return {"hamiltonian": mat(data.hamiltonian), "jumps": [mat(K) for K in data.jumps],
            "weights": list(data.weights)}


def cached_fixed_point(cfg, model, L: int) -> FixedPoint:
    """Fixed point stored under ``<out-dir>/cache`` in the binary operator format.

    The key covers everything that defines the generator; a cached state is
    re-checked against the generator before use.
    """
    source = cfg.model if cfg.model in PRESETS else Path(cfg.model).read_text()
    key = json.dumps({"model": source, "params": cfg.params, "dimension": cfg.dimension, "L": L},
                     sort_keys=True, default=str)
    path = Path(cfg.out_dir) / "cache" / f"fixed_point-{hashlib.sha256(key.encode()).hexdigest()[:16]}.op"
    if path.exists():
        rho = load_operator(path)
        G = model.generator()
        residual = float(np.linalg.norm(G.conj().T @ vectorize(rho)) / max(abs(G).max(), 1.0))
        if residual <= 1e-10:
            log.info("fixed point loaded from %s", path)
            return FixedPoint(rho, residual, 1, "cached")
        log.warning("cached fixed point %s fails the residual check; recomputing", path)
    fp = fixed_point(model)
    path.parent.mkdir(parents=True, exist_ok=True)
    save_operator(path, fp.rho)
    return fp


def run_evolve(cfg, store):
    model = _model(cfg, cfg.size)
    A = parse_observable(cfg.observable, model.lattice).embed(model.n_sites)
    times = parse_times(cfg.times)
    labels = [str(p) for p in ([] if cfg.probes is None else
                               cfg.probes if isinstance(cfg.probes, list) else str(cfg.probes).split(","))]
    probes = [probe_state(lbl, model.n_sites) for lbl in labels]
    fp = cached_fixed_point(cfg, model, cfg.size)
    Ainf = infinite_time_limit(A, fp)
    traj = EvolutionEngine(model, **cfg.engine_options).evolve_grid(A, times)
    d = A.shape[0]
    rows = [
        (cfg.size, t, operator_norm(B), operator_norm(B - Ainf), float(np.trace(B).real / d),
         float(np.real(fp.expectation(B))), *(float(np.trace(B @ rho).real) for rho in probes))
        for t, B in zip(times, traj)
    ]
    header = ["L", "t", "norm", "dev_from_limit", "normalized_trace", "steady_expectation"]
    header += [f"probe_{lbl}" for lbl in labels]
    store.write_csv("evolve.csv", header, rows)
    if cfg.out:
        Path(cfg.out).write_bytes((store.path / "evolve.csv").read_bytes())
    return {"verdict": "ok", "fixed_point": {"residual": fp.residual, "certification": fp.certification}}, EXIT_OK


def run_mixing(cfg, store):
    sizes = parse_sizes(cfg.sizes)
    times = parse_times(cfg.times)
    proto = _model(cfg, sizes[0])
    curves = dg.convergence_curve(_observable(cfg), proto, sizes, times, cfg.engine_options)
    store.write_csv("mixing.csv", ["L", "t", "dev"],
                    ((L, t, v) for L in sizes for t, v in zip(times, curves[L])))
    fit = dg.fit_rapid_mixing(times, curves)
    code = EXIT_OK if fit.verdict == dg.RAPIDLY_MIXING else EXIT_HYPOTHESIS
    gaps = {}
    for L in sizes:
        if 4 ** (L**cfg.dimension) <= DENSE_SOLVER_CAP:
            gaps[str(L)] = dg.spectral_gap(proto, L)
    return {"verdict": fit.verdict, "fit": fit.to_dict(), "spectral_gap": gaps}, code


def _lr(cfg, model, default_times=None):
    spec = cfg.lr_times or default_times or cfg.times
    times = parse_times(spec)
    dist = parse_sizes(cfg.distances) if cfg.distances is not None else None
    table = dg.lr_probe(_observable(cfg), model, times, dist, engine_options=cfg.engine_options)
    return table, dg.fit_lr(table)


def run_lr(cfg, store):
    model = _model(cfg, cfg.size)
    table, fit = _lr(cfg, model)
    rows = ((t, int(d), site, v) for i, t in enumerate(table.times)
            for d, site, v in zip(table.distances, table.probe_sites, table.values[i]))
    store.write_csv("lr.csv", ["t", "d", "probe_site", "value"], rows)
    return {"verdict": fit.verdict, "fit": fit.to_dict(), "probe_cb_norm": table.probe_cb_norm}, EXIT_OK


def run_envelope(cfg, store):
    model = _model(cfg, cfg.size)
    times = parse_times(cfg.times)
    lr = None
    if cfg.slopes is None:
        _, lr = _lr(cfg, model)
        slopes = dg.default_slopes(lr)
    else:
        slopes = tuple(parse_floats(cfg.slopes))
    A = parse_observable(cfg.observable, model.lattice)
    X = dg.support_region(A, model.lattice)
    radius = cfg.max_radius or dg.max_unsaturated_radius(model, X)
    horizon = dg.schedule_horizon(slopes, radius)
    if times[-1] > horizon:
        log.warning("time grid truncated at %.4g: schedules need radius > %d beyond it", horizon, radius)
        times = times[times <= horizon]
    env = dg.decay_envelope(A, model, times, slopes=slopes, max_radius=radius,
                            engine_options=cfg.engine_options)
    store.write_csv("envelope.csv", ["t", "delta", "radius"], zip(env.times, env.values, env.radius))
    rows = ((s, t, env.localization[s][i], env.mixing[s][i])
            for s in sorted(env.localization) for i, t in enumerate(env.times))
    store.write_csv("envelope_components.csv", ["s", "t", "localization", "mixing"], rows)
    summary = {"verdict": "ok", "envelope": env.to_dict(),
               "dropped_straddling_terms": {str(r): model.restrict(r, X).dropped_terms for r in range(1, radius + 1)}}
    if lr is not None:
        summary["lr_fit"] = lr.to_dict()
    return summary, EXIT_OK


def run_stability(cfg, store):
    sizes = parse_sizes(cfg.sizes)
    times = parse_times(cfg.times)
    proto = _model(cfg, sizes[0])
    pert = make_perturbation(cfg.perturbation, proto, 1.0, cfg.params.get("gamma"))
    report = st.stability_sweep(
        _observable(cfg), proto, pert, sizes, parse_floats(cfg.eps), times,
        cfg.engine_options, workers=cfg.threads, flatness_tol=cfg.tolerance,
    )
    store.write_csv("stability.csv", ["L", "eps", "t", "dev"], report.rows())
    A0 = parse_observable(cfg.observable, proto.lattice)
    X0 = dg.support_region(A0, proto.lattice)
    summary = {"verdict": "theorem_consistent" if report.theorem_consistent else "theorem_inconsistent",
               **report.to_dict(),
               "observable_support": {"sites": len(X0), "diameter": region_diameter(X0)},
               "perturbation_data": {"name": cfg.perturbation, "cb_norm_bound": pert.cb_norm_bound(),
                                     "local": (_lindblad_record(pert.local_term().data)
                                               if pert.physicality_checked else None)},
               "model_cb_norm_bound": proto.cb_norm_bound()}
    if cfg.audit:
        curves = dg.convergence_curve(_observable(cfg), proto, sizes, times, cfg.engine_options)
        mix = dg.fit_rapid_mixing(times, curves)
        big = _model(cfg, max(sizes))
        _, lr = _lr(cfg, big, AUDIT_LR_TIMES)
        A = parse_observable(cfg.observable, big.lattice)
        X = dg.support_region(A, big.lattice)
        radius = cfg.max_radius or dg.max_unsaturated_radius(big, X)
        slopes = dg.default_slopes(lr)
        env_times = times[times <= dg.schedule_horizon(slopes, radius)]
        env = dg.decay_envelope(A, big, env_times, slopes=slopes, max_radius=radius,
                                engine_options=cfg.engine_options)
        audit = st.bound_audit(report, mix, lr, env)
        summary["audit"] = audit.to_dict()
        store.write_csv("audit.csv", ["L", "eps", "bound", "measured", "passes"],
                        ((r.L, r.eps, r.bound, r.measured, r.passes) for r in audit.rows))
    store.write_json(cfg.report, summary)
    return summary, EXIT_OK if report.theorem_consistent else EXIT_HYPOTHESIS


def run_glauber(cfg, store):
    p = cfg.glauber_params
    sizes = parse_sizes(cfg.sizes)
    times = parse_times(cfg.times)
    eps = max(parse_floats(cfg.eps))
    proto = gl.GlauberModel(Lattice(cfg.dimension, sizes[0]), p["beta"], p["J"], p["h"], p["rule"])
    if cfg.mode == "exact":
        res = gl.glauber_stability(proto, eps, sizes, times, cfg.kind)
        store.write_csv("glauber_exact.csv", ["L", "eps", "t", "m", "m_perturbed", "dev"], res.rows())
        flat = res.flatness <= cfg.tolerance
        summary = {"verdict": "stable" if flat else "size_dependent", "sup_dev": res.sup_dev,
                   "flatness": res.flatness, "detailed_balance": res.detailed_balance}
        return summary, EXIT_OK if flat else EXIT_HYPOTHESIS
    if cfg.mode == "kmc":
        L = max(sizes)
        model = proto.with_lattice(Lattice(cfg.dimension, L))
        base = gl.kmc_simulate(model, times, cfg.chains, cfg.seed)
        diff, se = gl.kmc_deviation(model, eps, times, cfg.chains, cfg.seed, cfg.kind)
        store.write_csv("glauber_kmc.csv", ["L", "t", "m", "m_stderr", "dev", "dev_stderr"],
                        zip([L] * times.size, times, base.mean, base.stderr, diff, se))
        return {"verdict": "ok", "L": L, "chains": cfg.chains, "seed": cfg.seed}, EXIT_OK
    # embedded: quantum steady state against the Gibbs weights
    rows, worst = [], 0.0
    for L in sizes:
        model = proto.with_lattice(Lattice(cfg.dimension, L))
        fp = fixed_point(gl.embed_glauber(model))
        gibbs = gl.gibbs_distribution(model)
        err = float(np.abs(np.diag(fp.rho).real - gibbs).max())
        worst = max(worst, err)
        rows.append((L, err, fp.residual))
    store.write_csv("glauber_embedded.csv", ["L", "max_gibbs_error", "residual"], rows)
    return {"verdict": "ok", "max_gibbs_error": worst}, EXIT_OK


def run_counterexample(cfg, store):
    eps = parse_floats(cfg.eps)
    sizes = parse_sizes(cfg.sizes)
    rows, out = [], {}
    for e in eps:
        rep = st.counterexample_degenerate(e, sizes)
        rows.extend(rep.rows())
        out[str(e)] = rep.to_dict()
    store.write_csv("counterexample.csv",
                    ["N", "eps", "global_trace_distance", "global_fidelity", "local_deviation", "numeric"], rows)
    return {"verdict": "ok", "reports": out}, EXIT_OK


PIPELINES = {
    "evolve": run_evolve,
    "mixing": run_mixing,
    "lr": run_lr,
    "envelope": run_envelope,
    "stability": run_stability,
    "glauber": run_glauber,
    "counterexample": run_counterexample,
}


def run(cfg: ExperimentConfig) -> tuple[int, Path | None]:
    """Execute one pipeline; returns the exit code and the run directory."""
    problems = validate(cfg)
    if problems:
        for p in problems:
            log.error("config: %s", p)
        return EXIT_ERROR, None
    store = ResultStore(cfg.out_dir, cfg)
    try:
        log.info("running %s (config %s)", cfg.command, store.config_hash[:12])
        summary, code = PIPELINES[cfg.command](cfg, store)
    except DegenerateFixedPoint as exc:
        log.warning("hypothesis failure: %s", exc)
        summary, code = {"verdict": "DegenerateFixedPoint", "kernel_dim": exc.kernel_dim, "message": str(exc)}, EXIT_HYPOTHESIS
        if cfg.command == "stability":
            store.write_json(cfg.report, summary)
    except (DimensionCapExceeded, dg.ScheduleExhausted, ValueError) as exc:
        log.error("%s: %s", type(exc).__name__, exc)
        summary, code = {"verdict": "error", "error": type(exc).__name__, "message": str(exc)}, EXIT_ERROR
    summary["exit_code"] = code
    store.write_json("summary.json", summary)
    store.close()
    return code, store.path


# ---------------------------------------------------------------------------
# argument parsing


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML config; command-line flags override its fields")
    common.add_argument("--threads", type=int, help="worker threads for independent sweep cells")
    common.add_argument("--seed", type=int, help="master seed for Monte Carlo")
    common.add_argument("--out-dir", dest="out_dir", help="root directory for run outputs")
    common.add_argument("--tolerance", type=float, help="flatness tolerance for size independence")
    common.add_argument("--model", help=f"preset ({', '.join(PRESETS)}) or YAML model file")
    common.add_argument("--dimension", type=int)
    common.add_argument("--size", type=int, help="linear size for single-lattice commands")
    common.add_argument("--sizes", help="e.g. 3..7 or 4,6,8")
    common.add_argument("--eps", help="comma-separated perturbation strengths")
    common.add_argument("--times", help="start:stop:count or comma-separated list")
    common.add_argument("--observable", help="e.g. Z0, Z0*Z3, corr")
    common.add_argument("--param", action="append", default=[], metavar="KEY=VALUE",
                        help="model parameter override, repeatable")
    common.add_argument("--rtol", type=float)
    common.add_argument("--krylov-dim", dest="krylov_dim", type=int)
    common.add_argument("--solver", choices=("krylov", "dense"))

    p = argparse.ArgumentParser(prog="lindstab", description="Stability experiments for local Lindbladians")
    sub = p.add_subparsers(dest="command", required=True)
    ev = sub.add_parser("evolve", parents=[common], help="evolve an observable")
    ev.add_argument("--probes", help="comma-separated product states over 0,1,+,- for tr(A(t) rho0) columns")
    ev.add_argument("--out", dest="out", help="also copy evolve.csv to this path")
    sub.add_parser("mixing", parents=[common], help="convergence curves and rapid-mixing fit")
    lr = sub.add_parser("lr", parents=[common], help="Lieb-Robinson probes and fit")
    lr.add_argument("--lr-times", dest="lr_times", help="time grid for the Lieb-Robinson fit")
    lr.add_argument("--distances")
    env = sub.add_parser("envelope", parents=[common], help="size-independent decay envelope")
    env.add_argument("--lr-times", dest="lr_times", help="time grid for the Lieb-Robinson fit")
    env.add_argument("--distances")
    env.add_argument("--max-radius", dest="max_radius", type=int)
    env.add_argument("--slopes")
    stab = sub.add_parser("stability", parents=[common], help="perturbation sweep")
    stab.add_argument("--perturbation", help=", ".join(PERTURBATIONS))
    stab.add_argument("--out", dest="report", help="report file name inside the run directory")
    stab.add_argument("--audit", action="store_true", default=None, help="also assemble the bound audit")
    stab.add_argument("--lr-times", dest="lr_times", help="time grid for the audit's Lieb-Robinson fit")
    g = sub.add_parser("glauber", parents=[common], help="classical Glauber dynamics")
    g.add_argument("--beta", type=float)
    g.add_argument("--J", type=float)
    g.add_argument("--h", type=float)
    g.add_argument("--rule", choices=("heat-bath", "metropolis"))
    g.add_argument("--mode", choices=("exact", "kmc", "embedded"))
    g.add_argument("--kind", choices=("asymmetric", "uniform"))
    g.add_argument("--chains", type=int)
    sub.add_parser("counterexample", parents=[common], help="degenerate steady-state contrast")
    pre = sub.add_parser("preset", help="list or dump presets")
    pre.add_argument("action", choices=("dump", "list"))
    pre.add_argument("name", nargs="?")
    val = sub.add_parser("validate", help="static config checks")
    val.add_argument("config_file")
    return p


def _parse_value(text: str):
    try:
        return yaml.safe_load(text)
    except yaml.YAMLError:
        return text


def config_from_args(args) -> ExperimentConfig:
    data = {}
    if args.config:
        text = Path(args.config).read_text()
        data = yaml.safe_load(text) if text.strip() else None
        if not data:
            raise ConfigError(f"{args.config}: config is empty")
        ExperimentConfig.from_yaml(text, args.config)  # line-aware diagnostics
    data = dict(data)
    data["command"] = args.command
    params = dict(data.get("params") or {})
    for item in args.param:
        if "=" not in item:
            raise ConfigError(f"--param expects KEY=VALUE, got {item!r}")
        k, v = item.split("=", 1)
        params[k] = _parse_value(v)
    for key in ("beta", "J", "h", "rule"):
        if getattr(args, key, None) is not None:
            params[key] = getattr(args, key)
    if params:
        data["params"] = params
    if args.command == "glauber":
        data.setdefault("model", "glauber-ising")
    skip = {"command", "config", "param", "beta", "J", "h", "rule"}
    for key, value in vars(args).items():
        if key in skip or value is None:
            continue
        data[key] = value
    return ExperimentConfig.from_mapping(data)


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    if not log.handlers:
        h = logging.StreamHandler(sys.stderr)
        h.setFormatter(logging.Formatter("%(levelname)s: %(message)s"))
        log.addHandler(h)
        log.setLevel(logging.INFO)
    if args.command == "preset":
        if args.action == "list":
            print("\n".join(PRESETS))
            return EXIT_OK
        if args.name not in DEFAULTS:
            log.error("unknown preset %r; choose from %s", args.name, ", ".join(PRESETS))
            return EXIT_ERROR
        sys.stdout.write(dump_preset(args.name))
        return EXIT_OK
    if args.command == "validate":
        try:
            cfg = ExperimentConfig.from_yaml(Path(args.config_file).read_text(), args.config_file)
        except (ConfigError, OSError, TypeError) as exc:
            print(f"error: {exc}")
            return EXIT_ERROR
        problems = validate(cfg)
        for p in problems:
            print(p)
        return EXIT_ERROR if problems else EXIT_OK
    try:
        cfg = config_from_args(args)
    except (ConfigError, OSError, TypeError) as exc:
        log.error("%s", exc)
        return EXIT_ERROR
    code, path = run(cfg)
    if path is not None:
        print(path)
    return code


if __name__ == "__main__":
    sys.exit(main())
