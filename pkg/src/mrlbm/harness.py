"""Experiment runner: reference vs adaptive runs, error metrics, tables.

A run fixes a problem, a finest level L_max (which dictates dt), a working
level L_min and a stream/collision pair.  Most runs keep the mesh uniform at
L_min (the worst case for the analysis); the mesh-adaptation demo switches
the hybrid-mesh machinery on.  Four normalized l1 numbers are monitored:
E_ref, E_adap at both levels, and D_adap against the reference scheme.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import collision as coll
from .adaptation import AdaptParams, adapt_mesh
from .mesh import Field, cell_center, cell_dx, dump_field, uniform_mesh
from .multires import PredictionOperator, ReconstructionCache, derive_prediction_weights
from .problems import ProblemSpec, get_problem
from .schemes import SchemeSpec, UniformState, collide, from_moments, reference_step
from .transport import adaptive_stream, flattened_stream, stencil_for

__all__ = [
    "ExperimentConfig",
    "ErrorReport",
    "norm_l1",
    "order_estimate",
    "run_experiment",
    "reproduce_table",
    "table_to_csv",
    "parse_config",
    "TABLE_IDS",
]

SCHEME_GAMMA = {"haar": 0, "gamma1": 1, "lw": 1}
CSV_HEADER = ("test,scheme,collision,gamma,L_max,L_min,"
              "E_ref,E_adap_min,E_adap_max,D_adap,rate_ref,rate_D")


@dataclass(frozen=True)
class ExperimentConfig:
    test: str = "2"
    stream: str = "gamma1"           # haar | gamma1 | lw
    collision: str = "lc"            # lc | rc | pqc
    l_max: int = 11
    l_min: int = 11
    s: float = 2.0                   # test-1 relaxation rate
    policy: str = "copy"
    init: str = "project"            # project | sample
    adapt: bool = False
    epsilon: float = 1e-4
    mu_bar: int = 2
    dump_every: int = 0
    dump_path: str = "frames"

    @property
    def gamma(self) -> int:
        return SCHEME_GAMMA[self.stream]

    @property
    def dl_min(self) -> int:
        return self.l_max - self.l_min

    def validate(self):
        if self.l_min > self.l_max:
            raise ValueError("need L_min <= L_max")
        if self.stream not in SCHEME_GAMMA:
            raise ValueError(f"unknown stream scheme {self.stream!r}")
        if self.collision not in ("lc", "rc", "pqc"):
            raise ValueError(f"unknown collision {self.collision!r}")
        if self.adapt and self.stream == "lw":
            raise ValueError("mesh adaptation drives the multiresolution stream only")


@dataclass
class ErrorReport:
    e_ref: float
    e_adap_min: float
    e_adap_max: float
    d_adap: float
    steps: int
    t_final: float
    mesh: object = None
    field: object = None

    def row(self) -> tuple:
        return (self.e_ref, self.e_adap_min, self.e_adap_max, self.d_adap)


def norm_l1(u, v) -> float:
    """sum |u - v| / sum |v|; v is the reference or exact solution."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    denom = float(np.abs(v).sum())
    if denom == 0.0:
        raise ZeroDivisionError("normalized l1 norm undefined for zero reference")
    return float(np.abs(u - v).sum()) / denom


def order_estimate(values) -> list:
    """log2 slopes between consecutive refinements; None where undefined."""
    out = []
    for prev, cur in zip(values, values[1:]):
        if prev is None or cur is None or prev <= 0 or cur <= 0:
            out.append(None)
        else:
            out.append(math.log2(prev / cur))
    return out


# --- grids and sampling ------------------------------------------------------

def level_centers(problem: ProblemSpec, level: int):
    dom = problem.domain
    dx = cell_dx(level, dom)
    axes = [lo + dxa * (np.arange(n) + 0.5)
            for lo, dxa, n in zip(dom.lo, dx, dom.n_cells(level))]
    if problem.d == 1:
        return axes[0]
    return np.meshgrid(*axes, indexing="ij")


def sample_exact(problem: ProblemSpec, t: float, level: int) -> np.ndarray:
    return np.asarray(problem.exact(t, level_centers(problem, level)), dtype=float)


def equilibrium_init(spec: SchemeSpec, u: np.ndarray) -> np.ndarray:
    return from_moments(np.asarray(spec.eq(u[None, ...])), spec)


def project_blocks(values: np.ndarray, dl: int) -> np.ndarray:
    """Block mean over 2^dl cells per axis; the leading q axis is untouched."""
    out = values
    for _ in range(dl):
        for axis in range(1, out.ndim):
            shape = list(out.shape)
            shape[axis] //= 2
            shape.insert(axis + 1, 2)
            out = out.reshape(shape).mean(axis=axis + 1)
    return out


_PAD_MODE = {"copy": "edge", "periodic": "wrap"}


def refine_once(u: np.ndarray, gamma: int, policy: str = "copy") -> np.ndarray:
    """One prediction cascade stage on a plain array (any dimension)."""
    op = derive_prediction_weights(gamma)
    for axis in range(u.ndim):
        u = _refine_axis(u, axis, op, policy)
    return u


def _refine_axis(u: np.ndarray, axis: int, op: PredictionOperator, policy: str) -> np.ndarray:
    u = np.moveaxis(u, axis, 0)
    n = u.shape[0]
    g = op.gamma
    if g == 0:
        out = np.repeat(u, 2, axis=0)
        return np.moveaxis(out, 0, axis)
    pad = np.pad(u, [(g, g)] + [(0, 0)] * (u.ndim - 1), mode=_PAD_MODE[policy])
    q = np.zeros_like(u)
    for pi, w in enumerate(op.w_float, start=1):
        q += w * (pad[g + pi:g + pi + n] - pad[g - pi:g - pi + n])
    out = np.empty((2 * n,) + u.shape[1:], dtype=u.dtype)
    out[0::2] = u + q
    out[1::2] = u - q
    return np.moveaxis(out, 0, axis)


def reconstruct_to(u: np.ndarray, dl: int, gamma: int, policy: str = "copy") -> np.ndarray:
    for _ in range(dl):
        u = refine_once(u, gamma, policy)
    return u


# --- runs ---------------------------------------------------------------------

def _conserved(values: np.ndarray, spec: SchemeSpec) -> np.ndarray:
    return np.tensordot(spec.M[0], values, axes=(0, 0))


def run_reference(problem: ProblemSpec, spec: SchemeSpec, l_max: int, steps: int,
                  policy: str) -> np.ndarray:
    u0 = sample_exact(problem, 0.0, l_max)
    state = UniformState(l_max, equilibrium_init(spec, u0))
    for _ in range(steps):
        state = reference_step(state, spec, policy)
    return state.values


def _collide_uniform(values, cfg: ExperimentConfig, spec: SchemeSpec, dl: int):
    if cfg.collision == "lc" or (cfg.collision == "rc" and dl == 0):
        return collide(values, spec)
    if cfg.collision == "rc":
        return coll.collide_rc_uniform(values, spec, cfg.gamma, dl, cfg.policy)
    return coll.collide_pqc_uniform(values, spec, cfg.gamma, policy=cfg.policy)


def run_adaptive_uniform(problem: ProblemSpec, spec: SchemeSpec, cfg: ExperimentConfig,
                         steps: int, f_init: np.ndarray) -> np.ndarray:
    dl = cfg.dl_min
    stencils = [stencil_for(cfg.stream, c if problem.d > 1 else c[0], dl)
                for c in spec.velocities.c]
    values = f_init
    for _ in range(steps):
        values = _collide_uniform(values, cfg, spec, dl)
        values = flattened_stream(values, stencils, dl, cfg.policy)
    return values


def run_adaptive_mr(problem: ProblemSpec, spec: SchemeSpec, cfg: ExperimentConfig,
                    steps: int):
    """Hybrid-mesh run with per-step multiresolution adaptation (LC collision)."""
    op = derive_prediction_weights(cfg.gamma)
    params = AdaptParams(cfg.epsilon, cfg.mu_bar, cfg.l_min, cfg.l_max)
    mesh = uniform_mesh(cfg.l_max, cfg.l_min, cfg.l_max, problem.domain)
    field = Field(mesh, spec.q)
    for leaf in mesh.iter_leaves():
        center = cell_center(leaf, problem.domain)
        x = center[0] if problem.d == 1 else center
        u = np.atleast_1d(np.asarray(problem.exact(0.0, x), dtype=float))
        field.data[leaf] = from_moments(np.asarray(spec.eq(u)).ravel(), spec)
    dump_idx = 0
    for step in range(steps):
        mesh, field = adapt_mesh(mesh, field, params, op, cfg.policy)
        field = coll.collide_lc(mesh, field, spec)
        field = adaptive_stream(mesh, field, spec.velocities.c, op, cfg.policy)
        if cfg.dump_every and step % cfg.dump_every == 0:
            os.makedirs(cfg.dump_path, exist_ok=True)
            with open(os.path.join(cfg.dump_path, f"frame_{dump_idx:05d}.txt"), "w") as fh:
                dump_field(field, fh)
            dump_idx += 1
    return mesh, field


def mr_field_to_fine(mesh, field, spec: SchemeSpec, gamma: int, l_max: int,
                     policy: str) -> np.ndarray:
    """Conserved moment of a hybrid-mesh field reconstructed at the finest level."""
    op = derive_prediction_weights(gamma)
    cache = ReconstructionCache(mesh, field, op, policy)
    ns = mesh.domain.n_cells(l_max)
    if mesh.domain.d == 1:
        vals = np.empty(ns[0])
        for k in range(ns[0]):
            vals[k] = spec.M[0] @ cache.value(l_max, (k,))
        return vals
    vals = np.empty(ns)
    for kx in range(ns[0]):
        for ky in range(ns[1]):
            vals[kx, ky] = spec.M[0] @ cache.value(l_max, (kx, ky))
    return vals


def run_experiment(cfg: ExperimentConfig) -> ErrorReport:
    """Reference at L_max plus the configured adaptive run; all four metrics."""
    cfg.validate()
    problem = get_problem(cfg.test, s=cfg.s)
    dom = problem.domain
    dxs = cell_dx(cfg.l_max, dom)
    if max(dxs) - min(dxs) > 1e-14 * max(dxs):
        raise ValueError("anisotropic cells: domain must refine to equal dx per axis")
    dx = dxs[0]
    spec = problem.build_scheme(dx)
    dt = dx / spec.lam
    steps = round(problem.final_time / dt)
    t_final = steps * dt

    f_ref = run_reference(problem, spec, cfg.l_max, steps, cfg.policy)
    u_ref = _conserved(f_ref, spec)
    exact_fine = sample_exact(problem, t_final, cfg.l_max)
    e_ref = norm_l1(u_ref, exact_fine)
    if not np.all(np.isfinite(u_ref)):
        raise FloatingPointError("reference run diverged")

    if cfg.adapt:
        mesh, field = run_adaptive_mr(problem, spec, cfg, steps)
        u_fine = mr_field_to_fine(mesh, field, spec, cfg.gamma, cfg.l_max, cfg.policy)
        e_min = float("nan")  # mixed-level field; coarse-level norm not defined
        e_max = norm_l1(u_fine, exact_fine)
        d_adap = norm_l1(u_fine, u_ref)
        rep = ErrorReport(e_ref, e_min, e_max, d_adap, steps, t_final)
        rep.mesh, rep.field = mesh, field
        return rep

    if cfg.init == "project":
        u0 = sample_exact(problem, 0.0, cfg.l_max)
        f0 = project_blocks(equilibrium_init(spec, u0), cfg.dl_min)
    elif cfg.init == "sample":
        f0 = equilibrium_init(spec, sample_exact(problem, 0.0, cfg.l_min))
    else:
        raise ValueError(f"unknown init mode {cfg.init!r}")
    f_adap = run_adaptive_uniform(problem, spec, cfg, steps, f0)
    u_adap = _conserved(f_adap, spec)
    if not np.all(np.isfinite(u_adap)):
        raise FloatingPointError(f"adaptive run diverged ({cfg.stream}, dl={cfg.dl_min})")
    u_recon = reconstruct_to(u_adap, cfg.dl_min, cfg.gamma, cfg.policy)

    e_min = norm_l1(u_adap, sample_exact(problem, t_final, cfg.l_min))
    e_max = norm_l1(u_recon, exact_fine)
    d_adap = norm_l1(u_recon, u_ref)
    return ErrorReport(e_ref, e_min, e_max, d_adap, steps, t_final)


# --- table reproduction --------------------------------------------------------

TABLE_IDS = ("T1a", "T1b", "T1c", "T1d", "T2", "T3a", "T3b", "T4",
             "T-coll-a", "T-coll-b")


def _table_grid(table_id: str, scale_down: bool):
    if table_id.startswith("T1"):
        s = 1.0 if table_id in ("T1a", "T1c") else 2.0
        dl = 2 if table_id in ("T1a", "T1b") else 6
        lmaxes = range(dl + 1, 13) if not scale_down else range(dl + 1, 11)
        return [ExperimentConfig(test="1", stream=scheme, s=s,
                                 l_max=lm, l_min=lm - dl)
                for scheme in ("haar", "gamma1", "lw") for lm in lmaxes]
    if table_id == "T2":
        return [ExperimentConfig(test="2", stream=scheme, l_max=11, l_min=11 - dl)
                for scheme in ("haar", "gamma1", "lw") for dl in range(8)]
    if table_id in ("T3a", "T3b"):
        test = "3a" if table_id == "T3a" else "3b"
        return [ExperimentConfig(test=test, stream=scheme, l_max=11, l_min=11 - dl)
                for scheme in ("haar", "gamma1", "lw") for dl in range(8)]
    if table_id == "T4":
        lm = 7 if scale_down else 9
        dls = range(5) if scale_down else range(7)
        return [ExperimentConfig(test="4", stream=scheme, l_max=lm, l_min=lm - dl)
                for scheme in ("haar", "gamma1", "lw") for dl in dls]
    if table_id in ("T-coll-a", "T-coll-b"):
        test = "3a" if table_id.endswith("a") else "3b"
        return [ExperimentConfig(test=test, stream="gamma1", collision=c,
                                 l_max=11, l_min=11 - dl)
                for c in ("lc", "rc", "pqc") for dl in range(8)]
    raise ValueError(f"unknown table id {table_id!r}; know {TABLE_IDS}")


def reproduce_table(table_id: str, scale_down: bool = False):
    """Run the grid of one published table; returns [(config, report), ...]."""
    grid = _table_grid(table_id, scale_down)
    workers = int(os.environ.get("MRLBM_THREADS", "1"))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            reports = list(pool.map(run_experiment, grid))
    else:
        reports = [run_experiment(cfg) for cfg in grid]
    return list(zip(grid, reports))


def _fmt(x) -> str:
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return ""
    return f"{x:.5e}"


def table_to_csv(rows) -> str:
    """CSV with per-scheme rate columns between consecutive grid rows."""
    lines = [CSV_HEADER]
    prev: dict = {}
    for cfg, rep in rows:
        key = (cfg.test, cfg.stream, cfg.collision, cfg.s)
        rates = (None, None)
        if key in prev:
            rates = (order_estimate([prev[key].e_ref, rep.e_ref])[0],
                     order_estimate([prev[key].d_adap, rep.d_adap])[0])
        prev[key] = rep
        lines.append(",".join([
            cfg.test, cfg.stream, cfg.collision, str(cfg.gamma),
            str(cfg.l_max), str(cfg.l_min),
            _fmt(rep.e_ref), _fmt(rep.e_adap_min), _fmt(rep.e_adap_max),
            _fmt(rep.d_adap),
            "" if rates[0] is None else f"{rates[0]:.2f}",
            "" if rates[1] is None else f"{rates[1]:.2f}",
        ]))
    return "\n".join(lines) + "\n"


# --- config files ---------------------------------------------------------------

_CONFIG_TYPES = {
    "test": str, "stream": str, "collision": str, "l_max": int, "l_min": int,
    "s": float, "policy": str, "init": str, "adapt": lambda v: v.lower() in ("1", "true", "yes"),
    "epsilon": float, "mu_bar": int, "dump_every": int, "dump_path": str,
}


def parse_config(text: str) -> ExperimentConfig:
    """Plain `key = value` lines; # starts a comment."""
    fields = {}
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"bad config line: {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in _CONFIG_TYPES:
            raise ValueError(f"unknown config key {key!r}")
        fields[key] = _CONFIG_TYPES[key](value)
    cfg = ExperimentConfig(**fields)
    cfg.validate()
    return cfg
