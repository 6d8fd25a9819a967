"""End-to-end benchmark runs from declarative configs: problem generation or
matrix ingestion, coarse-space variant sweeps, statistics over random seeds,
and table/CSV emission."""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import coarse_spaces as cs
from . import decomposition as dd
from . import fe_harness as fe
from . import schwarz
from .sparse_core import (
    SparseMatrix,
    StructuralError,
    read_matrix_market,
    write_matrix_market,
)

__all__ = [
    "ExperimentConfig",
    "ResultRow",
    "parse_config",
    "load_config",
    "run",
    "emit",
    "ingest_matrix",
    "export_problem",
    "edge_spectra",
]

GENERATOR_KINDS = ("constant", "channels", "comb", "random_binary", "raster")


@dataclass(frozen=True)
class ExperimentConfig:
    """Declarative description of one experiment sweep."""

    problem: str = "channels"
    n: int = 40
    subdomains_per_side: int = 4
    overlap: int = 1
    alpha_min: float = 1.0
    alpha_max: float = 1.0e6
    p_high: float = 0.2
    seeds: tuple = (0,)
    variants: tuple = ("gdsw", "vcdt-l2")
    omega_e: tuple = ("5h",)
    tol_dir: float = 1.0e-3
    tol_tr: tuple = (1.0e5,)
    tol_o: float = 1.0e-5
    scale_alpha_min: bool = False
    rhs: str = "ones"
    rel_tol: float = 1.0e-10
    max_it: int = 2000
    matrix_path: str = ""
    partition_path: str = ""
    raster_path: str = ""
    raster_threshold: float = None

    def validate(self):
        if self.problem not in GENERATOR_KINDS + ("ingest",):
            raise StructuralError(f"unknown problem kind '{self.problem}'")
        if self.problem == "ingest" and not (self.matrix_path and self.partition_path):
            raise StructuralError("ingest runs need matrix and partition paths")
        if self.problem == "raster" and not self.raster_path:
            raise StructuralError("raster runs need a raster path")
        if min(self.tol_dir, self.tol_o, *self.tol_tr) <= 0:
            raise StructuralError("tolerances must be positive")
        if self.n % self.subdomains_per_side:
            raise StructuralError("subdomains_per_side must divide n")
        return self


@dataclass(frozen=True)
class ResultRow:
    """One table row; multi-seed runs carry (mean, max) statistics."""

    variant: str
    omega_e: str
    tol_tr: float
    dim_post: float
    dim_pre: float
    kappa: float
    iterations: float
    n_seeds: int = 1
    dim_post_max: float = None
    kappa_max: float = None
    iterations_max: float = None
    failed: bool = False
    error: str = ""


# ---------------------------------------------------------------------------
# Config parsing
# ---------------------------------------------------------------------------

_LIST_KEYS = {"seeds", "variants", "omega_e", "tol_tr"}
_FLOAT_KEYS = {"alpha_min", "alpha_max", "p_high", "tol_dir", "tol_o",
               "rel_tol", "raster_threshold"}
_INT_KEYS = {"n", "subdomains_per_side", "overlap", "max_it"}
_BOOL_KEYS = {"scale_alpha_min"}


def parse_config(text: str, overrides: dict = None) -> ExperimentConfig:
    """Parse a flat key/value config (``key = value`` lines, ``#`` comments).

    Lists are comma separated; seeds also accept ``a:b`` ranges
    (inclusive-exclusive).
    """
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" in line:
            key, _, val = line.partition("=")
        else:
            parts = line.split(None, 1)
            if len(parts) != 2:
                raise StructuralError(f"config line {lineno}: expected 'key = value'")
            key, val = parts
        values[key.strip()] = val.strip()
    if overrides:
        values.update({k: v for k, v in overrides.items() if v is not None})
    kwargs = {}
    for key, val in values.items():
        kwargs[key] = _convert(key, val)
    try:
        return ExperimentConfig(**kwargs).validate()
    except TypeError as err:
        raise StructuralError(f"bad config key: {err}") from None


def _convert(key, val):
    if isinstance(val, (tuple, list, int, float, bool)):
        return tuple(val) if isinstance(val, list) else val
    val = val.strip()
    if key == "seeds":
        return _parse_seeds(val)
    if key in _LIST_KEYS:
        items = [v.strip() for v in val.split(",") if v.strip()]
        if key == "tol_tr":
            return tuple(float(v) for v in items)
        return tuple(items)
    if key in _FLOAT_KEYS:
        return float(val)
    if key in _INT_KEYS:
        return int(val)
    if key in _BOOL_KEYS:
        return val.lower() in ("1", "true", "yes", "on")
    return val


def _parse_seeds(val) -> tuple:
    seeds = []
    for tok in str(val).split(","):
        tok = tok.strip()
        if not tok:
            continue
        if ":" in tok:
            a, b = tok.split(":")
            seeds.extend(range(int(a), int(b)))
        else:
            seeds.append(int(tok))
    return tuple(seeds) or (0,)


def load_config(path, overrides: dict = None) -> ExperimentConfig:
    with open(path) as fh:
        return parse_config(fh.read(), overrides)


def parse_omega(token) -> tuple:
    """'2h'/'5h'/... -> ('layers', k); 'H' or 'hull' -> ('hull',)."""
    if isinstance(token, tuple):
        return token
    tok = str(token).strip()
    if tok.lower() in ("h", "hull"):
        return ("hull",)
    if tok.lower().startswith("layers:"):
        return ("layers", int(tok.split(":")[1]))
    if tok.endswith("h"):
        return ("layers", int(tok[:-1]))
    raise StructuralError(f"cannot parse oversampling spec '{token}'")


# ---------------------------------------------------------------------------
# Problem construction
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class _Problem:
    A: SparseMatrix
    rhs: np.ndarray
    partition: dd.Partition
    interface: dd.Interface
    overlapping: dd.OverlappingSets
    mesh: fe.StructuredMesh = None
    alpha: fe.CoefficientField = None


def _build_problem(config: ExperimentConfig, seed: int) -> _Problem:
    if config.problem == "ingest":
        A, partition = ingest_matrix(config.matrix_path, config.partition_path)
        rhs = _ingest_rhs(config, A, seed)
        mesh = alpha = None
    else:
        mesh = fe.StructuredMesh(config.n)
        alpha = _coefficient(config, mesh, seed)
        system = fe.assemble(mesh, alpha, rhs_kind=config.rhs, seed=seed)
        A, rhs = system.A, system.rhs
        partition = dd.structured_partition(config.n, config.subdomains_per_side)
    interface = dd.classify_interface(A, partition)
    overlapping = dd.grow_overlap(A, partition, config.overlap)
    return _Problem(A, rhs, partition, interface, overlapping, mesh, alpha)


def _ingest_rhs(config, A, seed):
    if config.rhs == "random":
        return np.random.default_rng(seed).standard_normal(A.n_rows)
    return np.ones(A.n_rows)


def _coefficient(config, mesh, seed) -> fe.CoefficientField:
    kind = config.problem
    if kind == "constant":
        return fe.make_coefficient("constant", mesh, config.alpha_min)
    if kind == "channels":
        return fe.make_coefficient(
            "channels", mesh, config.alpha_min, config.alpha_max,
            subdomains_per_side=config.subdomains_per_side)
    if kind == "comb":
        return fe.make_coefficient(
            "comb", mesh, config.alpha_min, config.alpha_max,
            subdomains_per_side=config.subdomains_per_side)
    if kind == "random_binary":
        return fe.make_coefficient(
            "random_binary", mesh, config.alpha_min, config.alpha_max,
            p=config.p_high, seed=seed)
    if kind == "raster":
        grid = fe.read_raster(config.raster_path)
        return fe.make_coefficient(
            "raster", mesh, config.alpha_min, config.alpha_max,
            grid=grid, threshold=config.raster_threshold)
    raise StructuralError(f"unknown problem kind '{kind}'")


def _evp_config(config: ExperimentConfig, omega: tuple, tol_tr: float) -> cs.EvpConfig:
    alpha_min = config.alpha_min if config.scale_alpha_min else 1.0
    h = 1.0 / config.n if config.n else 1.0
    return cs.EvpConfig(tol_dir=config.tol_dir, tol_tr=tol_tr, tol_o=config.tol_o,
                        alpha_min=alpha_min, h=h, omega_e=omega)


def _neumann_patches(problem: _Problem, config: ExperimentConfig, variant: str,
                     omega: tuple) -> dict:
    """Element patches for the non-algebraic reference variants."""
    if problem.mesh is None:
        raise StructuralError(
            f"variant '{variant}' needs mesh access; not available on the ingest path")
    patches = {}
    if variant == "agdsw":
        for e in problem.interface.edges:
            elems = fe.elements_of_blocks(
                problem.mesh, config.subdomains_per_side, e.subdomains)
            patches[e.edge_id] = fe.assemble_neumann_local(
                problem.mesh, problem.alpha, elems)
        return patches
    for e in problem.interface.edges:
        od = dd.build_oversampling(problem.A, problem.interface, e.edge_id, omega)
        elems = fe.elements_within_nodes(problem.mesh, od.all_nodes)
        patches[e.edge_id] = fe.assemble_neumann_local(
            problem.mesh, problem.alpha, elems)
    return patches


# ---------------------------------------------------------------------------
# Run and emit
# ---------------------------------------------------------------------------


def _variant_cases(config: ExperimentConfig):
    """Deterministic (variant, omega, tol_tr) combinations in config order."""
    cases = []
    for variant in config.variants:
        v = variant.lower()
        uses_omega = v not in ("gdsw", "agdsw")
        uses_tol = v in ("vct-l2", "vcdt-l2", "vct-a", "vcdt-a")
        omegas = config.omega_e if uses_omega else ("-",)
        tols = config.tol_tr if uses_tol else (None,)
        for omega in omegas:
            for tol in tols:
                cases.append((v, omega, tol))
    return cases


def run(config: ExperimentConfig, progress=None) -> list:
    """Execute the sweep; one ResultRow per (variant, omega, tol_tr)."""
    config.validate()
    cases = _variant_cases(config)
    stats = {case: [] for case in cases}
    errors = {}
    for seed in config.seeds:
        problem = _build_problem(config, seed)
        M_cache = {}
        for case in cases:
            variant, omega_tok, tol = case
            if case in errors:
                continue
            try:
                stats[case].append(
                    _solve_case(problem, config, variant, omega_tok, tol, M_cache))
            except Exception as err:  # noqa: BLE001 - row-level fault isolation
                errors[case] = f"{type(err).__name__}: {err}"
            if progress:
                progress(seed, case)
    rows = []
    for case in cases:
        variant, omega_tok, tol = case
        if case in errors or not stats[case]:
            rows.append(ResultRow(variant, str(omega_tok), tol, np.nan, np.nan,
                                  np.nan, np.nan, len(config.seeds), failed=True,
                                  error=errors.get(case, "no data")))
            continue
        data = np.asarray(stats[case])  # columns: dim_post, dim_pre, kappa, its
        mean = data.mean(axis=0)
        peak = data.max(axis=0)
        many = data.shape[0] > 1
        rows.append(ResultRow(
            variant=variant,
            omega_e=str(omega_tok),
            tol_tr=tol,
            dim_post=float(mean[0]),
            dim_pre=float(mean[1]),
            kappa=float(mean[2]),
            iterations=float(mean[3]),
            n_seeds=data.shape[0],
            dim_post_max=float(peak[0]) if many else None,
            kappa_max=float(peak[2]) if many else None,
            iterations_max=float(peak[3]) if many else None,
        ))
    return rows


def _solve_case(problem, config, variant, omega_tok, tol, M_cache):
    key = (variant, omega_tok, tol)
    if key not in M_cache:
        omega = parse_omega(omega_tok) if omega_tok != "-" else ("layers", 2)
        evp = _evp_config(config, omega, tol if tol is not None else config.tol_tr[0])
        patches = None
        if variant in cs.REFERENCE_VARIANTS:
            patches = _neumann_patches(problem, config, variant, omega)
        coarse = cs.build_coarse_space(problem.A, problem.partition, evp,
                                       variant, interface=problem.interface,
                                       patches=patches)
        M_cache[key] = schwarz.build(problem.A, problem.overlapping, coarse)
    M = M_cache[key]
    _, report = schwarz.pcg(problem.A, problem.rhs, M,
                            rel_tol=config.rel_tol, max_it=config.max_it)
    return (report.coarse_dim_post_pod, report.coarse_dim_pre_pod,
            report.kappa_estimate, report.iterations)


def _fmt_kappa(value) -> str:
    if value is None or (isinstance(value, float) and np.isnan(value)):
        return "-"
    if value >= 1.0e3:
        return f"{value:.1e}"
    return f"{value:.1f}"


def _fmt(value, spec=".1f") -> str:
    if value is None or (isinstance(value, float) and np.isnan(value)):
        return "-"
    if float(value).is_integer() and spec == ".1f":
        return str(int(value))
    return format(value, spec)


def emit(rows, format: str = "csv") -> str:
    """Render result rows as CSV or a pipes-and-dashes markdown table."""
    if not rows:
        raise StructuralError("no rows to emit")
    header = ["variant", "omega_e", "tol_tr", "dim", "kappa", "its"]
    body = []
    for row in rows:
        if row.failed:
            body.append([row.variant, row.omega_e, _fmt_tol(row.tol_tr),
                         "failed", row.error, "-"])
            continue
        dim = f"{_fmt(row.dim_post)} / {_fmt(row.dim_pre)}"
        kappa = _fmt_kappa(row.kappa)
        its = _fmt(row.iterations)
        if row.n_seeds > 1:
            dim = f"{row.dim_post:.1f} ({int(row.dim_post_max)}) / {row.dim_pre:.1f}"
            kappa = f"{_fmt_kappa(row.kappa)} ({_fmt_kappa(row.kappa_max)})"
            its = f"{row.iterations:.1f} ({int(row.iterations_max)})"
        body.append([row.variant, row.omega_e, _fmt_tol(row.tol_tr), dim, kappa, its])
    if format == "csv":
        lines = [",".join(header)]
        lines += [",".join(f'"{c}"' if "," in str(c) else str(c) for c in line)
                  for line in body]
        return "\n".join(lines) + "\n"
    if format == "markdown":
        widths = [max(len(str(h)), *(len(str(line[i])) for line in body))
                  for i, h in enumerate(header)]
        def render(cells):
            return "| " + " | ".join(str(c).ljust(w) for c, w in zip(cells, widths)) + " |"
        lines = [render(header),
                 "|" + "|".join("-" * (w + 2) for w in widths) + "|"]
        lines += [render(line) for line in body]
        return "\n".join(lines) + "\n"
    raise StructuralError(f"unknown output format '{format}'")


def _fmt_tol(tol):
    return "-" if tol is None else f"{tol:.0e}"


def ingest_matrix(mm_path, partition_path):
    """Load a Matrix Market system plus node partition (the algebraic path)."""
    A = read_matrix_market(mm_path)
    if A.n_rows != A.n_cols:
        raise StructuralError("ingested matrix is not square")
    if not A.symmetric:
        gap = abs(A.tocsr() - A.tocsr().T)
        if gap.nnz and gap.max() > 1e-12 * max(abs(A.tocsr()).max(), 1.0):
            raise StructuralError("ingested matrix is not symmetric")
        A = SparseMatrix.from_scipy(A.tocsr(), symmetric=True)
    partition = dd.read_partition(partition_path, n_nodes=A.n_rows)
    if partition.n_nodes != A.n_rows:
        raise StructuralError("partition size does not match the matrix")
    return A, partition


def export_problem(config: ExperimentConfig, mtx_path, partition_path,
                   seed: int = None) -> None:
    """Generate the configured problem and write its matrix and partition."""
    seed = config.seeds[0] if seed is None else seed
    problem = _build_problem(config, seed)
    write_matrix_market(problem.A, mtx_path)
    dd.write_partition(problem.partition, partition_path)


def edge_spectra(config: ExperimentConfig, edge_id: int, seed: int = None):
    """Dirichlet and transfer spectra of one edge, for spectrum plots.

    Returns (mu_values, lambda_values) for the first configured omega_e and
    tol_tr.
    """
    seed = config.seeds[0] if seed is None else seed
    problem = _build_problem(config, seed)
    omega = parse_omega(config.omega_e[0])
    evp = _evp_config(config, omega, config.tol_tr[0])
    edge = next((e for e in problem.interface.edges if e.edge_id == edge_id), None)
    if edge is None:
        raise StructuralError(f"unknown edge id {edge_id}")
    od = dd.build_oversampling(problem.A, problem.interface, edge_id, omega)
    mu = cs.dirichlet_evp(problem.A, edge, od, tol_dir=np.inf)
    lam = cs.transfer_evp(problem.A, edge, od,
                          replace(evp, tol_tr=np.finfo(float).tiny), mode="l2")
    mus = sorted(v for _, v in mu.provenance)
    lams = sorted((v for _, v in lam.provenance), reverse=True)
    return np.asarray(mus), np.asarray(lams)
