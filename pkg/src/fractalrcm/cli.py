"""Command line driver: build graphs, certify the fixed point, and run
the walk, homogenization, and stabilization experiments.

One run = one output directory: CSV tables, SVG plots, and a manifest
written last. The manifest echoes the fully resolved configuration as
plain `key = value` lines (comments carry version, timestamps, and
artifact checksums), so `--config manifest.txt` reruns the experiment;
with the same seed the CSV and SVG bytes come out identical no matter
how many threads run the trials.

Exit codes: 0 success, 1 error, 2 for a clean run whose scientific
property check failed.
"""

import argparse
import hashlib
import math
import sys
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from ._kernels import default_backend
from .environment import ConductanceLaw
from .fin import fin_stabilization_check
from .homogenize import run_homogenization
from .ifs import IFSSpec, build_graph, verify_nesting, verify_symmetry
from .renorm import find_fixed_point
from .specfile import ConfigError, load_fractal, parse_fractal_lines, read_kv_lines
from .svg import emit_graph_svg, emit_svg
from .walks import _statistic, scaling_experiment

DEFAULT_FRACTAL = "sierpinski-gasket"


def _cast_int(text):
    return int(str(text))


def _cast_float(text):
    return float(str(text))


def _cast_str(text):
    return str(text)


def _cast_levels(text):
    """Level lists: '1-5', '1,3,5', or a single '4'."""
    if isinstance(text, tuple):
        return text
    text = str(text).strip()
    if "-" in text:
        a, b = text.split("-", 1)
        lo, hi = int(a), int(b)
        if hi < lo:
            raise ValueError(f"empty level range {text!r}")
        return tuple(range(lo, hi + 1))
    return tuple(int(tok) for tok in text.split(","))


def _check_nonneg(v):
    return None if v >= 0 else "must be >= 0"


def _check_pos(v):
    return None if v > 0 else "must be positive"


def _check_min1(v):
    return None if v >= 1 else "must be >= 1"


def _check_alpha(v):
    return None if 0.0 < v < 1.0 else "alpha must lie in the open interval (0, 1)"


def _check_choice(*options):
    def check(v):
        return None if v in options else f"must be one of {', '.join(options)}"

    return check


def _check_statistic(v):
    try:
        _statistic(np.array([1.0]), v)
    except ValueError as exc:
        return str(exc)
    return None


@dataclass
class Param:
    cast: object
    default: object
    check: object = None


GLOBAL_SCHEMA = {
    "seed": Param(_cast_int, 0, _check_nonneg),
    "threads": Param(_cast_int, 1, _check_min1),
    "out": Param(_cast_str, "."),
}

SCHEMAS = {
    "build": {
        "level": Param(_cast_int, 2, _check_nonneg),
        "verify_level": Param(_cast_int, 2, _check_min1),
    },
    "renorm": {
        "tol": Param(_cast_float, 1e-12, _check_pos),
        "max_iter": Param(_cast_int, 10000, _check_min1),
        "multi_start": Param(_cast_int, 0, _check_nonneg),
    },
    "walk": {
        "mode": Param(_cast_str, "vsrw", _check_choice("vsrw", "csrw")),
        "law": Param(_cast_str, "pareto", _check_choice("pareto", "constant", "oracle")),
        "alpha": Param(_cast_float, 0.5, _check_alpha),
        "lower_bound": Param(_cast_float, 1.0, _check_pos),
        "levels": Param(_cast_levels, (1, 2, 3, 4, 5)),
        "trials": Param(_cast_int, 500, _check_nonneg),
        "statistic": Param(_cast_str, "median", _check_statistic),
    },
    "homogenize": {
        "law": Param(_cast_str, "pareto", _check_choice("pareto", "constant")),
        "alpha": Param(_cast_float, 0.5, _check_alpha),
        "lower_bound": Param(_cast_float, 1.0, _check_pos),
        "levels": Param(_cast_levels, (1, 2, 3, 4, 5)),
        "trials": Param(_cast_int, 200, _check_nonneg),
        "n_ref": Param(_cast_int, 3, _check_min1),
    },
    "fin": {
        "alpha": Param(_cast_float, 0.5, _check_alpha),
        "levels": Param(_cast_levels, (2, 3, 4, 5)),
        "trials": Param(_cast_int, 1000, _check_nonneg),
        "cutoff": Param(_cast_float, 1e-3, _check_pos),
        "ks_threshold": Param(_cast_float, 0.1, _check_pos),
    },
}


@dataclass
class ExperimentConfig:
    experiment: str
    spec: IFSSpec
    fractal_lines: list
    seed: int
    threads: int
    out: str
    values: dict
    overridden: list  # (key, file value) pairs a flag replaced


class _Parser(argparse.ArgumentParser):
    # argparse exits with status 2 on usage errors; 2 is reserved for
    # property failures here, so route usage errors through ConfigError
    def error(self, message):
        raise ConfigError(message)


def _build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="fractalrcm",
                     description="Random conductance models on nested fractal graphs.")
    parser.add_argument("--version", action="version",
                        version=f"fractalrcm {__version__}")
    sub = parser.add_subparsers(dest="experiment", required=True, metavar="experiment")

    def common(sp):
        sp.add_argument("--seed", default=None, help="master seed (default 0)")
        sp.add_argument("--threads", default=None, help="worker threads (default 1)")
        sp.add_argument("--out", default=None, help="output directory (default .)")
        sp.add_argument("--fractal", default=None,
                        help=f"preset name or fractal file (default {DEFAULT_FRACTAL})")
        sp.add_argument("--config", default=None,
                        help="config file; flags override its values")

    sp = sub.add_parser("build", help="materialize V_n, E_n and check the axioms")
    common(sp)
    sp.add_argument("--level", default=None, help="graph level n (default 2)")
    sp.add_argument("--verify-level", dest="verify_level", default=None,
                    help="level for the nesting/symmetry checks (default 2)")

    sp = sub.add_parser("renorm", help="certify the renormalization fixed point")
    common(sp)
    sp.add_argument("--tol", default=None, help="residual tolerance (default 1e-12)")
    sp.add_argument("--max-iter", dest="max_iter", default=None)
    sp.add_argument("--multi-start", dest="multi_start", default=None,
                    help="extra random starting forms to cross-check")

    sp = sub.add_parser("walk", help="crossing-time scaling experiment")
    common(sp)
    sp.add_argument("--mode", default=None, help="vsrw or csrw (default vsrw)")
    sp.add_argument("--law", default=None, help="pareto, constant, or oracle")
    sp.add_argument("--alpha", default=None, help="tail index in (0,1)")
    sp.add_argument("--lower-bound", dest="lower_bound", default=None)
    sp.add_argument("--levels", "--level", dest="levels", default=None,
                    help="levels, e.g. 1-5 or 1,3,5")
    sp.add_argument("--trials", default=None, help="trials per level (default 500)")
    sp.add_argument("--stat", dest="statistic", default=None,
                    help="mean, median, or q:P (default median)")

    sp = sub.add_parser("homogenize", help="random-vs-deterministic resistance distance")
    common(sp)
    sp.add_argument("--law", default=None, help="pareto or constant")
    sp.add_argument("--alpha", default=None)
    sp.add_argument("--lower-bound", dest="lower_bound", default=None)
    sp.add_argument("--levels", "--level", dest="levels", default=None)
    sp.add_argument("--trials", default=None, help="trials per level (default 200)")
    sp.add_argument("--nref", dest="n_ref", default=None,
                    help="reference level for the c estimate (default 3)")

    sp = sub.add_parser("fin", help="time-changed walk stabilization check")
    common(sp)
    sp.add_argument("--alpha", default=None)
    sp.add_argument("--levels", "--level", dest="levels", default=None)
    sp.add_argument("--trials", default=None, help="trials per level (default 1000)")
    sp.add_argument("--cutoff", default=None, help="trap mass cutoff (default 1e-3)")
    sp.add_argument("--ks-threshold", dest="ks_threshold", default=None,
                    help="cross-family KS gate (default 0.1)")
    return parser


def _fractal_lines(spec: IFSSpec) -> list:
    if spec.preset_name:
        return [f"preset = {spec.preset_name}"]
    lines = [f"dim = {spec.ambient_dim}", f"beta = {repr(spec.beta)}"]
    for m in spec.maps:
        u = " ".join(repr(float(v)) for v in m.matrix.ravel())
        g = " ".join(repr(float(v)) for v in m.shift)
        lines.append(f"map U = {u} ; gamma = {g}")
    return lines


def parse_config(argv=None) -> ExperimentConfig:
    """Flags plus optional config file, flags winning, unknown keys fatal."""
    args = _build_parser().parse_args(argv)
    exp = args.experiment
    schema = dict(GLOBAL_SCHEMA)
    schema.update(SCHEMAS[exp])

    path = args.config
    file_vals = {}
    file_spec = None
    if path is not None:
        lines = read_kv_lines(path)
        file_spec, leftover = parse_fractal_lines(lines, path)
        for lineno, key, value in leftover:
            k = key.replace("-", "_")
            if k == "experiment":
                if value != exp:
                    raise ConfigError(
                        f"config file is for {value!r}, not {exp!r}", path, lineno)
                continue
            if k == "fractal":
                if file_spec is not None:
                    raise ConfigError(
                        "fractal key conflicts with inline preset/map lines", path, lineno)
                file_spec = load_fractal(value)
                continue
            if k not in schema:
                raise ConfigError(f"unknown key {key!r} for {exp}", path, lineno)
            if k in file_vals:
                raise ConfigError(f"duplicate key {key!r}", path, lineno)
            file_vals[k] = (lineno, value)

    resolved = {}
    overridden = []
    for key, par in schema.items():
        flag = getattr(args, key, None)
        filev = file_vals.get(key)
        if flag is not None:
            try:
                value = par.cast(flag)
            except ValueError as exc:
                raise ConfigError(f"--{key.replace('_', '-')}: {exc}") from None
            if filev is not None:
                overridden.append((key, filev[1]))
        elif filev is not None:
            try:
                value = par.cast(filev[1])
            except ValueError as exc:
                raise ConfigError(f"{key}: {exc}", path, filev[0]) from None
        else:
            value = par.default
        if par.check is not None:
            err = par.check(value)
            if err:
                if flag is None and filev is not None:
                    raise ConfigError(f"{key}: {err}", path, filev[0])
                raise ConfigError(f"{key}: {err}")
        resolved[key] = value

    if args.fractal is not None:
        spec = load_fractal(args.fractal)
        if file_spec is not None:
            overridden.append(("fractal", "(config file geometry)"))
    elif file_spec is not None:
        spec = file_spec
    else:
        spec = load_fractal(DEFAULT_FRACTAL)

    return ExperimentConfig(
        experiment=exp,
        spec=spec,
        fractal_lines=_fractal_lines(spec),
        seed=resolved.pop("seed"),
        threads=resolved.pop("threads"),
        out=resolved.pop("out"),
        values=resolved,
        overridden=overridden,
    )


def _cell(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _write_csv(path, header: str, rows):
    with open(path, "w", encoding="utf8") as fh:
        fh.write(header + "\n")
        for row in rows:
            fh.write(",".join(_cell(v) for v in row) + "\n")


def _utcnow() -> str:
    return datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def _sha256(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _manifest_value(v) -> str:
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, tuple):
        return ",".join(str(i) for i in v)
    return str(v)


def _write_manifest(config, outdir, artifacts, started, finished):
    lines = [
        f"# fractalrcm {__version__}",
        f"# command = {config.experiment}",
        f"# started_utc = {started}",
        f"# finished_utc = {finished}",
        f"# kernel_backend = {default_backend()}",
    ]
    for name in artifacts:
        lines.append(f"# sha256 {name} = {_sha256(outdir / name)}")
    for key, raw in config.overridden:
        lines.append(f"# config_file {key} = {raw} (overridden by a flag)")
    lines.append(f"experiment = {config.experiment}")
    lines.extend(config.fractal_lines)
    lines.append(f"seed = {config.seed}")
    lines.append(f"threads = {config.threads}")
    lines.append(f"out = {config.out}")
    for key in sorted(config.values):
        lines.append(f"{key} = {_manifest_value(config.values[key])}")
    with open(outdir / "manifest.txt", "w", encoding="utf8") as fh:
        fh.write("\n".join(lines) + "\n")


def _run_build(config, outdir, artifacts) -> int:
    v = config.values
    spec = config.spec
    graph = build_graph(spec, v["level"])
    names = ["x", "y", "z"][: spec.ambient_dim] if spec.ambient_dim <= 3 else [
        f"x{i}" for i in range(spec.ambient_dim)]
    boundary = set(int(b) for b in graph.boundary)
    _write_csv(outdir / "vertices.csv", "id," + ",".join(names) + ",boundary",
               [(i, *graph.coords[i], int(i in boundary))
                for i in range(graph.n_vertices)])
    artifacts.append("vertices.csv")
    _write_csv(outdir / "edges.csv", "source,target,cell",
               [(int(a), int(b), ".".join(str(l) for l in graph.cells[ci][0]))
                for (a, b), ci in zip(graph.edges, graph.edge_cell)])
    artifacts.append("edges.csv")
    emit_graph_svg(graph, outdir / "graph.svg")
    artifacts.append("graph.svg")
    print(f"fractal = {config.spec!r}")
    print(f"level = {v['level']}")
    print(f"vertices = {graph.n_vertices}")
    print(f"edges = {graph.n_edges}")
    print(f"cells = {len(graph.cells)}")

    violations = []
    try:
        nesting = verify_nesting(spec, v["verify_level"])
        print(f"nesting_level_{nesting.level} = {'ok' if nesting.passed else 'FAIL'}")
        violations.extend(nesting.violations)
    except NotImplementedError as exc:
        print(f"nesting_check = skipped ({exc})")
    symmetry = verify_symmetry(spec, v["verify_level"])
    print(f"symmetry_level_{symmetry.level} = {'ok' if symmetry.passed else 'FAIL'}")
    violations.extend(symmetry.violations)
    for item in violations:
        print(f"violation: {item}")
    return 2 if violations else 0


def _run_renorm(config, outdir, artifacts) -> int:
    v = config.values
    result = find_fixed_point(config.spec, tol=v["tol"], max_iter=v["max_iter"],
                              multi_start=v["multi_start"], rng=config.seed)
    q = result.q_star.conductances
    k = q.shape[0]
    print(f"rho = {repr(result.rho)}")
    print(f"iterations = {result.iterations}")
    print(f"residual = {repr(result.residual)}")
    if result.multi_start_spread is not None:
        print(f"multi_start_spread = {repr(result.multi_start_spread)}")
    for i in range(k):
        for j in range(i + 1, k):
            print(f"q[{i},{j}] = {repr(float(q[i, j]))}")
    with open(outdir / "q_star.csv", "w", encoding="utf8") as fh:
        fh.write(",".join(str(i) for i in range(k)) + "\n")
        for row in q:
            fh.write(",".join(repr(float(x)) for x in row) + "\n")
    artifacts.append("q_star.csv")
    return 0


def _run_walk(config, outdir, artifacts) -> int:
    v = config.values
    law = None if v["law"] == "oracle" else ConductanceLaw(
        alpha=v["alpha"], lower_bound=v["lower_bound"], family=v["law"])
    report = scaling_experiment(
        config.spec, law, v["mode"], v["levels"], v["trials"],
        statistic=v["statistic"], rng=config.seed, threads=config.threads)
    _write_csv(outdir / "crossing_times.csv", "level,trial,time,jumps", report.rows)
    artifacts.append("crossing_times.csv")
    _write_csv(
        outdir / "scaling_report.csv",
        "level,value,fitted_log_slope,predicted_log_slope,c_hat,mode,statistic,alpha,trials",
        [(n, val, report.fitted_log_slope, report.predicted_log_slope,
          report.c_hat, report.mode, report.statistic, report.alpha, report.trials)
         for n, val in zip(report.levels, report.values)])
    artifacts.append("scaling_report.csv")

    ns = np.asarray(report.levels, dtype=float)
    fitted = report.c_hat * np.exp(report.fitted_log_slope * ns)
    anchor = report.values[0] / math.exp(report.predicted_log_slope * ns[0])
    predicted = anchor * np.exp(report.predicted_log_slope * ns)
    emit_svg(
        [
            {"label": f"{report.statistic} crossing time", "x": ns,
             "y": report.values, "kind": "both"},
            {"label": f"fit slope {report.fitted_log_slope:.4f}", "x": ns,
             "y": fitted, "kind": "line", "dash": "6,3"},
            {"label": f"predicted slope {report.predicted_log_slope:.4f}", "x": ns,
             "y": predicted, "kind": "line", "dash": "2,3"},
        ],
        outdir / "scaling.svg",
        title=f"{report.mode} crossing-time scaling",
        xlabel="level n", ylabel="crossing time", logy=True)
    artifacts.append("scaling.svg")

    print(f"mode = {report.mode}")
    print(f"levels = {','.join(str(n) for n in report.levels)}")
    print(f"fitted_log_slope = {repr(report.fitted_log_slope)}")
    print(f"predicted_log_slope = {repr(report.predicted_log_slope)}")
    print(f"relative_slope_error = {repr(report.relative_slope_error)}")
    print(f"c_hat = {repr(report.c_hat)}")
    return 0


def _run_homogenize(config, outdir, artifacts) -> int:
    v = config.values
    law = ConductanceLaw(alpha=v["alpha"], lower_bound=v["lower_bound"],
                         family=v["law"])
    report = run_homogenization(
        config.spec, law, v["levels"], v["trials"], rng=config.seed,
        threads=config.threads, n_ref=v["n_ref"])
    _write_csv(outdir / "homog_report.csv", "level,trial,D_n,c_hat",
               [(n, j, d, c) for (n, j, d, _, c) in report.rows])
    artifacts.append("homog_report.csv")
    positive = bool(np.all(report.medians > 0))
    emit_svg(
        [
            {"label": "median sup distance", "x": report.levels,
             "y": report.medians, "kind": "both"},
            {"label": "upper quartile", "x": report.levels,
             "y": report.upper_quartiles, "kind": "line", "dash": "4,3"},
        ] if positive else [
            {"label": "median sup distance", "x": report.levels,
             "y": report.medians, "kind": "both"},
        ],
        outdir / "homog_trend.svg",
        title="resistance homogenization",
        xlabel="level n", ylabel="sup distance on common vertices",
        logy=positive)
    artifacts.append("homog_trend.svg")

    est = report.c_estimate
    print(f"c_hat = {repr(est.c_hat)}")
    print(f"c_hat_bootstrap_spread = {repr(est.spread)}")
    print(f"c_hat_reference_level = {est.n_ref}")
    for n, med, uq in zip(report.levels, report.medians, report.upper_quartiles):
        print(f"D_median_level_{n} = {repr(float(med))} (q75 {repr(float(uq))})")
    print(f"strictly_decreasing = {report.monotone}")
    print(f"top_level_halves_bottom = {report.halved}")
    print(f"passed = {report.passed}")
    return 0 if report.passed else 2


def _run_fin(config, outdir, artifacts) -> int:
    v = config.values
    report = fin_stabilization_check(
        config.spec, v["alpha"], v["levels"], v["trials"], rng=config.seed,
        cutoff=v["cutoff"], threads=config.threads)
    _write_csv(outdir / "fin_distributions.csv", "family,level,trial,time",
               report.rows)
    artifacts.append("fin_distributions.csv")
    ks_rows = []
    for fam, kss in (("csrw", report.csrw_ks), ("trap", report.trap_ks)):
        for (a, b), ks in zip(zip(report.levels, report.levels[1:]), kss):
            ks_rows.append(("consecutive", fam, a, b, ks))
    top = report.levels[-1]
    ks_rows.append(("cross", "both", top, top, report.cross_ks))
    _write_csv(outdir / "ks_report.csv", "kind,family,level_a,level_b,ks", ks_rows)
    artifacts.append("ks_report.csv")

    uppers = list(report.levels[1:])
    emit_svg(
        [
            {"label": "csrw consecutive KS", "x": uppers, "y": report.csrw_ks,
             "kind": "both"},
            {"label": "trap consecutive KS", "x": uppers, "y": report.trap_ks,
             "kind": "both"},
            {"label": "cross-family KS (top level)", "x": [top],
             "y": [report.cross_ks], "kind": "scatter"},
        ],
        outdir / "fin_ks.svg",
        title="stabilization of rescaled crossing-time laws",
        xlabel="upper level of the pair", ylabel="KS distance")
    artifacts.append("fin_ks.svg")

    print(f"levels = {','.join(str(n) for n in report.levels)}")
    print(f"csrw_consecutive_ks = {','.join(repr(x) for x in report.csrw_ks)}")
    print(f"trap_consecutive_ks = {','.join(repr(x) for x in report.trap_ks)}")
    print(f"csrw_weakly_decreasing = {report.csrw_decreasing}")
    print(f"trap_weakly_decreasing = {report.trap_decreasing}")
    print(f"cross_family_ks = {repr(report.cross_ks)}")
    print(f"ks_threshold = {repr(v['ks_threshold'])}")
    ok = report.csrw_decreasing and report.cross_ks <= v["ks_threshold"]
    print(f"passed = {ok}")
    return 0 if ok else 2


_RUNNERS = {
    "build": _run_build,
    "renorm": _run_renorm,
    "walk": _run_walk,
    "homogenize": _run_homogenize,
    "fin": _run_fin,
}


def dispatch(config: ExperimentConfig) -> int:
    """Run the configured experiment; the manifest is written last so a
    complete manifest implies complete artifacts."""
    outdir = Path(config.out)
    outdir.mkdir(parents=True, exist_ok=True)
    started = _utcnow()
    artifacts = []
    code = _RUNNERS[config.experiment](config, outdir, artifacts)
    _write_manifest(config, outdir, artifacts, started, _utcnow())
    return code


def main(argv=None) -> int:
    try:
        return dispatch(parse_config(argv))
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (ValueError, RuntimeError, KeyError, OSError, NotImplementedError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
