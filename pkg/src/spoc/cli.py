"""Batch front-end: ``spoc run`` and ``spoc compare``.

Configuration files are INI documents with one section per concern::

    [study]
    name = case2            ; case1 | case2 | rotating | sweep | custom
    rotation = off          ; custom study only
    control_limits = on     ; custom study only

    [limits]
    qdot_max = 0.85e6       ; W/m^2
    q_max = 12.53e3         ; Pa
    n_max = 1.15
    sigma_min_deg = -75
    alpha_max_deg = 19
    qdot_max_list = 0.85e6, 0.80e6, 0.75e6, 0.70e6   ; sweep only

    [mesh]
    intervals = 30
    degree = 5
    guess_tf = 2000

    [tolerances]
    nlp = 1e-8
    mesh = 1e-7
    constraint = 1e-7
    max_iterations = 10
    detection_heat = 1e-5
    detection_pressure = 1e-4
    width_heat = 0.5
    width_pressure = 1.0

    [output]
    dir = out
    formats = csv, json

    [solver]
    backend = ipopt

``--override section.key=value`` (or a bare ``key=value`` when the key is
unambiguous) edits any of these.  Exit status: 0 converged, 2 finished but
not converged, 1 error.  ``spoc compare`` exits 0 when the summaries agree,
2 when a field is out of tolerance and 1 when they cannot be compared.
"""
from __future__ import annotations

import argparse
import configparser
import logging
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path

from . import report
from .backends import BACKENDS, NlpSolveOptions
from .loop import SpocTolerances, solve_spoc
from .rlve import CASE1, DEG, StudyConfig, build_study, cold_start_guess
from .transcription import DomainLayout

log = logging.getLogger("spoc")

STUDIES = ("case1", "case2", "rotating", "sweep", "custom")
DEFAULTS = {
    "study": {"name": "case1", "rotation": "off", "control_limits": "off"},
    "limits": {
        "qdot_max": "0.85e6", "q_max": "12.53e3", "n_max": "1.15",
        "sigma_min_deg": "-75", "alpha_max_deg": "19",
        "qdot_max_list": "0.85e6, 0.80e6, 0.75e6, 0.70e6",
    },
    "mesh": {"intervals": "", "degree": "", "guess_tf": "2000"},
    "tolerances": {
        "nlp": "1e-8", "mesh": "1e-7", "constraint": "1e-7", "max_iterations": "10",
        "detection_heat": "1e-5", "detection_pressure": "1e-4",
        "width_heat": "0.5", "width_pressure": "1.0",
    },
    "output": {"dir": "spoc-out", "formats": "csv, json"},
    "solver": {"backend": ""},
}
# initial meshes: cold starts use the finer mesh, warm-started studies the coarse one
COLD_MESH = (30, 5)
WARM_MESH = (10, 4)


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    study: str = "case1"
    limits: dict = field(default_factory=dict)
    mesh: tuple[int, int] | None = None
    guess_tf: float = 2000.0
    tolerances: SpocTolerances = SpocTolerances()
    nlp_tolerance: float = 1e-8
    max_iterations: int = 10
    detection: tuple[float, float] = (1e-5, 1e-4)
    widths: tuple[float, float] = (0.5, 1.0)
    out: Path = Path("spoc-out")
    formats: tuple[str, ...] = ("csv", "json")
    warm_start: Path | None = None
    backend: str | None = None
    rotation: bool = False
    control_limits: bool = False
    sweep: tuple[float, ...] = ()

    def study_config(self, **changes) -> StudyConfig:
        lim = self.limits
        base = StudyConfig(
            rotation=self.rotation, control_limits=self.control_limits,
            Qdot_max=lim["qdot_max"], q_max=lim["q_max"], n_max=lim["n_max"],
            sigma_min=lim["sigma_min_deg"] * DEG, alpha_max=lim["alpha_max_deg"] * DEG,
            detection_tols=self.detection, bound_widths=self.widths,
        )
        return replace(base, **changes)


def _bool(text: str, where: str) -> bool:
    v = text.strip().lower()
    if v in ("1", "on", "yes", "true"):
        return True
    if v in ("0", "off", "no", "false"):
        return False
    raise ConfigError(f"{where}: expected on/off, got {text!r}")


def _float(text: str, where: str) -> float:
    try:
        return float(text)
    except ValueError:
        raise ConfigError(f"{where}: expected a number, got {text!r}") from None


def _int(text: str, where: str) -> int:
    try:
        return int(text)
    except ValueError:
        raise ConfigError(f"{where}: expected an integer, got {text!r}") from None


def read_config(path=None, overrides=(), study: str | None = None) -> RunConfig:
    """Merge defaults, an optional config file and ``key=value`` overrides."""
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    cp.read_dict(DEFAULTS)
    if path is not None:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        try:
            cp.read_string(text, source=str(path))
        except configparser.Error as exc:
            line = getattr(exc, "lineno", None)
            where = f"{path}, line {line}" if line else str(path)
            msg = str(exc).splitlines()[0]
            raise ConfigError(f"{where}: {msg}") from None
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r}: expected key=value")
        key, value = (s.strip() for s in item.split("=", 1))
        if "." in key:
            section, name = key.split(".", 1)
        else:
            hits = [s for s in cp.sections() if cp.has_option(s, key)]
            if len(hits) != 1:
                raise ConfigError(f"override {key!r}: unknown or ambiguous key")
            section, name = hits[0], key
        if not cp.has_section(section) or not cp.has_option(section, name):
            raise ConfigError(f"override {key!r}: unknown key")
        cp.set(section, name, value)
    for section in cp.sections():
        if section not in DEFAULTS:
            raise ConfigError(f"unknown section [{section}]")
        for name in cp[section]:
            if name not in DEFAULTS[section]:
                raise ConfigError(f"[{section}] unknown key {name!r}")

    cfg = RunConfig()
    cfg.study = (study or cp["study"]["name"]).strip().lower()
    if cfg.study not in STUDIES:
        raise ConfigError(f"[study] name: unknown study {cfg.study!r}; choose from {STUDIES}")
    s = cp["study"]
    cfg.rotation = _bool(s["rotation"], "[study] rotation")
    cfg.control_limits = _bool(s["control_limits"], "[study] control_limits")
    if cfg.study == "case2":
        cfg.control_limits = True
    if cfg.study in ("rotating", "sweep"):
        cfg.rotation = True
    lim = cp["limits"]
    cfg.limits = {k: _float(lim[k], f"[limits] {k}") for k in
                  ("qdot_max", "q_max", "n_max", "sigma_min_deg", "alpha_max_deg")}
    sweep = [v for v in lim["qdot_max_list"].split(",") if v.strip()]
    cfg.sweep = tuple(_float(v, "[limits] qdot_max_list") for v in sweep)
    if cfg.study == "sweep" and not cfg.sweep:
        raise ConfigError("[limits] qdot_max_list: the sweep study needs at least one value")
    m = cp["mesh"]
    if m["intervals"].strip() or m["degree"].strip():
        default = WARM_MESH if cfg.study in ("rotating", "sweep") else COLD_MESH
        k = _int(m["intervals"], "[mesh] intervals") if m["intervals"].strip() else default[0]
        n = _int(m["degree"], "[mesh] degree") if m["degree"].strip() else default[1]
        if k < 1 or n < 1:
            raise ConfigError("[mesh] intervals and degree must be positive")
        cfg.mesh = (k, n)
    cfg.guess_tf = _float(m["guess_tf"], "[mesh] guess_tf")
    t = cp["tolerances"]
    cfg.nlp_tolerance = _float(t["nlp"], "[tolerances] nlp")
    cfg.tolerances = SpocTolerances(_float(t["mesh"], "[tolerances] mesh"),
                                    _float(t["constraint"], "[tolerances] constraint"))
    cfg.max_iterations = _int(t["max_iterations"], "[tolerances] max_iterations")
    cfg.detection = (_float(t["detection_heat"], "[tolerances] detection_heat"),
                     _float(t["detection_pressure"], "[tolerances] detection_pressure"))
    cfg.widths = (_float(t["width_heat"], "[tolerances] width_heat"),
                  _float(t["width_pressure"], "[tolerances] width_pressure"))
    o = cp["output"]
    cfg.out = Path(o["dir"])
    cfg.formats = tuple(f.strip().lower() for f in o["formats"].split(",") if f.strip())
    bad = set(cfg.formats) - {"csv", "json"}
    if bad:
        raise ConfigError(f"[output] formats: unknown format(s) {sorted(bad)}")
    backend = cp["solver"]["backend"].strip()
    if backend and backend not in BACKENDS:
        raise ConfigError(f"[solver] backend: unknown backend {backend!r}")
    cfg.backend = backend or None
    try:
        cfg.study_config()
    except ValueError as exc:
        raise ConfigError(f"[limits] {exc}") from None
    return cfg


def _solve(cfg: RunConfig, study: StudyConfig, guess, mesh, on_iteration=None):
    problem = build_study(study)
    layout = DomainLayout.single(guess.t0, guess.tf, *mesh)
    sol = solve_spoc(
        problem, layout, guess, tolerances=cfg.tolerances, max_iterations=cfg.max_iterations,
        options=NlpSolveOptions(tolerance=cfg.nlp_tolerance), backend=cfg.backend,
        on_iteration=on_iteration,
    )
    return problem, sol


def run_study(cfg: RunConfig, on_iteration=None):
    """Solve every configuration of ``cfg.study``; returns [(label, problem, solution)]."""
    results = []
    warm = report.load_solution(cfg.warm_start) if cfg.warm_start else None
    if cfg.study in ("case1", "case2", "custom"):
        study = cfg.study_config()
        if warm is None:
            guess = cold_start_guess(build_study(study), tf=cfg.guess_tf)
            mesh = cfg.mesh or COLD_MESH
        else:
            guess, mesh = warm, cfg.mesh or WARM_MESH
        problem, sol = _solve(cfg, study, guess, mesh, on_iteration)
        results.append((cfg.study, problem, sol))
        return results
    if warm is None:
        # the warm-started studies begin from the nonrotating, unlimited solution
        base = replace(cfg.study_config(), rotation=False, control_limits=False,
                       Qdot_max=CASE1.Qdot_max)
        guess = cold_start_guess(build_study(base), tf=cfg.guess_tf)
        _, warm = _solve(cfg, base, guess, COLD_MESH, on_iteration)
        if not warm.converged:
            log.warning("warm-start solution did not converge; continuing from it anyway")
    mesh = cfg.mesh or WARM_MESH
    values = (cfg.limits["qdot_max"],) if cfg.study == "rotating" else cfg.sweep
    for q in values:
        study = cfg.study_config(Qdot_max=q)
        problem, sol = _solve(cfg, study, warm, mesh, on_iteration)
        label = cfg.study if cfg.study == "rotating" else f"sweep_{q / 1e6:.2f}"
        results.append((label, problem, sol))
    return results


def write_outputs(cfg: RunConfig, results) -> list[dict]:
    cfg.out.mkdir(parents=True, exist_ok=True)
    summaries = []
    for label, problem, sol in results:
        params = problem.params
        summ = report.summary(sol, params, study=label)
        summaries.append(summ)
        base = cfg.out / label
        if "csv" in cfg.formats:
            report.write_trajectory_csv(f"{base}_trajectory.csv", sol, params)
        if "json" in cfg.formats:
            report.write_json(f"{base}_summary.json", summ)
            report.write_json(f"{base}_arcs.json", sol.arc_report.to_dict())
            report.save_solution(f"{base}_solution.json", sol)
        Path(f"{base}_arcs.txt").write_text(sol.arc_report.table() + "\n")
    return summaries


def _print_summary(summ: dict, out=sys.stdout) -> None:
    print(f"[{summ['study']}] converged={summ['converged']} "
          f"phi(tf)={summ['objective_deg']:.4f} deg  tf={summ['tf']:.2f} s  "
          f"theta(tf)={summ['downrange_deg']:.3f} deg  "
          f"theta_I(tf)={summ['inertial_longitude_deg']:.3f} deg  "
          f"Q={summ['heat_load_MJ_m2']:.1f} MJ/m^2  e_max={summ['mesh_error']:.2e}", file=out)
    for name, arcs in summ["arcs"].items():
        cells = ", ".join(f"({a:.2f}, {b:.2f})" for a, b in arcs) or "-"
        print(f"    {name}: {cells}", file=out)


def cmd_run(args) -> int:
    try:
        cfg = read_config(args.config, args.override or (), study=args.study)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    if args.out:
        cfg.out = Path(args.out)
    if args.warm_start:
        cfg.warm_start = Path(args.warm_start)
    if args.max_iterations is not None:
        cfg.max_iterations = args.max_iterations
    if args.backend:
        if args.backend not in BACKENDS:
            print(f"unknown backend {args.backend!r}", file=sys.stderr)
            return 1
        cfg.backend = args.backend

    def progress(rec):
        if not args.quiet:
            print(f"  M={rec.iteration} e_max={rec.e_max:.3e} violation={rec.violation:.3e} "
                  f"domains={rec.n_domains} new_arcs={rec.new_arcs} status={rec.status}",
                  file=sys.stderr)

    try:
        results = run_study(cfg, on_iteration=progress)
        summaries = write_outputs(cfg, results)
    except Exception as exc:  # noqa: BLE001 - reported as exit status 1
        log.exception("run failed")
        print(f"error: {exc}", file=sys.stderr)
        return 1
    for summ in summaries:
        _print_summary(summ)
    return 0 if all(s["converged"] for s in summaries) else 2


def _parse_tolerances(items) -> dict[str, float]:
    out = {}
    for item in items or ():
        key, _, value = item.partition("=")
        try:
            out[key.strip()] = float(value)
        except ValueError:
            raise ConfigError(f"tolerance {item!r}: expected field=number") from None
    return out


def cmd_compare(args) -> int:
    import json

    try:
        a = json.loads(Path(args.a).read_text())
        b = json.loads(Path(args.b).read_text())
        tols = _parse_tolerances(args.tol)
        diffs = report.compare_summaries(a, b, tols, default_tol=args.default_tol)
    except (OSError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    for d in diffs:
        print(d)
    return 2 if diffs else 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="spoc", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true", help="log solver progress")
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run a study")
    r.add_argument("--study", choices=STUDIES)
    r.add_argument("--config", help="INI configuration file")
    r.add_argument("--out", help="output directory")
    r.add_argument("--override", action="append", metavar="KEY=VALUE")
    r.add_argument("--warm-start", help="solution JSON written by a previous run")
    r.add_argument("--max-iterations", type=int)
    r.add_argument("--backend", help=f"NLP backend ({', '.join(sorted(BACKENDS))})")
    r.add_argument("-q", "--quiet", action="store_true", help="no per-iteration progress")
    r.set_defaults(func=cmd_run)
    c = sub.add_parser("compare", help="compare two summary JSON files")
    c.add_argument("a")
    c.add_argument("b")
    c.add_argument("--tol", action="append", metavar="FIELD=ABS",
                   help="absolute tolerance for a field or dotted prefix (repeatable)")
    c.add_argument("--default-tol", type=float, default=0.0)
    c.set_defaults(func=cmd_compare)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
