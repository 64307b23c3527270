"""Command-line entry point ``noisy-synth``.

Exit codes: 0 success, 1 configuration or I/O error, 2 data not informative,
3 indeterminate (solver failure or a robustness check that did not pass).
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import math
import platform
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, experiments
from .data import SystemPair, partition, read_trajectory_csv, simulate, write_trajectory_csv
from .matcore import read_matrix_csv
from .noise import (NoiseModel, from_energy_bound, from_sample_covariance, from_sample_norm_bound,
                    load_model)
from .sigma import QmiForm, build_n, whiten
from .slemma import (InconclusiveSampling, check_theorem_preconditions, falsify_implication,
                     find_multiplier, find_multiplier_structured)
from .synth import (IndeterminateError, NotInformativeError, PerformanceSpec, load_controller,
                    save_controller, synth_h2, synth_hinf, synth_stab, synth_stab_multi)
from .verify import robust_verify, spectral_radius

log = logging.getLogger("noisy_synth")

EXIT_OK, EXIT_CONFIG, EXIT_NOT_INFORMATIVE, EXIT_INDETERMINATE = 0, 1, 2, 3


class ConfigError(Exception):
    pass


def _clean(obj):
    """JSON-ready copy: numpy scalars and arrays to Python, non-finite floats to strings."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if math.isfinite(x) else str(x)
    return obj


def write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(_clean(obj), indent=2, sort_keys=True) + "\n")


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


class Run:
    """Configuration plus the bookkeeping for provenance."""

    def __init__(self, args):
        self.command = args.command
        self.argv = list(sys.argv[1:])
        self.cfg = {}
        self.base = Path.cwd()
        self.inputs = {}
        if args.config is not None:
            path = Path(args.config)
            try:
                self.cfg = json.loads(path.read_text())
            except OSError as exc:
                raise ConfigError(f"cannot read config: {exc}") from exc
            except json.JSONDecodeError as exc:
                raise ConfigError(f"{path}: invalid JSON: {exc}") from exc
            if not isinstance(self.cfg, dict):
                raise ConfigError(f"{path}: top level must be an object")
            self.base = path.resolve().parent
            self.inputs[str(path)] = _sha256(path)
        seed = args.seed if args.seed is not None else self.cfg.get("seed")
        self.seed = None if seed is None else int(seed)
        out = args.out if args.out is not None else self.cfg.get("out", "out")
        self.out = Path(out)
        self.t0 = time.perf_counter()
        self.extra = {}

    def need_seed(self) -> int:
        if self.seed is None:
            raise ConfigError("a seed is required (--seed or 'seed' in the config)")
        return self.seed

    def section(self, key: str) -> dict:
        sec = self.cfg.get(key)
        if not isinstance(sec, dict):
            raise ConfigError(f"config needs an object '{key}'")
        return sec

    def path(self, value) -> Path:
        if not isinstance(value, str):
            raise ConfigError(f"expected a file path, got {value!r}")
        p = Path(value)
        p = p if p.is_absolute() else self.base / p
        if not p.exists():
            raise ConfigError(f"missing file: {p}")
        if p.is_file():
            self.inputs[str(p)] = _sha256(p)
        else:
            for f in sorted(p.iterdir()):
                if f.is_file():
                    self.inputs[str(f)] = _sha256(f)
        return p

    def matrix(self, value) -> np.ndarray:
        if isinstance(value, (list, int, float)):
            return np.atleast_2d(np.asarray(value, dtype=float))
        try:
            return read_matrix_csv(self.path(value))
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def provenance(self, **fields) -> dict:
        import cvxopt
        import scipy

        rec = {
            "command": self.command, "argv": self.argv, "config": self.cfg, "seed": self.seed,
            "inputs": self.inputs, "package_version": __version__,
            "versions": {"python": platform.python_version(), "numpy": np.__version__,
                         "scipy": scipy.__version__, "cvxopt": cvxopt.__version__},
            "runtime_s": time.perf_counter() - self.t0,
        }
        rec.update(self.extra)
        rec.update(fields)
        return rec

    def finish(self, **fields) -> None:
        self.out.mkdir(parents=True, exist_ok=True)
        write_json(self.out / "provenance.json", self.provenance(**fields))


def _system(run: Run) -> SystemPair:
    sec = run.section("system")
    if "a" not in sec or "b" not in sec:
        raise ConfigError("system needs 'a' and 'b'")
    try:
        return SystemPair(run.matrix(sec["a"]), run.matrix(sec["b"]))
    except ValueError as exc:
        raise ConfigError(f"system: {exc}") from exc


def _spec(run: Run, n: int, m: int, gamma) -> PerformanceSpec:
    sec = run.cfg.get("system", {})
    if "c" not in sec:
        raise ConfigError("H2 and H-infinity designs need system.c")
    c = run.matrix(sec["c"])
    d = run.matrix(sec["d"]) if "d" in sec else np.zeros((c.shape[0], m))
    try:
        return PerformanceSpec(c, d, gamma)
    except ValueError as exc:
        raise ConfigError(f"performance output: {exc}") from exc


def _noise(run: Run, n: int, T: int) -> NoiseModel:
    sec = run.section("noise")
    kind = sec.get("kind")
    try:
        if kind == "energy":
            bound = sec.get("bound")
            if bound is None:
                raise ConfigError("energy noise needs 'bound'")
            b = run.matrix(bound) if not isinstance(bound, (int, float)) else float(bound) * np.eye(n)
            return from_energy_bound(b, T)
        if kind == "sample-norm":
            return from_sample_norm_bound(float(sec["eps"]), n, T)
        if kind == "covariance":
            bound = sec.get("bound")
            b = run.matrix(bound) if not isinstance(bound, (int, float)) else float(bound) * np.eye(n)
            return from_sample_covariance(b, T, float(sec.get("delta", 0.0)))
        if kind == "files":
            model = load_model(run.path(sec["dir"]))
            if model.n != n or model.T != T:
                raise ConfigError(f"noise model is for n={model.n}, T={model.T}; data have n={n}, T={T}")
            return model
    except KeyError as exc:
        raise ConfigError(f"noise kind {kind!r} needs {exc}") from exc
    except (ValueError, OSError) as exc:
        raise ConfigError(f"noise model: {exc}") from exc
    raise ConfigError(f"unknown noise kind {kind!r}")


def _trajectory(run: Run):
    sec = run.section("data")
    if "trajectory" not in sec:
        raise ConfigError("data needs 'trajectory'")
    try:
        return read_trajectory_csv(run.path(sec["trajectory"]))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def cmd_simulate(run: Run) -> int:
    """Simulate the configured system with Gaussian inputs and initial state."""
    seed = run.need_seed()
    sys_ = _system(run)
    sec = run.cfg.get("simulate", {})
    T = int(sec.get("T", 20))
    noise = sec.get("noise", {"kind": "gaussian", "sigma": 0.0})
    rng = np.random.default_rng(seed)
    x0 = rng.standard_normal(sys_.n)
    u = rng.standard_normal((sys_.m, T))
    if noise.get("kind") == "gaussian":
        w = float(noise.get("sigma", 0.0)) * rng.standard_normal((sys_.n, T))
    elif noise.get("kind") == "ball":
        w = experiments.uniform_ball(rng, sys_.n, T, math.sqrt(float(noise["eps"])))
    else:
        raise ConfigError(f"unknown simulation noise {noise.get('kind')!r}")
    d = simulate(sys_, x0, u, w)
    run.out.mkdir(parents=True, exist_ok=True)
    write_trajectory_csv(run.out / "trajectory.csv", d)
    with open(run.out / "noise.csv", "w", newline="") as fh:
        csv.writer(fh).writerows([[repr(float(v)) for v in row] for row in d.w_true])
    run.finish(T=T)
    print(f"wrote {T} samples to {run.out / 'trajectory.csv'}")
    return EXIT_OK


def _verify_controller(run: Run, ctrl, xp, xm, um, model, spec) -> dict:
    vsec = run.cfg.get("verify", {})
    count = int(vsec.get("samples", 500))
    seed = run.seed if run.seed is not None else 0
    try:
        region = whiten(xp, xm, um, model)
    except ValueError:
        region = build_n(xp, xm, um, model)
    rep = robust_verify(ctrl, region, spec, count=count, seed=seed)
    if "system" in run.cfg:
        sys_ = _system(run)
        rep["true_system_spectral_radius"] = spectral_radius(sys_.closed_loop(ctrl.k))
    return rep


def _passed(rep: dict) -> bool:
    keys = ("pass_lyapunov", "pass_spectral", "pass_performance")
    return all(rep[k] == rep["samples"] for k in keys if k in rep)


def cmd_synth(run: Run) -> int:
    d = _trajectory(run)
    xp, xm, um = partition(d)
    model = _noise(run, d.n, d.T)
    sec = run.cfg.get("synth", {})
    kind = sec.get("kind", "stab")
    gamma = sec.get("gamma")
    spec = None
    run.extra["inputs_shape"] = {"n": d.n, "m": d.m, "T": d.T}
    try:
        if kind == "stab":
            ctrl = synth_stab(xp, xm, um, model)
        elif kind in ("h2", "hinf"):
            spec = _spec(run, d.n, d.m, gamma)
            ctrl = (synth_h2 if kind == "h2" else synth_hinf)(xp, xm, um, model, spec)
        elif kind == "stab-multi":
            if run.cfg.get("noise", {}).get("kind") != "sample-norm":
                raise ConfigError("stab-multi needs noise kind 'sample-norm'")
            ctrl = synth_stab_multi(xp, xm, um, float(run.cfg["noise"]["eps"]))
        else:
            raise ConfigError(f"unknown synthesis kind {kind!r}")
    except NotInformativeError as exc:
        run.finish(verdict="not informative", slater=exc.slater, message=str(exc))
        print(f"not informative: {exc}", file=sys.stderr)
        return EXIT_NOT_INFORMATIVE
    except IndeterminateError as exc:
        run.finish(verdict="indeterminate", message=str(exc))
        print(f"indeterminate: {exc}", file=sys.stderr)
        return EXIT_INDETERMINATE
    run.out.mkdir(parents=True, exist_ok=True)
    save_controller(ctrl, run.out / "controller.json")
    rep = _verify_controller(run, ctrl, xp, xm, um, model, spec) if kind != "stab-multi" else None
    if rep is not None:
        write_json(run.out / "verify.json", rep)
    run.finish(verdict="feasible", slater=ctrl.slater, flags=list(ctrl.flags))
    print(f"K = {np.array2string(ctrl.k, precision=6)}")
    if ctrl.gamma_achieved is not None:
        print(f"guaranteed level {ctrl.gamma_achieved:.6g}")
    if rep is not None and not _passed(rep):
        print("robustness check did not pass on every sample", file=sys.stderr)
        return EXIT_INDETERMINATE
    return EXIT_OK


def cmd_verify(run: Run) -> int:
    d = _trajectory(run)
    xp, xm, um = partition(d)
    model = _noise(run, d.n, d.T)
    sec = run.cfg.get("verify", {})
    if "controller" not in sec:
        raise ConfigError("verify needs 'controller'")
    try:
        ctrl = load_controller(run.path(sec["controller"]))
    except (ValueError, KeyError, json.JSONDecodeError) as exc:
        raise ConfigError(f"controller file: {exc}") from exc
    spec = None
    if ctrl.kind in ("h2", "hinf"):
        spec = _spec(run, d.n, d.m, None)
    rep = _verify_controller(run, ctrl, xp, xm, um, model, spec)
    run.out.mkdir(parents=True, exist_ok=True)
    write_json(run.out / "verify.json", rep)
    ok = _passed(rep)
    run.finish(verdict="passed" if ok else "failed")
    print(f"lyapunov {rep['pass_lyapunov']}/{rep['samples']}, spectral {rep['pass_spectral']}/{rep['samples']}")
    return EXIT_OK if ok else EXIT_INDETERMINATE


def cmd_slemma(run: Run) -> int:
    sec = run.section("slemma")
    try:
        mmat, nmat = run.matrix(sec["m"]), run.matrix(sec["n"])
        k = int(sec["k"])
        m, n = QmiForm(mmat, k), QmiForm(nmat, k)
    except KeyError as exc:
        raise ConfigError(f"slemma needs {exc}") from exc
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    form = sec.get("form", "nonstrict")
    if form == "structured":
        cert = find_multiplier_structured(m, n)
    else:
        cert = find_multiplier(m, n, form)
    verdict = {"form": form, "preconditions": {t: check_theorem_preconditions(m, n, t) for t in ("T5", "T6", "C2")}}
    out = io.StringIO()
    wr = csv.writer(out)
    if cert is not None:
        verdict.update(certificate=True, alpha=cert.alpha, beta=cert.beta, margin=cert.margin)
        wr.writerow(["alpha", "beta", "margin"])
        # beta is only searched by the structured form; leave the cell empty otherwise
        wr.writerow([repr(cert.alpha), "" if cert.beta is None else repr(cert.beta), repr(cert.margin)])
    else:
        verdict["certificate"] = False
        strict = "strict" if form != "nonstrict" else "nonstrict"
        try:
            z = falsify_implication(m, n, int(sec.get("budget", 10_000)), run.seed or 0, strictness=strict)
        except InconclusiveSampling as exc:
            z = None
            verdict["sampling"] = str(exc)
        verdict["counterexample"] = z
        if z is not None:
            wr.writerows([[repr(float(v)) for v in row] for row in z])
    sys.stdout.write(out.getvalue())
    run.out.mkdir(parents=True, exist_ok=True)
    write_json(run.out / "report.json", verdict)
    run.finish()
    return EXIT_OK


def _write_plot(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(header)
        for r in rows:
            wr.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in r])


def cmd_exp(run: Run, name: str) -> int:
    seed = run.need_seed()
    sec = run.cfg.get("experiment", {})
    run.out.mkdir(parents=True, exist_ok=True)
    if name == "sweep":
        rep = experiments.exp_stabilization_sweep(seed, int(sec.get("trials", 100)))
        rows = [(r["eps"], r["success_pct"], r["slater"], r["outcomes"]["feasible"]) for r in rep["rows"]]
        _write_plot(run.out / "plot.csv", ["eps", "success_pct", "slater_count", "feasible_count"], rows)
    elif name == "aircraft":
        rep = experiments.exp_aircraft_h2(seed)
        _write_plot(run.out / "plot.csv", ["i", "achieved_sq", "benchmark_sq"], rep["plot"])
    elif name == "comparison":
        rep = experiments.exp_comparison(seed)
    else:
        raise ConfigError(f"unknown experiment {name!r}; choose sweep, aircraft or comparison")
    runtime = rep.pop("runtime_s")
    write_json(run.out / "report.json", rep)
    run.finish(experiment=name, experiment_runtime_s=runtime)
    print(json.dumps(_clean(_summary(name, rep)), indent=2))
    return EXIT_OK


def _summary(name: str, rep: dict) -> dict:
    if name == "sweep":
        return {r["eps"]: f"{r['success_pct']:.0f}% stabilizing, Slater {r['slater']}/{r['trials']}"
                for r in rep["rows"]}
    if name == "aircraft":
        return {"gamma_min": rep["benchmark"]["gamma_min"],
                "prefixes": {r["i"]: r.get("achieved_sq", r["status"]) for r in rep["prefixes"]},
                "variants": [(v["sigma"], v["bound"], v.get("achieved_sq", v["status"]))
                             for v in rep.get("variants", [])]}
    return {"verdicts": rep["verdicts"], "K": rep["ours"]["K"]}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="noisy-synth", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON configuration file")
        p.add_argument("--seed", type=int, help="random seed (overrides the config)")
        p.add_argument("--out", help="output directory (default: out)")
        p.add_argument("-v", "--verbose", action="store_true")

    common(sub.add_parser("simulate", help="simulate a system and write a trajectory CSV"))
    common(sub.add_parser("synth", help="design a controller from a trajectory"))
    common(sub.add_parser("verify", help="check a controller on sampled consistent systems"))
    p = sub.add_parser("slemma", help="search a multiplier or a counterexample for two QMIs")
    p.add_argument("action", nargs="?", default="check", choices=["check"])
    common(p)
    p = sub.add_parser("exp", help="run a seeded experiment: sweep, aircraft or comparison")
    p.add_argument("name")
    common(p)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        run = Run(args)
        if args.command == "simulate":
            return cmd_simulate(run)
        if args.command == "synth":
            return cmd_synth(run)
        if args.command == "verify":
            return cmd_verify(run)
        if args.command == "slemma":
            return cmd_slemma(run)
        return cmd_exp(run, args.name)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ArithmeticError, RuntimeError) as exc:
        print(f"indeterminate: {exc}", file=sys.stderr)
        return EXIT_INDETERMINATE


if __name__ == "__main__":
    sys.exit(main())
