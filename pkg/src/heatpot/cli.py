"""Command-line driver: ``heatpot <command> [options]``.

Every command writes a canonical JSON report (and CSV traces where useful)
to ``--out``, ``$HEATPOT_OUTPUT_DIR`` or ``./heatpot-out``, and prints the
report to stdout.  Exit status: 0 pass, 2 certified failure, 1 usage error.
"""
import argparse
import json
import math
import os
import sys
import time
from fractions import Fraction

import numpy as np

from . import __version__, blowup, kernel, lab, regions
from ._backend import BACKEND
from .errors import DataError, DomainError, ParameterError, QuadratureError, ScheduleError
from .field import GridFunction, GridSpec
from .potential import DEFAULT_TOL, SlabSpec, heat_potential, maximal_M, maximal_Mhat
from .report import dumps, emit_report

EXIT_PASS, EXIT_USAGE, EXIT_FAIL = 0, 1, 2

CHECKS = ("layer-cake", "hedberg", "hedberg-split", "sobolev", "maximal-strong", "weak-maximal",
          "nonlinear", "slab-scaling")

DEFAULTS = {
    "classify": {"n": 1, "lambda": None, "sigma": None},
    "bounds": {"n": 1, "lambda": None, "sigma": None},
    "potential": {"n": 1, "alpha": 2.0, "family": "bump_sums", "member": 0, "grid_out": None},
    "maximal": {"n": 1, "kind": "E", "family": "bump_sums", "member": 0, "grid_out": None},
    "blowup": {"region": None, "n": 1, "lambda": None, "sigma": None, "phi": "t", "phi_table": None,
               "bumps": None, "samples": None, "snapshot": False},
    "rates": {"n": 1, "input": None, "window": None, "expect": None, "tolerance": 1e-3},
    "constants": {"n": 1},
}

CHECK_DEFAULTS = {
    "layer-cake": {"trials": 100},
    "hedberg": {"n": 1, "alpha": 2.0, "p": 1.0, "count": 20, "family": "bump_sums"},
    "hedberg-split": {"n": 1, "alpha": 2.0, "p": 1.0, "count": 20, "family": "bump_sums"},
    "sobolev": {"n": 1, "alpha": 2.0, "p": 1.25, "count": 20, "family": "bump_sums"},
    "maximal-strong": {"n": 1, "p": 2.0, "count": 20, "family": "bump_sums"},
    "weak-maximal": {"n": 1, "count": 10, "points": 32, "family": "bump_sums"},
    "nonlinear": {"n": 1, "alpha": 2.0, "beta": 2.0, "sigma": 3.0, "r": 1.0, "count": 20,
                  "family": "bump_sums"},
    "slab-scaling": {"n": 1, "alpha": 2.0, "p": 2.0, "delta": 0.0, "slab": [0.25, 0.75],
                     "family": "bump_sums", "member": 0},
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def number(text):
    """Integers and a/b stay exact; anything else is a float."""
    if isinstance(text, (int, Fraction)):
        return Fraction(text)
    if isinstance(text, float):
        return text
    text = str(text).strip()
    try:
        return Fraction(text) if "/" in text or text.lstrip("+-").isdigit() else float(text)
    except (ValueError, ZeroDivisionError) as exc:
        raise UsageError(f"not a number: {text!r}") from exc


def _real(v):
    return float(number(v))


def build_parser():
    common = argparse.ArgumentParser(add_help=False, argument_default=argparse.SUPPRESS)
    common.add_argument("--config", help="JSON file of parameters; flags override it")
    common.add_argument("--out", help="output directory")
    common.add_argument("--seed", type=int)
    common.add_argument("--tol", type=float, help="quadrature tolerance")

    p = _Parser(prog="heatpot", description="Heat potentials, heat-ball maximal functions and "
                "coupled heat inequalities.")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def cmd(name, help_):
        return sub.add_parser(name, help=help_, parents=[common], argument_default=argparse.SUPPRESS)

    for name, help_ in (("classify", "region of an exponent pair"),
                        ("bounds", "predicted pointwise bounds for an exponent pair")):
        c = cmd(name, help_)
        c.add_argument("--n", type=int)
        c.add_argument("--lambda", dest="lambda", type=number)
        c.add_argument("--sigma", type=number)

    c = cmd("potential", "heat potential of a corpus function")
    c.add_argument("--n", type=int)
    c.add_argument("--alpha", type=_real)
    c.add_argument("--family", choices=lab.FAMILIES)
    c.add_argument("--member", type=int)
    c.add_argument("--grid-out", dest="grid_out")

    c = cmd("maximal", "heat-ball (E) or cylinder (Q) maximal function of a corpus function")
    c.add_argument("--n", type=int)
    c.add_argument("--kind", choices=("E", "Q"))
    c.add_argument("--family", choices=lab.FAMILIES)
    c.add_argument("--member", type=int)
    c.add_argument("--grid-out", dest="grid_out")

    c = cmd("check", "run an inequality check")
    c.add_argument("name", choices=CHECKS)
    c.add_argument("--n", type=int)
    for flag in ("alpha", "beta", "sigma", "r", "p", "delta"):
        c.add_argument(f"--{flag}", type=_real)
    c.add_argument("--count", type=int)
    c.add_argument("--trials", type=int)
    c.add_argument("--points", type=int)
    c.add_argument("--member", type=int)
    c.add_argument("--family", choices=lab.FAMILIES)
    c.add_argument("--slab", type=_real, nargs=2, metavar=("A", "B"))

    c = cmd("blowup", "build and certify a counterexample construction")
    c.add_argument("--region", choices=("B", "C"))
    c.add_argument("--n", type=int)
    c.add_argument("--lambda", dest="lambda", type=number)
    c.add_argument("--sigma", type=number)
    c.add_argument("--phi", choices=("t", "sqrt", "log", "custom-table"))
    c.add_argument("--phi-table", dest="phi_table", help="CSV of t,phi for --phi custom-table")
    c.add_argument("--bumps", type=int)
    c.add_argument("--samples", type=int)
    c.add_argument("--snapshot", action="store_true")

    c = cmd("rates", "fit a blow-up rate exponent")
    c.add_argument("--n", type=int)
    c.add_argument("--input", help="CSV with columns t and value; default: the heat kernel on [-1,1]^n")
    c.add_argument("--window", type=int)
    c.add_argument("--expect", type=_real)
    c.add_argument("--tolerance", type=float)

    c = cmd("constants", "geometric and construction constants for dimension n")
    c.add_argument("--n", type=int)
    return p


def resolve(ns):
    """Defaults, then the config file, then explicit flags."""
    given = dict(vars(ns))
    command = given.pop("command")
    name = given.pop("name", None)
    cfg = dict(CHECK_DEFAULTS[name] if command == "check" else DEFAULTS[command])
    cfg.update({"seed": 0, "tol": None, "out": None})
    path = given.pop("config", None)
    if path:
        try:
            with open(path) as fh:
                loaded = json.load(fh)
        except (OSError, ValueError) as exc:
            raise UsageError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(loaded, dict):
            raise UsageError("config file must hold a JSON object")
        for k, v in loaded.items():
            cfg[k.replace("-", "_")] = v
    cfg.update(given)
    for key in ("lambda", "sigma"):
        if cfg.get(key) is not None:
            cfg[key] = number(cfg[key])
    return command, name, cfg


def _require(cfg, *keys):
    missing = [k for k in keys if cfg.get(k) is None]
    if missing:
        raise UsageError("missing required option(s): " + ", ".join("--" + k.replace("_", "-") for k in missing))


def _corpus(cfg, count=None):
    n = int(cfg["n"])
    spec = lab.CorpusSpec.box(n, seed=int(cfg["seed"]), count=int(count or cfg.get("count", 1)),
                              family=cfg.get("family", "bump_sums"))
    return spec, lab.generate_corpus(spec)


def _tol(cfg):
    return cfg["tol"] if cfg.get("tol") is not None else DEFAULT_TOL


# --- commands ------------------------------------------------------------------

def run_classify(cfg):
    _require(cfg, "lambda", "sigma")
    v = regions.classify(int(cfg["n"]), cfg["lambda"], cfg["sigma"])
    return v.to_dict(), True, None


def run_bounds(cfg):
    _require(cfg, "lambda", "sigma")
    n = int(cfg["n"])
    v = regions.classify(n, cfg["lambda"], cfg["sigma"])
    out = v.to_dict()
    out["critical_sigma"] = float(regions.critical_sigma(n, max(cfg["lambda"], cfg["sigma"])))
    out["lambda_threshold"] = (n + 2) / n
    out["heat_kernel_exponent"] = n
    return out, True, None


def run_potential(cfg):
    n, alpha = int(cfg["n"]), float(cfg["alpha"])
    kernel.check_alpha(alpha, n)
    spec, corpus = _corpus(cfg, count=int(cfg["member"]) + 1)
    f = corpus[int(cfg["member"])].f
    window = lab.potential_window(f)
    u = heat_potential(f, alpha, window, _tol(cfg))
    X, T = window.mesh()
    i = np.unravel_index(int(np.argmax(u.samples)), u.samples.shape)
    if cfg.get("grid_out"):
        u.save(cfg["grid_out"])
    return {"n": n, "alpha": alpha, "member": corpus[int(cfg["member"])].id, "corpus": spec.to_dict(),
            "window": window.to_dict(), "source_l1": corpus[int(cfg["member"])].l1,
            "max": float(u.samples[i]), "argmax": [*X[i].tolist(), float(T[i])],
            "mass": float(u.samples.sum() * window.cell_volume)}, True, None


def run_maximal(cfg):
    n = int(cfg["n"])
    spec, corpus = _corpus(cfg, count=int(cfg["member"]) + 1)
    member = corpus[int(cfg["member"])]
    f = lab.padded(member.f)
    op = maximal_M if cfg["kind"] == "E" else maximal_Mhat
    m = op(f, f.spec)
    if cfg.get("grid_out"):
        m.save(cfg["grid_out"])
    return {"n": n, "kind": cfg["kind"], "member": member.id, "corpus": spec.to_dict(),
            "grid": f.spec.to_dict(), "max": float(m.samples.max()), "source_max": member.linf,
            "dominates_source": bool(np.all(m.samples >= f.samples * (1 - 1e-12)))}, True, None


def run_check(name, cfg):
    tol = _tol(cfg)
    n = int(cfg.get("n", 1))
    if name == "layer-cake":
        rep = lab.check_layer_cake(int(cfg["trials"]), int(cfg["seed"]))
    elif name == "slab-scaling":
        _, corpus = _corpus(cfg, count=int(cfg["member"]) + 1)
        p = float(cfg["p"])
        inv_q = 1 / p - float(cfg["delta"])
        if inv_q <= 0:
            raise ParameterError("requires 1/p - delta > 0 so that q is finite")
        a, b = cfg["slab"]
        rep = lab.check_slab_scaling(corpus[int(cfg["member"])].f, float(cfg["alpha"]), p, 1 / inv_q,
                                     SlabSpec(a, b), tol=tol)
    else:
        _, corpus = _corpus(cfg)
        if name == "hedberg":
            rep = lab.check_hedberg(corpus, n, float(cfg["alpha"]), float(cfg["p"]), tol=tol)
        elif name == "hedberg-split":
            rep = lab.check_hedberg_split(corpus, n, float(cfg["alpha"]), float(cfg["p"]), tol=tol)
        elif name == "sobolev":
            rep = lab.check_sobolev(corpus, n, float(cfg["alpha"]), float(cfg["p"]), tol=tol)
        elif name == "maximal-strong":
            rep = lab.check_maximal_strong(corpus, n, float(cfg["p"]))
        elif name == "weak-maximal":
            rep = lab.check_weak_maximal(corpus, n, int(cfg["points"]))
        else:
            rep = lab.check_nonlinear(corpus, n, float(cfg["alpha"]), float(cfg["beta"]), float(cfg["sigma"]),
                                      float(cfg["r"]), tol=tol)
    return rep.to_dict(), rep.passed, rep.csv_rows()


def _phi(cfg, vanishing):
    if cfg["phi"] == "custom-table":
        _require(cfg, "phi_table")
        return blowup.phi_from_table(cfg["phi_table"])
    return blowup.phi_family(cfg["phi"], vanishing)


TRACE_HEADER = ("t", "value", "predicted_exponent", "defeat_ratio")


def _trace_rows(trace, key):
    return [TRACE_HEADER] + [(r[key], r["value"], "" if r["predicted_exponent"] is None
                              else r["predicted_exponent"], r["defeat_ratio"]) for r in trace]


def run_blowup(cfg, outdir):
    _require(cfg, "region", "lambda")
    # four bumps for construction A, three windows for construction B
    n, seed = int(cfg["n"]), int(cfg["seed"])
    J = int(cfg["bumps"] or (4 if cfg["region"] == "B" else 3))
    if cfg["region"] == "B":
        if cfg.get("sigma") is not None and regions.classify(n, cfg["lambda"], cfg["sigma"]).region != "B":
            raise ParameterError("requires (lambda, sigma) in region B: lambda > (n+2)/n and "
                                 "sigma < 2/n + (n+2)/(n lambda)")
        sched = blowup.build_schedule_A(n, float(cfg["lambda"]), _phi(cfg, True), J)
        out = blowup.construct_A(sched)
        rep = blowup.certify_A(out, samples=int(cfg["samples"] or 10_000), seed=seed)
        rows = _trace_rows(rep["trace"], "T")
    else:
        _require(cfg, "sigma")
        sched = blowup.build_schedule_B(n, cfg["lambda"], cfg["sigma"], _phi(cfg, False), J)
        out = blowup.construct_B(sched)
        rep = blowup.certify_B(out, samples=int(cfg["samples"] or 1000), seed=seed)
        rows = _trace_rows(rep["trace"], "a")
    rep["region"] = cfg["region"]
    if cfg.get("snapshot"):
        rep["snapshots"] = _snapshots(out, outdir, cfg["region"])
    return rep, rep["pass"], rows


def _snapshots(out, outdir, region, cells=16):
    """Grid files of u around each bump top (B) or window centre (C)."""
    s = out.schedule
    n = s.n
    files = []
    for j in range(s.J_count):
        if region == "B":
            w, tc = math.sqrt(s.r[j]), s.T[j] - s.r[j] / 2
            half_t = s.r[j] / 2
        else:
            win = s.windows[j]
            w, tc = math.sqrt(4 * (win.a - win.t)), 0.5 * (win.a + win.t)
            half_t = 0.45 * (win.a - win.t)
        spec = GridSpec([-w] * n, [w] * n, tc - half_t, tc + half_t, 2 * w / cells, 2 * half_t / cells)
        X, T = spec.mesh()
        pts = np.concatenate([X.reshape(-1, n), T.reshape(-1, 1)], axis=1)
        vals = out.u(pts).reshape(spec.shape)
        path = os.path.join(outdir, f"blowup-{region}-u-{j + 1}.grid")
        GridFunction(spec, vals).save(path)
        files.append(os.path.basename(path))
    return files


def run_rates(cfg):
    n = int(cfg["n"])
    if cfg.get("input"):
        try:
            data = np.genfromtxt(cfg["input"], delimiter=",", names=True)
        except OSError as exc:
            raise UsageError(f"cannot read {cfg['input']}: {exc}") from exc
        names = data.dtype.names or ()
        col = "value" if "value" in names else "m" if "m" in names else None
        if "t" not in names or col is None:
            raise DataError("rate input needs columns 't' and 'value'")
        t, m = np.atleast_1d(data["t"]), np.atleast_1d(data[col])
        source = os.path.basename(cfg["input"])
    else:
        # sup of the heat kernel over [-1, 1]^n, attained at x = 0
        t = np.geomspace(1e-1, 1e-8, 24)
        axis = np.linspace(-1, 1, 41)
        K = np.stack(np.meshgrid(*[axis] * n, indexing="ij"), axis=-1).reshape(-1, n)
        m = np.array([kernel.heat_kernel(K, tt).max() for tt in t])
        source = "heat_kernel"
    fit = regions.fit_rate(t, m, cfg.get("window"))
    expect = cfg.get("expect")
    if expect is None and source == "heat_kernel":
        expect = n
    ok = True if expect is None else abs(fit.exponent - float(expect)) <= float(cfg["tolerance"])
    return {"n": n, "source": source, "exponent": fit.exponent, "r_squared": fit.r_squared,
            "window": fit.window, "expected": expect, "samples": len(t)}, ok, \
        [("t", "value")] + list(zip(t.tolist(), m.tolist()))


def run_constants(cfg):
    n = kernel.check_dimension(int(cfg["n"]))
    g = kernel.geometry_constants(n)
    return {"n": n, "r0": g.r0, "r0_safe": g.r0_safe, "vol_E1": g.vol_E1, "vol_E1_closed_form":
            kernel.vol_E1_closed_form(n), "vol_Q1": g.vol_Q1, "vol_P1": g.vol_P1,
            "offdiag_C": g.offdiag_C, "maximal_domination": g.maximal_domination,
            "alpha_n": blowup.alpha_n(n), "psi_integral": blowup.psi_integral(n),
            "psi_kernel_integral": blowup.psi_kernel_integral(n),
            "heat_floor_min": blowup.heat_floor_min(n), "critical_beta": (n + 2) / n,
            "lambda_threshold": (n + 2) / n}, True, None


def _outdir(cfg):
    return cfg.get("out") or os.environ.get("HEATPOT_OUTPUT_DIR") or "heatpot-out"


def run(command, name, cfg):
    """Execute one resolved command; returns (report, passed, csv_rows, outdir)."""
    outdir = _outdir(cfg)
    os.makedirs(outdir, exist_ok=True)
    if command == "check":
        body, ok, rows = run_check(name, cfg)
    elif command == "blowup":
        body, ok, rows = run_blowup(cfg, outdir)
    else:
        body, ok, rows = globals()["run_" + command](cfg)
    public = {k: v for k, v in cfg.items() if k not in ("out", "config")}
    report = {"command": command if name is None else f"check {name}", "config": public,
              "result": body, "pass": bool(ok)}
    return report, ok, rows, outdir


def main(argv=None):
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
        command, name, cfg = resolve(ns)
        started = time.perf_counter()
        try:
            report, ok, rows, outdir = run(command, name, cfg)
        except (ScheduleError, QuadratureError) as exc:
            report = {"command": command, "config": cfg, "error": f"{type(exc).__name__}: {exc}", "pass": False}
            ok, rows, outdir = False, None, _outdir(cfg)
        stem = command if name is None else f"check-{name}"
        if command == "blowup":
            stem = f"blowup-{cfg['region']}"
        emit_report(report, os.path.join(outdir, stem + ".json"), rows,
                    {"seconds": time.perf_counter() - started, "backend": BACKEND, "version": __version__})
    except UsageError as exc:
        print(f"heatpot: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ParameterError, DomainError, DataError, OSError) as exc:
        print(f"heatpot: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    sys.stdout.write(dumps(report))
    return EXIT_PASS if ok else EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
