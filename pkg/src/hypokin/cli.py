"""Command line entry point: hypokin SUBCOMMAND CONFIG [--set key=value ...].

Exit codes: 0 success, 2 invalid configuration, 3 infeasible or uncovered
parameters, 4 numeric failure.
"""
from __future__ import annotations

import argparse
import itertools
import math
import sys
import time
from pathlib import Path

import numpy as np
import pydantic
import yaml

from . import __version__, assumptions, config, emit, lyapunov, propagator, rates, solver
from .errors import DomainError, NumericFailure, RangeError, RejectedInput
from .potential import Box, Quadratic, from_spec

EXIT_OK, EXIT_CONFIG, EXIT_INFEASIBLE, EXIT_NUMERIC = 0, 2, 3, 4
SUBCOMMANDS = ("check", "rate", "certify", "propagator", "simulate", "hypo", "report")


class Infeasible(Exception):
    def __init__(self, message: str, payload: dict | None = None):
        super().__init__(message)
        self.payload = payload or {}


class Run:
    """Shared state of one invocation: config, output directory, timings."""

    def __init__(self, cfg: config.RunConfig):
        self.cfg = cfg
        self.V = from_spec(cfg.potential.spec())
        self.out = Path(cfg.output.dir)
        self.timings: dict[str, float] = {}
        a = cfg.assumption
        self.box = Box.of(a.box.lo, a.box.hi, self.V.n)
        self.resolution = a.resolution

    def path(self, name: str) -> Path:
        return self.out / f"{self.cfg.output.prefix}{name}"

    def timed(self, key, fn, *args, **kw):
        t = time.perf_counter()
        try:
            return fn(*args, **kw)
        finally:
            self.timings[key] = time.perf_counter() - t

    # -- shared pieces -----------------------------------------------------
    @property
    def quadratic(self) -> bool:
        return isinstance(self.V, Quadratic)

    def alpha0(self) -> float:
        a0 = self.V.exact_alpha0()
        if a0 is None:
            from .potential import estimate_alpha0
            a0, _ = estimate_alpha0(self.V, self.box, self.resolution)
        return float(a0)

    def c_pi(self) -> float:
        cp = self.cfg.rate.c_pi
        if cp == "quadratic-auto":
            if not self.quadratic:
                raise RejectedInput("rate.c_pi must be a number for non-quadratic potentials")
            m = self.cfg.model
            return rates.poincare_constant_quadratic(m.nu, m.sigma, self.alpha0())
        return float(cp)

    def fixed_params(self) -> assumptions.HypoParams | None:
        a, m = self.cfg.assumption, self.cfg.model
        if a.c is None and a.tau is None:
            return None
        return assumptions.HypoParams(m.nu, m.sigma, a.c if a.c is not None else 0.0,
                                      a.tau if a.tau is not None else 0.0)

    def condition(self) -> str:
        return assumptions.FULL if self.cfg.assumption.condition == "full" else assumptions.SUFFICIENT

    def certificate(self) -> assumptions.ConditionCertificate:
        p = self.fixed_params()
        if p is not None:
            return assumptions.check_assumption(self.V, self.box, self.resolution, p, self.condition())
        res = self.search()
        if not res.feasible:
            raise Infeasible(res.reason, {"feasible": False, "reason": res.reason, "alpha0": res.alpha0})
        return res.certificate

    def search(self) -> assumptions.FeasibleResult:
        if not hasattr(self, "_search"):
            m = self.cfg.model
            self._search = assumptions.find_feasible(self.V, self.box, self.resolution, m.nu, m.sigma,
                                                     self.c_pi(), epsilon_b=self.cfg.rate.epsilon_b)
        return self._search

    def rate_report(self) -> rates.RateReport:
        p = self.fixed_params()
        if p is not None:
            return rates.decay_rate(p, self.alpha0(), self.c_pi(), self.cfg.rate.epsilon_b,
                                    quadratic=self.quadratic)
        res = self.search()
        if not res.feasible:
            raise Infeasible(res.reason, {"feasible": False, "reason": res.reason, "alpha0": res.alpha0})
        if self.quadratic:
            return rates.decay_rate(res.params, res.alpha0, self.c_pi(), self.cfg.rate.epsilon_b,
                                    quadratic=True)
        return res.rate

    def selection(self, rep: rates.RateReport) -> lyapunov.LyapunovSelection:
        i, m = rep.intermediates, self.cfg.model
        sel = lyapunov.select_gamma_delta(i["a"], i["gamma"], m.nu, m.sigma, rep.alpha0)
        # the rate was derived with the report's delta; keep it
        return lyapunov.LyapunovSelection(sel.a, sel.gamma, i["delta"], sel.eta, sel.mu)


# -- payload builders ---------------------------------------------------------
def cert_json(c: assumptions.ConditionCertificate) -> dict:
    return {"passed": c.passed, "checked_condition": c.checked_condition,
            "worst_point": c.worst_point, "worst_min_eig": c.worst_min_eig, "tol": c.tol,
            "params": {"nu": c.params.nu, "sigma": c.params.sigma, "c": c.params.c, "tau": c.params.tau},
            "box": {"lo": c.box.lo, "hi": c.box.hi}, "resolution": list(c.resolution)}


def rate_json(r: rates.RateReport) -> dict:
    return {"case": r.case_tag, "lambda": r.lam, "two_lambda": r.two_lambda, "c_pi": r.c_pi,
            "alpha0": r.alpha0, "sharp": r.sharp, "intermediates": r.intermediates,
            "params": {"nu": r.params.nu, "sigma": r.params.sigma, "c": r.params.c, "tau": r.params.tau}}


def do_check(run: Run) -> dict:
    cert = run.timed("check", run.certificate)
    out = cert_json(cert)
    emit.write_json(run.path("check.json"), out)
    if not cert.passed:
        raise Infeasible("condition fails on the box", out)
    return out


def do_rate(run: Run) -> dict:
    rep = run.timed("rate", run.rate_report)
    out = rate_json(rep)
    emit.write_json(run.path("rate.json"), out)
    emit.write_csv(run.path("rate.csv"), rates.CSV_COLUMNS, [rep.csv_row()])
    return out


def do_certify(run: Run) -> dict:
    t = time.perf_counter()
    m = run.cfg.model
    rep = run.rate_report()
    sel = run.selection(rep)
    lyap = lyapunov.verify_lyapunov_inequality(run.V, run.box, run.resolution, sel, rep.params,
                                               run.cfg.certify.lyapunov_tol)
    sc = lyapunov.sandwich_constants(sel.a, rep.alpha0, m.nu)
    ok_sw, worst_sw = lyapunov.verify_sandwich(run.V, run.box, run.resolution, sel.a, rep.alpha0, m.nu)
    pts = run.box.grid(run.resolution)
    hn = max(float(np.linalg.norm(run.V.jet(x).hessian + rep.params.c * np.eye(run.V.n))) for x in pts)
    hyp = lyapunov.hypoelliptic_certificate(run.cfg.certify.t0, rep.params, hn, run.V.n)
    run.timings["certify"] = time.perf_counter() - t
    out = {
        "rate": rate_json(rep),
        "selection": {"a": sel.a, "gamma": sel.gamma, "delta": sel.delta, "eta": sel.eta, "mu": sel.mu,
                      "delta_residual": lyapunov.delta_residual(sel.delta, sel.a, sel.gamma, m.nu,
                                                                m.sigma, rep.alpha0)},
        "lyapunov_inequality": cert_json(lyap),
        "sandwich": {"c1": sc.c1, "c2": sc.c2, "passed": ok_sw, "worst_margin": worst_sw},
        "hypoelliptic": {"t0": hyp.t0, "epsilon": hyp.epsilon, "gamma1": hyp.gamma1, "gamma2": hyp.gamma2,
                         "feasible": hyp.feasible, "worst_margin": hyp.worst_margin, "note": hyp.note,
                         "hessnorm_max": hn},
    }
    emit.write_json(run.path("certify.json"), out)
    if not (lyap.passed and ok_sw):
        raise Infeasible("Lyapunov certificate fails on the box", out)
    return out


def propagator_summary(M_inv, nu: float, sigma: float, window) -> tuple[dict, propagator.PropagatorCurve]:
    sysm = propagator.build_ode(M_inv, nu, sigma)
    curve = propagator.norm_curve(sysm)
    rate, deg = propagator.fit_rate(curve, window)
    rep = propagator.classify(M_inv, nu)
    return {"classification": rep.classification, "fitted_rate": rate, "fitted_poly_degree": deg,
            "jordan_size": rep.jordan_size, "alphas": rep.alphas, "window": list(window),
            "positive_stable": sysm.positive_stable,
            "no_invariant_kerD_subspace": sysm.no_invariant_kerD_subspace}, curve


def do_propagator(run: Run) -> dict:
    if not run.quadratic:
        raise RejectedInput("the propagator subcommand needs a quadratic potential")
    m = run.cfg.model
    out, curve = run.timed("propagator", propagator_summary, run.V.M_inv, m.nu, m.sigma,
                           run.cfg.propagator.window)
    emit.write_csv(run.path("propagator.csv"), propagator.CSV_COLUMNS,
                   propagator.curve_rows(curve, m.nu, run.alpha0()))
    emit.write_json(run.path("propagator.json"), out)
    return out


def _init(run: Run, sv: solver.KFPSolver, block: config.InitBlock):
    return sv.init(block.model_dump(exclude_none=True))


def do_simulate(run: Run) -> dict:
    t = time.perf_counter()
    m, s = run.cfg.model, run.cfg.solver
    grid = solver.default_grid(run.V, m.nu, m.sigma, s.nx, s.nv)
    sv = solver.KFPSolver(run.V, m.nu, m.sigma, grid)
    a, gamma, case = None, 0.0, None
    if s.P == "case":
        rep = run.rate_report()
        sel = run.selection(rep)
        a, case = sel.a, rep.case_tag
        gamma = sel.gamma if case in ("c", "d") else 0.0
    if s.dt is None:
        dt = s.T / math.ceil(s.T / sv.stable_dt())
    else:
        dt = s.dt
    h0 = _init(run, sv, s.f0)
    h, series = solver.evolve(sv, h0, s.T, dt, s.sample_every, a, gamma)
    run.timings["simulate"] = time.perf_counter() - t
    emit.write_csv(run.path("series.csv"), solver.SERIES_COLUMNS, series.rows())
    if s.snapshot:
        solver.save_snapshot(run.path("snapshot.bin"), sv, h)
    mass = series.column("mass")
    out = {"fitted_rate": solver.fit_decay(series), "dt": dt, "grid": {"nx": s.nx, "nv": s.nv,
           "Lx": grid.Lx, "Lv": grid.Lv}, "P": s.P, "case": case, "a": a, "gamma": gamma,
           "mass_drift": float(np.max(np.abs(mass - mass[0]))),
           "series": str(run.path("series.csv"))}
    emit.write_json(run.path("simulate.json"), out)
    return out


def do_hypo(run: Run) -> dict:
    t = time.perf_counter()
    m, hb = run.cfg.model, run.cfg.solver.hypo
    grid = solver.default_grid(run.V, m.nu, m.sigma, hb.nx, hb.nv)
    sv = solver.KFPSolver(run.V, m.nu, m.sigma, grid)
    res = solver.hypoelliptic_experiment(sv, _init(run, sv, hb.f0), hb.window, hb.dt)
    run.timings["hypo"] = time.perf_counter() - t
    out = {"slope_x": res["slope_x"], "slope_v": res["slope_v"], "window": list(hb.window),
           "dt": hb.dt, "grid": {"nx": hb.nx, "nv": hb.nv}}
    emit.write_json(run.path("hypo.json"), out)
    return out


SWEEP_COLUMNS = ["nu", "alpha0", "case", "lambda", "propagator_rate", "classification", "relative_gap"]


def sweep_rows(run: Run) -> list[dict]:
    sw = run.cfg.report.sweep
    if not (sw.alpha0 or sw.nu):
        return []
    if not run.quadratic:
        raise RejectedInput("sweeps are defined for quadratic potentials")
    n, m = run.V.n, run.cfg.model
    rows = []
    for nu, a0 in itertools.product(sw.nu or [m.nu], sw.alpha0 or [run.alpha0()]):
        M_inv = a0 * np.eye(n)
        V = Quadratic(M_inv)
        c_pi = rates.poincare_constant_quadratic(nu, m.sigma, a0)
        res = assumptions.find_feasible(V, run.box, run.resolution, nu, m.sigma, c_pi,
                                        epsilon_b=run.cfg.rate.epsilon_b)
        lam, case = float("nan"), "infeasible"
        if res.feasible:
            rep = rates.decay_rate(res.params, a0, c_pi, run.cfg.rate.epsilon_b, quadratic=True)
            lam, case = rep.lam, rep.case_tag
        summ, _ = propagator_summary(M_inv, nu, m.sigma, run.cfg.propagator.window)
        pr = summ["fitted_rate"]
        rows.append({"nu": nu, "alpha0": a0, "case": case, "lambda": lam, "propagator_rate": pr,
                     "classification": summ["classification"],
                     "relative_gap": (pr - lam) / lam if lam == lam else None})
    return rows


def do_report(run: Run) -> dict:
    bundle = {"version": __version__, "config": run.cfg.model_dump(mode="json"), "sections": {}}
    steps = {"check": do_check, "rate": do_rate, "certify": do_certify, "propagator": do_propagator,
             "simulate": do_simulate, "hypo": do_hypo}
    for name in run.cfg.report.include:
        if name == "propagator" and not run.quadratic:
            continue
        try:
            bundle["sections"][name] = steps[name](run)
        except Infeasible as e:
            bundle["sections"][name] = {"error": str(e), **e.payload}
    rows = run.timed("sweep", sweep_rows, run)
    if rows:
        emit.write_csv(run.path("sweep.csv"), SWEEP_COLUMNS, rows)
        bundle["sweep"] = rows
    r, p = bundle["sections"].get("rate"), bundle["sections"].get("propagator")
    if r and p and "lambda" in r:
        bundle["consistency"] = {"lambda": r["lambda"], "propagator_rate": p["fitted_rate"],
                                 "relative_gap": (p["fitted_rate"] - r["lambda"]) / r["lambda"]}
    emit.write_json(run.path("report.json"), bundle)
    emit.write_json(run.path("timings.json"), run.timings)
    return bundle


COMMANDS = {"check": do_check, "rate": do_rate, "certify": do_certify, "propagator": do_propagator,
            "simulate": do_simulate, "hypo": do_hypo, "report": do_report}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="hypokin", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"hypokin {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in SUBCOMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("config", help="YAML or JSON run configuration")
        sp.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                        help="override a config entry, e.g. model.nu=2")
        sp.add_argument("--out", help="output directory (overrides output.dir)")
        sp.add_argument("--quiet", action="store_true", help="do not echo the result JSON")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        overrides = list(args.overrides)
        if args.out:
            overrides.append(f"output.dir={args.out}")
        cfg = config.load(args.config, overrides)
        run = Run(cfg)
    except pydantic.ValidationError as e:
        print(f"invalid configuration:\n{e}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, ValueError, yaml.YAMLError, KeyError) as e:
        print(f"invalid configuration: {e}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        result = COMMANDS[args.command](run)
        if args.command != "report":
            emit.write_json(run.path(f"{args.command}.timings.json"), run.timings)
    except Infeasible as e:
        print(f"infeasible: {e}", file=sys.stderr)
        sys.stdout.write(emit.dumps(e.payload))
        return EXIT_INFEASIBLE
    except rates.UncoveredRegion as e:
        print(f"infeasible: {e}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (NumericFailure, DomainError, RangeError, np.linalg.LinAlgError) as e:
        print(f"numeric failure in {args.command}: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except RejectedInput as e:
        print(f"invalid configuration: {e}", file=sys.stderr)
        return EXIT_CONFIG
    if not args.quiet:
        sys.stdout.write(emit.dumps(result))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
