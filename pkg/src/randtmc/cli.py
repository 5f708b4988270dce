"""Command line front end: run module pipelines on a config and emit JSON and CSV reports.

Usage::

    randtmc <subcommand> [--config PATH] [--fixture NAME] [--out DIR] [--threads K] [--seed S]

Subcommands: check-bip, pressure, rpf, conformal, gibbs, matrix-pf, stationary, all.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import time
from functools import cached_property
from pathlib import Path

import numpy as np

from . import config as cfgmod
from .base import weight_of
from .errors import AssertionFailure, BipFailure, ConfigError, RTMCError
from .matrix import (
    MatrixCocycle,
    backward_product_convergence,
    check_summable_bip,
    random_pf,
    rank_one_convergence,
    reversed_system,
    stationary_distribution,
    time_reversal_residual,
)
from .potential import check_conditions
from .shift import verify_bip
from .spectral import (
    conformal_measure,
    conformality_residual,
    default_schedule,
    eigenfunction,
    exactness_convergence,
    gibbs_report,
    lambda_quotient,
    log_lambda_average,
    recurrence_report,
)
from .transfer import AnchorFamily, CylinderFunction, pressure, weight_matrices

SUBCOMMANDS = ("check-bip", "pressure", "rpf", "conformal", "gibbs", "matrix-pf", "stationary", "all")
CYLINDER_CAP = 1 << 12


def _num(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple, set, frozenset)):
        items = sorted(x) if isinstance(x, (set, frozenset)) else x
        return [_jsonable(v) for v in items]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.bool_, bool)):
        return bool(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if np.isfinite(x) else str(x)
    return x


class Session:
    """One experiment run; intermediate results are computed once and shared across stages."""

    def __init__(self, exp: cfgmod.Experiment, out: Path):
        self.exp = exp
        self.out = out
        self.report: dict = {}
        self.assertions: dict = {}
        self.csv_files: list[str] = []

    # -- plumbing ---------------------------------------------------------

    def write_csv(self, name: str, header: list[str], rows) -> None:
        self.out.mkdir(parents=True, exist_ok=True)
        with open(self.out / name, "w", newline="") as fh:
            wr = csv.writer(fh, lineterminator="\n")
            wr.writerow(header)
            for row in rows:
                wr.writerow([c if isinstance(c, str) else _num(c) for c in row])
        if name not in self.csv_files:
            self.csv_files.append(name)

    def assert_(self, name: str, ok: bool, value=None, tol=None) -> None:
        self.assertions[name] = {"ok": bool(ok), "value": value, "tol": tol}

    @property
    def run(self) -> dict:
        return self.exp.run

    @property
    def shift(self):
        return self.exp.shift

    @property
    def pot(self):
        return self.exp.potential

    # -- shared intermediate results ---------------------------------------

    @cached_property
    def anchors(self) -> AnchorFamily:
        return AnchorFamily(self.shift, self.run["a"])

    @cached_property
    def pressure(self):
        r = self.run
        return pressure(self.shift, self.pot, self.anchors, r["a"], r["N"], r["n_max"], q=r["q"])

    @cached_property
    def lam(self):
        P = self.pressure
        if not np.isfinite(P.value):
            raise AssertionFailure("pressure is -inf; the eigenvalue schedule is undefined")
        sched = default_schedule(P.value, J=self.run["levels"], gap=P.gap)
        return lambda_quotient(self.shift, self.pot, self.anchors, self.target, P.value, schedule=sched, gap=P.gap)

    @cached_property
    def target(self) -> frozenset:
        """States where the power series counts returns: ``run.target`` if given, else Omega*."""
        given = self.run.get("target")
        if given is None:
            return frozenset(self.pressure.omega_star)
        bad = [w for w in given if not 0 <= w < self.exp.base.n_states
               or self.run["a"] >= self.shift.alphabet_size(w)]
        if bad:
            raise ConfigError(f"run.target state {bad[0]} is not a base state carrying symbol a")
        return frozenset(given)

    @cached_property
    def mu(self):
        return self._series_measure(self.run["depth"])

    def _series_measure(self, d: int):
        L = self.lam
        s = L.s[-1]
        return conformal_measure(self.shift, self.pot, self.anchors, L.lam, L.P_hat, d=d,
                                 target=self.target, s=s)

    @cached_property
    def eig(self):
        L = self.lam
        return eigenfunction(self.shift, self.pot, self.mu, L.lam, L.P_hat)

    @cached_property
    def cocycle(self) -> MatrixCocycle:
        if self.exp.cocycle is not None:
            return self.exp.cocycle
        return MatrixCocycle(self.exp.base, tuple(weight_matrices(self.shift, self.pot)))

    # -- stages -------------------------------------------------------------

    def check_bip(self) -> None:
        cond = check_conditions(self.pot, self.shift, self.exp.cert)
        self.report["conditions"] = cond.as_dict()
        if self.exp.cert is None:
            self.report["bip"] = {"ok": False, "reason": "no certificate found by search"}
            raise BipFailure("no big images/preimages certificate could be found")
        cert = self.exp.cert
        self.report["certificate"] = {
            "omega_bi": sorted(cert.omega_bi), "omega_bp": sorted(cert.omega_bp),
            "I_bi": sorted(cert.global_bi), "I_bp": sorted(cert.global_bp),
            "measure_bi": weight_of(self.exp.base, cert.omega_bi),
            "measure_bp": weight_of(self.exp.base, cert.omega_bp),
        }
        rep = verify_bip(self.shift, cert)
        self.report["bip"] = {"ok": rep.ok, **rep.as_dict()}
        if not rep.ok:
            first = (rep.image_failures or rep.preimage_failures)[0]
            kind = "image" if rep.image_failures else "preimage"
            raise BipFailure(f"certificate rejected: {kind} witness (state, symbol) = {tuple(first)}")

    def pressure_stage(self) -> None:
        P = self.pressure
        self.report["pressure"] = P.as_dict()
        rows = []
        for k, n in enumerate(P.n):
            diff = abs(P.logZ_over_n[k] - P.logCZ_over_n[k])
            rows.append((int(n), bool(P.in_return_set[k]), P.logZ_over_n[k], P.logCZ_over_n[k],
                         diff if np.isfinite(diff) else float("nan")))
        self.write_csv("pressure.csv", ["n", "in_return_set", "logZ_over_n", "logCZ_over_n", "gap"], rows)
        self.assert_("pressure_estimators_agree", True, abs(P.value_Z - P.value_CZ))

    def _lambda_stage(self) -> None:
        L = self.lam
        self.report["lambda"] = L.as_dict()
        avg = log_lambda_average(self.shift, L.lam)
        tol = 5 * L.gap + 1e-12
        self.report["lambda"]["mean_log_lambda"] = avg
        self.assert_("quotient_sandwich", True, 0, 0)
        self.assert_("eigenvalue_normalization", abs(avg) <= tol, abs(avg), tol)
        self.write_csv("lambda.csv", ["state", "lambda"], [(w, x) for w, x in enumerate(L.lam)])

    def rpf(self) -> None:
        self._lambda_stage()
        L, mu, eig = self.lam, self.mu, self.eig
        tol = self.run["residual_tol"]
        res, where = conformality_residual(self.shift, self.pot, mu, L.lam, L.P_hat)
        self.assert_("conformality_residual", res < tol, res, tol)
        self.assert_("eigenfunction_residual", eig.residual < tol, eig.residual, tol)
        omega = self.pressure.omega
        f = CylinderFunction.indicator(self.shift, omega, (self.run["a"],))
        dec = exactness_convergence(self.shift, self.pot, mu, eig, f, self.run["exact_n"])
        self.report["rpf"] = {
            "conformality_residual": res, "witness": where, "eigen_residual": eig.residual,
            "lambda_reestimate": eig.lam_reestimate, "exactness_rate": dec.rate,
            "exactness_final": float(dec.deviation[-1]), "omega": omega,
        }
        self.write_csv("rpf_measure.csv", ["state", "cylinder", "mass"], mu.rows())
        self.write_csv("eigenfunction.csv", ["state", "index", "value"],
                       [(w, i, v) for w, h in enumerate(eig.h) for i, v in enumerate(h)])
        self.write_csv("exactness.csv", ["n", "deviation"], zip(dec.n, dec.deviation))

    def conformal(self) -> None:
        if "lambda" not in self.report:
            self._lambda_stage()
        L, mu = self.lam, self.mu
        dual = conformal_measure(self.shift, self.pot, None, L.lam, L.P_hat, d=mu.depth, method="dual")
        tv = float(mu.tv_distance(dual).max())
        res, where = conformality_residual(self.shift, self.pot, mu, L.lam, L.P_hat)
        res_d, _ = conformality_residual(self.shift, self.pot, dual, L.lam, L.P_hat)
        tol, atol = self.run["residual_tol"], self.run["agreement_tol"]
        self.assert_("conformality_residual", res < tol, res, tol)
        self.assert_("series_dual_agreement", tv < atol, tv, atol)
        self.report["conformal"] = {"depth": mu.depth, "residual_series": res, "residual_dual": res_d,
                                    "witness": where, "tv_series_dual": tv}
        self.write_csv("conformal.csv", ["state", "cylinder", "mass"], mu.rows())

    def gibbs(self) -> None:
        if "bip" not in self.report:
            self.check_bip()
        if "lambda" not in self.report:
            self._lambda_stage()
        width = max(self.shift.alphabet_size(w) for w in self.exp.base.states)
        d = max(self.pot.depth, 1)
        while d < self.run["gibbs_n"] and width ** (d + 1) <= CYLINDER_CAP:
            d += 1
        mu = self.mu if d == self.mu.depth else self._series_measure(d)
        L = self.lam
        rep = gibbs_report(self.shift, self.pot, self.exp.cert, mu, L.lam, L.P_hat, d)
        self.assert_("gibbs_bounds", rep.ok, rep.violations, 0)
        omega = self.pressure.omega
        rec = recurrence_report(self.shift, self.pot, L.lam, L.P_hat, self.run["a"], omega,
                                range(1, self.run["n_max"] + 1))
        self.report["gibbs"] = {"depth": d, "requested_depth": self.run["gibbs_n"], "words": len(rep.rows),
                                "violations": rep.violations,
                                "recurrence": {"omega": omega, "start": rec.start, "low": rec.low,
                                               "high": rec.high, "bounded": rec.bounded}}
        self.write_csv("gibbs.csv", ["state", "n", "word", "ratio_low", "ratio_high", "lower", "upper", "ok"],
                       rep.rows)

    def matrix_pf(self) -> None:
        A = self.cocycle
        pf = random_pf(A, tol=self.run["pf_tol"])
        tol = self.run["residual_tol"]
        self.assert_("pf_residual", pf.residual < tol, pf.residual, tol)
        out = {"lambda": pf.lam, "residual": pf.residual, "sweeps": pf.sweeps}
        if self.exp.cert is not None:
            sb = check_summable_bip(A, self.exp.cert)
            out["summable_bip"] = sb.as_dict()
        omega = 0
        dec = rank_one_convergence(A, pf, omega, 0, self.run["rank_one_n"])
        out["rank_one_final"] = float(dec.deviation[-1])
        self.assert_("rank_one_convergence", dec.deviation[-1] < 1e-6, float(dec.deviation[-1]), 1e-6)
        self.report["matrix_pf"] = out
        self.write_csv("pf_mu.csv", ["state", "index", "value"],
                       [(w, i, v) for w, m in enumerate(pf.mu) for i, v in enumerate(m)])
        self.write_csv("pf_h.csv", ["state", "index", "value"],
                       [(w, i, v) for w, h in enumerate(pf.h) for i, v in enumerate(h)])
        self.write_csv("rank_one.csv", ["n", "deviation"], zip(dec.n, dec.deviation))

    def stationary(self) -> None:
        A = self.cocycle
        st = stationary_distribution(A, seed=self.exp.seed)
        atol = self.run["agreement_tol"]
        self.assert_("stationary_residual", st.residual < 1e-10, st.residual, 1e-10)
        self.assert_("restart_agreement", st.restart_agreement < atol, st.restart_agreement, atol)
        omega = 0
        f = np.arange(A.matrices[omega].shape[0], dtype=float)
        dec = backward_product_convergence(A, st.pi, f, omega, self.run["backward_n"])
        self.assert_("backward_convergence", dec.deviation[-1] < 1e-8, float(dec.deviation[-1]), 1e-8)
        rshift, rpot = reversed_system(A)
        nu = conformal_measure(rshift, rpot, None, np.ones(A.base.n_states), 0.0, d=3, method="dual")
        tr, where = time_reversal_residual(A, st.pi, nu, 2)
        tol = self.run["residual_tol"]
        self.assert_("time_reversal", tr < tol, tr, tol)
        self.report["stationary"] = {**st.as_dict(), "backward_final": float(dec.deviation[-1]),
                                     "time_reversal_residual": tr, "time_reversal_witness": where}
        self.write_csv("stationary.csv", ["state", "index", "value"],
                       [(w, i, v) for w, p in enumerate(st.pi) for i, v in enumerate(p)])
        self.write_csv("backward.csv", ["n", "deviation"], zip(dec.n, dec.deviation))

    def all(self) -> None:
        self.check_bip()
        self.pressure_stage()
        self.rpf()
        self.conformal()
        self.gibbs()
        self.matrix_pf()
        if self.exp.cocycle is not None or self.cocycle.is_stochastic():
            self.stationary()
        else:
            self.report["stationary"] = {"skipped": "matrices are not stochastic"}


_STAGES = {
    "check-bip": Session.check_bip,
    "pressure": Session.pressure_stage,
    "rpf": Session.rpf,
    "conformal": Session.conformal,
    "gibbs": Session.gibbs,
    "matrix-pf": Session.matrix_pf,
    "stationary": Session.stationary,
    "all": Session.all,
}


def load_config(args) -> dict:
    cfg = cfgmod.fixture(args.fixture) if args.fixture else None
    if args.config:
        try:
            user = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from None
        cfg = user if cfg is None else cfgmod.deep_merge(cfg, user)
    if cfg is None:
        raise ConfigError("give --config or --fixture")
    if args.seed is not None:
        cfg = {**cfg, "seed": args.seed}
    return cfgmod.validate(cfg)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="randtmc", description="Thermodynamic formalism for random Markov shifts.")
    p.add_argument("subcommand", choices=SUBCOMMANDS)
    p.add_argument("--config", help="JSON config file (merged over --fixture if both are given)")
    p.add_argument("--fixture", help=f"built-in fixture: {', '.join(cfgmod.FIXTURE_NAMES)}")
    p.add_argument("--out", default="out", help="output directory (default: out)")
    p.add_argument("--threads", type=int, default=1, help="accepted for interface compatibility; runs single-threaded")
    p.add_argument("--seed", type=int, help="overrides the config seed")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    out = Path(args.out)
    t0 = time.perf_counter()
    report: dict = {"subcommand": args.subcommand, "threads": args.threads}
    session = None
    code = 0
    try:
        cfg = load_config(args)
        report["config"] = cfg
        report["config_digest"] = cfgmod.digest(cfg)
        session = Session(cfgmod.build(cfg), out)
        _STAGES[args.subcommand](session)
        failed = [k for k, v in session.assertions.items() if not v["ok"]]
        if failed:
            raise AssertionFailure(f"hard assertions failed: {', '.join(failed)}")
    except RTMCError as exc:
        code = exc.exit_code
        report["error"] = {"type": type(exc).__name__, "message": str(exc), "exit_code": code}
        print(f"randtmc: {type(exc).__name__}: {exc}", file=sys.stderr)
    if session is not None:
        report.update(session.report)
        report["assertions"] = session.assertions
        report["csv"] = session.csv_files
    report["exit_code"] = code
    report["wall_clock_s"] = time.perf_counter() - t0
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.json").write_text(json.dumps(_jsonable(report), indent=2, sort_keys=True) + "\n")
    return code


if __name__ == "__main__":
    sys.exit(main())
