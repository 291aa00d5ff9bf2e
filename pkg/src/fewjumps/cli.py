"""fewjumps command line.

    fewjumps --config run.json [--seed N] [--out DIR] [--threads N] [--json]

Exit status: 0 success, 2 invalid configuration, 3 numerical failure,
4 failed property check (oracle-check, stiefel-check).
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from . import geometry, models, ratefn, sampling
from .errors import ConfigError, EvaluationError, FewJumpsError, PreconditionError, UnsupportedError

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_CHECK = 0, 2, 3, 4


class CheckFailed(FewJumpsError):
    pass


def load_schema() -> dict:
    text = resources.files("fewjumps").joinpath("schema/config.schema.json").read_text()
    return json.loads(text)


def _fmt(v) -> str:
    return repr(float(v))


class Run:
    """Validated configuration plus the artifacts produced while running it."""

    def __init__(self, cfg: dict, seed: int, threads: int):
        self.cfg = cfg
        self.seed = seed
        self.threads = threads
        self.tables: dict[str, list[list]] = {}
        self.summary: dict = {"command": cfg["command"], "seed": seed}
        self.lines: list[str] = []
        tol = cfg.get("tolerances", {})
        self.tol = tol
        self.opts = ratefn.OptimizerOptions(
            random_restarts=tol.get("random_restarts", 32),
            agreement_tol=tol.get("agreement_tol", 1e-6),
            tol=tol.get("tol", 1e-8), seed=seed)
        self.model = models.model_from_json(cfg["model"]) if "model" in cfg else None
        self.targets = None
        if "targets" in cfg:
            self.targets = np.array(cfg["targets"], dtype=float)
            if self.targets.ndim != 2:
                raise ConfigError("targets must be a list of equal-length vectors")
            if self.model is not None and self.targets.shape[1] != self.model.k:
                raise ConfigError(f"targets have dimension {self.targets.shape[1]} "
                                  f"but the model has k={self.model.k}")
        for key in ("t_a", "t_b"):
            if key in cfg and self.model is not None and len(cfg[key]) != self.model.k:
                raise ConfigError(f"{key} has dimension {len(cfg[key])} but the model has k={self.model.k}")

    def handle(self):
        return models.to_rate_handle(self.model)

    def table(self, name, header):
        rows = [header]
        self.tables[name] = rows
        return rows


def _cmd_rate_eval(run: Run):
    h = run.handle()
    rows = run.table("rate_eval.csv", [f"t{j + 1}" for j in range(h.k)]
                     + ["value", "parts", "converged"])
    out = []
    for t, ev in zip(run.targets, ratefn.rate_I_many(h, run.targets, run.opts)):
        rows.append([_fmt(v) for v in t] + [_fmt(ev.value), ev.decomposition.m, ev.converged])
        out.append({"t": t.tolist(), "value": ev.value, "parts": ev.decomposition.m,
                    "converged": ev.converged})
        run.lines.append(f"I({', '.join(f'{v:g}' for v in t)}) = {ev.value:.10g}"
                         f"  [{ev.decomposition.m} part(s), converged={ev.converged}]")
    run.summary["results"] = out


def _cmd_decompose(run: Run):
    h = run.handle()
    rows = run.table("decomposition.csv", ["target", "part"] + [f"x{j + 1}" for j in range(h.k)]
                     + ["part_rate"])
    out = []
    for i, (t, ev) in enumerate(zip(run.targets, ratefn.rate_I_many(h, run.targets, run.opts))):
        dec = ev.decomposition
        run.lines.append(f"target {t.tolist()}: value {ev.value:.10g} with {dec.m} part(s)")
        for r, (p, pr) in enumerate(zip(dec.parts, dec.part_rates)):
            rows.append([i, r] + [_fmt(v) for v in p] + [_fmt(pr)])
            run.lines.append(f"  part {r + 1}: {np.array2string(p, precision=6)}  J = {pr:.8g}")
        out.append({"t": t.tolist(), "value": ev.value, "parts": dec.parts.tolist(),
                    "part_rates": [float(v) for v in dec.part_rates], "converged": ev.converged})
    run.summary["results"] = out


def _cmd_oracle_check(run: Run):
    h = run.handle()
    grid_n = run.cfg.get("grid_n", 200 if h.k <= 2 else 20)
    abs_tol = run.tol.get("oracle_abs", 1e-3)
    rel_tol = run.tol.get("oracle_rel", 1e-2)
    rows = run.table("oracle_check.csv", [f"t{j + 1}" for j in range(h.k)]
                     + ["optimizer", "oracle", "difference", "passed"])
    failures = 0
    out = []
    for t, ev in zip(run.targets, ratefn.rate_I_many(h, run.targets, run.opts)):
        orc = ratefn.rate_I_oracle(h, t, grid_n=grid_n)
        diff = ev.value - orc.value
        ok = diff <= 1e-8 and abs(diff) <= max(abs_tol, rel_tol * orc.value)
        failures += not ok
        rows.append([_fmt(v) for v in t] + [_fmt(ev.value), _fmt(orc.value), _fmt(diff), ok])
        out.append({"t": t.tolist(), "optimizer": ev.value, "oracle": orc.value, "passed": ok})
        run.lines.append(f"t={t.tolist()}: optimizer {ev.value:.10g}, oracle {orc.value:.10g}"
                         f" ({'ok' if ok else 'FAIL'})")
    run.summary["results"] = out
    run.summary["failures"] = failures
    if failures:
        raise CheckFailed(f"{failures} target(s) disagree with the grid oracle")


def _cmd_convexity_probe(run: Run):
    h = run.handle()
    rep = ratefn.convexity_probe(h, run.cfg["t_a"], run.cfg["t_b"], run.cfg["lambdas"],
                                 tol=run.tol.get("probe_tol", 1e-9), opts=run.opts)
    rows = run.table("convexity_probe.csv", ["lambda", "I_mix", "chord", "gap"])
    for lam, mv, cv in zip(rep.lambdas, rep.mixed_values, rep.chord_values):
        rows.append([_fmt(lam), _fmt(mv), _fmt(cv), _fmt(mv - cv)])
    run.lines.append(f"I(t_a) = {rep.value_a:.10g}, I(t_b) = {rep.value_b:.10g}")
    for lam, mv, cv in zip(rep.lambdas, rep.mixed_values, rep.chord_values):
        run.lines.append(f"  lambda={lam:g}: I(mix) = {mv:.10g}, chord = {cv:.10g}")
    run.lines.append(f"convexity violations: {len(rep.convexity_violations)}, "
                     f"concavity violations: {len(rep.concavity_violations)}")
    run.summary.update({"I_a": rep.value_a, "I_b": rep.value_b,
                        "mixed": rep.mixed_values.tolist(), "chord": rep.chord_values.tolist(),
                        "convexity_violations": rep.convexity_violations,
                        "concavity_violations": rep.concavity_violations})


def _cmd_mc_verify(run: Run):
    stream = sampling.SeededStream(run.seed)
    rows = run.table("rate_curve.csv", ["target", "x", "hits", "n", "normalized", "ci_low",
                                        "ci_high", "predicted"])
    out = []
    for i, t in enumerate(run.targets):
        curve = sampling.empirical_rate_curve(run.model, t, run.cfg["scales"], run.cfg["n"],
                                              stream.substream(i), threads=run.threads)
        for x, est, v, lo, hi in zip(curve.scales, curve.estimates, curve.normalized,
                                     curve.ci_low, curve.ci_high):
            rows.append([i, _fmt(x), est.hits, est.n, _fmt(v), _fmt(lo), _fmt(hi),
                         _fmt(curve.predicted)])
            run.lines.append(f"t={t.tolist()} x={x:g}: {v:.6g} [{lo:.6g}, {hi:.6g}]"
                             f" vs {curve.predicted:.6g}")
        out.append({"t": t.tolist(), "scales": curve.scales, "normalized": curve.normalized,
                    "ci_low": curve.ci_low, "ci_high": curve.ci_high,
                    "predicted": curve.predicted, "covered": curve.covered()})
    run.summary["results"] = out


def _cmd_mdp_rate(run: Run):
    if not isinstance(run.model, models.MdpGaussModel):
        raise ConfigError("mdp-rate needs a model of family 'mdp-gauss'")
    k = run.model.k
    rows = run.table("mdp_rate.csv", [f"t{j + 1}" for j in range(k)] + ["value"]
                     + [f"z{j + 1}" for j in range(k)])
    out = []
    for t in run.targets:
        val, z = models.mdp_rate(run.model, t)
        rows.append([_fmt(v) for v in t] + [_fmt(val)] + [_fmt(v) for v in z])
        out.append({"t": t.tolist(), "value": val, "z": z.tolist()})
        run.lines.append(f"inf_(z >= {t.tolist()}) z'S^-1 z / 2 = {val:.10g} at z = {z.tolist()}")
    run.summary["results"] = out


def _directions(cfg) -> geometry.DirectionSet:
    m = cfg["m"]
    d = cfg["directions"]
    if isinstance(d, dict):
        return geometry.spiral_directions(m, d["spiral"])
    arr = np.array(d, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != m:
        raise ConfigError(f"directions must be vectors of length m={m}")
    return geometry.DirectionSet(m, arr)


def _cmd_lpball_rate(run: Run):
    ds = _directions(run.cfg)
    q = run.cfg["q"]
    k_max = run.cfg.get("k_max", min(6, len(ds)))
    f = run.cfg["f"]
    f_values = [float(f)] * len(ds) if not isinstance(f, list) else f
    if len(f_values) != len(ds):
        raise ConfigError("f must be a constant or one value per direction")
    res = geometry.support_rate(ds, f_values, q, k_max=k_max, opts=run.opts)
    rows = run.table("support_rate.csv", ["k", "f", "J_k"])
    for k, (fv, jk) in enumerate(zip(res.f_values, res.J_seq), start=1):
        rows.append([k, _fmt(fv), _fmt(jk)])
        run.lines.append(f"J_{k} = {jk:.10g}")
    run.lines.append(f"sup = {res.sup_value:.10g} (converged={res.converged})")
    run.summary.update({"J_seq": res.J_seq, "sup": res.sup_value, "converged": res.converged})


def _cmd_stiefel_check(run: Run):
    cfg = run.cfg
    m, N, samples, q = cfg["m"], cfg["N"], cfg["samples"], cfg["q"]
    if N < m:
        raise ConfigError("need N >= m")
    u = np.array(cfg.get("u", [1.0] + [0.0] * (m - 1)), dtype=float)
    if u.shape != (m,):
        raise ConfigError(f"u must have length m={m}")
    u = u / np.linalg.norm(u)
    fro_tol = run.tol.get("stiefel_frobenius", 1e-10)
    n_se = run.tol.get("stiefel_se", 4.0)
    stream = sampling.SeededStream(run.seed)
    rows = run.table("stiefel.csv", ["sample", "frobenius_error", "moment"])
    errs, mom = [], []
    for i in range(samples):
        st = geometry.sample_stiefel(m, N, stream.substream(i))
        errs.append(st.orthonormality_error())
        mom.append(geometry.stiefel_moment(st, u, q))
        rows.append([i, _fmt(errs[-1]), _fmt(mom[-1])])
    mom = np.array(mom)
    mq = models.moment_Mq(q)
    se = mom.std(ddof=1) / math.sqrt(samples) if samples > 1 else math.inf
    z = (mom.mean() - mq) / se if se > 0 else 0.0
    ok_fro = max(errs) < fro_tol
    ok_mom = abs(z) <= n_se
    run.lines.append(f"max ||VV' - I||_F = {max(errs):.3g} ({'ok' if ok_fro else 'FAIL'})")
    run.lines.append(f"moment mean {mom.mean():.6g} vs M_q {mq:.6g}: {z:+.2f} SE"
                     f" ({'ok' if ok_mom else 'FAIL'})")
    run.summary.update({"max_frobenius": max(errs), "moment_mean": float(mom.mean()),
                        "moment_se": float(se), "M_q": mq, "z": float(z)})
    if not (ok_fro and ok_mom):
        raise CheckFailed("Stiefel sample check failed")


COMMANDS = {
    "rate-eval": _cmd_rate_eval,
    "decompose": _cmd_decompose,
    "oracle-check": _cmd_oracle_check,
    "convexity-probe": _cmd_convexity_probe,
    "mc-verify": _cmd_mc_verify,
    "mdp-rate": _cmd_mdp_rate,
    "lpball-rate": _cmd_lpball_rate,
    "stiefel-check": _cmd_stiefel_check,
}


def _write_tables(run: Run, out_dir: Path):
    out_dir.mkdir(parents=True, exist_ok=True)
    for name, rows in run.tables.items():
        with open(out_dir / name, "w", newline="") as fh:
            csv.writer(fh, lineterminator="\r\n").writerows(rows)


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fewjumps", description=__doc__.split("\n\n")[0])
    p.add_argument("--config", required=True, help="JSON run configuration")
    p.add_argument("--seed", type=int, help="override the configured seed")
    p.add_argument("--out", help="directory for CSV artifacts (default: config output_path or .)")
    p.add_argument("--threads", type=int, help="worker threads (default: $FEWJUMPS_THREADS or 1)")
    p.add_argument("--json", action="store_true", help="print a machine-readable summary")
    return p


def main(argv=None) -> int:
    args = _parser().parse_args(argv)

    def fail(code, msg):
        if args.json:
            print(json.dumps({"status": code, "error": msg}))
        print(f"fewjumps: {msg}", file=sys.stderr)
        return code

    try:
        with open(args.config) as fh:
            cfg = json.load(fh)
        jsonschema.validate(cfg, load_schema())
        threads = args.threads or int(os.environ.get("FEWJUMPS_THREADS", "1") or 1)
        if threads < 1:
            raise ConfigError("threads must be positive")
        seed = args.seed if args.seed is not None else cfg.get("seed", 0)
        if seed < 0:
            raise ConfigError("seed must be nonnegative")
        run = Run(cfg, seed, threads)
    except (OSError, json.JSONDecodeError) as exc:
        return fail(EXIT_CONFIG, f"cannot read config: {exc}")
    except jsonschema.ValidationError as exc:
        return fail(EXIT_CONFIG, f"invalid config: {exc.message}")
    except (ConfigError, PreconditionError, ValueError) as exc:
        return fail(EXIT_CONFIG, f"invalid config: {exc}")

    out_dir = Path(args.out or cfg.get("output_path", "."))
    status = EXIT_OK
    try:
        COMMANDS[cfg["command"]](run)
    except CheckFailed as exc:
        status = EXIT_CHECK
        run.summary["error"] = str(exc)
    except (ConfigError, PreconditionError) as exc:
        return fail(EXIT_CONFIG, f"invalid config: {exc}")
    except (EvaluationError, UnsupportedError, ArithmeticError, np.linalg.LinAlgError) as exc:
        return fail(EXIT_NUMERIC, f"numerical failure: {exc}")

    _write_tables(run, out_dir)
    run.summary["status"] = status
    run.summary["artifacts"] = sorted(str(out_dir / n) for n in run.tables)
    if args.json:
        print(json.dumps(run.summary, sort_keys=True, default=float))
    else:
        print("\n".join(run.lines))
        if status:
            print(f"CHECK FAILED: {run.summary['error']}")
    return status


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
