"""Command-line front end: run | rates | check | solve, each on a spec file.

Spec files are INI format.  Sections:

* ``[problem]`` -- objective definition.  Keys: ``kind`` (least_squares |
  logistic), ``source`` (synthetic | libsvm), ``flavor`` (synthetic
  generator 1-4), ``n``, ``d``, ``data_seed``, ``path`` (libsvm file),
  ``rescale`` (bool), ``lam``, ``mu`` (optional override), ``regularizer``
  (zero | l2 | ball), ``reg_lam``, ``reg_radius``.
* ``[reference]`` -- optional ``tol`` / ``max_iter`` for the solver.
* ``[run]`` -- ``gamma`` (float or ``auto``), ``iters``, ``seeds``
  (``lo:hi`` half-open range, or comma list), ``record_every``, ``out``
  (output directory), ``backend`` (auto | numba | numpy), ``diagnostics``
  (bool, default true).
* ``[check]`` -- ``samples``, ``states``, ``seed``, ``curvature_scale``.
* ``[method:<id>]`` or ``[method:<id>.<label>]`` -- one estimator each.
  Keys as each estimator needs: ``sampling`` (uniform | importance),
  ``tau``, ``p``, ``m``, ``nodes``, ``alpha``, ``quantizer`` (identity |
  rand_k | dithering_ternary), ``k``, ``mode``, ``noise_sq``, ``variant``,
  ``weight``, ``gamma`` (the last two override the run-level values).

Relative paths inside a spec resolve against the spec file's directory.
Exit codes: 0 success, 1 spec error, 2 numerical failure, 3 assumption
check failed.

Outputs of ``run``: one CSV per (method, seed) named
``<label>_seed<seed>.csv``, one aggregated ``<label>_mean.csv`` per method
(seed-mean of every diagnostic), and ``summary.json`` holding the exact
parameter constants each method certified.  CSV columns are fixed:
``iter,dist_sq,f_gap,rel_subopt,sigma_sq,lyapunov`` (%.17g, LF line ends,
cells empty when diagnostics are off).  Re-running an unchanged spec
rewrites every file with identical bytes.
"""

from __future__ import annotations

import argparse
import configparser
import json
import os
import sys

import numpy as np

from . import certify, driver, theory
from .data import Dataset, ParseError, generate_least_squares, parse_libsvm, \
    rescale_rows
from .driver import DivergenceError, NumericalError, RunConfig
from .estimators import DIANA, LSVRG, NSAGA, NSEGA, QSGDSR, SAGA, SEGA, SGD, \
    SGDMB, SGDInd, SGDStar, SVRG, VRDIANA
from .problems import NoisyOracle, Problem, Regularizer
from .quantize import Quantizer
from .reference import ReferenceError, solve_reference
from .sampling import importance_probs, inclusion_probs, uniform_dist

COLUMNS = ("iter", "dist_sq", "f_gap", "rel_subopt", "sigma_sq", "lyapunov")

_METHOD_KEYS = {"sampling", "tau", "p", "m", "nodes", "alpha", "quantizer",
                "k", "mode", "noise_sq", "variant", "weight", "gamma"}
_PROBLEM_KEYS = {"kind", "source", "flavor", "n", "d", "data_seed", "path",
                 "rescale", "lam", "mu", "regularizer", "reg_lam",
                 "reg_radius"}
_KNOWN_METHODS = ("sgd", "sgd_mb", "sgd_ind", "sgd_star", "q_sgd_sr", "saga",
                  "n_saga", "sega", "n_sega", "svrg", "l_svrg", "diana",
                  "vr_diana")


class SpecError(ValueError):
    """The spec file is missing, malformed, or inconsistent."""


def _fmt(v: float) -> str:
    return "%.17g" % v


def _load_spec(path: str) -> configparser.ConfigParser:
    if not os.path.isfile(path):
        raise SpecError(f"spec file not found: {path}")
    cfg = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    try:
        with open(path) as fh:
            cfg.read_file(fh)
    except configparser.Error as exc:
        raise SpecError(f"cannot parse spec: {exc}") from None
    return cfg


def _parse_seeds(text: str):
    text = text.strip()
    if ":" in text:
        lo, _, hi = text.partition(":")
        try:
            lo, hi = int(lo), int(hi)
        except ValueError:
            raise SpecError(f"bad seed range {text!r}") from None
        if hi <= lo:
            raise SpecError(f"empty seed range {text!r}")
        return list(range(lo, hi))
    try:
        return [int(tok) for tok in text.split(",")]
    except ValueError:
        raise SpecError(f"bad seeds {text!r}") from None


def _get(sec, key, default=None, cast=str):
    if key not in sec:
        if default is None:
            raise SpecError(f"missing key {key!r} in [{sec.name}]")
        return default
    try:
        return cast(sec[key])
    except (TypeError, ValueError):
        raise SpecError(f"bad value for {key!r}: {sec[key]!r}") from None


def _get_bool(sec, key, default):
    if key not in sec:
        return default
    text = sec[key].strip().lower()
    if text in ("1", "true", "yes", "on"):
        return True
    if text in ("0", "false", "no", "off"):
        return False
    raise SpecError(f"bad boolean for {key!r}: {sec[key]!r}")


# ----------------------------------------------------------------------------
# spec -> objects
# ----------------------------------------------------------------------------

def _build_problem(cfg, base_dir):
    if "problem" not in cfg:
        raise SpecError("spec has no [problem] section")
    sec = cfg["problem"]
    unknown = set(sec) - _PROBLEM_KEYS
    if unknown:
        raise SpecError(f"unknown [problem] keys: {sorted(unknown)}")
    kind = _get(sec, "kind", "least_squares")
    if kind not in ("least_squares", "logistic"):
        raise SpecError(f"unknown problem kind {kind!r}")
    source = _get(sec, "source", "synthetic")
    rng = np.random.default_rng(_get(sec, "data_seed", 0, int))

    if source == "synthetic":
        n = _get(sec, "n", cast=int)
        d = _get(sec, "d", cast=int)
        flavor = _get(sec, "flavor", 1, int)
        A, b = generate_least_squares(flavor, n, d, rng)
        if kind == "logistic":
            b = np.where(rng.random(n) < 0.5, -1.0, 1.0)
        dataset = Dataset(b, matrix=A)
    elif source == "libsvm":
        path = _get(sec, "path")
        full = path if os.path.isabs(path) else os.path.join(base_dir, path)
        if not os.path.isfile(full):
            raise SpecError(f"data file not found: {full}")
        with open(full) as fh:
            dataset = parse_libsvm(fh)
        if _get_bool(sec, "rescale", False):
            dataset = rescale_rows(dataset, rng)
    else:
        raise SpecError(f"unknown data source {source!r}")

    reg_kind = _get(sec, "regularizer", "zero")
    if reg_kind not in ("zero", "l2", "ball"):
        raise SpecError(f"unknown regularizer {reg_kind!r}")
    regularizer = Regularizer(reg_kind, lam=_get(sec, "reg_lam", 0.0, float),
                              radius=_get(sec, "reg_radius", 1.0, float))
    mu = float(sec["mu"]) if "mu" in sec else None
    problem = Problem(kind, dataset.to_matrix(), dataset.labels,
                      lam=_get(sec, "lam", 0.0, float),
                      regularizer=regularizer, mu=mu)
    return problem, dataset


def _method_sections(cfg):
    specs = []
    seen = set()
    for name in cfg.sections():
        if not name.startswith("method:"):
            continue
        label = name[len("method:"):]
        if not label or any(c for c in label
                            if not (c.isalnum() or c in "._-")):
            raise SpecError(f"bad method label {label!r}")
        mid = label.split(".", 1)[0]
        if mid not in _KNOWN_METHODS:
            raise SpecError(f"unknown method {mid!r}; known: "
                            f"{', '.join(_KNOWN_METHODS)}")
        if label in seen:
            raise SpecError(f"duplicate method section {label!r}")
        seen.add(label)
        sec = cfg[name]
        unknown = set(sec) - _METHOD_KEYS
        if unknown:
            raise SpecError(f"unknown keys in [{name}]: {sorted(unknown)}")
        specs.append((label, mid, sec))
    if not specs:
        raise SpecError("spec defines no [method:...] sections")
    return specs


def _build_quantizer(sec, d):
    name = _get(sec, "quantizer", "identity")
    if name == "identity":
        return Quantizer("identity")
    if name == "rand_k":
        return Quantizer("rand_k", k=_get(sec, "k", cast=int))
    if name == "dithering_ternary":
        return Quantizer("dithering_ternary")
    raise SpecError(f"unknown quantizer {name!r}")


def _dist_for(problem, dataset, sec):
    mode = _get(sec, "sampling", "uniform")
    if mode == "uniform":
        return uniform_dist(problem.n)
    if mode == "importance":
        return importance_probs(dataset, lam=problem.lam, mode="importance")
    raise SpecError(f"unknown sampling {mode!r}")


def _build_estimator(problem, dataset, ref, mid, sec):
    if mid == "sgd":
        return SGD(problem, _dist_for(problem, dataset, sec))
    if mid == "sgd_mb":
        return SGDMB(problem, _dist_for(problem, dataset, sec),
                     tau=_get(sec, "tau", cast=int))
    if mid == "sgd_ind":
        dist = _dist_for(problem, dataset, sec)
        q = inclusion_probs(dist, _get(sec, "tau", cast=int))
        return SGDInd(problem, q)
    if mid == "sgd_star":
        return SGDStar(problem, _dist_for(problem, dataset, sec),
                       ref.star_grads)
    if mid == "q_sgd_sr":
        return QSGDSR(problem, _dist_for(problem, dataset, sec),
                      _build_quantizer(sec, problem.d))
    if mid == "saga":
        return SAGA(problem)
    if mid == "n_saga":
        oracle = NoisyOracle(problem, _get(sec, "noise_sq", cast=float),
                             mode="full")
        return NSAGA(oracle)
    if mid == "sega":
        return SEGA(problem)
    if mid == "n_sega":
        oracle = NoisyOracle(problem, _get(sec, "noise_sq", cast=float),
                             mode="partial")
        return NSEGA(oracle)
    if mid == "svrg":
        return SVRG(problem, m=_get(sec, "m", cast=int))
    if mid == "l_svrg":
        p_text = _get(sec, "p", "auto")
        p = 1.0 / problem.n if p_text == "auto" else float(p_text)
        return LSVRG(problem, p)
    if mid == "diana":
        quantizer = _build_quantizer(sec, problem.d)
        nodes = _get(sec, "nodes", 1, int)
        omega = quantizer.omega_for(problem.d)
        alpha_text = _get(sec, "alpha", "auto")
        alpha = theory.alpha_bound(omega) if alpha_text == "auto" \
            else float(alpha_text)
        mode = _get(sec, "mode", "exact")
        return DIANA(problem, nodes, quantizer, alpha, mode=mode,
                     noise_sq=_get(sec, "noise_sq", 0.0, float))
    if mid == "vr_diana":
        quantizer = _build_quantizer(sec, problem.d)
        nodes = _get(sec, "nodes", 1, int)
        if problem.n % nodes != 0:
            raise SpecError(f"n={problem.n} not divisible by nodes={nodes}")
        omega = quantizer.omega_for(problem.d)
        alpha_text = _get(sec, "alpha", "auto")
        alpha = theory.alpha_bound(omega, table_size=problem.n // nodes) \
            if alpha_text == "auto" else float(alpha_text)
        return VRDIANA(problem, nodes, quantizer, alpha,
                       variant=_get(sec, "variant", 1, int))
    raise SpecError(f"unknown method {mid!r}")  # pragma: no cover


def _resolve_weight(sec, est, ref):
    text = _get(sec, "weight", "auto")
    if text == "auto":
        return None
    return float(text)


def _resolve_gamma(text, est, ref, problem, weight):
    if text != "auto":
        gamma = float(text)
        if gamma <= 0:
            raise SpecError("gamma must be > 0")
        return gamma
    if est.method_id == "svrg":
        return 1.0 / (6.0 * problem.L)
    params = est.param_set(ref)
    return theory.stepsize_bound(params, problem.mu, weight=weight)


def _solve(cfg, problem):
    sec = cfg["reference"] if "reference" in cfg else {}
    kwargs = {}
    if "tol" in sec:
        kwargs["tol"] = float(sec["tol"])
    if "max_iter" in sec:
        kwargs["max_iter"] = int(sec["max_iter"])
    return solve_reference(problem, **kwargs)


# ----------------------------------------------------------------------------
# output
# ----------------------------------------------------------------------------

def _write_text(path, text):
    with open(path, "w", newline="\n") as fh:
        fh.write(text)


def _csv_text(grid, cols):
    lines = [",".join(COLUMNS)]
    for r in range(grid.shape[0]):
        row = [str(int(grid[r]))]
        for name in COLUMNS[1:]:
            arr = cols.get(name)
            row.append("" if arr is None else _fmt(arr[r]))
        lines.append(",".join(row))
    return "\n".join(lines) + "\n"


def _trace_cols(trace):
    return {name: getattr(trace, name)
            for name in COLUMNS[1:]}


# ----------------------------------------------------------------------------
# commands
# ----------------------------------------------------------------------------

def cmd_solve(cfg, base_dir):
    problem, _ = _build_problem(cfg, base_dir)
    ref = _solve(cfg, problem)
    print(f"problem: {problem!r}")
    print(f"  mu = {_fmt(problem.mu)}  L = {_fmt(problem.L)}  "
          f"L_f = {_fmt(problem.L_f)}")
    print(f"reference: converged in {ref.iterations} iterations")
    print(f"  f_star = {_fmt(ref.f_star)}")
    print(f"  ||grad f(x_star)|| = {_fmt(ref.grad_norm_star)}")
    print(f"  sigma_sq at x_star (uniform serial) = "
          f"{_fmt(ref.sigma_sq_uniform)}")
    if "run" in cfg and "out" in cfg["run"]:
        out_dir = os.path.join(base_dir, cfg["run"]["out"])
        os.makedirs(out_dir, exist_ok=True)
        payload = {
            "x_star": [float(v) for v in ref.x_star],
            "f_star": ref.f_star,
            "grad_norm_star": ref.grad_norm_star,
            "sigma_sq_uniform": ref.sigma_sq_uniform,
            "iterations": ref.iterations,
        }
        path = os.path.join(out_dir, "reference.json")
        _write_text(path, json.dumps(payload, indent=2) + "\n")
        print(f"wrote {path}")
    return 0


def cmd_rates(cfg, base_dir):
    problem, dataset = _build_problem(cfg, base_dir)
    ref = _solve(cfg, problem)
    run_sec = cfg["run"] if "run" in cfg else {}
    gamma_text = run_sec.get("gamma", "auto")
    for label, mid, sec in _method_sections(cfg):
        est = _build_estimator(problem, dataset, ref, mid, sec)
        params = est.param_set(ref)
        weight = _resolve_weight(sec, est, ref)
        print(f"{label} ({mid})")
        for key, value in params.as_dict().items():
            print(f"  {key} = {_fmt(value)}")
        if mid == "svrg":
            gamma = _resolve_gamma(sec.get("gamma", gamma_text), est, ref,
                                   problem, weight)
            rep = theory.epoch_rate(problem.L, problem.mu, gamma, est.m)
            print(f"  gamma = {_fmt(gamma)} (per-epoch analysis, m={est.m})")
            print(f"  epoch factor = {_fmt(rep.epoch_factor)}")
            print(f"  distance factor = {_fmt(rep.dist_factor)}")
            continue
        resolved = theory.default_weight(params) if weight is None \
            else weight
        gamma_max = theory.stepsize_bound(params, problem.mu, weight=weight)
        gamma = _resolve_gamma(sec.get("gamma", gamma_text), est, ref,
                               problem, weight)
        rep = theory.rate(params, problem.mu, gamma, weight=weight)
        print(f"  weight M = {_fmt(resolved)}")
        print(f"  gamma_max = {_fmt(gamma_max)}")
        print(f"  gamma = {_fmt(gamma)}")
        print(f"  contraction = {_fmt(rep.contraction)}")
        print(f"  neighborhood = {_fmt(rep.neighborhood)}")
        print(f"  iteration complexity = {_fmt(rep.iteration_complexity)}")
        print(f"  applicable = {rep.applicable}")
    return 0


def cmd_run(cfg, base_dir):
    problem, dataset = _build_problem(cfg, base_dir)
    if "run" not in cfg:
        raise SpecError("spec has no [run] section")
    run_sec = cfg["run"]
    ref = _solve(cfg, problem)
    diagnostics = _get_bool(run_sec, "diagnostics", True)
    iters = _get(run_sec, "iters", cast=int)
    seeds = _parse_seeds(_get(run_sec, "seeds", "0"))
    record_every = int(run_sec["record_every"]) \
        if "record_every" in run_sec else None
    backend = run_sec.get("backend") or None
    out_dir = os.path.join(base_dir, run_sec.get("out", "results"))
    os.makedirs(out_dir, exist_ok=True)
    gamma_text = run_sec.get("gamma", "auto")

    summary = {
        "problem": {
            "kind": problem.kind, "n": problem.n, "d": problem.d,
            "lam": problem.lam, "mu": problem.mu, "L": problem.L,
            "L_f": problem.L_f,
            "regularizer": repr(problem.regularizer),
        },
        "reference": {
            "f_star": ref.f_star,
            "grad_norm_star": ref.grad_norm_star,
            "sigma_sq_uniform": ref.sigma_sq_uniform,
            "iterations": ref.iterations,
        },
        "methods": {},
    }

    for label, mid, sec in _method_sections(cfg):
        proto = _build_estimator(problem, dataset, ref, mid, sec)
        weight = _resolve_weight(sec, proto, ref)
        gamma = _resolve_gamma(sec.get("gamma", gamma_text), proto, ref,
                               problem, weight)
        traces = []
        for seed in seeds:
            est = _build_estimator(problem, dataset, ref, mid, sec)
            config = RunConfig(gamma=gamma, iters=iters, seed=seed,
                               record_every=record_every, weight=weight,
                               backend=backend)
            trace = driver.run(problem, est, config,
                               ref=ref if diagnostics else None)
            traces.append(trace)
            path = os.path.join(out_dir, f"{label}_seed{seed}.csv")
            _write_text(path, _csv_text(trace.iters, _trace_cols(trace)))
        grid = traces[0].iters
        if diagnostics:
            mean_cols = {}
            for name in COLUMNS[1:]:
                cols = [getattr(t, name) for t in traces]
                mean_cols[name] = np.stack(cols).mean(axis=0) \
                    if cols[0] is not None else None
        else:
            mean_cols = {name: None for name in COLUMNS[1:]}
        _write_text(os.path.join(out_dir, f"{label}_mean.csv"),
                    _csv_text(grid, mean_cols))
        entry = {
            "method": mid,
            "gamma": gamma,
            "weight": traces[0].weight,
            "iters": iters,
            "seeds": list(seeds),
            "backend": traces[0].backend,
            "param_set": proto.param_set(ref).as_dict(),
        }
        if diagnostics:
            entry["final"] = {
                "dist_sq_mean": float(mean_cols["dist_sq"][-1]),
                "f_gap_mean": float(mean_cols["f_gap"][-1]),
            }
            if mean_cols["lyapunov"] is not None:
                entry["final"]["lyapunov_mean"] = \
                    float(mean_cols["lyapunov"][-1])
        summary["methods"][label] = entry
        print(f"{label}: {len(seeds)} seed(s), gamma={_fmt(gamma)}, "
              f"backend={traces[0].backend}")
    _write_text(os.path.join(out_dir, "summary.json"),
                json.dumps(summary, indent=2) + "\n")
    print(f"wrote {out_dir}")
    return 0


def cmd_check(cfg, base_dir):
    problem, dataset = _build_problem(cfg, base_dir)
    ref = _solve(cfg, problem)
    sec = cfg["check"] if "check" in cfg else {}
    samples = int(sec.get("samples", 100_000))
    if samples < 10_000:
        raise SpecError("check needs samples >= 1e4")
    n_states = int(sec.get("states", 20))
    seed = int(sec.get("seed", 0))
    curvature_scale = float(sec.get("curvature_scale", 1.0))
    all_ok = True
    for label, mid, msec in _method_sections(cfg):
        est = _build_estimator(problem, dataset, ref, mid, msec)
        report = certify.check_assumption(
            est, ref, samples=samples, n_states=n_states, seed=seed,
            curvature_scale=curvature_scale)
        print(f"{label} ({mid}): {report.passes}/{len(report.states)} "
              f"states pass")
        for i, st in enumerate(report.states):
            m_mark = "ok " if st.ok_moment else "FAIL"
            s_mark = "ok " if st.ok_state else "FAIL"
            print(f"  state {i:2d} r={st.radius:8.2e} warm={st.warmup}: "
                  f"moment {st.lhs_moment:12.6e} <= "
                  f"{st.rhs_moment + st.slack_moment:12.6e} [{m_mark}]  "
                  f"state {st.lhs_state:12.6e} <= "
                  f"{st.rhs_state + st.slack_state:12.6e} [{s_mark}]")
        all_ok = all_ok and report.ok
    return 0 if all_ok else 3


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="proxsgd",
        description="Proximal stochastic-gradient runs, rate reports, and "
                    "assumption checks driven by INI spec files.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in (("run", cmd_run), ("rates", cmd_rates),
                     ("check", cmd_check), ("solve", cmd_solve)):
        p = sub.add_parser(name)
        p.add_argument("spec", help="path to the INI spec file")
        p.set_defaults(fn=fn)
    args = parser.parse_args(argv)
    try:
        cfg = _load_spec(args.spec)
        base_dir = os.path.dirname(os.path.abspath(args.spec))
        return args.fn(cfg, base_dir)
    except (SpecError, ParseError) as exc:
        print(f"spec error: {exc}", file=sys.stderr)
        return 1
    except (NumericalError, DivergenceError, ReferenceError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"spec error: {exc}", file=sys.stderr)
        return 1


def entry():  # pragma: no cover - console-script shim
    sys.exit(main())


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
