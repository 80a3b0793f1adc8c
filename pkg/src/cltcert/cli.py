"""Command-line front end tying the toolkit together.

Machine-readable results (JSON or CSV) go to stdout; human-oriented notes go
to stderr.  Exit codes: 0 success, 2 configuration error, 3 certificate
infeasibility.  Stochastic commands require ``--seed``, and rerunning any
command with the same configuration and seed produces byte-identical output
(no timestamps are emitted).

A JSON config file can supply defaults via ``--config``; explicit flags win.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from .bootstrap import (
    bootstrap_ball_quantile,
    bootstrap_score_test,
    elliptical_coverage_experiment,
    rao_score_test,
    score_level_experiment,
)
from .distances import (
    anti_concentration_probe,
    delta_B_hat,
    delta_H_hat,
    ks_two_sample_1d,
    levy_distance_1d,
    portnoy_scaling_experiment,
    same_law_threshold,
)
from .engine import (
    ConstantsLedger,
    InfeasibleError,
    MomentSummary,
    bootstrap_delta,
    bound_ball_general,
    bound_ball_normal,
    bound_ball_symmetric,
    bound_halfspace_general,
    bound_halfspace_normal,
    delta_R,
    delta_W,
    bootstrap_summary,
    optimize_beta,
    score2_bound,
    score_summary,
    summarize_pair,
    summarize_sample,
    verify_constants_constraint,
)
from .samplers import FAMILIES, DistributionSpec
from .tensors import Sample

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_INFEASIBLE = 3

SWEEP_HEADER = "d,n,family,estimate,stderr,bound_total,seed"

THEOREMS = (
    "ball-normal", "ball-same-cov", "ball-diff-cov",
    "halfspace-normal", "halfspace-same-cov", "halfspace-diff-cov",
    "symmetric", "symmetric-max",
    "bootstrap-ball", "elliptical", "score-bootstrap", "score-chi2",
)

# admissible (K, M, a, b) tuples behind the published smoothing constants
CONSTANT_TUPLES = ((3, 54.1, 27.46, 14.0),
                   (4, 9.5, 6.33, 8.5),
                   (6, 2.9, 2.07, 8.5))


def _emit(text: str, out: str | None) -> None:
    if not text.endswith("\n"):
        text += "\n"
    if out:
        with open(out, "w", encoding="utf-8") as fh:
            fh.write(text)
    sys.stdout.write(text)


def _note(msg: str) -> None:
    sys.stderr.write(msg + "\n")


def _load_matrix(path: str) -> np.ndarray:
    return np.loadtxt(path, delimiter=",", ndmin=2)


def _csv_cell(value) -> str:
    return "" if value is None else repr(float(value))


# ---------------------------------------------------------------------------
# bound command
# ---------------------------------------------------------------------------

def _bound_summary(args) -> MomentSummary:
    if args.moments:
        with open(args.moments, "r", encoding="utf-8") as fh:
            return MomentSummary.from_json(fh.read())
    if not args.from_sample:
        raise ValueError("supply either --moments or --from-sample")
    x = Sample.from_csv(args.from_sample)
    sigma = _load_matrix(args.sigma) if args.sigma else None
    theorem = args.theorem
    if theorem in ("ball-normal", "halfspace-normal", "score-chi2"):
        return summarize_sample(x, sigma=sigma, n=args.n)
    if theorem in ("ball-same-cov", "ball-diff-cov",
                   "halfspace-same-cov", "halfspace-diff-cov"):
        if not args.second_sample:
            raise ValueError(f"--theorem {theorem} needs --second-sample")
        t = Sample.from_csv(args.second_sample)
        sigma_t = _load_matrix(args.sigma_t) if args.sigma_t else None
        return summarize_pair(x, t, sigma=sigma, sigma_t=sigma_t,
                              same_cov=theorem.endswith("same-cov"),
                              n=args.n)
    if theorem in ("bootstrap-ball", "elliptical"):
        if args.sigma2 is None:
            raise ValueError(f"--theorem {theorem} needs --sigma2")
        weight = _load_matrix(args.weight) if args.weight else None
        return bootstrap_summary(x, sigma2=args.sigma2, sigma=sigma,
                                 weight=weight)
    if theorem == "score-bootstrap":
        if args.sigma2 is None:
            raise ValueError("--theorem score-bootstrap needs --sigma2")
        info = _load_matrix(args.info) if args.info else None
        return score_summary(x, sigma2_s=args.sigma2, info=info)
    raise ValueError(f"--theorem {theorem} needs --moments "
                     "(sample moments cannot determine the matching law)")


def _bound_dispatch(theorem: str, ms: MomentSummary, beta: float,
                    ledger: ConstantsLedger):
    if theorem == "ball-normal":
        return bound_ball_normal(ms, beta, ledger)
    if theorem == "ball-same-cov":
        return bound_ball_general(ms, beta, ledger, same_cov=True)
    if theorem == "ball-diff-cov":
        return bound_ball_general(ms, beta, ledger, same_cov=False)
    if theorem == "halfspace-normal":
        return bound_halfspace_normal(ms, beta, ledger)
    if theorem == "halfspace-same-cov":
        return bound_halfspace_general(ms, beta, ledger, same_cov=True)
    if theorem == "halfspace-diff-cov":
        return bound_halfspace_general(ms, beta, ledger, same_cov=False)
    if theorem == "symmetric":
        return bound_ball_symmetric(ms, ledger, variant="sixth_moment")
    if theorem == "symmetric-max":
        return bound_ball_symmetric(ms, ledger, variant="max_norm")
    if theorem == "bootstrap-ball":
        return bootstrap_delta(ms, beta, ledger)
    if theorem == "elliptical":
        return delta_W(ms, beta, ledger)
    if theorem == "score-bootstrap":
        return delta_R(ms, beta, ledger)
    if theorem == "score-chi2":
        return score2_bound(ms, beta, ledger)
    raise ValueError(f"unknown theorem {theorem!r}")


def _cmd_bound(args) -> int:
    ledger = ConstantsLedger()
    if args.ledger_overrides:
        ledger = ledger.with_overrides(**json.loads(args.ledger_overrides))
    ms = _bound_summary(args)
    if args.theorem in ("symmetric", "symmetric-max"):
        breakdown = _bound_dispatch(args.theorem, ms, 0.0, ledger)
    elif args.beta == "optimize":
        _, breakdown = optimize_beta(
            lambda b: _bound_dispatch(args.theorem, ms, b, ledger))
    else:
        breakdown = _bound_dispatch(args.theorem, ms, float(args.beta), ledger)
    _emit(breakdown.to_json(), args.out)
    _note(f"{args.theorem}: total = {breakdown.total:.6g}")
    return EXIT_OK


def _cmd_verify_constants(args) -> int:
    rows = []
    all_ok = True
    for k, m, a, b in CONSTANT_TUPLES:
        lhs, ok = verify_constants_constraint(k, m, a, b)
        rows.append({"K": k, "M": m, "a": a, "b": b, "lhs": lhs, "ok": ok})
        all_ok = all_ok and ok
    _emit(json.dumps({"rows": rows, "all_ok": all_ok}, sort_keys=True),
          args.out)
    return EXIT_OK if all_ok else EXIT_INFEASIBLE


# ---------------------------------------------------------------------------
# distance command
# ---------------------------------------------------------------------------

def _cmd_distance(args) -> int:
    a = Sample.from_csv(args.sample_a)
    b = Sample.from_csv(args.sample_b)
    if args.kind == "ball":
        est = delta_B_hat(a, b, n_centers=args.centers, seed=args.seed,
                          n_boot=args.boot)
        _emit(est.to_json(), args.out)
    elif args.kind == "halfspace":
        est = delta_H_hat(a, b, n_dirs=args.centers, seed=args.seed,
                          n_boot=args.boot)
        _emit(est.to_json(), args.out)
    else:
        if a.dim != 1 or b.dim != 1:
            raise ValueError(f"--kind {args.kind} needs one-dimensional data")
        fn = ks_two_sample_1d if args.kind == "ks" else levy_distance_1d
        value = fn(a.data[:, 0], b.data[:, 0])
        _emit(json.dumps({"kind": args.kind, "value": value},
                         sort_keys=True), args.out)
    return EXIT_OK


# ---------------------------------------------------------------------------
# bootstrap / score-test commands
# ---------------------------------------------------------------------------

def _breakdown_payload(bb):
    return None if bb is None else json.loads(bb.to_json())


def _cmd_bootstrap(args) -> int:
    data = Sample.from_csv(args.data)
    if args.test == "ball":
        w = _load_matrix(args.weight) if args.weight else np.eye(data.dim)
        res = bootstrap_ball_quantile(data, w, alpha=args.alpha, B=args.B,
                                      seed=args.seed, sigma2=args.sigma2)
        payload = {"test": "ball-quantile", "alpha": args.alpha, "B": args.B,
                   "seed": args.seed, "quantile": res.quantile,
                   "certificate": _breakdown_payload(res.certificate)}
    else:
        info = _load_matrix(args.info) if args.info else None
        res = bootstrap_score_test(data, alpha=args.alpha, B=args.B,
                                   seed=args.seed, sigma2_s=args.sigma2,
                                   info=info)
        payload = {"test": "bootstrap-score", "alpha": args.alpha,
                   "B": args.B, "seed": args.seed,
                   "decision": "reject" if res.reject else "accept",
                   "statistic": res.statistic, "quantile": res.threshold,
                   "certificate": _breakdown_payload(res.certificate),
                   "certificate_error": res.certificate_error}
    _emit(json.dumps(payload, sort_keys=True), args.out)
    return EXIT_OK


def _cmd_score_test(args) -> int:
    data = Sample.from_csv(args.data)
    if args.method == "bootstrap":
        if args.seed is None:
            raise ValueError("--method bootstrap requires --seed")
        res = bootstrap_score_test(data, alpha=args.alpha, B=args.B,
                                   seed=args.seed, sigma2_s=args.sigma2,
                                   info=_load_matrix(args.info)
                                   if args.info else None)
        payload = {"test": "bootstrap-score", "alpha": args.alpha,
                   "B": args.B, "seed": args.seed,
                   "decision": "reject" if res.reject else "accept",
                   "statistic": res.statistic, "quantile": res.threshold,
                   "certificate": _breakdown_payload(res.certificate),
                   "certificate_error": res.certificate_error}
    else:
        if not args.info:
            raise ValueError("--method rao requires --info (Fisher "
                             "information of the full sample)")
        moments = None
        if args.moments:
            with open(args.moments, "r", encoding="utf-8") as fh:
                moments = MomentSummary.from_json(fh.read())
        res = rao_score_test(data, _load_matrix(args.info), alpha=args.alpha,
                             moments=moments)
        payload = {"test": "rao", "alpha": args.alpha,
                   "decision": "reject" if res.reject else "accept",
                   "statistic": res.statistic, "quantile": res.threshold,
                   "certificate": _breakdown_payload(res.certificate)}
    _emit(json.dumps(payload, sort_keys=True), args.out)
    return EXIT_OK


# ---------------------------------------------------------------------------
# experiment command (CSV sweeps)
# ---------------------------------------------------------------------------

def _sweep_row(d, n, family, estimate, stderr, bound_total, seed) -> str:
    return ",".join([str(d), str(n), family, _csv_cell(estimate),
                     _csv_cell(stderr), _csv_cell(bound_total), str(seed)])


def _experiment_portnoy(args) -> list[str]:
    d_list = [int(v) for v in args.d_list.split(",")]
    fit = portnoy_scaling_experiment(d_list, n=args.n, reps=args.reps,
                                     seed=args.seed)
    rows = [_sweep_row(d, args.n, "portnoy_mixed", msq, None, None, args.seed)
            for d, msq in zip(fit.d_list, fit.median_sq)]
    rows.append(_sweep_row(0, args.n, "portnoy_slope_fit", fit.slope,
                           fit.stderr, None, args.seed))
    _note(f"slope of log median(D^2) vs log d: {fit.slope:.3f} "
          f"+/- {fit.stderr:.3f}")
    return rows


def _experiment_coverage(args) -> list[str]:
    spec = DistributionSpec(family=args.family, d=args.d, seed=args.seed)
    res = elliptical_coverage_experiment(
        spec, np.eye(args.d), alpha=args.alpha, n=args.n, B=args.B,
        trials=args.trials, seed=args.seed, sigma2=args.sigma2)
    total = res.certificate.total if res.certificate else None
    if res.certificate_error:
        _note("certificate infeasible: " + res.certificate_error)
    return [_sweep_row(args.d, args.n, args.family, res.coverage, res.stderr,
                       total, args.seed)]


def _experiment_score_level(args) -> list[str]:
    res = score_level_experiment(d=args.d, n=args.n, alpha=args.alpha,
                                 B=args.B, trials=args.trials, seed=args.seed)
    return [_sweep_row(args.d, args.n, "gaussian", res.level, res.stderr,
                       None, args.seed)]


def _experiment_same_law(args, estimator: str) -> list[str]:
    spec = DistributionSpec(family=args.family, d=args.d, seed=args.seed)
    a = spec.sample(args.n, seed=args.seed)
    b = spec.sample(args.n, seed=args.seed + 1)
    threshold = same_law_threshold(args.d, args.n, estimator=estimator,
                                   n_null=args.null_runs,
                                   n_cal=args.calibration_n, seed=args.seed,
                                   n_centers=args.centers)
    if estimator == "ball":
        est = delta_B_hat(a, b, n_centers=args.centers, seed=args.seed,
                          n_boot=args.boot)
    else:
        est = delta_H_hat(a, b, n_dirs=args.centers, seed=args.seed,
                          n_boot=args.boot)
    verdict = "below" if est.value < threshold else "ABOVE"
    _note(f"same-law {estimator}: estimate {est.value:.5f} is {verdict} "
          f"the calibrated null threshold {threshold:.5f}")
    return [_sweep_row(args.d, args.n, args.family, est.value, est.stderr,
                       threshold, args.seed)]


def _experiment_anticoncentration(args) -> list[str]:
    d_list = [int(v) for v in args.d_list.split(",")]
    return [_sweep_row(d, 0, "gaussian_shell",
                       anti_concentration_probe(d, args.eps), 0.0, None,
                       args.seed)
            for d in d_list]


def _experiment_normal_sweep(args) -> list[str]:
    """Empirical ball distance to the matching Gaussian vs the certificate."""
    rows = []
    spec = DistributionSpec(family=args.family, d=args.d, seed=args.seed)
    for n in (int(v) for v in args.n_list.split(",")):
        x = spec.sample(n, seed=args.seed)
        # empirical law of the normalized sum via independent block sums
        blocks = args.blocks
        data = spec.sample(n * blocks, seed=args.seed)
        s_n = data.data.reshape(blocks, n, args.d).sum(axis=1) / np.sqrt(n)
        cov = spec.covariance()
        rng = np.random.default_rng(args.seed + 1)
        z = rng.multivariate_normal(np.zeros(args.d), cov, size=blocks,
                                    method="eigh")
        est = delta_B_hat(Sample(s_n, label="sums"), Sample(z, label="ref"),
                          n_centers=args.centers, seed=args.seed,
                          n_boot=args.boot)
        ms = summarize_sample(x, sigma=cov, n=n)
        bound = bound_ball_normal(ms)
        rows.append(_sweep_row(args.d, n, args.family, est.value, est.stderr,
                               bound.total, args.seed))
    return rows


def _cmd_experiment(args) -> int:
    if args.name == "portnoy":
        rows = _experiment_portnoy(args)
    elif args.name == "coverage":
        rows = _experiment_coverage(args)
    elif args.name == "score-level":
        rows = _experiment_score_level(args)
    elif args.name == "same-law-ball":
        rows = _experiment_same_law(args, "ball")
    elif args.name == "same-law-halfspace":
        rows = _experiment_same_law(args, "halfspace")
    elif args.name == "anticoncentration":
        rows = _experiment_anticoncentration(args)
    elif args.name == "normal-sweep":
        rows = _experiment_normal_sweep(args)
    else:
        raise ValueError(f"unknown experiment {args.name!r}")
    _emit("\n".join([SWEEP_HEADER] + rows), args.out)
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cltcert",
        description="Finite-sample CLT and bootstrap accuracy toolkit: "
                    "certificates (JSON), distance estimates (JSON), and "
                    "experiment sweeps (CSV) on stdout; notes on stderr.")
    parser.add_argument("--config", help="JSON file of flag defaults "
                                         "(explicit flags win)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("bound", help="evaluate a certificate")
    p.add_argument("--theorem", required=True, choices=THEOREMS)
    p.add_argument("--beta", default="0.829",
                   help="smoothing parameter in (0,1), or 'optimize'")
    p.add_argument("--moments", help="moment summary JSON file")
    p.add_argument("--from-sample", help="sample CSV (header x1..xd)")
    p.add_argument("--second-sample", help="comparison sample CSV")
    p.add_argument("--sigma", help="covariance CSV (defaults to sample cov)")
    p.add_argument("--sigma-t", help="second-law covariance CSV")
    p.add_argument("--weight", help="weight matrix W CSV")
    p.add_argument("--info", help="Fisher information CSV")
    p.add_argument("--sigma2", type=float,
                   help="sub-Gaussian variance factor (user-supplied)")
    p.add_argument("--n", type=int, help="evaluate at this n instead of the "
                                         "sample size")
    p.add_argument("--ledger-overrides",
                   help='JSON dict, e.g. \'{"c_phi4": 1.2}\'')
    p.add_argument("--out")
    p.set_defaults(func=_cmd_bound)

    p = sub.add_parser("verify-constants",
                       help="check the admissible smoothing-constant tuples")
    p.add_argument("--out")
    p.set_defaults(func=_cmd_verify_constants)

    p = sub.add_parser("distance", help="Monte Carlo distance estimate")
    p.add_argument("--kind", required=True,
                   choices=("ball", "halfspace", "ks", "levy"))
    p.add_argument("--sample-a", required=True)
    p.add_argument("--sample-b", required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--centers", type=int, default=256,
                   help="random centers/directions in the search set")
    p.add_argument("--boot", type=int, default=100,
                   help="bootstrap replicates for the stderr")
    p.add_argument("--out")
    p.set_defaults(func=_cmd_distance)

    p = sub.add_parser("bootstrap", help="bootstrap quantile / score test")
    p.add_argument("--test", required=True, choices=("ball", "score"))
    p.add_argument("--data", required=True, help="sample or score CSV")
    p.add_argument("--alpha", type=float, required=True)
    p.add_argument("--B", type=int, default=2000)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--sigma2", type=float)
    p.add_argument("--weight", help="weight matrix W CSV (ball test)")
    p.add_argument("--info", help="Fisher information CSV (score test)")
    p.add_argument("--out")
    p.set_defaults(func=_cmd_bootstrap)

    p = sub.add_parser("score-test", help="score test (χ² or bootstrap)")
    p.add_argument("--method", default="rao", choices=("rao", "bootstrap"))
    p.add_argument("--data", required=True, help="per-observation score CSV")
    p.add_argument("--alpha", type=float, required=True)
    p.add_argument("--B", type=int, default=2000)
    p.add_argument("--seed", type=int)
    p.add_argument("--info", help="Fisher information CSV")
    p.add_argument("--sigma2", type=float)
    p.add_argument("--moments", help="moment summary JSON for the "
                                     "χ²-level certificate")
    p.add_argument("--out")
    p.set_defaults(func=_cmd_score_test)

    p = sub.add_parser("experiment", help="reproducible sweep (CSV)")
    p.add_argument("--name", required=True,
                   choices=("portnoy", "coverage", "score-level",
                            "same-law-ball", "same-law-halfspace",
                            "anticoncentration", "normal-sweep"))
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--d", type=int, default=3)
    p.add_argument("--n", type=int, default=1000)
    p.add_argument("--B", type=int, default=1000)
    p.add_argument("--trials", type=int, default=1000)
    p.add_argument("--alpha", type=float, default=0.1)
    p.add_argument("--family", default="gaussian",
                   choices=[f for f in FAMILIES if f != "user_csv"])
    p.add_argument("--reps", type=int, default=200)
    p.add_argument("--d-list", default="8,16,32,64")
    p.add_argument("--n-list", default="1000,4000,16000")
    p.add_argument("--eps", type=float, default=1e-3)
    p.add_argument("--sigma2", type=float)
    p.add_argument("--centers", type=int, default=64)
    p.add_argument("--boot", type=int, default=50)
    p.add_argument("--blocks", type=int, default=4096,
                   help="replicates of the normalized sum (normal-sweep)")
    p.add_argument("--null-runs", type=int, default=200)
    p.add_argument("--calibration-n", type=int, default=4096)
    p.set_defaults(func=_cmd_experiment, out=None)

    return parser


def _apply_config(parser: argparse.ArgumentParser, argv: list[str]) -> None:
    probe = argparse.ArgumentParser(add_help=False)
    probe.add_argument("--config")
    known, _ = probe.parse_known_args(argv)
    if not known.config:
        return
    with open(known.config, "r", encoding="utf-8") as fh:
        cfg = json.load(fh)
    if not isinstance(cfg, dict):
        raise ValueError("--config must contain a JSON object")
    valid = set()
    for action in parser._subparsers._group_actions[0].choices.values():
        valid.update(a.dest for a in action._actions)
    unknown = sorted(set(cfg) - valid)
    if unknown:
        raise ValueError("unknown config keys: " + ", ".join(unknown))
    for sub in parser._subparsers._group_actions[0].choices.values():
        hit = {k: v for k, v in cfg.items()
               if k in {a.dest for a in sub._actions}}
        sub.set_defaults(**hit)
        for action in sub._actions:
            if action.dest in hit:
                action.required = False


def main(argv=None) -> int:
    argv = list(sys.argv[1:]) if argv is None else list(argv)
    parser = _build_parser()
    try:
        _apply_config(parser, argv)
        args = parser.parse_args(argv)
        return args.func(args)
    except InfeasibleError as exc:
        _note(f"certificate infeasible: {exc}")
        return EXIT_INFEASIBLE
    except (ValueError, OSError, KeyError, json.JSONDecodeError) as exc:
        _note(f"configuration error: {exc}")
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
