"""Command-line interface: ``jitterest {rules,simulate,estimate,crb,experiment}``."""

from __future__ import annotations

import argparse
import json
import logging
import sys

import numpy as np

from . import csvio
from .crb import CRB_J, DEFAULT_S, crb_values
from .em import EmSettings, run_em
from .experiments import ExperimentConfig, Kind, run, trial_truth
from .likelihood import DEFAULT_J, LikelihoodContext, log_likelihood
from .linear import expected_H, linear_nojitter, linear_unbiased
from .model import ModelConfig, generate_samples
from .quadrature import Family, gauss_hermite_rule, gauss_legendre_rule, normal_tan_rule

MODEL_KEYS = {"K", "M", "sigma_z", "sigma_w", "J", "family"}


def load_model(path):
    """Read a model JSON file: K, M, sigma_z, sigma_w and optionally J and family."""
    with open(path) as fh:
        data = json.load(fh)
    unknown = set(data) - MODEL_KEYS
    if unknown:
        raise ValueError(f"unknown model config keys: {sorted(unknown)}")
    cfg = ModelConfig(data["K"], data["M"], data["sigma_z"], data["sigma_w"])
    return cfg, int(data.get("J", DEFAULT_J)), data.get("family")


def _emit(text, out):
    if out:
        with open(out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def cmd_rules(args):
    fam = Family(args.family)
    if fam is Family.GAUSS_HERMITE:
        rule = gauss_hermite_rule(args.J)
    elif fam is Family.GAUSS_LEGENDRE:
        rule = gauss_legendre_rule(args.J, args.a, args.b)
    else:
        rule = normal_tan_rule(args.J, args.sigma)
    rows = [{"index": j, "abscissa": x, "weight": w} for j, (x, w) in enumerate(zip(rule.abscissas, rule.weights))]
    _emit(csvio.to_text(rows, ["index", "abscissa", "weight"]), args.out)


def cmd_simulate(args):
    cfg, _, _ = load_model(args.config)
    x = csvio.read_vector(args.x) if args.x else trial_truth(cfg.K, args.seed)
    samples = generate_samples(cfg, x, args.seed)
    _emit(csvio.to_text(csvio.sample_rows(samples), csvio.sample_columns(samples)), args.out)


def cmd_estimate(args):
    cfg, J, family = load_model(args.config)
    samples = csvio.read_samples(args.samples)
    if len(samples) != cfg.N:
        raise SystemExit(f"expected {cfg.N} samples, got {len(samples)}")
    ctx = LikelihoodContext(cfg, J, family)
    columns = ["iteration", "loglik", "step", "termination"] + [f"x_{k}" for k in range(cfg.K)]
    if args.method == "em":
        settings = EmSettings(I_max=args.max_iter, J=J, family=family)
        tr = run_em(cfg, samples, settings, ctx=ctx)
        rows = []
        for i, (x, ll) in enumerate(zip(tr.iterates, tr.loglik)):
            row = {"iteration": i, "loglik": ll, "step": tr.steps[i - 1] if i else None,
                   "termination": tr.termination.value if i == tr.iterations else None}
            row.update({f"x_{k}": v for k, v in enumerate(x)})
            rows.append(row)
    else:
        if args.method == "linear":
            x = linear_unbiased(cfg, expected_H(cfg, ctx.rule), samples)
        else:
            x = linear_nojitter(cfg, samples)
        row = {"iteration": 0, "loglik": log_likelihood(ctx, samples, x), "termination": "closed_form"}
        row.update({f"x_{k}": v for k, v in enumerate(x)})
        rows = [row]
    _emit(csvio.to_text(rows, columns), args.out)


def cmd_crb(args):
    cfg, _, family = load_model(args.config)
    x = csvio.read_vector(args.x)
    fe = crb_values(cfg, x, S=args.S, seed=args.seed, J=args.J, family=family)
    row = dict(K=cfg.K, M=cfg.M, sigma_z=cfg.sigma_z, sigma_w=cfg.sigma_w, S=fe.S, J=fe.J, crb_y=fe.crb_y,
               crb_y_se=fe.crb_y_se, crb_yz=fe.crb_yz, cond_y=fe.cond_y, cond_yz=fe.cond_yz)
    _emit(csvio.to_text([row], list(row)), args.out)


def cmd_experiment(args):
    kind = Kind(args.kind)
    if args.config:
        cfg = ExperimentConfig.load(args.config)
        if cfg.kind is not kind:
            raise SystemExit(f"config is for kind {cfg.kind.value!r}, not {kind.value!r}")
    else:
        cfg = ExperimentConfig(kind)
    if args.seed is not None:
        cfg = cfg.replace(base_seed=args.seed)
    out = args.out or cfg.output_path or f"results-{kind.value}"
    result = run(cfg, threads=args.threads, out_dir=out)
    for path in result.files:
        print(path)


def build_parser():
    p = argparse.ArgumentParser(prog="jitterest", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("rules", help="dump a quadrature rule as CSV")
    r.add_argument("--family", choices=[f.value for f in Family], default="gh")
    r.add_argument("--J", type=int, default=DEFAULT_J)
    r.add_argument("--a", type=float, default=-1.0)
    r.add_argument("--b", type=float, default=1.0)
    r.add_argument("--sigma", type=float, default=1.0, help="normal std for gl-tan")
    r.add_argument("--out")
    r.set_defaults(func=cmd_rules)

    s = sub.add_parser("simulate", help="write a synthetic sample set (n, y, z, w)")
    s.add_argument("--config", required=True, help="model JSON")
    s.add_argument("--x", help="coefficient CSV; drawn from N(0, I) by seed if omitted")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out")
    s.set_defaults(func=cmd_simulate)

    e = sub.add_parser("estimate", help="estimate coefficients from a sample CSV")
    e.add_argument("--config", required=True)
    e.add_argument("--samples", required=True)
    e.add_argument("--method", choices=["em", "linear", "nojitter"], default="em")
    e.add_argument("--max-iter", type=int, default=100)
    e.add_argument("--out")
    e.set_defaults(func=cmd_estimate)

    c = sub.add_parser("crb", help="Cramer-Rao bounds for given coefficients")
    c.add_argument("--config", required=True)
    c.add_argument("--x", required=True)
    c.add_argument("--S", type=int, default=DEFAULT_S)
    c.add_argument("--J", type=int, default=CRB_J)
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--out")
    c.set_defaults(func=cmd_crb)

    x = sub.add_parser("experiment", help="run a simulation study")
    x.add_argument("--kind", required=True, choices=[k.value for k in Kind])
    x.add_argument("--config")
    x.add_argument("--out", help="output directory")
    x.add_argument("--seed", type=int)
    x.add_argument("--threads", type=int, default=1)
    x.set_defaults(func=cmd_experiment)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    args.func(args)
    return 0


if __name__ == "__main__":
    sys.exit(main())
