"""Command-line experiment runner.

Every subcommand that writes files also writes a JSON manifest next to its
outputs (resolved arguments, seed, version and SHA-256 digests). Exit codes:
0 success, 1 runtime or IO failure, 2 usage error.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import os
import sys

import numpy as np

from . import __version__
from .core import ConfigError, ScoredPopulation, UtilityMatrix, UtilityParams, derive_seed, read_population_csv

__all__ = ["main", "derive_seed", "build_parser"]


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(path, subcommand: str, args: dict, seed, inputs, outputs) -> None:
    manifest = {
        "subcommand": subcommand,
        "config": args,
        "seed": seed,
        "version": __version__,
        "inputs": {p: _sha256(p) for p in inputs},
        "outputs": {p: _sha256(p) for p in outputs},
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)


def _header(path) -> list:
    with open(path, newline="", encoding="utf-8") as fh:
        return next(csv.reader(fh), [])


def _is_feature_csv(path) -> bool:
    cols = set(_header(path))
    return {"A", "label"} <= cols and "p" not in cols


def _score_features(path) -> ScoredPopulation:
    """Scores from a logistic model fit on a generated feature CSV."""
    from .biasgen import read_feature_csv
    from .logistic import fit_logistic

    cols = read_feature_csv(path)
    feats = [cols["A"]] + ([cols["R"]] if "R" in cols else []) + [cols["Q"]]
    X = np.column_stack([np.asarray(c, dtype=float) for c in feats])
    sd = X.std(0)
    sd[sd == 0] = 1.0
    Xs = (X - X.mean(0)) / sd
    p = fit_logistic(Xs, cols["label"]).predict_proba(Xs)
    return ScoredPopulation(p, cols["A"], cols["label"], cols["id"], groups=(0, 1))


def _load_population(path) -> ScoredPopulation:
    return _score_features(path) if _is_feature_csv(path) else read_population_csv(path)


def _read_decisions(path, pop: ScoredPopulation) -> np.ndarray:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    if not rows or not {"id", "d"} <= set(rows[0]):
        raise ConfigError(f"{path}: header must contain id,d")
    by_id = {int(r["id"]): int(r["d"]) for r in rows}
    try:
        return np.array([by_id[int(i)] for i in pop.ids], dtype=np.int8)
    except KeyError as e:
        raise ConfigError(f"{path}: no decision for id {e.args[0]}") from None


def _manifest_path(args, default_dir=None, default_file=None):
    if getattr(args, "manifest", None):
        return args.manifest
    if default_dir:
        return os.path.join(default_dir, "manifest.json")
    if default_file:
        return default_file + ".manifest.json"
    return None


def _finish(args, seed, inputs, outputs, default_dir=None, default_file=None) -> None:
    path = _manifest_path(args, default_dir, default_file)
    if path:
        cfg = {k: v for k, v in vars(args).items() if k != "func"}
        write_manifest(path, args.command, cfg, seed, inputs, outputs)


# Subcommands ---------------------------------------------------------------

def cmd_generate(args) -> int:
    from .biasgen import BiasConfig, generate

    cfg = BiasConfig.from_json(args.config) if args.config else BiasConfig()
    if args.seed is not None:
        cfg = BiasConfig.from_dict({**cfg.to_dict(), "seed": args.seed})
    if args.n is not None:
        cfg = BiasConfig.from_dict({**cfg.to_dict(), "n": args.n})
    data = generate(cfg)
    data.write_csv(args.out, args.hidden)
    outs = [args.out] + ([args.hidden] if args.hidden else [])
    ins = [args.config] if args.config else []
    path = _manifest_path(args, default_file=args.out)
    write_manifest(path, "generate", cfg.to_dict(), cfg.seed, ins, outs)
    return 0


def cmd_audit(args) -> int:
    from .metrics import fairness_report

    if _is_feature_csv(args.data) and not args.decisions:
        from .biasgen import read_feature_csv
        from .core import apply_rule, UniformThreshold

        pop = _score_features(args.data)
        d = apply_rule(UniformThreshold(args.threshold), pop)
        labels = read_feature_csv(args.data)["label"]
    else:
        pop = _load_population(args.data)
        d = _read_decisions(args.decisions, pop) if args.decisions else (pop.p >= args.threshold).astype(np.int8)
        if pop.y is None:
            raise ConfigError("audit needs labels: population CSV lacks a y column")
        labels = pop.y
    rep = fairness_report(d, labels, pop.group, pop.groups)
    text = rep.to_json()
    _emit(text, args.out)
    _finish(args, None, [args.data] + ([args.decisions] if args.decisions else []),
            [args.out] if args.out else [], default_file=args.out)
    return 0


def _emit(text: str, out) -> None:
    if out:
        with open(out, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    else:
        sys.stdout.write(text + "\n")


def cmd_optimize(args) -> int:
    from .optimizer import SolveConfig, solve

    pop = _load_population(args.data)
    cfg = SolveConfig(grid_points=args.grid, eps_parity=args.eps, capacity=args.capacity,
                      seed=args.seed, labels=args.labels, method=args.method)
    res = solve(pop, UtilityParams(args.alpha, args.beta), args.constraint, cfg)
    _emit(res.to_json(), args.out)
    if args.decisions_out:
        with open(args.decisions_out, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["id", "d"])
            for i, di in zip(pop.ids, res.decisions):
                w.writerow([int(i), int(di)])
    outs = [p for p in (args.out, args.decisions_out) if p]
    _finish(args, args.seed, [args.data], outs, default_file=args.out)
    return 0


def _pattern(args):
    from .justice import Egalitarian, Maximin, Prioritarian, Sufficientarian

    if args.pattern == "egalitarian":
        return Egalitarian()
    if args.pattern == "maximin":
        return Maximin()
    if args.pattern == "prioritarian":
        return Prioritarian(args.k)
    return Sufficientarian(args.t)


def cmd_pareto(args) -> int:
    from .justice import pareto_front

    pop = _load_population(args.data)
    W = UtilityMatrix(*args.weights)
    front = pareto_front(pop, pop.y, UtilityParams(args.alpha, args.beta), W,
                         pattern=_pattern(args), bins=args.bins)
    front.to_csv(args.out)
    sys.stdout.write(json.dumps({"points": len(front.points), "candidates": front.n_candidates,
                                 "evaluated": front.n_evaluated}) + "\n")
    _finish(args, None, [args.data], [args.out], default_file=args.out)
    return 0


def cmd_adsim(args) -> int:
    from .adsim import SWEEPS, AdScenarioConfig, run_scenario, preset, write_sweep_csvs

    values = [float(v) for v in args.sweep.split(",")] if args.sweep else None
    common = {"repeats": args.repeats, "n": args.n, "seed": args.seed,
              "impression_fixed": args.impression}
    if args.scenario == "custom":
        if not args.config:
            raise ConfigError("custom scenario needs --config")
        with open(args.config, encoding="utf-8") as fh:
            raw = json.load(fh)
        param = raw.pop("sweep_param", None)
        base = {**common, **raw}
        if "constraints" in base:
            base["constraints"] = tuple(base["constraints"])
        if values is None or param is None:
            results = [(0.0, run_scenario(AdScenarioConfig(**base)))]
        else:
            results = []
            for v in values:
                kw = {**base, "k": dict(base.get("k", {"m": 0.05, "w": 0.05})),
                      "beta": dict(base.get("beta", {"m": 0.03, "w": 0.03}))}
                if param == "alpha":
                    kw["alpha"] = v
                elif param in ("beta_w", "beta_m"):
                    kw["beta"][param[-1]] = v
                elif param in ("k_w", "k_m"):
                    kw["k"][param[-1]] = v
                else:
                    raise ConfigError(f"unknown sweep_param {param!r}")
                results.append((v, run_scenario(AdScenarioConfig(**kw))))
    else:
        grid = SWEEPS[args.scenario][1] if values is None else values
        results = [(float(v), run_scenario(preset(args.scenario, v, **common))) for v in grid]
    outs = write_sweep_csvs(results, args.out)
    _finish(args, args.seed, [args.config] if args.config else [], outs, default_dir=args.out)
    return 0


def cmd_loopsim(args) -> int:
    from .loopsim import LoopConfig, simulate

    cfg = LoopConfig.preset(args.loop, steps=args.steps, seed=args.seed,
                            record_every=args.record_every, retrain_every=args.retrain_every)
    res = simulate(cfg)
    os.makedirs(args.out, exist_ok=True)
    path = os.path.join(args.out, f"{args.loop}.csv")
    res.to_csv(path)
    _finish(args, args.seed, [], [path], default_dir=args.out)
    return 0


def cmd_sufftest(args) -> int:
    from .metrics import sufficiency_test

    with open(args.data, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise ConfigError(f"{args.data}: no rows")
    for c in (args.values, args.outcome, args.group):
        if c not in rows[0]:
            raise ConfigError(f"{args.data}: missing column {c!r}")
    v = np.array([float(r[args.values]) for r in rows])
    y = np.array([float(r[args.outcome]) for r in rows])
    g = np.array([r[args.group] for r in rows])
    res = sufficiency_test(v, y, g, n_bins=args.bins, alpha_level=args.alpha_level)
    out = {
        "groups": list(res.groups),
        "reject": res.reject,
        "alpha_level": res.alpha_level,
        "corrected_level": res.corrected_level,
        "bins": [
            {"lo": b.lo, "hi": b.hi, "n": b.n, "mean": b.mean, "difference": b.difference,
             "ci": b.ci, "p_value": b.p_value, "flagged": b.flagged}
            for b in res.bins
        ],
    }
    _emit(json.dumps(out, indent=2), args.out)
    _finish(args, None, [args.data], [args.out] if args.out else [], default_file=args.out)
    return 0


# Parser --------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="fairdecide", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)

    def add(name, func, help_):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--manifest", help="manifest path (default: next to the outputs)")
        p.set_defaults(func=func)
        return p

    p = add("generate", cmd_generate, "draw a synthetic biased dataset")
    p.add_argument("--config", help="JSON bias config; unknown keys are rejected")
    p.add_argument("--out", required=True)
    p.add_argument("--hidden", help="also write hidden ground-truth columns here")
    p.add_argument("--seed", type=int)
    p.add_argument("--n", type=int)

    p = add("audit", cmd_audit, "group fairness report as JSON")
    p.add_argument("--data", required=True, help="population CSV (id,group,p,y) or generated feature CSV")
    p.add_argument("--decisions", help="CSV with id,d")
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--out")

    p = add("optimize", cmd_optimize, "utility-maximizing rule under a fairness constraint")
    p.add_argument("--data", required=True)
    p.add_argument("--constraint", required=True, choices=["none", "sp", "tpr", "fpr", "ppv", "for", "suff"])
    p.add_argument("--alpha", type=float, required=True)
    p.add_argument("--beta", type=float, required=True)
    p.add_argument("--grid", type=int, default=201)
    p.add_argument("--eps", type=float, default=0.005)
    p.add_argument("--capacity", type=int)
    p.add_argument("--labels", choices=["auto", "realized", "expected"], default="auto")
    p.add_argument("--method", choices=["auto", "exact", "fast"], default="auto")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.add_argument("--decisions-out")

    p = add("pareto", cmd_pareto, "fairness/utility front over per-group interval rules")
    p.add_argument("--data", required=True)
    p.add_argument("--alpha", type=float, required=True)
    p.add_argument("--beta", type=float, required=True)
    p.add_argument("--weights", type=float, nargs=4, metavar=("W00", "W01", "W10", "W11"),
                   default=[0.0, 0.0, 1.0, 1.0])
    p.add_argument("--pattern", choices=["egalitarian", "maximin", "prioritarian", "sufficientarian"],
                   default="maximin")
    p.add_argument("--k", type=float, default=2.0, help="prioritarian weight")
    p.add_argument("--t", type=float, default=0.0, help="sufficientarian threshold")
    p.add_argument("--bins", type=int, default=100)
    p.add_argument("--out", required=True)

    p = add("adsim", cmd_adsim, "ad-delivery fairness simulation")
    p.add_argument("--scenario", required=True, choices=["A", "B", "C", "D", "custom"])
    p.add_argument("--sweep", help="comma-separated sweep values (default: preset grid)")
    p.add_argument("--config", help="JSON for --scenario custom")
    p.add_argument("--impression", action="store_true", help="fix the total number of impressions")
    p.add_argument("--repeats", type=int, default=30)
    p.add_argument("--n", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)

    p = add("loopsim", cmd_loopsim, "feedback-loop simulation")
    p.add_argument("--loop", required=True, choices=["sampling", "individual", "feature", "mlmodel", "outcome"])
    p.add_argument("--steps", type=int, default=10_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--record-every", type=int, default=100)
    p.add_argument("--retrain-every", type=int, default=50)
    p.add_argument("--out", required=True)

    p = add("sufftest", cmd_sufftest, "binned sufficiency test")
    p.add_argument("--data", required=True)
    p.add_argument("--values", default="p")
    p.add_argument("--outcome", default="y")
    p.add_argument("--group", default="group")
    p.add_argument("--bins", type=int, default=10)
    p.add_argument("--alpha-level", type=float, default=0.05)
    p.add_argument("--out")
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        return args.func(args)
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except (ValueError, RuntimeError, KeyError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
