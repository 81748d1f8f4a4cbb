"""Command-line front end.

Subcommands::

    multicalib gen         --config CFG | --preset NAME  --out DIR [--seed N]
    multicalib learn       --instance DIR --config CFG --out DIR [--alpha --lambda --gamma --oracle]
    multicalib audit       --instance DIR --predictor CSV --alpha F --lambda F [--out DIR]
    multicalib postprocess --instance DIR --family DIR --out DIR [--config CFG] [--alpha --lambda]
    multicalib reduce      --instance DIR --labels CSV --config CFG --out DIR
    multicalib report      TRACE.jsonl ... --out CSV

Exit codes: 0 success or clean audit, 1 audit violation, 2 bad input,
3 oracle refusal, 4 guard trip.  Every command that writes an output
directory also writes ``manifest.json`` describing the run.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import platform
import sys
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .agnostic_bridge import WALContract, load_labels, wal_from_multicalibration
from .auditor import check_al_multicalibration, check_multi_ae
from .bestinclass import PredictorFamily, postprocess
from .exceptions import GuardTripped, MulticalibError, OracleError
from .learners import (LearnTrace, learn_multi_ae, learn_multicalibrated, multi_ae_bound,
                       multicalibration_bound)
from .oracles import oracle_from_config, sq_oracle_from_config
from .population import (generate_synthetic, load_collection, load_population, load_truth,
                         store_collection, store_population, store_truth)
from .predictor import DiscretizationGrid, load_predictor, load_program, store_predictor, store_program

EXIT_OK, EXIT_VIOLATION, EXIT_BAD_INPUT, EXIT_ORACLE, EXIT_GUARD = 0, 1, 2, 3, 4

PRESETS = {
    "half_qualified": {
        "n": 1000, "bool_dim": 4, "real_dim": 0,
        "collection": {"conjunctions": 0, "include_all": True},
        "truth": {"kind": "half_qualified", "set_size": 200, "outside": 0.5},
    },
    "constant": {
        "n": 200, "bool_dim": 3, "real_dim": 0,
        "collection": {"conjunctions": 4, "max_width": 1, "gamma": 0.1},
        "truth": {"kind": "constant", "value": 0.5},
    },
}

REPORT_COLUMNS = ("trace", "algorithm", "alpha", "lambda", "gamma", "N", "updates", "bound",
                  "potential_curve")

LEARNER_DEFAULTS = {"algorithm": "multicalibration", "max_rounds_factor": 10, "oracle": {}}


@dataclass
class RunManifest:
    command: str
    config: dict
    seeds: dict
    inputs: dict = field(default_factory=dict)
    outputs: list = field(default_factory=list)
    wall_time: float = 0.0

    @property
    def config_hash(self) -> str:
        blob = json.dumps(self.config, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    def to_json(self) -> dict:
        return {**asdict(self), "config_hash": self.config_hash,
                "versions": {"multicalib": __version__, "numpy": np.__version__,
                             "python": platform.python_version()}}

    def store(self, out: Path) -> None:
        (out / "manifest.json").write_text(json.dumps(self.to_json(), indent=1) + "\n")


class BadInput(Exception):
    pass


def _read_json(path) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise BadInput(f"cannot read JSON config {path}: {exc}") from exc


def _out_dir(path) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load_instance(path):
    d = Path(path)
    pop = load_population(d / "population.csv")
    truth = load_truth(d / "truth.csv")
    coll = load_collection(d / "collection.json", pop)
    if truth.n != pop.n:
        raise BadInput(f"{d}: truth has {truth.n} rows, population has {pop.n}")
    return pop, truth, coll


def _require_seed(cfg: dict, seed) -> int:
    if seed is not None:
        cfg["seed"] = seed
    if "seed" not in cfg:
        raise BadInput("a seed is required (config key 'seed' or --seed)")
    return int(cfg["seed"])


def _override(cfg: dict, args, keys=("alpha", "lambda", "gamma")) -> dict:
    for key in keys:
        val = getattr(args, key.replace("lambda", "lam"), None)
        if val is not None:
            cfg[key] = val
    return cfg


def cmd_gen(args) -> int:
    if (args.config is None) == (args.preset is None):
        raise BadInput("give exactly one of --config and --preset")
    cfg = dict(PRESETS[args.preset]) if args.preset else _read_json(args.config)
    seed = _require_seed(cfg, args.seed)
    start = time.perf_counter()
    pop, truth, coll = generate_synthetic(cfg, seed)
    out = _out_dir(args.out)
    store_population(pop, out / "population.csv")
    store_truth(truth, out / "truth.csv")
    store_collection(coll, out / "collection.json")
    RunManifest("gen", cfg, {"instance": seed}, {"config": args.config, "preset": args.preset},
                ["population.csv", "truth.csv", "collection.json"],
                time.perf_counter() - start).store(out)
    print(f"wrote instance with N={pop.n}, |C|={len(coll.predicates)} to {out}")
    return EXIT_OK


def cmd_learn(args) -> int:
    cfg = {**LEARNER_DEFAULTS, **_read_json(args.config)}
    cfg = _override(cfg, args)
    if args.oracle:
        cfg["oracle"] = {**cfg["oracle"], "flavor": args.oracle}
    seed = _require_seed(cfg, args.seed)
    cfg["oracle"] = {"seed": seed, **cfg["oracle"]}
    pop, truth, coll = _load_instance(args.instance)
    alpha = float(cfg["alpha"])
    gamma = float(cfg.get("gamma", coll.gamma))
    out = _out_dir(args.out)
    start = time.perf_counter()
    if cfg["algorithm"] == "multi_ae":
        sq = sq_oracle_from_config(cfg["oracle"], truth, alpha * gamma / 4)
        x, trace = learn_multi_ae(coll, pop, sq, alpha, gamma, truth,
                                  guard_factor=cfg["max_rounds_factor"])
        failing = check_multi_ae(x, truth, coll.predicates, pop, alpha)
        summary = {"clean": not failing, "n_violations": len(failing)}
        outputs = ["predictor.csv", "trace.jsonl", "audit.json"]
    elif cfg["algorithm"] == "multicalibration":
        lam = float(cfg["lambda"])
        oracle = oracle_from_config(cfg["oracle"], truth)
        x, prog, trace = learn_multicalibrated(coll, pop, oracle, alpha, lam, gamma, truth,
                                               guard_factor=cfg["max_rounds_factor"])
        store_program(prog, out / "program.json")
        report = check_al_multicalibration(x, truth, coll, pop, alpha + lam,
                                           DiscretizationGrid(lam))
        summary = {"level": alpha + lam, **{k: v for k, v in report.to_json().items()
                                            if k in ("clean", "n_violations")}}
        outputs = ["predictor.csv", "program.json", "trace.jsonl", "audit.json"]
    else:
        raise BadInput(f"unknown algorithm {cfg['algorithm']!r}")
    store_predictor(x, out / "predictor.csv")
    trace.store(out / "trace.jsonl")
    (out / "audit.json").write_text(json.dumps(summary) + "\n")
    RunManifest("learn", cfg, {"oracle": cfg["oracle"]["seed"]}, {"instance": str(args.instance)},
                outputs, time.perf_counter() - start).store(out)
    print(f"{trace.updates} updates, audit {'clean' if summary['clean'] else 'NOT clean'}")
    return EXIT_OK


def cmd_audit(args) -> int:
    pop, truth, coll = _load_instance(args.instance)
    if args.alpha is None or args.lam is None:
        raise BadInput("audit needs --alpha and --lambda")
    x = _read_predictor(args.predictor)
    if x.size != pop.n:
        raise BadInput(f"predictor has {x.size} rows, population has {pop.n}")
    report = check_al_multicalibration(x, truth, coll, pop, args.alpha,
                                       DiscretizationGrid(args.lam))
    text = json.dumps(report.to_json(), indent=1)
    if args.out:
        out = _out_dir(args.out)
        (out / "audit.json").write_text(text + "\n")
        RunManifest("audit", {"alpha": args.alpha, "lambda": args.lam}, {},
                    {"instance": str(args.instance), "predictor": str(args.predictor)},
                    ["audit.json"]).store(out)
    else:
        print(text)
    return EXIT_OK if report.clean else EXIT_VIOLATION


def _read_predictor(path) -> np.ndarray:
    """A predictor file (``id,x``) or a truth file (``id,p``) read as a predictor."""
    with open(path) as fh:
        header = fh.readline().strip()
    if header == "id,p":
        return np.array(load_truth(path).probs)
    return load_predictor(path)


def _load_family(path) -> PredictorFamily:
    d = Path(path)
    files = sorted(p for p in d.iterdir() if p.suffix in (".csv", ".json"))
    if not files:
        raise BadInput(f"{d}: no predictor files (.csv) or programs (.json)")
    members = [_read_predictor(p) if p.suffix == ".csv" else load_program(p) for p in files]
    return PredictorFamily([p.stem for p in files], members)


def cmd_postprocess(args) -> int:
    cfg = _read_json(args.config) if args.config else {}
    cfg = _override(cfg, args, ("alpha", "lambda"))
    if "alpha" not in cfg:
        raise BadInput("postprocess needs alpha (config or --alpha)")
    pop, truth, coll = _load_instance(args.instance)
    family = _load_family(args.family)
    start = time.perf_counter()
    oracle = oracle_from_config({"seed": 0, **cfg.get("oracle", {})}, truth)
    x, prog, report = postprocess(coll, family, float(cfg["alpha"]), pop, cfg.get("lambda"),
                                  oracle, truth)
    out = _out_dir(args.out)
    store_predictor(x, out / "predictor.csv")
    store_program(prog, out / "program.json")
    report.store(out / "report.json")
    RunManifest("postprocess", cfg, {}, {"instance": str(args.instance),
                                         "family": str(args.family)},
                ["predictor.csv", "program.json", "report.json"],
                time.perf_counter() - start).store(out)
    print(f"gap {report.gap:.4f} against bound {report.bound:.4f}")
    return EXIT_OK


def cmd_reduce(args) -> int:
    cfg = _read_json(args.config)
    cfg = _override(cfg, args, ("alpha", "gamma"))
    try:
        contract = WALContract(float(cfg["rho"]), float(cfg["tau"]))
        alpha, gamma = float(cfg["alpha"]), float(cfg["gamma"])
    except KeyError as exc:
        raise BadInput(f"reduce config lacks {exc}") from exc
    pop, _, coll = _load_instance(args.instance)
    y = load_labels(args.labels)
    if y.size != pop.n:
        raise BadInput(f"labels have {y.size} rows, population has {pop.n}")
    start = time.perf_counter()
    h, branch = wal_from_multicalibration(coll, pop, y, contract, gamma, alpha)
    out = _out_dir(args.out)
    h.store(out / "hypothesis.json")
    RunManifest("reduce", cfg, {}, {"instance": str(args.instance), "labels": str(args.labels)},
                ["hypothesis.json"], time.perf_counter() - start).store(out)
    print(f"branch {branch}, correlation {float(np.mean(h.values * y)):.4f}")
    return EXIT_OK


def cmd_report(args) -> int:
    """One row per trace.  ``bound`` is the update bound of the trace's
    algorithm; ``potential_curve`` is the recorded ``||x - p*||^2`` sequence
    joined with ``;`` (empty when the run had no ground truth)."""
    rows = []
    for path in args.traces:
        trace = LearnTrace.load(path)
        p = trace.params
        if trace.algorithm == "multi_ae":
            bound = multi_ae_bound(p["alpha"], p["gamma"])
        elif trace.algorithm == "multicalibration":
            bound = multicalibration_bound(p["alpha"], p["lambda"], p["gamma"])
        else:
            bound = 16.0 / p["tau"] ** 2
        rows.append([str(path), trace.algorithm, p.get("alpha"), p.get("lambda", ""),
                     p.get("gamma"), trace.n, trace.updates, bound,
                     ";".join(f"{v:.9g}" for v in trace.potentials())])
    fh = open(args.out, "w", newline="") if args.out else sys.stdout
    try:
        writer = csv.writer(fh)
        writer.writerow(REPORT_COLUMNS)
        writer.writerows(rows)
    finally:
        if args.out:
            fh.close()
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="multicalib", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, out_required=True):
        p.add_argument("--config", type=Path)
        p.add_argument("--out", type=Path, required=out_required)
        p.add_argument("--seed", type=int)
        p.add_argument("--alpha", type=float)
        p.add_argument("--lambda", dest="lam", type=float)
        p.add_argument("--gamma", type=float)
        p.add_argument("--oracle", choices=("exact", "empirical", "private"))

    p = sub.add_parser("gen", help="generate a synthetic instance")
    common(p)
    p.add_argument("--preset", choices=sorted(PRESETS))
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("learn", help="run a learner on an instance")
    common(p)
    p.add_argument("--instance", type=Path, required=True)
    p.set_defaults(func=cmd_learn)

    p = sub.add_parser("audit", help="audit a predictor; exit 1 on violation")
    common(p, out_required=False)
    p.add_argument("--instance", type=Path, required=True)
    p.add_argument("--predictor", type=Path, required=True)
    p.set_defaults(func=cmd_audit)

    p = sub.add_parser("postprocess", help="calibrate against a family of predictors")
    common(p)
    p.add_argument("--instance", type=Path, required=True)
    p.add_argument("--family", type=Path, required=True)
    p.set_defaults(func=cmd_postprocess)

    p = sub.add_parser("reduce", help="answer a weak agnostic learning query")
    common(p)
    p.add_argument("--instance", type=Path, required=True)
    p.add_argument("--labels", type=Path, required=True)
    p.set_defaults(func=cmd_reduce)

    p = sub.add_parser("report", help="tabulate learning traces as CSV")
    p.add_argument("traces", nargs="+", type=Path)
    p.add_argument("--out", type=Path)
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except OracleError as exc:
        print(f"oracle refused: {exc}", file=sys.stderr)
        return EXIT_ORACLE
    except GuardTripped as exc:
        print(f"guard tripped: {exc}", file=sys.stderr)
        return EXIT_GUARD
    except (BadInput, MulticalibError, ValueError, KeyError, OSError) as exc:
        print(f"bad input: {exc}", file=sys.stderr)
        return EXIT_BAD_INPUT


if __name__ == "__main__":
    sys.exit(main())
