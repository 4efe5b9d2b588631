"""Command-line entry point: ``leverbench <subcommand>``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict
from pathlib import Path

from . import bounds as bnd
from .estimators import REGISTRY, load_model, make_estimator, save_model
from .experiments import ExperimentConfig, default_output_root, emit_plots, resolve_world, run_learning_curve
from .icl import (
    ChatClient,
    EndpointConfig,
    malformed_responder,
    mock_transport,
    run_icl,
    run_pipeline_prompts,
    score_icl,
    truth_responder,
)
from .metrics import evaluate, make_perturbations
from .sampling import Dataset, export_corpus, sample_dataset
from .world import WorldSpec, generate_world


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def _params(pairs) -> dict:
    out = {}
    for pair in pairs or []:
        key, sep, value = pair.partition("=")
        if not sep:
            raise SystemExit(f"parameters must look like key=value, got {pair!r}")
        out[key] = _parse_value(value)
    return out


def _world_from_args(args) -> WorldSpec:
    if getattr(args, "world", None):
        return WorldSpec.load(args.world)
    return resolve_world({"preset": args.preset})


def cmd_gen_world(args):
    if args.preset:
        world = resolve_world({"preset": args.preset})
    else:
        dv = [bool(int(v)) for v in args.density_volume.split(",")] if args.density_volume else False
        sides = None
        if args.sides:
            sides = [{"L": 1, "R": -1, "*": None}[v] for v in args.sides.split(",")]
        world = generate_world(args.seed, args.objects, dv, mu=args.mu, sides=sides, name=args.name)
    if args.out:
        world.save(args.out)
    else:
        print(world.to_json())


def cmd_sample(args):
    world = WorldSpec.load(args.world)
    data = sample_dataset(world, args.n, args.seed)
    data.save(args.out)
    print(f"wrote {len(data)} samples to {args.out}")


def cmd_export_corpus(args):
    if args.dataset:
        data = Dataset.load(args.dataset)
    else:
        if not (args.world and args.n is not None):
            raise SystemExit("export-corpus needs --dataset or --world with --n")
        data = sample_dataset(WorldSpec.load(args.world), args.n, args.seed)
    path = export_corpus(data, args.out)
    print(f"wrote {len(data)} lines to {path}")


def cmd_fit(args):
    data = Dataset.load(args.dataset)
    model = make_estimator(args.estimator, world=data.world, **_params(args.param))
    model.fit(data.X, data.y)
    save_model(model, args.out)
    print(f"fitted {args.estimator} on {len(data)} samples -> {args.out}")


def cmd_eval(args):
    world = WorldSpec.load(args.world)
    model = load_model(args.model)
    perturbations = make_perturbations(world, args.perturbations, args.seed)
    report = evaluate(
        world,
        model,
        perturbations,
        n_train=args.n_train,
        estimator_id=args.estimator_id or Path(args.model).stem,
        mode=args.mode,
        n_draws=args.draws,
        seeds={"perturbation": args.seed, "eval": args.seed},
    )
    print(report.to_csv() if args.format == "csv" else report.to_json(), end="" if args.format == "csv" else "\n")


def cmd_curve(args):
    config = ExperimentConfig.load(args.config)
    if args.out:
        config.output_dir = args.out
    elif config.output_dir is None:
        config.output_dir = str(default_output_root() / config.config_hash())
    if args.jobs:
        config.n_jobs = args.jobs
    record = run_learning_curve(config, resume=not args.no_resume)
    if args.plots:
        for path in emit_plots(record):
            print(f"plot: {path}")
    print(f"results: {Path(config.output_dir) / 'results.csv'}")


def cmd_bounds(args):
    rows = bnd.bound_table(args.epsilon, args.inputs, args.budget, targets=args.targets)
    if args.json:
        print(json.dumps([r.as_dict() for r in rows], indent=2))
        return
    print(f"epsilon={args.epsilon}  N*={bnd.required_per_input(args.epsilon)}  "
          f"inputs={args.inputs}  budget={args.budget}")
    print(bnd.format_table(rows))


def cmd_icl(args):
    worlds = [WorldSpec.load(p) for p in args.world] if args.world else [resolve_world({"preset": p}) for p in args.preset]
    transport = None
    if args.mock == "truth":
        if len(worlds) != 1:
            raise SystemExit("--mock truth needs exactly one world")
        transport = mock_transport(truth_responder(worlds[0]))
    elif args.mock == "malformed":
        transport = mock_transport(malformed_responder)
    client = ChatClient(
        EndpointConfig(model=args.model, base_url=args.base_url), transport=transport, audit_path=args.audit
    )
    if args.pipeline:
        records = [
            run_pipeline_prompts(w, client, args.context_sizes[0], args.seed + k, args.hint_level)
            for w in worlds
            for k in range(args.sets)
        ]
        payload = {"pipeline": [asdict(r) for r in records]}
    else:
        results = run_icl(
            worlds, client, args.context_sizes, n_sets=args.sets, n_test=args.tests, base_seed=args.seed,
            max_concurrent=args.concurrency,
        )
        payload = {"summary": score_icl(results), "experiments": [r.to_dict() for r in results]}
        s = payload["summary"]
        print(f"mean TV {s['mean_tv']:.4f}  <{s['threshold']}: {s['frac_below']:.3f}  "
              f"({s['n_experiments']} experiments, {s['n_failed']} failed)")
    if args.out:
        Path(args.out).write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="leverbench", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-world", help="generate a world spec (JSON)")
    p.add_argument("--preset", choices=["world-1", "world-3"])
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--objects", type=int, default=2)
    p.add_argument("--density-volume", help="per-object 0/1 flags, e.g. 1,1")
    p.add_argument("--sides", help="per-object L/R/* (random), e.g. R,L")
    p.add_argument("--mu", type=float, help="override the seeded latent mean")
    p.add_argument("--name")
    p.add_argument("--out")
    p.set_defaults(func=cmd_gen_world)

    p = sub.add_parser("sample", help="sample a dataset (JSON)")
    p.add_argument("--world", required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("export-corpus", help="write rendered text lines plus metadata sidecar")
    p.add_argument("--dataset")
    p.add_argument("--world")
    p.add_argument("--n", type=int)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_export_corpus)

    p = sub.add_parser("fit", help="fit an estimator on a dataset and save it as JSON")
    p.add_argument("--dataset", required=True)
    p.add_argument("--estimator", required=True, choices=sorted(REGISTRY))
    p.add_argument("--param", action="append", help="estimator parameter key=value (repeatable)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("eval", help="expected TV and structure score of a saved model")
    p.add_argument("--world", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--mode", choices=["enumerate", "monte-carlo"], default="enumerate")
    p.add_argument("--draws", type=int, default=10_000)
    p.add_argument("--perturbations", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n-train", type=int, default=0)
    p.add_argument("--estimator-id")
    p.add_argument("--format", choices=["json", "csv"], default="json")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("curve", help="run a learning-curve sweep from a JSON config")
    p.add_argument("--config", required=True)
    p.add_argument("--out")
    p.add_argument("--jobs", type=int)
    p.add_argument("--no-resume", action="store_true")
    p.add_argument("--plots", action="store_true")
    p.set_defaults(func=cmd_curve)

    p = sub.add_parser("bounds", help="sample-complexity bounds for the frequency estimator")
    p.add_argument("--epsilon", type=float, required=True)
    p.add_argument("--inputs", type=int, required=True)
    p.add_argument("--budget", type=int, required=True)
    p.add_argument("--targets", type=int, nargs="*")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_bounds)

    p = sub.add_parser("icl", help="zero-shot LLM experiments against a chat-completion endpoint")
    src = p.add_mutually_exclusive_group()
    src.add_argument("--world", action="append")
    src.add_argument("--preset", action="append", choices=["world-1", "world-3"])
    p.add_argument("--context-sizes", type=int, nargs="+", default=[10, 100, 1000])
    p.add_argument("--sets", type=int, default=2)
    p.add_argument("--tests", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--model", default="gpt-4o")
    p.add_argument("--base-url")
    p.add_argument("--mock", choices=["truth", "malformed"])
    p.add_argument("--audit", help="JSON-lines request/response log")
    p.add_argument("--concurrency", type=int, default=1)
    p.add_argument("--pipeline", action="store_true", help="send pipeline prompts instead (never executed)")
    p.add_argument("--hint-level", type=int, default=0, choices=[0, 1, 2, 3])
    p.add_argument("--out")
    p.set_defaults(func=cmd_icl)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if args.command == "icl" and not (args.world or args.preset):
        parser.error("icl needs --world or --preset")
    args.func(args)
    return 0


if __name__ == "__main__":
    sys.exit(main())
