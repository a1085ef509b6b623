"""Command line front end.

Six subcommands cover the artifact lifecycle: ``worldgen`` builds a world
directory with its datasets, ``train-retriever`` and ``train-transe`` produce
model files, ``eval`` scores a split, ``experiment`` runs one of the packaged
studies, and ``serve`` starts the HTTP service.  Every run writes a JSON
report; runs that produce predictions also write a JSON-lines log with one
pipeline trace per question.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
import time
from typing import Optional

from .experiments import (
    EXPERIMENT_KINDS,
    cases_from,
    run_heldout_injection,
    run_k_ablation,
    run_novel_combination,
    run_revise_ablation,
    train_items_from,
    tuned_setup,
)
from .linker import AliasTable
from .memory import CaseMemory
from .pipeline import PipelineComponents, PipelineFlags, evaluate, prediction_log_line
from .retriever import Encoder, TrainConfig, train_retriever
from .revise import EmbeddingTable, TranseConfig, train_transe
from .reuse import GeneratorConfig
from .tuning import tuned_profile
from .worldgen import (
    Dataset,
    World,
    WorldConfig,
    generate_dataset,
    generate_world,
    load_dataset,
    load_world,
    write_dataset,
    write_world,
)

DATASET_KINDS = ("standard", "heldout_relation", "novel_combination")

ENCODER_FILE = "encoder.npz"
MEMORY_FILE = "memory.bin"
TRANSE_FILE = "transe.npz"


def _write_report(out_dir: str, report: dict) -> str:
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, "report.json")
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path

def _write_log(out_dir: str, name: str, lines: list[str]) -> str:
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, name)
    with open(path, "w", encoding="utf-8") as fh:
        for line in lines:
            fh.write(line + "\n")
    return path


def _load_world_dir(path: str) -> World:
    # worldgen lays the world files under <out>/world
    inner = os.path.join(path, "world")
    return load_world(inner if os.path.isdir(inner) else path)


def _load_split(world_dir: str, kind: str) -> Dataset:
    split_dir = os.path.join(world_dir, kind)
    if not os.path.isdir(split_dir):
        raise SystemExit(f"no {kind!r} dataset under {world_dir} (run worldgen first)")
    return load_dataset(split_dir)


def _flags(args: argparse.Namespace) -> PipelineFlags:
    return PipelineFlags(k=args.k, revise=args.revise, revise_beam=args.beam)


# ---------------------------------------------------------------------------
# subcommands

def cmd_worldgen(args: argparse.Namespace) -> int:
    t0 = time.perf_counter()
    config = WorldConfig(
        seed=args.seed, n_entities=args.entities, drop_edge_rate=args.drop_rate
    )
    world = generate_world(config)
    write_world(world, os.path.join(args.out, "world"))
    split_sizes = {}
    for kind in DATASET_KINDS:
        dataset = generate_dataset(world, kind=kind, seed=args.dataset_seed)
        write_dataset(dataset, os.path.join(args.out, kind))
        split_sizes[kind] = [len(dataset.train), len(dataset.valid), len(dataset.test)]
    report = {
        "kind": "worldgen",
        "config": config.to_json(),
        "dataset_seed": args.dataset_seed,
        "n_triples_full": len(world.kb_full.triples),
        "n_triples_incomplete": len(world.kb_incomplete.triples),
        "n_entities": sum(len(v) for v in world.entities.values()),
        "n_templates": len(world.templates),
        "splits": split_sizes,
        "seconds": round(time.perf_counter() - t0, 3),
    }
    path = _write_report(args.out, report)
    print(f"world written to {args.out} ({report['n_triples_full']} triples); report: {path}")
    return 0


def cmd_train_retriever(args: argparse.Namespace) -> int:
    t0 = time.perf_counter()
    dataset = _load_split(args.world, "standard")
    profile = tuned_profile()
    encoder = Encoder(p_mask=profile["encoder"]["p_mask"], seed=args.seed)
    epochs = args.epochs or profile["retriever_train"]["epochs"]
    losses = train_retriever(
        encoder, train_items_from(dataset.train), TrainConfig(epochs=epochs, seed=args.seed)
    )
    memory = CaseMemory.build(cases_from(dataset.train), encoder)
    os.makedirs(args.out, exist_ok=True)
    encoder.save(os.path.join(args.out, ENCODER_FILE))
    memory.snapshot(os.path.join(args.out, MEMORY_FILE))
    report = {
        "kind": "train-retriever",
        "epochs": epochs,
        "seed": args.seed,
        "loss_curve": [round(x, 6) for x in losses],
        "n_cases": len(memory),
        "encoder_version": encoder.version(),
        "seconds": round(time.perf_counter() - t0, 3),
    }
    path = _write_report(args.out, report)
    print(
        f"encoder and {len(memory)}-case memory written to {args.out} "
        f"(final loss {losses[-1]:.4f}); report: {path}"
    )
    return 0


def cmd_train_transe(args: argparse.Namespace) -> int:
    t0 = time.perf_counter()
    world = _load_world_dir(args.world)
    config = TranseConfig(seed=args.seed, **({"epochs": args.epochs} if args.epochs else {}))
    table, losses = train_transe(world.kb_incomplete, config)
    os.makedirs(args.out, exist_ok=True)
    table.save(os.path.join(args.out, TRANSE_FILE))
    report = {
        "kind": "train-transe",
        "epochs": config.epochs,
        "seed": args.seed,
        "loss_curve": [round(x, 6) for x in losses],
        "n_entities": len(table.entity_names),
        "n_relations": len(table.relation_names),
        "seconds": round(time.perf_counter() - t0, 3),
    }
    path = _write_report(args.out, report)
    print(f"embeddings written to {args.out} (final loss {losses[-1]:.4f}); report: {path}")
    return 0


def _components_from_artifacts(world: World, memory_dir: str, revise: str) -> PipelineComponents:
    encoder_path = os.path.join(memory_dir, ENCODER_FILE)
    memory_path = os.path.join(memory_dir, MEMORY_FILE)
    for p in (encoder_path, memory_path):
        if not os.path.exists(p):
            raise SystemExit(f"missing artifact {p} (run train-retriever first)")
    encoder = Encoder.load(encoder_path)
    memory, reencoded = CaseMemory.load(memory_path, encoder)
    if reencoded:
        print("note: memory vectors re-encoded for the loaded encoder", file=sys.stderr)
    transe: Optional[EmbeddingTable] = None
    transe_path = os.path.join(memory_dir, TRANSE_FILE)
    if os.path.exists(transe_path):
        transe = EmbeddingTable.load(transe_path)
    elif revise == "transe":
        raise SystemExit(f"revise mode 'transe' needs {transe_path} (run train-transe first)")
    return PipelineComponents(
        kb=world.kb_incomplete,
        aliases=AliasTable(world.alias_pairs),
        encoder=encoder,
        memory=memory,
        transe=transe,
        generator=GeneratorConfig(),
    )


def cmd_eval(args: argparse.Namespace) -> int:
    t0 = time.perf_counter()
    world = _load_world_dir(args.world)
    dataset = _load_split(args.world, args.split)
    components = _components_from_artifacts(world, args.memory, args.revise)
    flags = _flags(args)
    examples = dataset.test
    metrics, results = evaluate(examples, components, flags)
    lines = [prediction_log_line(e.id, r) for e, r in zip(examples, results)]
    report = {
        "kind": "eval",
        "split": args.split,
        "flags": {"k": flags.k, "revise": flags.revise, "beam": flags.revise_beam},
        "metrics": metrics.to_json(),
        "n_examples": len(examples),
        "seconds": round(time.perf_counter() - t0, 3),
    }
    path = _write_report(args.out, report)
    log_path = _write_log(args.out, "predictions.jsonl", lines)
    print(
        f"EM {metrics.exact_match:.4f}  F1 {metrics.f1:.4f} on {len(examples)} questions; "
        f"report: {path}; log: {log_path}"
    )
    return 0


_EXPERIMENT_DATASET = {
    "heldout_injection": "heldout_relation",
    "k_ablation": "standard",
    "novel_combination": "novel_combination",
    "revise_ablation": "standard",
}


def cmd_experiment(args: argparse.Namespace) -> int:
    t0 = time.perf_counter()
    world = _load_world_dir(args.world)
    dataset = _load_split(args.world, _EXPERIMENT_DATASET[args.experiment_kind])
    setup = tuned_setup(world, dataset, seed=args.seed)
    overrides: Optional[PipelineFlags] = None
    if args.k is not None or args.revise is not None:
        overrides = PipelineFlags(
            k=args.k if args.k is not None else 20,
            revise=args.revise or "off",
            revise_beam=args.beam,
        )
    if args.experiment_kind == "heldout_injection":
        report, artifacts = run_heldout_injection(setup, flags=overrides, seed=args.seed)
    elif args.experiment_kind == "k_ablation":
        report, artifacts = run_k_ablation(setup, revise=args.revise or "transe")
    elif args.experiment_kind == "novel_combination":
        report, artifacts = run_novel_combination(setup, flags=overrides)
    else:
        report, artifacts = run_revise_ablation(setup, revise_beam=args.beam)
    report["seconds"] = round(time.perf_counter() - t0, 3)
    path = _write_report(args.out, report)
    for name, lines in artifacts.items():
        _write_log(args.out, f"predictions_{name}.jsonl", lines)
    print(f"{args.experiment_kind} done in {report['seconds']:.0f}s; report: {path}")
    return 0


def cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    from .service import create_app

    world = _load_world_dir(args.world)
    components = _components_from_artifacts(world, args.memory, args.revise)
    app = create_app(components, default_flags=_flags(args))
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


# ---------------------------------------------------------------------------
# argument wiring

def _add_flag_args(p: argparse.ArgumentParser, k_default=20, revise_default="transe"):
    p.add_argument("--k", type=int, default=k_default, help="retrieved cases per question")
    p.add_argument("--beam", type=int, default=5, help="revision beam width")
    p.add_argument(
        "--revise", choices=("off", "surface", "transe"), default=revise_default,
        help="relation alignment backend",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="caseqa",
        description="Case-based question answering over a synthetic knowledge base.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("worldgen", help="generate a world directory and its datasets")
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--dataset-seed", type=int, default=0)
    p.add_argument("--entities", type=int, default=800)
    p.add_argument("--drop-rate", type=float, default=0.15)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_worldgen)

    p = sub.add_parser("train-retriever", help="train the question encoder and build the case memory")
    p.add_argument("--world", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train_retriever)

    p = sub.add_parser("train-transe", help="train translation embeddings on the working KB")
    p.add_argument("--world", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train_transe)

    p = sub.add_parser("eval", help="score a dataset split end to end")
    p.add_argument("--world", required=True)
    p.add_argument("--memory", required=True, help="artifact directory from train-retriever")
    p.add_argument("--split", choices=DATASET_KINDS, default="standard")
    p.add_argument("--seed", type=int, default=0)
    _add_flag_args(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("experiment", help="run a packaged study")
    p.add_argument("experiment_kind", choices=EXPERIMENT_KINDS)
    p.add_argument("--world", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--k", type=int, default=None)
    p.add_argument("--beam", type=int, default=5)
    p.add_argument("--revise", choices=("off", "surface", "transe"), default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("serve", help="start the HTTP service")
    p.add_argument("--world", required=True)
    p.add_argument("--memory", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    _add_flag_args(p)
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv: Optional[list[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
