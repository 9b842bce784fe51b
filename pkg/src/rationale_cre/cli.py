"""Command-line entry point.

Exit codes: 0 success, 1 invalid configuration or input, 2 a phase failed
(rerunning the same command resumes it).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .backbone import load_backbone
from .data import DATASETS, CorpusFormatError, load_corpus, load_names, load_splits, save_splits, split_train_val_test
from .evaluation import accuracy, classify, per_relation_scores, write_f1_report
from .experiment import (
    CONFIG_KEYS,
    Experiment,
    PhaseError,
    build_config,
    load_config,
    memory_size_curve,
    run_ablations,
    run_experiment,
)
from .rationale import (
    OracleProvider,
    RationaleCache,
    ScriptedProvider,
    generate_rationales,
    llm_baseline,
    make_provider,
)
from .types import CONTRASTIVE, PLAIN, ConfigError


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="YAML config file (flags override it)")
    p.add_argument("--out", type=Path, required=True, help="experiment directory")
    for name, f in CONFIG_KEYS.items():
        flag = "--" + name.replace("_", "-")
        if f.type in ("bool", bool):
            p.add_argument(flag, dest=name, type=lambda s: s.lower() in ("1", "true", "yes"), default=None)
        elif name in ("seeds", "ablation"):
            p.add_argument(flag, dest=name, default=None, help="comma-separated list")
        else:
            kind = {"int": int, "float": float}.get(str(f.type), str)
            p.add_argument(flag, dest=name, type=kind, default=None)


def _overrides(args: argparse.Namespace) -> dict:
    return {k: getattr(args, k) for k in CONFIG_KEYS if getattr(args, k, None) is not None}


def _config(args: argparse.Namespace):
    if args.config is not None:
        return load_config(args.config, _overrides(args))
    return build_config(_overrides(args))


def _provider(kind: str, splits=None, labels=None, script: Path | None = None):
    if kind == "oracle" and splits is not None:
        return OracleProvider.for_instances(splits.train + splits.val + splits.test, labels)
    if kind == "scripted":
        return ScriptedProvider(json.loads(script.read_text()) if script else [])
    return make_provider(kind)


def cmd_ingest(args) -> int:
    spec = DATASETS[args.dataset]
    names = load_names(args.names) if args.names else None
    instances, labels = load_corpus(args.path, spec, names)
    splits = split_train_val_test(instances, args.seed, spec.per_relation_caps)
    save_splits(args.out, splits, labels)
    print(f"{len(splits.train)}/{len(splits.val)}/{len(splits.test)} instances, {len(labels)} relations -> {args.out}")
    return 0


def cmd_generate(args) -> int:
    splits, labels = load_splits(args.data)
    instances = getattr(splits, args.split)
    provider = _provider(args.provider, splits, labels, args.script)
    analogous = None
    if args.kind == CONTRASTIVE:
        if args.analogous is None:
            raise ConfigError(["--analogous is required for contrastive rationales"])
        raw = json.loads(args.analogous.read_text())
        analogous = {k: frozenset(v) for k, v in raw.get("analogous", raw).items()}
        instances = [i for i in instances if analogous.get(i.relation)]
    records = generate_rationales(instances, args.kind, provider, RationaleCache(args.cache), labels,
                                  analogous=analogous, max_attempts=args.max_attempts,
                                  max_in_flight=args.max_in_flight)
    print(f"{len(records)} {args.kind} rationales in {args.cache}")
    return 0


def cmd_train(args) -> int:
    out = run_experiment(_config(args), args.out)
    print((out / "results.csv").read_text(), end="")
    return 0


def cmd_evaluate(args) -> int:
    splits, labels = load_splits(args.data)
    record = json.loads((args.task_dir / "eval.json").read_text())
    seen = set(record["seen_labels"])
    handle = load_backbone(args.task_dir / "model")
    test = [i for i in getattr(splits, args.split) if i.relation in seen]
    preds = classify(handle, test, labels.subset(seen))
    golds = [i.relation for i in test]
    write_f1_report(args.task_dir / f"f1_{args.split}.csv", per_relation_scores(preds, golds))
    print(f"accuracy {accuracy(preds, golds):.4f} on {len(test)} {args.split} instances")
    return 0


def cmd_ablate(args) -> int:
    out = run_ablations(_config(args), args.out)
    print((out / "ablation.csv").read_text(), end="")
    return 0


def cmd_llm_baseline(args) -> int:
    splits, labels = load_splits(args.data)
    instances = getattr(splits, args.split)
    provider = _provider(args.provider, splits, labels, args.script)
    acc, preds = llm_baseline(instances, labels, provider, max_attempts=args.max_attempts)
    print(f"zero-shot accuracy {acc:.4f} on {len(instances)} instances ({len(labels)} relation types)")
    if args.output:
        args.output.write_text(json.dumps({"accuracy": acc, "provider": provider.name,
                                           "predictions": dict(zip([i.id for i in instances], preds))},
                                          indent=1))
    return 0


def cmd_report(args) -> int:
    for d in args.dirs:
        exp = Experiment(d, load_config(d / "manifest.json"))
        exp.report()
        print((d / "results.csv").read_text(), end="")
    if len(args.dirs) > 1 or args.curve:
        memory_size_curve(args.dirs, args.curve or args.dirs[0] / "memory_size_curve.csv")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rationale-cre", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="load a corpus and write canonical split files")
    p.add_argument("--dataset", choices=sorted(DATASETS), required=True)
    p.add_argument("--path", type=Path, required=True)
    p.add_argument("--names", type=Path, help="label -> name map (FewRel pid2name)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(fn=cmd_ingest)

    p = sub.add_parser("generate-rationales", help="fill the rationale cache for one split")
    p.add_argument("--data", type=Path, required=True, help="directory written by ingest")
    p.add_argument("--split", choices=("train", "val", "test"), default="train")
    p.add_argument("--kind", choices=(PLAIN, CONTRASTIVE), default=PLAIN)
    p.add_argument("--provider", choices=("oracle", "scripted", "adversarial", "openai"), default="oracle")
    p.add_argument("--script", type=Path, help="JSON list of responses for the scripted provider")
    p.add_argument("--analogous", type=Path, help="analogous-set report (contrastive only)")
    p.add_argument("--cache", type=Path, required=True)
    p.add_argument("--max-attempts", type=int, default=5)
    p.add_argument("--max-in-flight", type=int, default=1)
    p.set_defaults(fn=cmd_generate)

    p = sub.add_parser("train", help="run or resume a full experiment")
    _add_config_flags(p)
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("evaluate", help="score a task checkpoint on its seen relations")
    p.add_argument("--task-dir", type=Path, required=True)
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--split", choices=("val", "test"), default="test")
    p.set_defaults(fn=cmd_evaluate)

    p = sub.add_parser("ablate", help="run the ablation matrix")
    _add_config_flags(p)
    p.set_defaults(fn=cmd_ablate)

    p = sub.add_parser("llm-baseline", help="zero-shot classification by the LLM")
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--split", choices=("train", "val", "test"), default="test")
    p.add_argument("--provider", choices=("oracle", "scripted", "adversarial", "openai"), default="oracle")
    p.add_argument("--script", type=Path)
    p.add_argument("--max-attempts", type=int, default=5)
    p.add_argument("--output", type=Path)
    p.set_defaults(fn=cmd_llm_baseline)

    p = sub.add_parser("report", help="rebuild result tables; several dirs give a memory-size curve")
    p.add_argument("dirs", type=Path, nargs="+")
    p.add_argument("--curve", type=Path)
    p.set_defaults(fn=cmd_report)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.fn(args)
    except PhaseError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except (ConfigError, CorpusFormatError, FileNotFoundError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
