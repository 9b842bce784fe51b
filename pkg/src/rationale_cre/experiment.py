"""Experiment directories: config files, phases, manifest, result tables.

An experiment directory looks like::

    manifest.json          config, seeds, code version, provider, phase status
    data/                  canonical splits (train/val/test.jsonl, labels.json)
    rationales.jsonl       rationale cache (unless ``cache_path`` points elsewhere)
    runs/seed_<s>/         trace.json, loss_log.jsonl, task_<k>/ checkpoints
    results.csv            accuracy per task and seed, with mean and std
    accuracy_curve.csv     plot data for accuracy against task index
    f1_analogous.csv       per-relation scores on relations with analogous peers

Phases are ``ingest``, ``rationales``, ``train`` and ``report``; each is
recorded in the manifest when it finishes, and a rerun skips finished phases.
"""

from __future__ import annotations

import dataclasses
import json
import logging
import subprocess
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Mapping

import yaml

from . import __version__
from .backbone import make_backbone
from .data import (
    DATASETS,
    load_corpus,
    load_names,
    load_splits,
    make_task_sequence,
    save_splits,
    split_train_val_test,
    write_jsonl,
)
from .evaluation import aggregate_runs, per_relation_scores, write_curve, write_f1_report, write_results_table
from .rationale import OracleProvider, RationaleCache, generate_rationales, make_provider
from .replay import ContinualTrace, run_continual
from .types import PLAIN, ConfigError, ExperimentConfig, validate_config

log = logging.getLogger(__name__)

PHASES = ("ingest", "rationales", "train", "report")
DATASET_PRESETS = {
    "fewrel": {"alpha": 0.6, "beta": 0.5, "tau": 0.97, "batch_size": 32},
    "tacred": {"alpha": 0.9, "beta": 0.5, "tau": 0.97, "batch_size": 16},
}


class PhaseError(RuntimeError):
    def __init__(self, phase: str, cause: Exception):
        super().__init__(f"phase {phase!r} failed: {type(cause).__name__}: {cause}")
        self.phase = phase


@dataclass(frozen=True)
class RunConfig:
    dataset: str = "fewrel"
    data_path: str = ""
    names_path: str | None = None
    split_seed: int = 0
    provider: str = "oracle"
    backbone: str = "tiny"
    tiny_emb_dim: int = 24
    tiny_hidden: int = 48
    max_input_len: int = 512
    max_output_len: int = 256
    max_in_flight: int = 1
    cache_path: str | None = None
    save_checkpoints: bool = True
    alpha: float = 0.6
    beta: float = 0.5
    tau: float = 0.97
    memory_size: int = 10
    n_tasks: int = 10
    epochs_stage1: int = 10
    epochs_stage2: int = 10
    learning_rate: float = 1e-4
    batch_size: int = 32
    seeds: tuple[int, ...] = (0, 1, 2, 3, 4)
    ablation: tuple[str, ...] = field(default_factory=tuple)
    max_attempts: int = 5

    def experiment_config(self) -> ExperimentConfig:
        names = {f.name for f in dataclasses.fields(ExperimentConfig)}
        return ExperimentConfig(**{k: v for k, v in dataclasses.asdict(self).items() if k in names})

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["seeds"] = list(self.seeds)
        d["ablation"] = sorted(self.ablation)
        return d


CONFIG_KEYS = {f.name: f for f in dataclasses.fields(RunConfig)}


def _coerce(key: str, value: Any) -> Any:
    if key in ("seeds", "ablation"):
        if isinstance(value, str):
            value = [v.strip() for v in value.split(",") if v.strip()]
        return tuple(int(v) for v in value) if key == "seeds" else tuple(sorted(value))
    return value


def build_config(values: Mapping[str, Any] | None = None) -> RunConfig:
    """RunConfig from a flat mapping; dataset presets fill unset weights."""
    values = dict(values or {})
    unknown = sorted(set(values) - set(CONFIG_KEYS))
    if unknown:
        raise ConfigError([f"unknown config key {k!r}" for k in unknown])
    dataset = values.get("dataset", "fewrel")
    if dataset not in DATASETS:
        raise ConfigError([f"dataset must be one of {sorted(DATASETS)}, got {dataset!r}"])
    merged = {**DATASET_PRESETS[dataset], **values}
    cfg = RunConfig(**{k: _coerce(k, v) for k, v in merged.items()})
    validate_config(cfg.experiment_config())
    return cfg


def load_config(path: str | Path, overrides: Mapping[str, Any] | None = None) -> RunConfig:
    """Read a YAML config (or a ``manifest.json``); ``overrides`` win over the file."""
    path = Path(path)
    raw = yaml.safe_load(path.read_text()) or {}
    if path.name == "manifest.json":
        raw = raw["config"]
    if not isinstance(raw, Mapping):
        raise ConfigError([f"{path}: config must be a flat mapping"])
    return build_config({**raw, **{k: v for k, v in (overrides or {}).items() if v is not None}})


def save_config(path: str | Path, cfg: RunConfig) -> None:
    Path(path).write_text(yaml.safe_dump(cfg.to_dict(), sort_keys=True))


def code_version() -> str:
    try:
        rev = subprocess.run(["git", "rev-parse", "--short", "HEAD"], capture_output=True, text=True,
                             cwd=Path(__file__).parent, timeout=5)
        if rev.returncode == 0:
            return f"{__version__}+{rev.stdout.strip()}"
    except (OSError, subprocess.SubprocessError):
        pass
    return __version__


class Experiment:
    """One experiment directory and its phase bookkeeping."""

    def __init__(self, out_dir: str | Path, cfg: RunConfig):
        self.dir = Path(out_dir)
        self.cfg = cfg
        self.dir.mkdir(parents=True, exist_ok=True)
        self.manifest_path = self.dir / "manifest.json"
        if self.manifest_path.exists():
            self.manifest = json.loads(self.manifest_path.read_text())
            if self.manifest["config"] != cfg.to_dict():
                raise ConfigError([f"{self.dir} already holds an experiment with a different config"])
        else:
            self.manifest = {
                "config": cfg.to_dict(),
                "seeds": list(cfg.seeds),
                "code_version": code_version(),
                "provider": cfg.provider,
                "backbone": cfg.backbone,
                "created": datetime.now(timezone.utc).isoformat(),
                "phases": {},
            }
            self._write_manifest()

    @property
    def data_dir(self) -> Path:
        return self.dir / "data"

    @property
    def cache_path(self) -> Path:
        return Path(self.cfg.cache_path) if self.cfg.cache_path else self.dir / "rationales.jsonl"

    def seed_dir(self, seed: int) -> Path:
        return self.dir / "runs" / f"seed_{seed}"

    def _write_manifest(self) -> None:
        self.manifest_path.write_text(json.dumps(self.manifest, indent=1, sort_keys=True))

    def done(self, phase: str) -> bool:
        return self.manifest["phases"].get(phase, {}).get("status") == "done"

    def run_phase(self, phase: str, fn) -> None:
        if self.done(phase):
            log.info("phase %s already done", phase)
            return
        try:
            fn()
        except Exception as e:
            self.manifest["phases"][phase] = {"status": "failed", "error": f"{type(e).__name__}: {e}"}
            self._write_manifest()
            raise PhaseError(phase, e) from e
        self.manifest["phases"][phase] = {"status": "done"}
        self._write_manifest()

    # -- phases ------------------------------------------------------------

    def ingest(self) -> None:
        spec = DATASETS[self.cfg.dataset]
        names = load_names(self.cfg.names_path) if self.cfg.names_path else None
        instances, labels = load_corpus(self.cfg.data_path, spec, names)
        splits = split_train_val_test(instances, self.cfg.split_seed, spec.per_relation_caps)
        save_splits(self.data_dir, splits, labels)

    def provider(self):
        splits, labels = load_splits(self.data_dir)
        if self.cfg.provider == "oracle":
            return OracleProvider.for_instances(splits.train + splits.val + splits.test, labels)
        return make_provider(self.cfg.provider)

    def rationales(self) -> None:
        splits, labels = load_splits(self.data_dir)
        generate_rationales(splits.train, PLAIN, self.provider(), RationaleCache(self.cache_path), labels,
                            max_attempts=self.cfg.max_attempts, max_in_flight=self.cfg.max_in_flight)

    def train(self) -> None:
        splits, labels = load_splits(self.data_dir)
        exp_cfg = self.cfg.experiment_config()
        provider = self.provider()
        cache = RationaleCache(self.cache_path)
        for seed in self.cfg.seeds:
            sdir = self.seed_dir(seed)
            if (sdir / "trace.json").exists():
                continue
            handle = self._backbone(seed)
            seq = make_task_sequence(labels, self.cfg.n_tasks, seed)
            trace = run_continual(handle, seq, splits, labels, exp_cfg, provider=provider, cache=cache,
                                  seed=seed, out_dir=sdir if self.cfg.save_checkpoints else None,
                                  max_in_flight=self.cfg.max_in_flight)
            sdir.mkdir(parents=True, exist_ok=True)
            (sdir / "task_sequence.json").write_text(json.dumps(seq.to_dict(), indent=1))
            write_jsonl(sdir / "loss_log.jsonl", trace.loss_log)
            # written last: marks the seed as finished
            (sdir / "trace.json").write_text(json.dumps(trace.to_dict(), indent=1))

    def _backbone(self, seed: int):
        import torch

        torch.manual_seed(seed)
        if self.cfg.backbone == "tiny":
            return make_backbone("tiny", seed=seed, emb_dim=self.cfg.tiny_emb_dim, hidden=self.cfg.tiny_hidden,
                                 max_input_len=self.cfg.max_input_len, max_output_len=self.cfg.max_output_len)
        return make_backbone(self.cfg.backbone, max_input_len=self.cfg.max_input_len,
                             max_output_len=self.cfg.max_output_len)

    def traces(self) -> dict[int, ContinualTrace]:
        return {s: ContinualTrace.from_dict(json.loads((self.seed_dir(s) / "trace.json").read_text()))
                for s in self.cfg.seeds}

    def report(self) -> None:
        write_report(self.dir, self.traces(), self.cfg.memory_size)

    def run(self) -> Path:
        for phase in PHASES:
            self.run_phase(phase, getattr(self, phase))
        return self.dir


def write_report(directory: Path, traces: Mapping[int, ContinualTrace], memory_size: int) -> None:
    accs = {s: t.accuracies for s, t in traces.items()}
    write_results_table(directory / "results.csv", accs)
    mean, std = aggregate_runs([accs[s] for s in sorted(accs)])
    write_curve(directory / "accuracy_curve.csv",
                [(f"memory_{memory_size}", k + 1, m, sd) for k, (m, sd) in enumerate(zip(mean, std))])
    preds, golds, analogous = [], [], set()
    for s in sorted(traces):
        final = traces[s].records[-1]
        analogous |= {r for r, peers in final.analogous.items() if peers}
        for _, gold, pred in final.predictions:
            golds.append(gold)
            preds.append(pred)
    write_f1_report(directory / "f1_analogous.csv", per_relation_scores(preds, golds, analogous))


def run_experiment(config: str | Path | RunConfig, out_dir: str | Path,
                   overrides: Mapping[str, Any] | None = None) -> Path:
    """Run (or resume) every phase of an experiment and return its directory."""
    cfg = config if isinstance(config, RunConfig) else load_config(config, overrides)
    if isinstance(config, RunConfig) and overrides:
        cfg = build_config({**cfg.to_dict(), **{k: v for k, v in overrides.items() if v is not None}})
    return Experiment(out_dir, cfg).run()


ABLATION_MATRIX = {
    "full": (),
    "no_contrastive_replay": ("no_contrastive_replay",),
    "no_task_d": ("no_task_d",),
    "no_task_d+no_contrastive_replay": ("no_task_d", "no_contrastive_replay"),
    "no_taskr_cr": ("no_taskr_cr",),
    "no_taskd_cr": ("no_taskd_cr",),
    "no_taskr_cr+no_taskd_cr": ("no_taskr_cr", "no_taskd_cr"),
}


def run_ablations(cfg: RunConfig, out_dir: str | Path, variants: Mapping[str, tuple[str, ...]] = ABLATION_MATRIX) -> Path:
    """One experiment per ablation variant, sharing a rationale cache; writes ``ablation.csv``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cache = cfg.cache_path or str(out / "rationales.jsonl")
    rows = []
    for name, flags in variants.items():
        vcfg = build_config({**cfg.to_dict(), "ablation": tuple(flags), "cache_path": cache})
        exp = Experiment(out / name, vcfg)
        exp.run()
        accs = [t.accuracies[-1] for t in exp.traces().values()]
        mean, std = aggregate_runs([[a] for a in accs])
        rows.append((name, mean[0], std[0]))
    with open(out / "ablation.csv", "w") as f:
        f.write("variant,final_mean,final_std\n")
        for name, m, s in rows:
            f.write(f"{name},{m:.4f},{s:.4f}\n")
    return out


def memory_size_curve(experiment_dirs: list[str | Path], path: str | Path) -> None:
    """Accuracy-vs-task series, one per experiment (labelled by its memory size)."""
    rows = []
    for d in experiment_dirs:
        exp_cfg = load_config(Path(d) / "manifest.json")
        exp = Experiment(d, exp_cfg)
        traces = exp.traces()
        mean, std = aggregate_runs([traces[s].accuracies for s in sorted(traces)])
        rows += [(f"memory_{exp_cfg.memory_size}", k + 1, m, s) for k, (m, s) in enumerate(zip(mean, std))]
    write_curve(path, rows)
