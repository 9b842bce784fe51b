import json

import pytest
import yaml

from rationale_cre.cli import main
from rationale_cre.experiment import (
    ABLATION_MATRIX,
    Experiment,
    PhaseError,
    build_config,
    load_config,
    run_experiment,
)
from rationale_cre.synthetic import write_corpus
from rationale_cre.types import ConfigError


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    return write_corpus(tmp_path_factory.mktemp("c"), 4, 10, seed=0)


def _config(corpus, **extra):
    cpath, npath = corpus
    values = dict(data_path=str(cpath), names_path=str(npath), n_tasks=2, epochs_stage1=1, epochs_stage2=1,
                  memory_size=2, learning_rate=5e-3, batch_size=8, tiny_emb_dim=6, tiny_hidden=8,
                  max_output_len=30, seeds=[0, 1])
    values.update(extra)
    return values


def test_presets_and_validation():
    assert build_config({"dataset": "tacred"}).alpha == 0.9
    assert build_config({"dataset": "tacred", "alpha": 0.7}).alpha == 0.7
    assert build_config({}).batch_size == 32
    with pytest.raises(ConfigError, match="unknown config key"):
        build_config({"gamma": 1})
    with pytest.raises(ConfigError, match="alpha"):
        build_config({"alpha": 1.5})
    assert build_config({"seeds": "3,4", "ablation": "no_task_d"}).seeds == (3, 4)


def test_yaml_with_overrides(tmp_path):
    p = tmp_path / "c.yaml"
    p.write_text(yaml.safe_dump({"memory_size": 5, "ablation": ["no_task_d"]}))
    cfg = load_config(p, {"memory_size": 15, "tau": None})
    assert cfg.memory_size == 15 and cfg.ablation == ("no_task_d",) and cfg.tau == 0.97


def test_full_run_layout_and_resume(tmp_path, corpus):
    cfg = build_config(_config(corpus))
    out = run_experiment(cfg, tmp_path / "exp")
    manifest = json.loads((out / "manifest.json").read_text())
    assert {"config", "seeds", "code_version", "provider", "backbone", "created", "phases"} <= set(manifest)
    assert all(manifest["phases"][p]["status"] == "done" for p in ("ingest", "rationales", "train", "report"))
    for name in ("results.csv", "accuracy_curve.csv", "f1_analogous.csv", "rationales.jsonl", "data/labels.json"):
        assert (out / name).exists()
    assert (out / "runs/seed_1/task_02/memory.json").exists()
    assert len((out / "results.csv").read_text().splitlines()) == 3

    # the manifest alone is enough to re-run
    assert load_config(out / "manifest.json") == cfg
    before = (out / "results.csv").stat().st_mtime_ns
    run_experiment(out / "manifest.json", out)
    assert (out / "results.csv").stat().st_mtime_ns == before

    with pytest.raises(ConfigError, match="different config"):
        Experiment(out, build_config(_config(corpus, memory_size=3)))


def test_phase_failure_is_recorded_and_resumable(tmp_path, corpus):
    cfg = build_config(_config(corpus, provider="adversarial", seeds=[0]))
    with pytest.raises(PhaseError, match="rationales"):
        run_experiment(cfg, tmp_path / "bad")
    manifest = json.loads((tmp_path / "bad/manifest.json").read_text())
    assert manifest["phases"]["ingest"]["status"] == "done"
    assert manifest["phases"]["rationales"]["status"] == "failed"


def test_cli_end_to_end(tmp_path, corpus, capsys):
    cpath, npath = corpus
    data = tmp_path / "data"
    assert main(["ingest", "--dataset", "fewrel", "--path", str(cpath), "--names", str(npath),
                 "--seed", "0", "--out", str(data)]) == 0
    assert (data / "train.jsonl").exists()

    cache = tmp_path / "cache.jsonl"
    assert main(["generate-rationales", "--data", str(data), "--split", "train", "--kind", "plain",
                 "--provider", "oracle", "--cache", str(cache)]) == 0
    assert len(cache.read_text().splitlines()) == 24

    assert main(["llm-baseline", "--data", str(data), "--provider", "oracle", "--output",
                 str(tmp_path / "zs.json")]) == 0
    assert json.loads((tmp_path / "zs.json").read_text())["accuracy"] == 1.0

    cfg_file = tmp_path / "exp.yaml"
    cfg_file.write_text(yaml.safe_dump(_config(corpus, seeds=[0], memory_size=4)))
    exp = tmp_path / "exp"
    assert main(["train", "--config", str(cfg_file), "--memory-size", "2", "--out", str(exp)]) == 0
    assert json.loads((exp / "manifest.json").read_text())["config"]["memory_size"] == 2

    assert main(["evaluate", "--task-dir", str(exp / "runs/seed_0/task_02"), "--data", str(exp / "data")]) == 0
    assert (exp / "runs/seed_0/task_02/f1_test.csv").exists()
    assert "accuracy" in capsys.readouterr().out

    assert main(["report", str(exp), "--curve", str(tmp_path / "curve.csv")]) == 0
    assert (tmp_path / "curve.csv").read_text().startswith("series,task,mean,std\nmemory_2,1,")


def test_cli_contrastive_generation(tmp_path, corpus):
    cpath, npath = corpus
    data = tmp_path / "data"
    main(["ingest", "--dataset", "fewrel", "--path", str(cpath), "--names", str(npath), "--out", str(data)])
    labels = json.loads((data / "labels.json").read_text())
    a, b = sorted(labels)[:2]
    (tmp_path / "an.json").write_text(json.dumps({"analogous": {a: [b], b: [a]}}))
    cache = tmp_path / "c.jsonl"
    assert main(["generate-rationales", "--data", str(data), "--kind", "contrastive", "--analogous",
                 str(tmp_path / "an.json"), "--cache", str(cache)]) == 0
    rows = [json.loads(line) for line in cache.read_text().splitlines()]
    assert len(rows) == 12 and {r["kind"] for r in rows} == {"contrastive"}
    assert main(["generate-rationales", "--data", str(data), "--kind", "contrastive", "--cache", str(cache)]) == 1


def test_cli_exit_codes(tmp_path, corpus, capsys):
    assert main(["train", "--out", str(tmp_path / "x"), "--alpha", "1.5"]) == 1
    assert "alpha out of [0,1]" in capsys.readouterr().err
    bad = _config(corpus, provider="adversarial", seeds=[0])
    (tmp_path / "bad.yaml").write_text(yaml.safe_dump(bad))
    assert main(["train", "--config", str(tmp_path / "bad.yaml"), "--out", str(tmp_path / "b")]) == 2
    assert main(["ingest", "--dataset", "fewrel", "--path", str(tmp_path / "missing.json"),
                 "--out", str(tmp_path / "d")]) == 1


def test_ablate_subcommand(tmp_path, corpus):
    cfg_file = tmp_path / "a.yaml"
    cfg_file.write_text(yaml.safe_dump(_config(corpus, seeds=[0])))
    assert main(["ablate", "--config", str(cfg_file), "--out", str(tmp_path / "abl")]) == 0
    lines = (tmp_path / "abl/ablation.csv").read_text().splitlines()
    assert lines[0] == "variant,final_mean,final_std"
    assert [line.split(",")[0] for line in lines[1:]] == list(ABLATION_MATRIX)
