import json
import os

import numpy as np
import pytest

from cfdlg import cli, pipeline
from cfdlg.corpus import load_corpus
from cfdlg.pipeline import ConfigError, PipelineConfig, load_config

FAST = ["--cls-epochs", "20", "--gan-epochs", "4", "--ddp-epochs", "4",
        "--dqn-epochs", "2", "--n-databases", "2", "--restarts", "2"]


@pytest.fixture(scope="module")
def pipeline_dir(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("cli")
    corpus = str(tmp / "corpus.jsonl")
    assert cli.main(["synth", "gen", "--out-corpus", corpus,
                     "--dialogues", "30", "--turns", "13",
                     "--scm-seed", "0", "--seed", "1"]) == 0
    out = str(tmp / "run")
    assert cli.main(["run", "--corpus", corpus, "--out", out] + FAST) == 0
    return tmp, corpus, out


def test_synth_gen_writes_loadable_corpus(pipeline_dir):
    _, corpus, _ = pipeline_dir
    corp = load_corpus(corpus)
    assert len(corp) == 30
    assert corp.dialogues[0].utterances[0].strategy is not None


def test_run_produces_all_artifacts(pipeline_dir):
    _, _, out = pipeline_dir
    for name in ("corpus.jsonl", "ee_classifier.net", "er_classifier.net",
                 "edges.csv", "edges.json", "cause_effect.json",
                 "bicogan_g.net", "cf_databases.bin", "ddp.net", "qnet.net",
                 "qvalues.csv", "cumulative_rewards.csv", "rollouts.jsonl",
                 "manifest.json"):
        assert os.path.isfile(os.path.join(out, name)), name


def test_metric_csv_headers(pipeline_dir):
    _, _, out = pipeline_dir
    with open(os.path.join(out, "qvalues.csv")) as f:
        assert f.readline().strip() == "dialogue,max_q,mean_q,variant"
    with open(os.path.join(out, "cumulative_rewards.csv")) as f:
        assert f.readline().strip() == "k,ground_truth,variant_reward,variant"
        first = f.readline().split(",")
        assert first[0] == "1"
    with open(os.path.join(out, "rollouts.jsonl")) as f:
        rec = json.loads(f.readline())
        assert {"dialogue", "variant", "states", "actions"} <= set(rec)


def test_manifest_records_hashes(pipeline_dir):
    _, _, out = pipeline_dir
    with open(os.path.join(out, "manifest.json")) as f:
        man = json.load(f)
    assert set(man["stages"]) == set(pipeline.STAGE_NAMES)
    for rec in man["stages"].values():
        assert rec["outputs"] and all(len(h) == 64 for h in rec["outputs"].values())


def test_rerun_skips_all_stages(pipeline_dir, capsys):
    _, corpus, out = pipeline_dir
    assert cli.main(["run", "--corpus", corpus, "--out", out] + FAST) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert len(lines) == len(pipeline.STAGE_NAMES)
    assert all("skipped" in ln for ln in lines)


def test_single_stage_rerun_after_input_change(pipeline_dir, capsys):
    _, corpus, out = pipeline_dir
    assert cli.main(["discover", "--corpus", corpus, "--out", out] + FAST) == 0
    assert "skipped" in capsys.readouterr().out
    # changing a discovery parameter invalidates the stage
    assert cli.main(["discover", "--corpus", corpus, "--out", out,
                     "--grasp-depth", "2"] + FAST) == 0
    assert "running" in capsys.readouterr().out


def test_report_panels(pipeline_dir):
    _, _, out = pipeline_dir
    assert cli.main(["report", "--out", out]) == 0
    for name in ("panel_max_q.csv", "panel_mean_q.csv", "panel_cumulative.csv"):
        assert os.path.isfile(os.path.join(out, name))
    with open(os.path.join(out, "panel_max_q.csv")) as f:
        assert f.readline().strip() == "index,max_q,variant"
        vals = [float(ln.split(",")[1]) for ln in f]
    assert vals == sorted(vals, reverse=True)


def test_missing_corpus_exit_code(tmp_path):
    assert cli.main(["run", "--corpus", str(tmp_path / "nope.jsonl"),
                     "--out", str(tmp_path / "o")]) == 2


def test_stage_failure_exit_code(tmp_path):
    out = str(tmp_path / "empty")
    os.makedirs(out)
    assert cli.main(["evaluate", "--out", out]) == 3


def test_report_before_evaluate_exit_code(tmp_path):
    assert cli.main(["report", "--out", str(tmp_path)]) == 2


def test_config_file_and_flag_precedence(tmp_path):
    ini = tmp_path / "c.ini"
    ini.write_text("[search]\ngrasp_depth = 5\nrestarts = 7\n")
    cfg = load_config(str(ini))
    assert cfg.grasp_depth == 5 and cfg.restarts == 7
    cfg = load_config(str(ini), {"grasp_depth": 2})
    assert cfg.grasp_depth == 2 and cfg.restarts == 7


def test_config_validation():
    with pytest.raises(ConfigError, match="unknown config key"):
        load_config(None, {"nope": 1})
    with pytest.raises(ConfigError, match="selector"):
        load_config(None, {"selector": "sometimes"})
    with pytest.raises(ConfigError, match="pool_strategy"):
        load_config(None, {"pool_strategy": 9})
    with pytest.raises(ConfigError, match="not found"):
        load_config("/does/not/exist.ini")
    with pytest.raises(ConfigError, match="bad value"):
        load_config(None, {"grasp_depth": "three"})


def test_random_selector_variant(pipeline_dir):
    tmp, corpus, _ = pipeline_dir
    out = str(tmp / "rand")
    assert cli.main(["run", "--corpus", corpus, "--out", out,
                     "--selector", "random"] + FAST) == 0
    with open(os.path.join(out, "qvalues.csv")) as f:
        f.readline()
        assert f.readline().strip().endswith(",random")
