import json

import numpy as np
import pytest

from ngt import harness
from ngt.cli import main
from ngt.config import dump_settings, make_settings
from ngt.gating import GatingVariant
from ngt.model import load_params

SMALL = dict(n_train=48, n_val=24, seq_len=7, epochs=2, hidden=16, heads=2, intermediate=32,
             layers=2, seeds=(0,))


def small(**kw):
    return make_settings({**SMALL, **kw})


def write_cfg(tmp_path, **kw):
    path = tmp_path / "run.cfg"
    path.write_text(dump_settings(small(**kw)))
    return path


def test_zero_epochs_keeps_initial_parameters():
    exp, data = harness.prepare(small(epochs=0))
    art = harness.train_run(exp, data, seed=0)
    assert art.record.epochs == [] and art.lines == []
    init = harness.initial_params(exp, 0)
    assert all(art.params[k].tobytes() == init[k].tobytes() for k in init)


def test_training_reduces_loss():
    exp, data = harness.prepare(small(n_train=200, epochs=3))
    art = harness.train_run(exp, data, seed=1)
    losses = [line["loss"] for line in art.lines]
    assert losses[-1] < losses[0]
    assert [line["epoch"] for line in art.lines] == [1, 2, 3]
    assert set(art.lines[0]) == {"seed", "epoch", "Acc", "lr", "loss"}


def test_same_seed_same_record_different_seed_differs():
    exp, data = harness.prepare(small())
    a, b = harness.train_run(exp, data, 3), harness.train_run(exp, data, 3)
    c = harness.train_run(exp, data, 4)
    assert a.records_jsonl() == b.records_jsonl()
    assert a.records_jsonl() != c.records_jsonl()


def test_variants_share_host_init():
    neuro, _ = harness.prepare(small())
    plain, _ = harness.prepare(small(variant=GatingVariant.NONE))
    a, b = harness.initial_params(neuro, 0), harness.initial_params(plain, 0)
    assert all(a[k].tobytes() == b[k].tobytes() for k in b)
    assert set(a) - set(b) and all(k.startswith("gating.") for k in set(a) - set(b))


def test_init_from_loads_host_and_refreshes_gating(tmp_path):
    exp, data = harness.prepare(small(variant=GatingVariant.NONE))
    art = harness.train_run(exp, data, 0)
    harness.write_artifact(art, tmp_path / "base")
    warm, _ = harness.prepare(small(init_from=str(tmp_path / "base" / "params.txt")))
    params = harness.initial_params(warm, 0)
    assert params["head.weight"].tobytes() == art.params["head.weight"].tobytes()
    fresh = harness.initial_params(harness.prepare(small())[0], 0)
    gb = [k for k in params if k.startswith("gating.")]
    assert gb and all(params[k].tobytes() == fresh[k].tobytes() for k in gb)


def test_init_from_shape_mismatch(tmp_path):
    exp, data = harness.prepare(small(epochs=0))
    harness.write_artifact(harness.train_run(exp, data, 0), tmp_path / "a")
    bad, _ = harness.prepare(small(hidden=8, init_from=str(tmp_path / "a" / "params.txt")))
    with pytest.raises(ValueError, match="misshapen"):
        harness.initial_params(bad, 0)


def test_ablation_report_matches_aggregate_of_its_csv(tmp_path):
    report = harness.cmd_ablation(small(epochs=1), tmp_path)
    assert report.variants == [v.value for v in GatingVariant]
    again = harness.cmd_aggregate(tmp_path / "summary.csv")
    assert harness.summary_csv_text(again) == (tmp_path / "summary.csv").read_text()
    assert harness.render_table(again) == (tmp_path / "report.txt").read_text()
    for v in GatingVariant:
        assert (tmp_path / v.value / "seed0" / "records.jsonl").exists()


def test_sweep_runs_start_and_end(tmp_path):
    report = harness.cmd_sweep_positions(small(layers=4, epochs=1), tmp_path)
    assert report.variants == ["gating-start", "gating-end"]
    cfg = json.loads((tmp_path / "gating-end" / "seed0" / "run.json").read_text())["config"]
    assert "positions = 3" in cfg


def test_paramcount_none_has_no_gating():
    counts = harness.cmd_paramcount(small())
    assert counts["gating-block"] == counts["neuromodulated-gating"] - counts["no-gating-block"] > 0
    assert counts["neuromodulated-gating"] == counts["non-neuromodulated-gating"]


def test_per_run_csv_aggregation(tmp_path):
    path = tmp_path / "runs.csv"
    path.write_text("dataset,metric,run,value,variant\n"
                    "rte,Acc,0,0.70,a\nrte,Acc,1,0.80,a\nrte,Acc,2,0.90,a\n"
                    "cb,F1_macro,0,0.5,a\ncb,Acc,0,0.7,a\n")
    report = harness.cmd_aggregate(path)
    assert report.cells["a"]["rte"]["Acc"].mean == 80.0
    assert report.cells["a"]["rte"]["Acc"].std == 10.0
    assert report.mean_row("a").mean == 70.0


def test_aggregate_rejects_bad_input(tmp_path):
    (tmp_path / "x.csv").write_text("a,b\n1,2\n")
    with pytest.raises(ValueError, match="header"):
        harness.cmd_aggregate(tmp_path / "x.csv")
    (tmp_path / "y.csv").write_text("dataset,metric,run,value\nrte,Acc,0,75\n")
    with pytest.raises(ValueError, match="fractions"):
        harness.cmd_aggregate(tmp_path / "y.csv")


def test_superglue_training_end_to_end(tmp_path):
    rows = [{"premise": f"w{i} w{i + 1} x", "hypothesis": f"w{i}", "label": lab}
            for i, lab in enumerate(["entailment", "neutral", "contradiction"] * 4)]
    for name in ("train", "val"):
        (tmp_path / f"{name}.jsonl").write_text("".join(json.dumps(r) + "\n" for r in rows))
    settings = small(task="cb", train_file=str(tmp_path / "train.jsonl"),
                     val_file=str(tmp_path / "val.jsonl"), max_len=12, max_positions=16)
    (art,) = harness.cmd_train(settings, tmp_path / "out")
    assert set(art.record.epochs[0]) == {"F1_macro", "Acc"}
    assert art.params["head.weight"].shape == (16, 3)


def test_cli_paramcount(capsys):
    assert main(["paramcount", "--profile", "bert-large-cased"]) == 0
    out = capsys.readouterr().out
    assert "no-gating-block\t333580289" in out and "gating-block\t37788672" in out


def test_cli_rejects_unknown_config_key(tmp_path, capsys):
    (tmp_path / "bad.cfg").write_text("epochz = 1\n")
    assert main(["train", "--config", str(tmp_path / "bad.cfg")]) == 2
    assert "unknown key" in capsys.readouterr().err


def test_cli_train_writes_records_and_gates(tmp_path, capsys):
    cfg = write_cfg(tmp_path, seeds=(5, 6))
    out = tmp_path / "out"
    assert main(["train", "--config", str(cfg), "--seed", "9", "--out", str(out), "--dump-gates"]) == 0
    run = out / "neuromodulated-gating" / "seed9"
    lines = [json.loads(line) for line in (run / "records.jsonl").read_text().splitlines()]
    assert [line["seed"] for line in lines] == [9, 9]
    gates = np.load(run / "gates.npz")
    assert gates.files and all(0 < gates[k].min() and gates[k].max() < 1 for k in gates.files)
    assert gates[gates.files[0]].shape[-1] == 16
    assert load_params(run / "params.txt")
    assert not (out / "neuromodulated-gating" / "seed5").exists()
    assert "seed 9: best epoch" in capsys.readouterr().out


def test_cli_dump_gates_only_for_train(capsys):
    assert main(["paramcount", "--dump-gates"]) == 2


def test_cli_report_and_aggregate(tmp_path, capsys):
    from pathlib import Path

    table = Path(__file__).parent / "data" / "published_scores.csv"
    assert main(["aggregate", str(table), "--out", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    assert out.splitlines()[0] == "dataset,variant,metric,mean,std"
    assert "Mean,neuromodulated-gating,mean,68.64,11.98" in out
    assert main(["report", str(table)]) == 0
    assert capsys.readouterr().out.splitlines()[-1].split()[1:] == [
        "68.27±12.24", "68.64±11.98", "66.06±12.24"]
    assert main(["aggregate"]) == 2
