import csv
import json

import numpy as np
import pytest

from lowrank_occupancy.harness import experiment as ex
from lowrank_occupancy.harness.cli import main as cli_main
from lowrank_occupancy.harness.experiment import CSV_COLUMNS, ExperimentConfig, run_experiment
from lowrank_occupancy.harness.generators import (
    DESK,
    MdpParams,
    PolicyParams,
    generate_policy_class,
    generate_random_lowrank_mdp,
)
from lowrank_occupancy.harness.report import aggregate, emit_report, headline
from lowrank_occupancy.mdp import exact_occupancies, occupancy_matrix, validate_mdp


# -- generators -------------------------------------------------------------------


def test_identity_style_full_rank():
    m = generate_random_lowrank_mdp(MdpParams(5, 3, 3, 5, seed=2, style="identity"))
    assert validate_mdp(m) == []
    assert np.array_equal(m.mu[0], np.eye(5))


def test_generator_determinism_and_errors():
    a = generate_random_lowrank_mdp(MdpParams(6, 2, 3, 2, seed=4))
    b = generate_random_lowrank_mdp(MdpParams(6, 2, 3, 2, seed=4))
    assert a.phi.tobytes() == b.phi.tobytes() and a.mu.tobytes() == b.mu.tobytes()
    with pytest.raises(ValueError):
        generate_random_lowrank_mdp(MdpParams(3, 2, 3, 4))
    with pytest.raises(ValueError):
        generate_random_lowrank_mdp(MdpParams(4, 2, 3, 2, style="identity"))


def test_generated_occupancies_normalized():
    for seed in range(100):
        rng = np.random.default_rng(seed)
        X = int(rng.integers(2, 12))
        p = MdpParams(X, int(rng.integers(1, 4)), int(rng.integers(1, 6)), int(rng.integers(1, X + 1)), seed=seed)
        m = generate_random_lowrank_mdp(p)
        assert m.b_mu == pytest.approx(m.rank)
        for pol in generate_policy_class(PolicyParams(2, seed=seed), m):
            assert np.allclose(occupancy_matrix(exact_occupancies(m, pol)).sum(1), 1.0, atol=1e-9)


def test_policy_class_properties():
    m = generate_random_lowrank_mdp(DESK)
    a = generate_policy_class(PolicyParams(8, seed=3), m)
    b = generate_policy_class(PolicyParams(8, seed=3), m)
    assert len(a) == 8 and all(x.table.tobytes() == y.table.tobytes() for x, y in zip(a, b))
    # policies 0 and 1 never share a greedy action
    assert np.all(a[0].table.argmax(-1) != a[1].table.argmax(-1))
    with pytest.raises(ValueError):
        generate_policy_class(PolicyParams(0), m)


def test_policy_class_rank_on_desk():
    m = generate_random_lowrank_mdp(DESK)
    good = 0
    for seed in range(10):
        pols = generate_policy_class(PolicyParams(8, seed=seed), m)
        occ = np.stack([exact_occupancies(m, p)[m.horizon - 1].values for p in pols])
        sv = np.linalg.svd(occ, compute_uv=False)
        good += int((sv > 1e-9 * sv[0]).sum() >= 2)
    assert good >= 9


# -- configs and sweeps ----------------------------------------------------------------


def _gen_cfg(tmp_path, **kw):
    doc = {"algo": "forc", "mdp": {"generator": {"num_states": 5, "num_actions": 2, "horizon": 3, "rank": 2, "seed": 1}},
           "policies": {"generator": {"count": 3, "seed": 2}}, "n_grid": [200], "seeds": [0],
           "out": str(tmp_path / "run"), "params": {"restarts": 2}}
    doc.update(kw)
    return doc


def test_config_rejections(tmp_path):
    with pytest.raises(ValueError, match="n_grid"):
        ExperimentConfig.from_dict(_gen_cfg(tmp_path, n_grid=[]))
    with pytest.raises(ValueError, match="seed"):
        ExperimentConfig.from_dict(_gen_cfg(tmp_path, seeds=[]))
    with pytest.raises(FileNotFoundError):
        ExperimentConfig.from_dict(_gen_cfg(tmp_path, mdp={"file": str(tmp_path / "missing.json")}))
    with pytest.raises(ValueError):
        ExperimentConfig.from_dict(_gen_cfg(tmp_path, algo="sarsa"))


def test_config_hash_ignores_output_location(tmp_path):
    a = ExperimentConfig.from_dict(_gen_cfg(tmp_path))
    b = ExperimentConfig.from_dict(_gen_cfg(tmp_path, out="elsewhere"))
    c = ExperimentConfig.from_dict(_gen_cfg(tmp_path, seeds=[1]))
    assert a.config_hash() == b.config_hash() != c.config_hash()


def test_single_cell_single_row(tmp_path):
    doc = _gen_cfg(tmp_path)
    doc["mdp"]["generator"]["horizon"] = 1
    doc["policies"]["generator"]["count"] = 1
    out = run_experiment(ExperimentConfig.from_dict(doc))
    rows = list(csv.DictReader(open(out / "results.csv")))
    assert len(rows) == 1


def test_sweep_outputs_and_manifest_rerun(tmp_path):
    cfg = ExperimentConfig.from_dict(_gen_cfg(tmp_path, n_grid=[150, [100, 200]], seeds=[0, 1]))
    out = run_experiment(cfg)
    text = (out / "results.csv").read_text()
    rows = list(csv.DictReader(text.splitlines()))
    assert list(rows[0]) == CSV_COLUMNS
    assert len(rows) == 2 * 2 * 3 * 3
    assert {r["config_hash"] for r in rows} == {cfg.config_hash()}
    assert {r["wall_ms"] for r in rows} == {""}
    assert all(r["audits_passed"].split("/")[0] == r["audits_passed"].split("/")[1] for r in rows)
    assert len(list((out / "runs").glob("*.json"))) == 4
    rec = json.loads((out / "runs" / "n100-200_s1.json").read_text())
    assert rec["value_gap"] >= -1e-12 and rec["config_hash"] == cfg.config_hash()
    manifest = json.loads((out / "manifest.json").read_text())
    again = run_experiment(ExperimentConfig.from_dict(manifest), out=str(tmp_path / "rerun"))
    assert (again / "results.csv").read_bytes() == (out / "results.csv").read_bytes()


def test_parallel_workers_match_serial(tmp_path, monkeypatch):
    doc = _gen_cfg(tmp_path, seeds=[0, 1, 2], algo="force")
    doc["params"] = {"restarts": 2, "spanner": "approx:2"}
    serial = run_experiment(ExperimentConfig.from_dict(doc), out=str(tmp_path / "s"))
    monkeypatch.setenv(ex.WORKERS_ENV, "3")
    par = run_experiment(ExperimentConfig.from_dict(doc), out=str(tmp_path / "p"))
    assert (serial / "results.csv").read_bytes() == (par / "results.csv").read_bytes()


def test_partial_rows_flushed_on_error(tmp_path, monkeypatch):
    real = ex.run_cell
    calls = []

    def flaky(*a):
        calls.append(a)
        if len(calls) == 2:
            raise RuntimeError("boom")
        return real(*a)

    monkeypatch.setattr(ex, "run_cell", flaky)
    with pytest.raises(RuntimeError, match="after 9 rows: boom"):
        run_experiment(ExperimentConfig.from_dict(_gen_cfg(tmp_path, seeds=[0, 1])))
    rows = list(csv.DictReader(open(tmp_path / "run" / "results.csv")))
    assert len(rows) == 9


def test_timing_is_opt_in(tmp_path):
    out = run_experiment(ExperimentConfig.from_dict(_gen_cfg(tmp_path, record_timing=True)))
    rows = list(csv.DictReader(open(out / "results.csv")))
    assert all(float(r["wall_ms"]) > 0 for r in rows)


# -- report ----------------------------------------------------------------------------------


def _row(seed, err, audits="2/2", policy=0, h=1):
    return {"algo": "forc", "seed": str(seed), "n_mle": "10", "n_reg": "10", "policy_id": str(policy), "h": str(h),
            "err_true": repr(err), "err_clipped": repr(err / 2), "missingness": "0.0", "clipped_mass": "0.0",
            "audits_passed": audits, "wall_ms": "", "config_hash": "x"}


def _write(tmp_path, rows):
    with open(tmp_path / "results.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, CSV_COLUMNS, lineterminator="\n")
        w.writeheader()
        w.writerows(rows)


def test_report_single_run(tmp_path):
    _write(tmp_path, [_row(0, 0.3)])
    text, _ = emit_report(tmp_path)
    agg = list(csv.DictReader(open(tmp_path / "summary.csv")))
    assert float(agg[0]["err_true_median"]) == 0.3 == float(agg[0]["err_true_q1"]) == float(agg[0]["err_true_q3"])
    assert "all audits passed" in text


def test_report_flags_failures(tmp_path):
    _write(tmp_path, [_row(0, 0.3), _row(1, 0.2, audits="1/2")])
    text, _ = emit_report(tmp_path)
    assert text.startswith("!! AUDIT FAILURES: 1 of 2")
    assert "seed=1" in (tmp_path / "report.txt").read_text()


def test_report_hand_computed_quartiles():
    rows = [_row(s, float(v)) for s, v in enumerate([7, 1, 10, 4, 2, 9, 3, 8, 6, 5])]
    agg = aggregate(rows)
    assert len(agg) == 1 and agg[0]["seeds"] == 10
    # linear-interpolation quartiles of 1..10
    assert (agg[0]["err_true_median"], agg[0]["err_true_q1"], agg[0]["err_true_q3"]) == (5.5, 3.25, 7.75)
    assert agg[0]["err_clipped_median"] == 2.75


def test_headline_is_median_of_per_seed_max():
    rows = [_row(0, 0.1, h=1), _row(0, 0.5, h=2), _row(1, 0.2, h=1), _row(1, 0.3, h=2), _row(2, 0.9, h=1)]
    assert headline(rows) == {("forc", 10, 10): 0.5}


# -- CLI ---------------------------------------------------------------------------------------


def test_cli_end_to_end(tmp_path, capsys):
    mdp, pols = str(tmp_path / "m.json"), str(tmp_path / "p.json")
    assert cli_main(["gen-mdp", "--num-states", "5", "--num-actions", "2", "--horizon", "3", "--rank", "2",
                     "--seed", "3", "--out", mdp]) == 0
    assert cli_main(["gen-policies", "--mdp", mdp, "--count", "3", "--seed", "1", "--out", pols]) == 0
    out = tmp_path / "force"
    assert cli_main(["force", "--mdp", mdp, "--policies", pols, "--n-mle", "200", "--n-reg", "200",
                     "--spanner", "approx:2", "--seed", "4", "--restarts", "2", "--out", str(out),
                     "--objective", "neg-entropy"]) == 0
    rows = list(csv.DictReader(open(out / "summary.csv")))
    assert list(rows[0]) == ["policy_id", "h", "l1_err_vs_true", "l1_err_vs_clipped", "clipped_mass"]
    assert len(rows) == 9
    trace = json.loads((out / "trace.json").read_text())
    assert trace["deployments"] == 2 and all(len(lv["explore"]) <= 2 for lv in trace["levels"])
    assert len(json.loads((out / "estimates.json").read_text())) == 3
    sel = json.loads((out / "selection.json").read_text())
    assert 0 <= sel["selected"] < 3

    reward = tmp_path / "r.json"
    reward.write_text(json.dumps({"reward": np.full((3, 5, 2), 0.5).tolist()}))
    fo = tmp_path / "forc"
    assert cli_main(["forcrl", "--mdp", mdp, "--policies", pols, "--n-mle", "200", "--n-reg", "200", "--restarts", "2",
                     "--policy", "1", "--decoys", "1", "--out", str(fo), "--objective", f"return:{reward}"]) == 0
    rows = list(csv.DictReader(open(fo / "summary.csv")))
    assert {r["policy_id"] for r in rows} == {"1"} and all(r["l1_err_vs_clipped"] != "" for r in rows)

    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"algo": "forc", "mdp": {"file": mdp}, "policies": {"file": pols}, "n_grid": [150],
                               "seeds": [0], "params": {"restarts": 2}}))
    sweep = tmp_path / "sweep"
    assert cli_main(["forc", "--config", str(cfg), "--out", str(sweep), "--seeds", "0", "1"]) == 0
    man = json.loads((sweep / "manifest.json").read_text())
    assert man["config"]["seeds"] == [0, 1]
    capsys.readouterr()
    assert cli_main(["report", "--run-dir", str(sweep)]) == 0
    assert "all audits passed" in capsys.readouterr().out


def test_cli_requires_inputs(capsys):
    assert cli_main(["force", "--mdp", "x.json"]) == 2
    assert "--policies" in capsys.readouterr().err


def test_cli_dataset_file_without_provenance(tmp_path):
    from lowrank_occupancy.harness.calibrate import uniform_dataset

    m = generate_random_lowrank_mdp(MdpParams(5, 2, 3, 2, seed=3))
    mdp, pols = tmp_path / "m.json", tmp_path / "p.json"
    m.save(mdp)
    ex.save_policies(generate_policy_class(PolicyParams(2, seed=0), m), pols)
    uniform_dataset(m, 100, 100, 0).save_jsonl(tmp_path / "d.jsonl")
    out = tmp_path / "o"
    assert cli_main(["forc", "--mdp", str(mdp), "--policies", str(pols), "--data", str(tmp_path / "d.jsonl"),
                     "--n-mle", "100", "--n-reg", "100", "--restarts", "2", "--out", str(out)]) == 0
    rows = list(csv.DictReader(open(out / "summary.csv")))
    assert all(r["l1_err_vs_clipped"] == "" for r in rows)
