"""Sweep orchestration: configs, per-cell runs with oracle metrics, results.csv and manifests."""
from __future__ import annotations

import copy
import csv
import hashlib
import io
import json
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..estimators import ClipThresholds
from ..forc import (
    ForcConfig,
    all_marginals,
    clipped_target,
    forc_core,
    pessimistic_policy_select,
    regression_decomposition_audit,
    true_data_marginals,
)
from ..force import (
    ForceConfig,
    force_clipped_targets,
    force_regression_audit,
    force_run,
    forcrle_run,
    missingness_audit,
    online_policy_select,
)
from ..data import TupleDataset
from ..mdp import LowRankMdp, MarkovPolicy, RewardFunction, exact_occupancies, occupancy_matrix, policy_return
from ..representation import FeatureCandidateSet
from ..sampling import derive_seed, sample_level_dataset
from .generators import MdpParams, PolicyParams, generate_policy_class, generate_random_lowrank_mdp

ALGOS = ("forc", "force", "forcrl", "forcrle")
CSV_COLUMNS = ["algo", "seed", "n_mle", "n_reg", "policy_id", "h", "err_true", "err_clipped", "missingness",
               "clipped_mass", "audits_passed", "wall_ms", "config_hash"]
WORKERS_ENV = "LOWRANK_OCCUPANCY_WORKERS"
DOMINANCE_TOL = 1e-12


# ---------------------------------------------------------------------------
# config
# ---------------------------------------------------------------------------


@dataclass
class ExperimentConfig:
    algo: str
    mdp: dict  # {"file": path} or {"generator": MdpParams fields}
    policies: dict  # {"file": path} or {"generator": PolicyParams fields}
    n_grid: list  # [[n_mle, n_reg], ...]
    seeds: list
    out: str = "runs/out"
    params: dict = field(default_factory=dict)
    record_timing: bool = False

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentConfig":
        doc = copy.deepcopy(doc.get("config", doc))  # a manifest carries its config under "config"
        grid = []
        for n in doc.get("n_grid", []):
            grid.append([int(n), int(n)] if isinstance(n, (int, float)) else [int(n[0]), int(n[1])])
        cfg = cls(doc["algo"], doc["mdp"], doc["policies"], grid, [int(s) for s in doc.get("seeds", [])],
                  doc.get("out", "runs/out"), doc.get("params", {}), bool(doc.get("record_timing", False)))
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def validate(self):
        if self.algo not in ALGOS:
            raise ValueError(f"algo must be one of {ALGOS}")
        if not self.n_grid:
            raise ValueError("sweep grid n_grid is empty")
        if not self.seeds:
            raise ValueError("seed list is empty")
        for src in (self.mdp, self.policies):
            if "file" in src and not Path(src["file"]).exists():
                raise FileNotFoundError(src["file"])
            if "file" not in src and "generator" not in src:
                raise ValueError("a source needs either 'file' or 'generator'")

    def to_dict(self) -> dict:
        return {"algo": self.algo, "mdp": self.mdp, "policies": self.policies, "n_grid": self.n_grid,
                "seeds": self.seeds, "out": self.out, "params": self.params, "record_timing": self.record_timing}

    def config_hash(self) -> str:
        doc = self.to_dict()
        doc.pop("out")
        doc.pop("record_timing")
        return hashlib.sha256(json.dumps(doc, sort_keys=True).encode()).hexdigest()[:16]


def load_policies(path) -> list:
    doc = json.loads(Path(path).read_text())
    return [MarkovPolicy(np.asarray(t)) for t in doc["policies"]]


def save_policies(policies, path):
    Path(path).write_text(json.dumps({"policies": [p.table.tolist() for p in policies]}))


def build_world(cfg: ExperimentConfig):
    if "file" in cfg.mdp:
        m = LowRankMdp.load(cfg.mdp["file"])
    else:
        m = generate_random_lowrank_mdp(MdpParams(**cfg.mdp["generator"]))
    if "file" in cfg.policies:
        pols = load_policies(cfg.policies["file"])
    else:
        pols = generate_policy_class(PolicyParams(**cfg.policies["generator"]), m)
    return m, pols


def decoy_candidates(m: LowRankMdp, num_decoys: int, seed: int) -> FeatureCandidateSet:
    """The true features plus ``num_decoys`` random simplex features per level, truth at a seeded position."""
    rng = np.random.default_rng(seed)
    X, d = m.num_states, m.rank
    pos = int(rng.integers(0, num_decoys + 1))
    levels = []
    for h in range(m.horizon):
        cands = [rng.dirichlet(np.ones(X), size=d).T for _ in range(num_decoys)]
        cands.insert(pos, np.asarray(m.mu[h]))
        levels.append(tuple(cands))
    return FeatureCandidateSet(tuple(levels), truth_index=pos)


# ---------------------------------------------------------------------------
# one sweep cell
# ---------------------------------------------------------------------------


def _l1(a, b):
    return float(np.abs(np.asarray(a) - np.asarray(b)).sum())


def _random_reward(m, seed):
    rng = np.random.default_rng(derive_seed(seed, 0, 99))
    return RewardFunction(rng.random((m.horizon, m.num_states, m.num_actions)))


def _forc_cell(m, pols, params, n_mle, n_reg, seed, algo):
    H, X, K = m.horizon, m.num_states, m.num_actions
    unif = MarkovPolicy.uniform(H, X, K)
    blocks = [sample_level_dataset(m, k, [unif], unif, n_mle + n_reg, seed, n_mle=n_mle) for k in range(H - 1)]
    ds = TupleDataset(tuple(blocks), m.init_dist, X, K)
    th = ClipThresholds.constant(H, float(params.get("cx", 2.0)), float(params.get("ca", 2.0)))
    cfg = ForcConfig(th, n_mle, n_reg, int(params.get("restarts", 8)), seed=seed)
    if algo == "forcrl":
        cands = decoy_candidates(m, int(params.get("decoys", 3)), int(params.get("decoy_seed", 0)))
    else:
        cands = FeatureCandidateSet.known(m.mu)
    truth = true_data_marginals(m, ds, H)
    margs = all_marginals(ds, cands, cfg, H, m)
    which = params.get("eval_policies", "all")
    ids = list(range(len(pols))) if which == "all" else [int(i) for i in which]
    outputs, dbars, audits = {}, {}, {}
    for i in ids:
        out = forc_core(ds, pols[i], cands, cfg, m, margs)
        dbar = occupancy_matrix(clipped_target(m, ds, pols[i], th, truth))
        outputs[i], dbars[i] = out, dbar
        audits[i] = {r.h: r for r in regression_decomposition_audit(m, ds, pols[i], cfg, out, i, truth, dbar)}
    return outputs, dbars, audits, {}, cands


def _force_cell(m, pols, params, n_mle, n_reg, seed, algo):
    mode, c = ForceConfig.parse_spanner(params.get("spanner", "exact"))
    cfg = ForceConfig(tuple(pols), n_mle, n_reg, int(params.get("restarts", 8)), seed, mode, c)
    if algo == "forcrle":
        cands = decoy_candidates(m, int(params.get("decoys", 3)), int(params.get("decoy_seed", 0)))
        res = forcrle_run(m, cands, cfg)
    else:
        cands = FeatureCandidateSet.known(m.mu)
        res = force_run(m, cfg)
    dbar = force_clipped_targets(m, res, pols)
    reg = force_regression_audit(m, res, pols)
    miss = missingness_audit(m, res, pols, dbar)
    outputs = {i: res.forc_output(i) for i in range(len(pols))}
    audits = {i: {} for i in range(len(pols))}
    for r in reg:
        audits[r.policy][r.h] = r
    extra = {i: {} for i in range(len(pols))}
    for r in miss:
        extra[r.policy][r.h] = r
    trace = {"explore": [list(lv.explore) for lv in res.levels], "feature_index": [lv.feature_index for lv in res.levels],
             "deployments": res.deployments}
    return outputs, {i: dbar[i] for i in range(len(pols))}, audits, {"missing": extra, "trace": trace}, cands


def run_cell(cfg_doc: dict, n_mle: int, n_reg: int, seed: int):
    """Rows and a JSON record for one (n, seed) cell; importable for process pools."""
    cfg = ExperimentConfig.from_dict(cfg_doc)
    m, pols = build_world(cfg)
    t0 = time.perf_counter()
    if cfg.algo in ("forc", "forcrl"):
        outputs, dbars, audits, extra, cands = _forc_cell(m, pols, cfg.params, n_mle, n_reg, seed, cfg.algo)
    else:
        outputs, dbars, audits, extra, cands = _force_cell(m, pols, cfg.params, n_mle, n_reg, seed, cfg.algo)
    wall = (time.perf_counter() - t0) * 1e3
    missing = extra.get("missing", {})
    chash = cfg.config_hash()
    rows, per_policy = [], []
    for i, out in outputs.items():
        true = occupancy_matrix(exact_occupancies(m, pols[i]))
        prof = out.profile()
        for h in range(m.horizon):
            checks = []
            if h in audits[i]:
                checks.append(audits[i][h].passed)
            if h in missing.get(i, {}):
                checks.append(missing[i][h].passed)
            checks.append(bool(np.all(dbars[i][h] <= true[h] + DOMINANCE_TOL)))
            cm = out.diagnostics[h - 1].clipped_mass if h >= 1 else 0.0
            rows.append([cfg.algo, seed, n_mle, n_reg, i, h, _l1(prof[h], true[h]), _l1(prof[h], dbars[i][h]),
                         _l1(dbars[i][h], true[h]), cm, f"{sum(checks)}/{len(checks)}",
                         f"{wall:.3f}" if cfg.record_timing else "", chash])
        per_policy.append(out.to_json(i))
    reward = _random_reward(m, seed)
    profiles = [outputs[i].profile() for i in sorted(outputs)]
    chosen = [pols[i] for i in sorted(outputs)]
    sel = (pessimistic_policy_select if cfg.algo in ("forc", "forcrl") else online_policy_select)(profiles, reward, chosen)
    true_vals = [policy_return(m, p, reward) for p in chosen]
    record = {
        "algo": cfg.algo, "seed": seed, "n_mle": n_mle, "n_reg": n_reg, "config_hash": chash,
        "policies": per_policy,
        "value_gap": max(true_vals) - true_vals[sel.index],
        "selected": sorted(outputs)[sel.index],
        "audits": {str(i): {str(h): {"lhs": r.lhs, "rhs": r.rhs, "passed": r.passed} for h, r in a.items()}
                   for i, a in audits.items()},
        "truth_index": cands.truth_index,
    }
    if "trace" in extra:
        record["trace"] = extra["trace"]
    if cfg.record_timing:
        record["wall_ms"] = wall
    return rows, record


def _fmt(v):
    return repr(v) if isinstance(v, float) else str(v)


def rows_to_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in rows:
        w.writerow([_fmt(v) for v in r])
    return buf.getvalue()


def _workers():
    try:
        return max(1, int(os.environ.get(WORKERS_ENV, "1")))
    except ValueError:
        return 1


def run_experiment(cfg: ExperimentConfig, out: str | None = None) -> Path:
    """Run every (n, seed) cell, writing results.csv, runs/*.json and manifest.json under the output dir."""
    cfg.validate()
    outdir = Path(out or cfg.out)
    (outdir / "runs").mkdir(parents=True, exist_ok=True)
    doc = cfg.to_dict()
    cells = [(n[0], n[1], s) for n in cfg.n_grid for s in cfg.seeds]
    manifest = {"config": doc, "config_hash": cfg.config_hash(), "cells": [list(c) for c in cells]}
    (outdir / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))
    rows = []
    workers = _workers()
    try:
        if workers > 1 and len(cells) > 1:
            with ProcessPoolExecutor(workers) as ex:
                futures = [ex.submit(run_cell, doc, *c) for c in cells]
                for c, f in zip(cells, futures):
                    _collect(outdir, c, f.result(), rows)
        else:
            for c in cells:
                _collect(outdir, c, run_cell(doc, *c), rows)
    except Exception as e:
        (outdir / "results.csv").write_text(rows_to_csv(rows))
        raise RuntimeError(f"experiment aborted after {len(rows)} rows: {e}") from e
    (outdir / "results.csv").write_text(rows_to_csv(rows))
    return outdir


def _collect(outdir, cell, result, rows):
    cell_rows, record = result
    rows.extend(cell_rows)
    n_mle, n_reg, seed = cell
    (outdir / "runs" / f"n{n_mle}-{n_reg}_s{seed}.json").write_text(json.dumps(record, sort_keys=True))
