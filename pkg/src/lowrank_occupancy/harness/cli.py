"""Command-line entry point: ``lowrank-occupancy <subcommand> ...``."""
from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from ..data import TupleDataset
from ..estimators import ClipThresholds
from ..forc import ForcConfig, clipped_target, forc_core
from ..force import ForceConfig, force_clipped_targets, force_run, forcrle_run
from ..mdp import LowRankMdp, MarkovPolicy, RewardFunction, exact_occupancies, occupancy_matrix
from ..objectives import l2_match_objective, neg_entropy_objective, plugin_objective_select, return_objective
from ..representation import FeatureCandidateSet
from ..sampling import sample_level_dataset
from .experiment import ExperimentConfig, decoy_candidates, load_policies, run_experiment, save_policies
from .generators import DESK, MdpParams, PolicyParams, generate_policy_class, generate_random_lowrank_mdp
from .report import emit_report


def parse_objective(spec: str):
    name, _, arg = spec.partition(":")
    if name == "return":
        return return_objective(RewardFunction(np.asarray(json.loads(Path(arg).read_text())["reward"])))
    if name == "l2-match":
        return l2_match_objective(np.asarray(json.loads(Path(arg).read_text())["target"]))
    if name == "neg-entropy":
        return neg_entropy_objective()
    raise ValueError(f"unknown objective {spec!r}; expected return:<file>, l2-match:<file> or neg-entropy")


# ---------------------------------------------------------------------------
# generators
# ---------------------------------------------------------------------------


def cmd_gen_mdp(a):
    if a.desk:
        p = DESK
    else:
        p = MdpParams(a.num_states, a.num_actions, a.horizon, a.rank, a.seed, a.style, a.concentration)
    generate_random_lowrank_mdp(p).save(a.out)
    print(f"wrote {a.out}")


def cmd_gen_policies(a):
    m = LowRankMdp.load(a.mdp)
    pols = generate_policy_class(PolicyParams(a.count, a.deterministic_fraction, a.temperature, a.seed), m)
    save_policies(pols, a.out)
    print(f"wrote {len(pols)} policies to {a.out}")


# ---------------------------------------------------------------------------
# algorithm runs
# ---------------------------------------------------------------------------


def _sweep(a, algo):
    doc = json.loads(Path(a.config).read_text())
    doc = doc.get("config", doc)
    doc["algo"] = algo
    if a.out:
        doc["out"] = a.out
    if a.seeds:
        doc["seeds"] = a.seeds
    if a.n:
        doc["n_grid"] = a.n
    if a.mdp:
        doc["mdp"] = {"file": a.mdp}
    if a.policies:
        doc["policies"] = {"file": a.policies}
    cfg = ExperimentConfig.from_dict(doc)
    outdir = run_experiment(cfg)
    text, _ = emit_report(outdir)
    print(text, end="")


def _write_summary(out, rows):
    with open(out / "summary.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["policy_id", "h", "l1_err_vs_true", "l1_err_vs_clipped", "clipped_mass"])
        for r in rows:
            w.writerow([repr(v) if isinstance(v, float) else v for v in r])


def _summary_rows(m, pols, profiles, dbars, clipped):
    rows = []
    for i, prof in profiles.items():
        true = occupancy_matrix(exact_occupancies(m, pols[i]))
        for h in range(prof.shape[0]):
            vs_clip = float(np.abs(prof[h] - dbars[i][h]).sum()) if dbars is not None else ""
            rows.append([i, h, float(np.abs(prof[h] - true[h]).sum()), vs_clip, clipped[i][h]])
    return rows


def _select(a, profiles, pols, offline):
    if not a.objective:
        return None
    obj = parse_objective(a.objective)
    ids = sorted(profiles)
    sel = plugin_objective_select([profiles[i] for i in ids], obj, [pols[i] for i in ids],
                                  project=False if offline else None)
    return {"objective": a.objective, "selected": ids[sel.index], "values": sel.values.tolist()}


def _candidates(a, m):
    if getattr(a, "candidates", None):
        return FeatureCandidateSet.load(a.candidates)
    return decoy_candidates(m, a.decoys, a.decoy_seed)


def cmd_forc(a, algo):
    if a.config:
        return _sweep(a, algo)
    m = LowRankMdp.load(a.mdp)
    pols = load_policies(a.policies)
    H, X, K = m.horizon, m.num_states, m.num_actions
    if a.data:
        ds = TupleDataset.load_jsonl(a.data)
    else:
        unif = MarkovPolicy.uniform(H, X, K)
        ds = TupleDataset(tuple(sample_level_dataset(m, k, [unif], unif, a.n_mle + a.n_reg, a.seed, n_mle=a.n_mle)
                                for k in range(H - 1)), m.init_dist, X, K)
    th = ClipThresholds.constant(H, a.cx, a.ca)
    cfg = ForcConfig(th, a.n_mle, a.n_reg, a.restarts, seed=a.seed)
    cands = _candidates(a, m) if algo == "forcrl" else FeatureCandidateSet.known(m.mu)
    ids = list(range(len(pols))) if a.policy is None else [a.policy]
    has_truth = all(b.rollin for b in ds.blocks)
    out = Path(a.out)
    out.mkdir(parents=True, exist_ok=True)
    profiles, dbars, clipped, est_json, trace = {}, {} if has_truth else None, {}, [], []
    for i in ids:
        res = forc_core(ds, pols[i], cands, cfg, m if has_truth else None)
        profiles[i] = res.profile()
        clipped[i] = [0.0] + [dg.clipped_mass for dg in res.diagnostics]
        if has_truth:
            dbars[i] = occupancy_matrix(clipped_target(m, ds, pols[i], th))
        est_json.append(res.to_json(i))
        trace.append({"policy_id": i, "levels": [
            {"h": dg.h, "reg_loss": dg.reg_loss, "reg_slack": dg.reg_slack, "restart": dg.restart,
             "weight_candidate": dg.weight_index, "mle_candidates": [dg.dD_index, dg.dag_index]}
            for dg in res.diagnostics]})
    (out / "estimates.json").write_text(json.dumps(est_json))
    (out / "trace.json").write_text(json.dumps(trace))
    _write_summary(out, _summary_rows(m, pols, profiles, dbars, clipped))
    sel = _select(a, profiles, pols, offline=True)
    if sel:
        (out / "selection.json").write_text(json.dumps(sel))
    print(f"wrote estimates for {len(ids)} policies to {out}")


def cmd_force(a, algo):
    if a.config:
        return _sweep(a, algo)
    m = LowRankMdp.load(a.mdp)
    pols = load_policies(a.policies)
    mode, c = ForceConfig.parse_spanner(a.spanner)
    cfg = ForceConfig(tuple(pols), a.n_mle, a.n_reg, a.restarts, a.seed, mode, c)
    res = forcrle_run(m, _candidates(a, m), cfg) if algo == "forcrle" else force_run(m, cfg)
    out = Path(a.out)
    out.mkdir(parents=True, exist_ok=True)
    dbar = force_clipped_targets(m, res, pols)
    profiles = {i: res.profile(i) for i in range(len(pols))}
    clipped = {i: [0.0] + [lv.diagnostics[i].clipped_mass for lv in res.levels] for i in range(len(pols))}
    (out / "estimates.json").write_text(json.dumps([res.forc_output(i).to_json(i) for i in range(len(pols))]))
    trace = {"deployments": res.deployments, "levels": [
        {"h": lv.h, "explore": list(lv.explore), "spanner_bound": lv.spanner_bound,
         "spanner_max_coefficient": lv.spanner_max_coef, "feature_index": lv.feature_index,
         "theta": [t.tolist() for t in lv.theta], "linearization_residuals": lv.residuals,
         "d_tilde_prev": [np.asarray(v).tolist() for v in lv.d_tilde], "samples": lv.block.n}
        for lv in res.levels]}
    (out / "trace.json").write_text(json.dumps(trace))
    _write_summary(out, _summary_rows(m, pols, profiles, dbar, clipped))
    sel = _select(a, profiles, pols, offline=False)
    if sel:
        (out / "selection.json").write_text(json.dumps(sel))
    print(f"wrote estimates for {len(pols)} policies over {res.deployments} deployments to {out}")


def cmd_report(a):
    text, _ = emit_report(a.run_dir)
    print(text, end="")


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def _common_run(p):
    p.add_argument("--config", help="experiment JSON (or a manifest) for a sweep; flags below override it")
    p.add_argument("--mdp")
    p.add_argument("--policies")
    p.add_argument("--n-mle", type=int, default=1000)
    p.add_argument("--n-reg", type=int, default=1000)
    p.add_argument("--restarts", type=int, default=8)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.add_argument("--seeds", type=int, nargs="*", help="sweep override: seed list")
    p.add_argument("--n", type=int, nargs="*", help="sweep override: n_mle = n_reg grid")
    p.add_argument("--objective", help="return:<reward.json>, l2-match:<target.json> or neg-entropy")


def _rl_args(p):
    p.add_argument("--candidates", help="candidate feature set JSON")
    p.add_argument("--decoys", type=int, default=3)
    p.add_argument("--decoy-seed", type=int, default=0)


def build_parser():
    ap = argparse.ArgumentParser(prog="lowrank-occupancy", description=__doc__)
    sub = ap.add_subparsers(dest="cmd", required=True)

    g = sub.add_parser("gen-mdp", help="generate a random simplex-feature MDP")
    g.add_argument("--num-states", type=int, default=9)
    g.add_argument("--num-actions", type=int, default=2)
    g.add_argument("--horizon", type=int, default=4)
    g.add_argument("--rank", type=int, default=3)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--style", choices=["simplex", "identity"], default="simplex")
    g.add_argument("--concentration", type=float, default=1.0)
    g.add_argument("--desk", action="store_true", help="the fixed desk-scale instance")
    g.add_argument("--out", required=True)
    g.set_defaults(fn=cmd_gen_mdp)

    g = sub.add_parser("gen-policies", help="generate a random policy class for an MDP")
    g.add_argument("--mdp", required=True)
    g.add_argument("--count", type=int, default=8)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--deterministic-fraction", type=float, default=0.5)
    g.add_argument("--temperature", type=float, default=1.0)
    g.add_argument("--out", required=True)
    g.set_defaults(fn=cmd_gen_policies)

    for algo in ("forc", "forcrl"):
        p = sub.add_parser(algo, help="offline occupancy estimation" + (" with candidate features" if algo == "forcrl" else ""))
        _common_run(p)
        p.add_argument("--data", help="dataset JSON lines; sampled with uniform roll-in when omitted")
        p.add_argument("--cx", type=float, default=2.0)
        p.add_argument("--ca", type=float, default=2.0)
        p.add_argument("--policy", type=int, help="estimate only this policy index")
        if algo == "forcrl":
            _rl_args(p)
        p.set_defaults(fn=lambda a, algo=algo: cmd_forc(a, algo))

    for algo in ("force", "forcrle"):
        p = sub.add_parser(algo, help="online policy-cover construction" + (" with candidate features" if algo == "forcrle" else ""))
        _common_run(p)
        p.add_argument("--spanner", default="exact", help="exact or approx:C")
        if algo == "forcrle":
            _rl_args(p)
        p.set_defaults(fn=lambda a, algo=algo: cmd_force(a, algo))

    g = sub.add_parser("report", help="aggregate a run directory")
    g.add_argument("--run-dir", required=True)
    g.set_defaults(fn=cmd_report)
    return ap


def main(argv=None):
    a = build_parser().parse_args(argv)
    if a.cmd in ("forc", "forcrl", "force", "forcrle") and not a.config:
        missing = [f for f in ("mdp", "policies", "out") if not getattr(a, f)]
        if missing:
            print(f"error: --{', --'.join(missing)} required without --config", file=sys.stderr)
            return 2
    a.fn(a)
    return 0


if __name__ == "__main__":
    sys.exit(main())
