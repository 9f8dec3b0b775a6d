"""Aggregate a run directory's results.csv into medians and quartiles across seeds."""
from __future__ import annotations

import csv
import io
from collections import defaultdict
from pathlib import Path

import numpy as np

METRICS = ("err_true", "err_clipped", "missingness", "clipped_mass")
SUMMARY_COLUMNS = ["algo", "n_mle", "n_reg", "policy_id", "h", "seeds"] + [
    f"{m}_{s}" for m in METRICS for s in ("median", "q1", "q3")]


def read_results(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def _audit_ok(s):
    k, n = s.split("/")
    return int(k) == int(n)


def aggregate(rows):
    """Per (algo, n_mle, n_reg, policy_id, h): median and quartiles of each metric over seeds."""
    groups = defaultdict(list)
    for r in rows:
        groups[(r["algo"], int(r["n_mle"]), int(r["n_reg"]), int(r["policy_id"]), int(r["h"]))].append(r)
    out = []
    for key in sorted(groups):
        g = groups[key]
        rec = dict(zip(("algo", "n_mle", "n_reg", "policy_id", "h"), key))
        rec["seeds"] = len(g)
        for m in METRICS:
            v = np.array([float(r[m]) for r in g])
            rec[f"{m}_median"] = float(np.median(v))
            rec[f"{m}_q1"] = float(np.percentile(v, 25))
            rec[f"{m}_q3"] = float(np.percentile(v, 75))
        out.append(rec)
    return out


def headline(rows, metric="err_true"):
    """Per (algo, n_mle, n_reg): median over seeds of the max over (policy, h) of ``metric``."""
    per_seed = defaultdict(lambda: defaultdict(float))
    for r in rows:
        key = (r["algo"], int(r["n_mle"]), int(r["n_reg"]))
        s = int(r["seed"])
        per_seed[key][s] = max(per_seed[key][s], float(r[metric]))
    return {k: float(np.median(list(v.values()))) for k, v in sorted(per_seed.items())}


def emit_report(run_dir):
    """Write summary.csv and report.txt into ``run_dir``; returns (text, csv text)."""
    run_dir = Path(run_dir)
    rows = read_results(run_dir / "results.csv")
    agg = aggregate(rows)
    buf = io.StringIO()
    w = csv.DictWriter(buf, SUMMARY_COLUMNS, lineterminator="\n")
    w.writeheader()
    for rec in agg:
        w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in rec.items()})
    csv_text = buf.getvalue()

    failed = [r for r in rows if not _audit_ok(r["audits_passed"])]
    lines = []
    if failed:
        lines.append(f"!! AUDIT FAILURES: {len(failed)} of {len(rows)} rows")
        for r in failed[:20]:
            lines.append(f"!!   algo={r['algo']} seed={r['seed']} n=({r['n_mle']},{r['n_reg']}) "
                         f"policy={r['policy_id']} h={r['h']} audits={r['audits_passed']}")
    else:
        lines.append(f"all audits passed ({len(rows)} rows)")
    true_h = headline(rows, "err_true")
    clip_h = headline(rows, "err_clipped")
    lines.append("median over seeds of max_{policy,h} error:")
    for key in true_h:
        lines.append(f"  {key[0]} n_mle={key[1]} n_reg={key[2]}: vs true {true_h[key]:.6g}, vs clipped {clip_h[key]:.6g}")
    text = "\n".join(lines) + "\n"
    (run_dir / "summary.csv").write_text(csv_text)
    (run_dir / "report.txt").write_text(text)
    return text, csv_text
