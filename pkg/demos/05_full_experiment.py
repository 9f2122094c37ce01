"""The full harness: pretrain, fine-tune three ways, evaluate everywhere.

Runs the smoke configuration end to end — supervised pretraining on a
source task, then baseline fine-tuning, curriculum stage 1, and curriculum
stage 2 on the target task — and prints the per-strategy summary plus the
paired significance tests. Equivalent to:

    hadcl run --config configs/smoke.yaml --output-dir runs/demo
"""

import json
import os
import tempfile

from hadcl import harness

config_path = os.path.join(os.path.dirname(__file__), "..",
                           "configs", "smoke.yaml")
config = harness.load_config(config_path)
print(f"config hash: {config.config_hash[:16]}...")
print(f"seeds: {list(config.seeds)}, strategies: {list(config.strategies)}\n")

report = harness.run_experiment(config)
print(f"{len(report.cells)} cells, all ok: {report.all_ok}\n")

summary = report.summary()
print(f"{'strategy':12s} {'val AUC':>8s} {'ID AUC':>8s} {'OOD AUC':>8s} "
      f"{'slide AUC':>9s}")
for strategy, entry in summary.items():
    print(f"{strategy:12s} {entry['median_auc_val']:8.4f} "
          f"{entry['median_auc_in_domain']:8.4f} "
          f"{entry['median_auc_ood']:8.4f} "
          f"{entry.get('median_auc_slide', float('nan')):9.4f}")

print("\npaired DeLong p-values vs baseline (OOD split):")
for cell in report.cells:
    p = cell["metrics"]["ood"].get("p_vs_baseline")
    if p is not None:
        print(f"  {cell['strategy']:12s} seed {cell['seed']}: p = {p:.3f}")

with tempfile.TemporaryDirectory() as tmp:
    report_path = os.path.join(tmp, "report.json")
    report.to_json(report_path)
    paths = harness.emit_plot_data(report, tmp)
    print(f"\nreport JSON: {os.path.getsize(report_path)} bytes")
    for key, path in paths.items():
        with open(path) as f:
            print(f"plot data {key}: {sum(1 for _ in f) - 1} rows")
