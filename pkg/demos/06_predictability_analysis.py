"""Quantify why filtering works: honest trajectories are more predictable.

Runs a 50-round federation where a fixed set of clients keeps injecting
Gaussian noise, computes the time-delayed mutual information of every
parameter trajectory against its one-round-shifted copy, and tests whether
honest clients' trajectories carry more self-information than poisoned ones.
"""

import numpy as np

from fedmar.metrics import coordinate_tdmi, welch_one_tailed_t
from fedmar.simulation import ExperimentConfig, run_experiment

config = ExperimentConfig(
    K=20,
    T=50,
    r=0.2,
    attack="gauss",
    attack_fixed_ids=True,
    fallback_aggregator="multi_krum",
    seed=11,
    center_spread=1.5,
    data_noise=2.0,
    epochs=1,
    lr=0.05,
    batch=10**9,
    n_examples=2000,
    ridge_a=1e-3,
    ridge_b=1e-3,
)
result = run_experiment(config)

legit_pools, poisoned_pools = [], []
for cid, entries in result.trajectories.items():
    sequence = np.stack([vec for _, vec in entries], axis=0)
    pool = coordinate_tdmi(sequence, delay=1, bins=10)
    if cid in result.ever_malicious:
        poisoned_pools.append((cid, pool))
    else:
        legit_pools.append((cid, pool))

print("per-client average time-delayed mutual information (delay 1, 10 bins):")
for label, pools in (("honest", legit_pools), ("poisoned", poisoned_pools)):
    values = [float(np.mean(p)) for _, p in pools]
    print(
        f"  {label:9s} n={len(pools):2d}  mean={np.mean(values):.3f}  "
        f"range=[{min(values):.3f}, {max(values):.3f}]"
    )

legit = np.concatenate([p for _, p in legit_pools])
poisoned = np.concatenate([p for _, p in poisoned_pools])
stat, dof, p_value = welch_one_tailed_t(legit, poisoned)
print(
    f"\nWelch one-tailed test (honest mean > poisoned mean): "
    f"t={stat:.1f}, dof={dof:.0f}, p={p_value:.2e}"
)
print("equivalent CLI: fedmar analyze <run_dir> --mode tdmi")
