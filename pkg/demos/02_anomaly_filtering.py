"""Watch the pre-aggregation filter catch poisoned updates round by round.

Runs a small federation under the Gaussian-noise attack and prints, for each
round, the true malicious clients, the flagged set, and the score gap between
the worst-scoring honest client and the best-scoring malicious one.
"""

from fedmar.simulation import ExperimentConfig, run_experiment

config = ExperimentConfig(
    K=20,
    T=10,
    r=0.2,
    attack="gauss",
    attack_start=2,
    seed=11,
    center_spread=1.5,
    data_noise=2.0,
    epochs=200,
    lr=0.5,
    weight_decay=0.05,
    batch=10**9,
    n_examples=2000,
    ridge_a=1e-3,
    ridge_b=1e-3,
)
result = run_experiment(config)

print(f"K={config.K} clients, r={config.r} malicious, attack={config.attack}\n")
for rec in result.records:
    if rec.scores is None:
        print(f"round {rec.round_id:2d}: fallback aggregation (no history yet)")
        continue
    malicious = set(rec.malicious)
    mal_scores = [rec.scores.get(c) for c in sorted(malicious)]
    honest_scores = [s for c, s in rec.scores.scores.items() if c not in malicious]
    print(
        f"round {rec.round_id:2d}: malicious={sorted(malicious)} flagged={list(rec.flagged)}"
        f"  min(mal)={min(mal_scores):9.3g}  max(honest)={max(honest_scores):9.3g}"
    )

print(
    f"\ncumulative detection: precision={result.summary['precision']:.3f} "
    f"recall={result.summary['recall']:.3f}; best accuracy={result.summary['best_accuracy']:.3f}"
)
