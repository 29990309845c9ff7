"""Craft each poisoning strategy against one toy round and inspect payloads.

The attacker sees 16 benign updates and controls 4 clients. Each strategy
produces a different kind of payload: wild noise, a mean-hugging nudge, or a
searched perturbation that stays inside the benign spread.
"""

import numpy as np

from fedmar.aggregators import AggregationInput, fed_avg
from fedmar.attacks import (
    AttackContext,
    attack_agr_mm,
    attack_gauss,
    attack_lie,
    attack_opt,
)

rng = np.random.default_rng(5)
d = 12
benign = [(cid, rng.standard_normal(d)) for cid in range(16)]
malicious_ids = (16, 17, 18, 19)
honest_locals = {cid: rng.standard_normal(d) for cid in malicious_ids}
ctx = AttackContext(
    benign_updates=benign,
    malicious_ids=malicious_ids,
    global_model=np.zeros(d),
    rng_seed=99,
    round_id=4,
)
mu = np.mean(np.stack([v for _, v in benign]), axis=0)


def describe(name, payloads, extra=""):
    sample = payloads[malicious_ids[0]]
    print(
        f"{name:8s} |payload - benign mean| = {np.linalg.norm(sample - mu):8.3f}   "
        f"payload spread across clients = "
        f"{max(np.linalg.norm(payloads[a] - payloads[b]) for a in payloads for b in payloads):6.3f}"
        + (f"   {extra}" if extra else "")
    )


describe("gauss", attack_gauss(ctx, honest_locals, sigma=10.0))
describe("lie", attack_lie(ctx))

aggregate = lambda pairs: fed_avg(AggregationInput.from_pairs(pairs))
opt_payloads, opt_info = attack_opt(ctx, aggregate, tau=1e-5, lambda_init=10.0)
describe(
    "opt",
    opt_payloads,
    f"(search: {opt_info.iterations} probes, final step {opt_info.final_value:g}, "
    f"{'hit' if opt_info.succeeded else 'exhausted'})",
)

agr_payloads, agr_info = attack_agr_mm(ctx, tau=1e-5, gamma_init=5.0, perturbation="inv_std")
describe(
    "agr_mm",
    agr_payloads,
    f"(search: {agr_info.iterations} probes, gamma {agr_info.final_value:g})",
)

print("\nGAUSS scatters clients independently; LIE/OPT/AGR-MM send one shared payload.")
