"""Simulate key-distillation sessions and check the interval estimate's coverage.

Run: python3 demos/simulate_sessions.py
"""

import numpy as np

from finitekey.estimation import ProtocolParams, p_hat_sft
from finitekey.mathcore import HypergeomCtx, hypergeom_lower_tail
from finitekey.protocol_sim import SessionConfig, run_adversarial_batch, run_batch


def exact_violation(params, k):
    # Largest c whose estimate still falls below the true key error rate.
    cs = np.arange(0, min(k, params.l) + 1)
    bad = cs[(k - cs) / params.n > p_hat_sft(params, cs)]
    if bad.size == 0:
        return 0.0
    return float(hypergeom_lower_tail(HypergeomCtx(params.n, params.l, k), int(bad.max())))


def main():
    params = ProtocolParams(n=4000, l=1000, s=3.0, D=20, c_max=120, r=32)
    cfg = SessionConfig(params, qber=0.03, seed=12345, trials=50)
    summary = run_batch(cfg)
    print("channel sessions: %d trials, QBER 3%%" % summary.trials)
    print("  abort rate %.3f, mean final key %.1f bits, keys agree %.3f" % (
        summary.abort_rate, summary.mean_G, summary.key_agreement_rate))

    params = ProtocolParams(n=2000, l=2000, s=2.0)
    cfg = SessionConfig(params, qber=0.0, seed=7, trials=20000, distill=False)
    print("\nfixed-k sessions at n = l = 2000, eps = %.5f" % params.eps)
    for k in (80, 200, 400):
        batch = run_adversarial_batch(cfg, k)
        print("  k = %3d  simulated %.5f  exact %.5f  threshold %.5f" % (
            k, batch.violation_rate, exact_violation(params, k), batch.violation_threshold))


if __name__ == "__main__":
    main()
