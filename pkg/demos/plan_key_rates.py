"""Plan finite-key parameters under a 1e-10 security budget and print key rates.

Run: python3 demos/plan_key_rates.py
"""

import math

from finitekey.planner import PlanRequest, asymptotic_rate, optimize_best, plan_prop1, plan_prop2

# Trace distance plus verification failure must stay below 1e-10, with r = 40 tag bits.
P_MAX = 0.98 / 8 * 1e-20
T_MAX = 2 * math.sqrt(2 * P_MAX)


def request(method, qber, total, **kw):
    return PlanRequest(method=method, qber=qber, n=total // 2, l=total - total // 2, q=0.5,
                       t_max=T_MAX, r=40, f=1.1, **kw)


def main():
    print("P_max = %.4g, T_max = %.4g" % (P_MAX, T_MAX))

    res = plan_prop2(request("prop2", 0.05, 10**4))
    print("\nstraightforward rigorous plan at n+l = 1e4, QBER 5%")
    print("  s = %.2f  D = %d  c_min = %d  c_max = %d" % (res.s, res.D, res.c_min, res.c_max))
    print("  bound on P_ph = %.3g (target %.3g)" % (res.p_ph_bound, P_MAX))
    print("  G = %d  R = %.4f" % (res.G, res.R))

    print("\nbest rigorous rate, optimized over (s, c_min)")
    print("%10s %8s %8s %8s %10s" % ("n+l", "QBER", "method", "R", "R/R_inf"))
    for qber in (0.01, 0.025, 0.05):
        for total in (2000, 10**4, 10**5, 10**6):
            req = request("prop2", qber, total).replace(sweep_s=True, sweep_c_min=True)
            best = optimize_best(req)
            R = best.R if best.feasible else 0.0
            print("%10d %8.3f %8s %8.4f %10.3f" % (
                total, qber, best.method, R, R / asymptotic_rate(qber)))

    print("\nnormal approximation versus rigorous bound, QBER 1%")
    for total in (2000, 10**4, 10**5):
        a = plan_prop1(request("prop1", 0.01, total))
        b = plan_prop2(request("prop2", 0.01, total))
        print("  n+l = %7d  R_approx = %.4f  R_rigorous = %.4f" % (total, a.R, b.R))


if __name__ == "__main__":
    main()
