"""Check every closed-form bound against exact hypergeometric sums on a small grid.

Run: python3 demos/verify_bounds.py
"""

from finitekey.verify import VerifyConfig, run_verification


def main():
    cfg = VerifyConfig(lemma_sizes=(20, 50), case_size=300, oracle_sizes=(200, 500))
    report = run_verification(cfg)
    for line in report.lines():
        print(line)
    print("\nall gating checks pass:", report.passed)

    broken = run_verification(VerifyConfig(mu=-5.0, suites=("gauss_tail", "oracle_dominance"),
                                           oracle_sizes=(200,)))
    print("with a corrupted Stirling constant:")
    for c in broken.failures:
        print("  violated: %s at %s" % (c.name, c.witness))


if __name__ == "__main__":
    main()
