"""Classical simulation of one key-distillation session and of batches.

The channel is a binary symmetric channel: each of the ``n + l`` bits is
flipped independently with probability ``qber``. The first ``n`` positions
form the sifted key and the last ``l`` the sample. Error correction is an
oracle that repairs Bob's key and is charged ``ceil(n f h(p_bit))`` bits.

``adversarial_session`` replaces the i.i.d. flips by exactly ``k`` errors
placed uniformly at random, so that the sample count ``c`` is exactly
hypergeometric. This is the regime in which the interval estimate is
supposed to fail with probability at most ``eps``.

Each trial draws from its own Philox stream keyed by ``(seed, trial)``, so
any single trial can be replayed in isolation.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from .estimation import ProtocolParams, ec_leakage, p_hat_sft, sacrifice_bits
from .mathcore import DomainError
from .privacy_amp import apply_hash, build_hash, philox_generator, verification_tag

__all__ = [
    "SessionConfig",
    "DistillationRecord",
    "BatchSummary",
    "run_session",
    "adversarial_session",
    "run_batch",
    "run_adversarial_batch",
    "records_to_csv",
]

_ADVERSARIAL_STREAM_BIT = 1 << 63


@dataclass(frozen=True)
class SessionConfig:
    """Inputs of a simulated session or batch.

    ``distill`` controls whether bit strings are materialized and hashed;
    switching it off keeps every count identical and skips the bit work.
    """

    params: ProtocolParams
    qber: float
    seed: int = 0
    trials: int = 1
    distill: bool = True

    def __post_init__(self):
        if not 0 <= self.qber < 0.5:
            raise DomainError("qber must lie in [0, 1/2)")
        if self.trials < 1:
            raise DomainError("trials must be at least 1")


@dataclass
class DistillationRecord:
    """Outcome of one session; ``k_true`` is simulator-only ground truth."""

    trial: int
    c: int
    k_true: int
    p_bit: float
    aborted: bool
    alpha: int
    ec_bits: int
    G: int
    estimation_violated: bool
    keys_agree: bool | None = None
    final_key: np.ndarray | None = None
    hash_digest: str = ""


@dataclass
class BatchSummary:
    """Aggregate statistics of a batch of sessions."""

    trials: int
    eps: float
    abort_rate: float
    violation_rate: float
    violation_threshold: float
    mean_G: float
    key_agreement_rate: float | None
    mean_sample_rate: float
    k: int | None = None
    records: list = field(default_factory=list, repr=False)

    def to_dict(self):
        d = {
            "trials": self.trials,
            "eps": self.eps,
            "abort_rate": self.abort_rate,
            "violation_rate": self.violation_rate,
            "violation_threshold": self.violation_threshold,
            "violation_within_threshold": self.violation_rate <= self.violation_threshold,
            "mean_G": self.mean_G,
            "key_agreement_rate": self.key_agreement_rate,
            "mean_sample_rate": self.mean_sample_rate,
        }
        if self.k is not None:
            d["k"] = self.k
        return d


def _violated(params, k, c):
    # The estimate fails when the key-bit error rate exceeds its upper limit.
    return (k - c) / params.n > p_hat_sft(params, c)


def _finish(cfg, gen, trial, key_errors, c):
    params = cfg.params
    n, l = params.n, params.l
    k = key_errors + c
    p_bit = key_errors / n
    violated = bool(_violated(params, k, c))
    if c > params.c_max:
        return DistillationRecord(trial=trial, c=c, k_true=k, p_bit=p_bit, aborted=True,
                                  alpha=0, ec_bits=0, G=0, estimation_violated=violated)
    alpha = sacrifice_bits(params, c)
    leak = ec_leakage(n, params.f, p_bit)
    G = max(n - leak - alpha, 0)
    rec = DistillationRecord(trial=trial, c=c, k_true=k, p_bit=p_bit, aborted=False,
                             alpha=alpha, ec_bits=leak, G=G, estimation_violated=violated)
    if not cfg.distill:
        return rec
    alice = (gen.bit_generator.random_raw(-(-n // 64)).astype("<u8")
             .view(np.uint8))
    alice = np.unpackbits(alice, bitorder="little")[:n].copy()
    pattern = np.zeros(n, dtype=np.uint8)
    if key_errors:
        pattern[gen.choice(n, size=key_errors, replace=False)] = 1
    bob = alice ^ pattern
    # Oracle error correction: the decoder recovers the error pattern exactly.
    bob_rec = bob ^ pattern
    hash_seed = int(gen.integers(0, 2**63))
    if params.r > 0:
        r = min(params.r, n)
        tag_spec = build_hash(n, r, hash_seed, stream=1)
        rec.keys_agree = bool(np.array_equal(verification_tag(alice, tag_spec),
                                             verification_tag(bob_rec, tag_spec)))
    else:
        rec.keys_agree = bool(np.array_equal(alice, bob_rec))
    if G > 0:
        spec = build_hash(n, G, hash_seed, stream=0)
        ka = apply_hash(spec, alice)
        kb = apply_hash(spec, bob_rec)
        rec.keys_agree = rec.keys_agree and bool(np.array_equal(ka, kb))
        rec.final_key = ka
        rec.hash_digest = spec.digest()
    else:
        rec.final_key = np.zeros(0, dtype=np.uint8)
    return rec


def run_session(cfg, trial=0):
    """Simulate one session over the binary symmetric channel.

    The sample count ``c`` and the key error count are independent binomials;
    when ``cfg.distill`` is set the bit strings are then drawn with exactly
    those error counts, hashed and compared.
    """
    params = cfg.params
    gen = philox_generator(cfg.seed, trial)
    c = int(gen.binomial(params.l, cfg.qber))
    key_errors = int(gen.binomial(params.n, cfg.qber))
    return _finish(cfg, gen, trial, key_errors, c)


def adversarial_session(cfg, k, trial=0):
    """Session with exactly ``k`` errors placed uniformly among ``n + l`` bits.

    ``c`` is drawn from the hypergeometric law (errors landing in the
    ``l`` sample positions) and the remaining ``k - c`` errors fall in the key.
    """
    params = cfg.params
    n, l = params.n, params.l
    if int(k) != k or not 0 <= k <= n + l:
        raise DomainError("need integer 0 <= k <= n + l")
    k = int(k)
    gen = philox_generator(cfg.seed, _ADVERSARIAL_STREAM_BIT | trial)
    c = int(gen.hypergeometric(l, n, k)) if k else 0
    return _finish(cfg, gen, trial, k - c, c)


def _summarize(cfg, records, k=None, keep=False):
    trials = len(records)
    eps = cfg.params.eps
    aborts = sum(r.aborted for r in records)
    viol = sum(r.estimation_violated for r in records)
    kept = [r for r in records if not r.aborted]
    agree = [r.keys_agree for r in kept if r.keys_agree is not None]
    return BatchSummary(
        trials=trials,
        eps=eps,
        abort_rate=aborts / trials,
        violation_rate=viol / trials,
        violation_threshold=eps + 3 * math.sqrt(eps * (1 - eps) / trials),
        mean_G=float(np.mean([r.G for r in kept])) if kept else 0.0,
        key_agreement_rate=(sum(agree) / len(agree)) if agree else None,
        mean_sample_rate=float(np.mean([r.c for r in records])) / cfg.params.l,
        k=k,
        records=records if keep else [],
    )


def run_batch(cfg, keep_records=False):
    """Run ``cfg.trials`` i.i.d.-channel sessions and aggregate them."""
    records = [run_session(cfg, t) for t in range(cfg.trials)]
    return _summarize(cfg, records, keep=keep_records)


def run_adversarial_batch(cfg, k, keep_records=False):
    """Run ``cfg.trials`` fixed-``k`` sessions and aggregate them."""
    records = [adversarial_session(cfg, k, t) for t in range(cfg.trials)]
    return _summarize(cfg, records, k=int(k), keep=keep_records)


def records_to_csv(records):
    """Per-trial CSV with columns ``trial,c,p_bit,aborted,alpha,G,violated``."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["trial", "c", "p_bit", "aborted", "alpha", "G", "violated"])
    for r in records:
        w.writerow([r.trial, r.c, format(r.p_bit, ".17e"), int(r.aborted), r.alpha, r.G,
                    int(r.estimation_violated)])
    return buf.getvalue()
