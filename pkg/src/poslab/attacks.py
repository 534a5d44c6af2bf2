"""Quantified attack analyses: confirmation bounds, takeover tail,
withholding DoS, timeweight aging, private streaks, and fork rates.

The confirmation calculators operate on the density assumption: in the
longest chain, every window of at least K potential blocks contains at
least rho*K produced blocks (rho > 1/2). A merchant who waits S
confirmations is safe from a bribe-funded double-spend of value V once the
fees the attacker must match exceed V.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional, Sequence

import numpy as np

from .rng import make_rng


def _as_fraction(x) -> Fraction:
    """Exact rational view of a parameter; floats go through their shortest
    decimal repr so 0.7 means 7/10."""
    if isinstance(x, float):
        return Fraction(str(x))
    return Fraction(x)


@dataclass(frozen=True)
class BribeScenario:
    v: float            # double-spend value, coins
    epsilon: float      # average fee per block, coins
    rho: float          # density assumption floor
    k: int              # density window, blocks
    delta: int          # missing blocks in the worst <=1/2-participation segment
    rho_prime: float    # observed density after the payment block
    s: int              # confirmations the merchant waits

    def __post_init__(self):
        if not 0 < self.rho_prime <= 1:
            raise ValueError("rho_prime must be in (0,1]")
        if not self.rho > 0.5:
            raise ValueError("density assumption requires rho > 1/2")


def min_safe_confirmations_observed(v, epsilon, rho_prime, delta) -> int:
    """Smallest S with V < epsilon*(rho_prime*S - delta + 1).

    Uses the observed chain: rho_prime is the post-payment density and delta
    the attacker's free head start from the worst pre-payment segment.
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    rp = _as_fraction(rho_prime)
    if not 0 < rp <= 1:
        raise ValueError("rho_prime must be in (0,1]")
    # V/eps < rp*S - delta + 1  <=>  S > (V/eps + delta - 1)/rp
    x = (_as_fraction(v) / _as_fraction(epsilon) + delta - 1) / rp
    s = math.floor(x) + 1
    return max(s, 0)


def min_safe_confirmations_observed_scan(v, epsilon, rho_prime, delta,
                                         limit: int = 10 ** 6) -> int:
    """Brute-force oracle for the closed form: linear scan over S."""
    rp = _as_fraction(rho_prime)
    ve = _as_fraction(v) / _as_fraction(epsilon)
    for s in range(limit):
        if ve < rp * s - delta + 1:
            return s
    raise ValueError("no S below the scan limit")


def min_safe_confirmations_density(v, epsilon, rho, k) -> int:
    """Smallest S with V < epsilon*(rho*S - K + 1), from the density
    assumption alone (no chain observation needed)."""
    r = _as_fraction(rho)
    if not r > Fraction(1, 2):
        raise ValueError("density assumption requires rho > 1/2")
    return min_safe_confirmations_observed(v, epsilon, r, k)


def confirmation_wait_seconds(s: int, g0: float) -> float:
    return s * g0


def measure_delta(produced: Sequence[bool]) -> int:
    """Attacker head start before the payment block: the largest number of
    missing blocks over all segments whose participation rate is <= 1/2."""
    n = len(produced)
    best = 0
    miss = np.cumsum([0] + [0 if b else 1 for b in produced])
    for i in range(n):
        for j in range(i + 1, n + 1):
            missing = int(miss[j] - miss[i])
            if 2 * missing >= j - i:  # participation <= 1/2
                best = max(best, missing)
    return best


# ---------------------------------------------------------------------------
# majority takeover
# ---------------------------------------------------------------------------

def takeover_q_hat(p: float, q: float) -> float:
    return 1.0 / ((1.0 - p) * (1.0 - q)) - 1.0


def takeover_log_bound(ell: int, p: float, q: float) -> float:
    """Natural-log exponent E of the takeover tail bound e^{-E}.

    p is the hostile stake fraction, q the fraction of honest stake offline;
    Y counts hostile slots among the (2+q_hat)*ell derivations needed to
    accumulate ell honest blocks.
    """
    if not 0 < p < 1 or not 0 <= q < 1:
        raise ValueError("require 0 < p < 1 and 0 <= q < 1")
    qh = takeover_q_hat(p, q)
    if (2 + qh) * p >= 1:
        raise ValueError("tail bound vacuous: (2+q_hat)*p >= 1")
    dev = 1.0 / ((2 + qh) * p) - 1.0
    return dev * dev * (2 + qh) * ell * p / 3.0


def takeover_tail_montecarlo(ell: int, p: float, q: float, trials: int,
                             seed: int = 0) -> dict:
    """Sample Y ~ Bin(round((2+q_hat)*ell), p) and compare Pr[Y > ell] with
    the analytic bound."""
    qh = takeover_q_hat(p, q)
    n = int(round((2 + qh) * ell))
    rng = make_rng(seed, "takeover", ell, p, q)
    exceed = 0
    done = 0
    while done < trials:
        m = min(trials - done, 10 ** 7)
        y = rng.binomial(n, p, size=m)
        exceed += int((y > ell).sum())
        done += m
    empirical = exceed / trials
    bound = math.exp(-takeover_log_bound(ell, p, q))
    return {"empirical": empirical, "bound": bound, "n_trials": trials,
            "violated": empirical > bound}


# ---------------------------------------------------------------------------
# bribe-funded double spend (decision-theoretic model)
# ---------------------------------------------------------------------------

def bribe_accepted(mu: float, f_loss: float, f_prime: float,
                   p_success: float) -> bool:
    """A rational stakeholder joins the attacker chain iff
    (mu + F')*P > F*(1-P)."""
    return (mu + f_prime) * p_success > f_loss * (1.0 - p_success)


def simulate_bribe_attack(scenario: BribeScenario, mu: float,
                          p_success: float, f_prime: float = 0.0,
                          free_collusion_bribe: float = 0.0,
                          seed: int = 0) -> dict:
    """Outcome of a bribe campaign over the S-block confirmation window.

    The attacker signs the skipped slots personally (their holders may demand
    `free_collusion_bribe`, worst case 0) and must bribe enough produced-slot
    winners to overtake the honest chain. Each winner weighs the offer mu
    plus any attacker-chain fee F' against the honest fee epsilon they forfeit
    (F = epsilon; chain binding keeps F' = 0 in CoA). Strategy space is the
    two-action model: extend honestly or join the attacker chain; nobody
    double-signs.
    """
    s = scenario.s
    rng = make_rng(seed, "bribe", s, mu, p_success)
    produced = rng.random(s) < scenario.rho_prime
    n_produced = int(produced.sum())
    free = (s - n_produced) + scenario.delta - 1
    needed = s + 1 - free  # attacker chain must strictly exceed S blocks
    accepts = bribe_accepted(mu, scenario.epsilon, f_prime, p_success)
    n_accepting = n_produced if accepts else 0
    success = free >= s + 1 or (accepts and n_accepting >= needed)
    cost = free_collusion_bribe * max(free, 0) \
        + (mu * max(needed, 0) if success and needed > 0 else 0.0)
    return {
        "success": success,
        "needed_bribed_blocks": max(needed, 0),
        "free_blocks": max(free, 0),
        "attacker_cost": cost,
        "attacker_profit": (scenario.v - cost) if success else -cost,
        "min_unprofitable_s": min_safe_confirmations_observed(
            scenario.v, scenario.epsilon, scenario.rho_prime, scenario.delta),
    }


# ---------------------------------------------------------------------------
# committee withholding DoS
# ---------------------------------------------------------------------------

def simulate_withholding_dos(ell: int, stake_fraction: float, g0: float,
                             n_blocks: int = 4000, seed: int = 0,
                             max_tips: int = 2, max_parents: int = 1) -> float:
    """Mean block interval (seconds) under a withholding stakeholder.

    Each G0 tick, every live committee completes independently with
    probability (1-f)^ell. Forks off the previous height can also become the
    longest chain, which is why the measured interval runs below the
    single-committee geometric value G0/(1-f)^ell. Node participation is
    bounded: at most `max_tips` tip committees and `max_parents` fallback
    committee at the parent height are serviced at once.
    """
    if n_blocks < 10 ** 3:
        raise ValueError("need at least 10^3 blocks for a stable estimate")
    s = (1.0 - stake_fraction) ** ell
    if s <= 0:
        raise ValueError("withholder controls every committee")
    rng = make_rng(seed, "dos", ell, stake_fraction)
    n, m = 1, 0  # committees racing at the tip height / at the parent height
    height, ticks = 0, 0
    while height < n_blocks:
        ticks += 1
        x = int(rng.binomial(n, s))
        y = int(rng.binomial(m, s)) if m else 0
        if x >= 1:
            height += 1
            m = min(n + y, max_parents)
            n = min(x, max_tips)
        else:
            n = min(n + y, max_tips)
            m = min(m, max_parents)
    return ticks * g0 / n_blocks


# ---------------------------------------------------------------------------
# timeweight aging attack
# ---------------------------------------------------------------------------

def timeweight_win_probability(stake_fraction: float,
                               wait_multiplier: float) -> float:
    """Closed-form next-block win probability for an attacker whose average
    timeweight is `wait_multiplier` times the network-wide average."""
    f, m = stake_fraction, wait_multiplier
    if m * f >= 1:
        return 1.0
    r = m * (1.0 - f) / (1.0 - m * f)  # attacker/honest timeweight ratio
    return f * r / (f * r + (1.0 - f))


def simulate_timeweight_attack(version: str, stake_fraction: float,
                               wait_multiplier: float, trials: int = 10 ** 5,
                               seed: int = 0, n_honest_outputs: int = 50,
                               base_age: float = 30 * 86400.0,
                               saturated: bool = False,
                               cap_seconds: float = 90 * 86400.0) -> float:
    """Empirical probability the attacker's aged outputs win the next block.

    Honest output ages are resampled each trial, uniform with mean
    `base_age`; the attacker waits until their average timeweight is
    `wait_multiplier` times the network-wide average (which includes the
    attacker's own stake). In the saturated v0.3 regime every output sits at
    the cap, so waiting moves nothing.
    """
    if version not in ("v0.2", "v0.3"):
        raise ValueError("unknown kernel version %r" % version)
    f = stake_fraction
    if not 0 < f < 1:
        raise ValueError("stake fraction must be in (0,1)")
    rng = make_rng(seed, "timeweight", version, f, wait_multiplier, saturated)
    if saturated:
        base_age = cap_seconds * 2.0
    ages = rng.uniform(0.2 * base_age, 1.8 * base_age,
                       size=(trials, n_honest_outputs))
    if version == "v0.3":
        honest_tw = np.minimum(ages, cap_seconds)
    else:
        honest_tw = ages
    mean_honest = float(honest_tw.mean())
    if wait_multiplier * f >= 1:
        attacker_tw = np.inf
    else:
        ratio = wait_multiplier * (1.0 - f) / (1.0 - wait_multiplier * f)
        attacker_tw = ratio * mean_honest
    if version == "v0.3":
        attacker_tw = min(attacker_tw, cap_seconds)
    # per-coin kernel weights; the winner of the next block is drawn
    # proportionally (the small-probability race limit)
    honest_weight = ((1.0 - f) / n_honest_outputs) * honest_tw.sum(axis=1)
    attacker_weight = f * attacker_tw
    wins = rng.random(trials) * (attacker_weight + honest_weight) < attacker_weight
    return float(wins.mean())


# ---------------------------------------------------------------------------
# private streaks (the M^k statistic)
# ---------------------------------------------------------------------------

def simulate_streak_interval(stake_fraction: float = 0.25, k: int = 6,
                             n_blocks: int = 4_000_000, seed: int = 0) -> dict:
    """Mean block gap between k-long attacker streaks.

    With many small outputs the attacker wins each block independently with
    probability 1/M, so a reorg opportunity (k consecutive wins, counted over
    all sliding windows) occurs at rate M^-k per block.
    """
    if not 0 < stake_fraction < 1:
        raise ValueError("stake fraction must be in (0,1)")
    rng = make_rng(seed, "streak", stake_fraction, k)
    wins = rng.random(n_blocks) < stake_fraction
    c = np.cumsum(np.concatenate(([0], wins.astype(np.int64))))
    full = (c[k:] - c[:-k]) == k
    count = int(full.sum())
    if count == 0:
        raise ValueError("no streaks observed; increase n_blocks")
    return {
        "mean_gap": n_blocks / count,
        "expected": (1.0 / stake_fraction) ** k,
        "streaks": count,
        "blocks": n_blocks,
    }


# ---------------------------------------------------------------------------
# fork-rate study
# ---------------------------------------------------------------------------

def fork_rate_study(seconds: int = 4 * 10 ** 8, n_outputs: int = 600,
                    target_rate: float = 1.0 / 600.0, seed: int = 0,
                    chunk: int = 2 * 10 ** 7) -> dict:
    """Simulate per-second solve counts and report both fork-interval
    conventions.

    Each second, each of n_outputs gets a Bernoulli trial with q calibrated
    so Pr[>= 1 solve] = target_rate. Pairwise convention: mean seconds per
    ordered solver pair, sum k(k-1); expected ~ 1/rate^2 = 360000 s at the
    10-minute target. Multi-solve convention: mean seconds between seconds
    with >= 2 solves; expected ~ 2/rate^2 = 720000 s.
    """
    q = 1.0 - (1.0 - target_rate) ** (1.0 / n_outputs)
    rng = make_rng(seed, "forks", n_outputs, seconds)
    pair_events = 0
    multi_seconds = 0
    done = 0
    while done < seconds:
        m = min(chunk, seconds - done)
        k = rng.binomial(n_outputs, q, size=m)
        pair_events += int((k * (k - 1)).sum())
        multi_seconds += int((k >= 2).sum())
        done += m
    return {
        "seconds": seconds,
        "pairwise_interval": seconds / pair_events if pair_events else math.inf,
        "multi_solve_interval": seconds / multi_seconds if multi_seconds else math.inf,
        "pair_events": pair_events,
        "multi_solve_seconds": multi_seconds,
    }
