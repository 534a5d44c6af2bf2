"""Bundled scenarios and the reproduction registry.

Scenarios are small, fast configurations exercising every protocol engine;
reproductions are the quantitative results with their expected values and
tolerances, runnable from the CLI or the test suite.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Dict, List

from . import attacks, comb, issuance
from .netsim import ScenarioConfig, config_from_dict


def _split_stake(kappa: int, names: List[str], weights: List[int]) -> list:
    """Integer stake allocation summing to exactly 2^kappa."""
    total = 1 << kappa
    wsum = sum(weights)
    amounts = [total * w // wsum for w in weights]
    amounts[0] += total - sum(amounts)
    return [[n, a] for n, a in zip(names, amounts)]


def _coa(name, kappa=12, w=1, comb_kind="concat", g0=300, slots=12, t0=8,
         holders=5, weights=None, behaviors=None, seed=7, drift=2.0):
    names = ["s%d" % i for i in range(holders)]
    weights = weights or [1] * holders
    return {
        "name": name, "protocol": "coa",
        "params": {"kappa": kappa, "w": w, "comb": comb_kind,
                   "g0_seconds": g0, "t0": t0},
        "stake": _split_stake(kappa, names, weights),
        "behaviors": behaviors or {},
        "delays": {"min": 0.2, "max": 2.0, "distribution": "uniform"},
        "clock_drift_max": drift,
        "duration": {"slots": slots},
        "seed": seed,
    }


def _analysis(name, kind, params, seed=7, kappa=10):
    return {
        "name": name, "protocol": "coa",
        "params": {"kappa": kappa},
        "stake": _split_stake(kappa, ["s0", "s1"], [1, 1]),
        "duration": {"slots": 1},
        "seed": seed,
        "attack": {"kind": kind, "params": params},
    }


_RAW_SCENARIOS = [
    _coa("coa-baseline"),
    _coa("coa-majority", kappa=4, w=3, comb_kind="majority", slots=14, seed=11),
    _coa("coa-iterated", kappa=3, w=3, comb_kind="iterated_majority",
         slots=11, seed=13),
    _coa("coa-offline", behaviors={"s4": {"strategy": "offline"}}, seed=17),
    _coa("coa-fast", g0=60, slots=20, seed=19),
    _coa("coa-skewed", weights=[8, 4, 2, 1, 1], seed=23),
    _coa("coa-nodrift", drift=0.0, seed=29),
    {
        "name": "ppcoin-honest", "protocol": "ppcoin",
        "params": {"kappa": 12, "target_interval": 30},
        "stake": _split_stake(12, ["a", "b", "c", "d"], [1, 1, 1, 1]),
        "duration": {"seconds": 60000}, "seed": 31,
    },
    {
        "name": "ppcoin-multifork", "protocol": "ppcoin",
        "params": {"kappa": 12, "target_interval": 30},
        "stake": _split_stake(12, ["a", "b", "c", "d"], [1, 1, 1, 1]),
        "behaviors": {n: {"strategy": "ppcoin-multifork"}
                      for n in ("a", "b", "c", "d")},
        "duration": {"seconds": 60000}, "seed": 31,
    },
    {
        "name": "dense-baseline", "protocol": "dense_coa",
        "params": {"kappa": 12, "ell": 5, "g0_seconds": 300},
        "stake": _split_stake(12, ["a", "b", "c", "d"], [1, 1, 1, 1]),
        "duration": {"slots": 30}, "seed": 37,
    },
    {
        "name": "dense-withhold", "protocol": "dense_coa",
        "params": {"kappa": 12, "ell": 5, "g0_seconds": 300},
        "stake": _split_stake(12, ["a", "b", "c", "d"], [9, 1, 1, 1]),
        "behaviors": {"d": {"strategy": "withhold"}},
        "duration": {"slots": 30}, "seed": 37,
    },
    _analysis("claim1", "claim1",
              {"v": 100, "epsilon": 10, "rho_prime": 0.7, "delta": 20}),
    _analysis("claim2", "claim2",
              {"v": 100, "epsilon": 10, "rho": 0.7, "k": 20,
               "g0_seconds": 300}),
    _analysis("takeover", "takeover", {"ell": 459, "p": 0.1, "q": 0.2}),
    _analysis("dense-dos", "dense-dos",
              {"ell": 23, "f": 0.1, "g0_seconds": 300, "blocks": 1000}),
    _analysis("ppcoin-mk", "ppcoin-mk",
              {"stake": 0.25, "k": 6, "blocks": 400000}),
    _analysis("fork-rate", "fork-rate", {"seconds": 10 ** 7}),
    _analysis("timeweight-v02", "timeweight",
              {"version": "v0.2", "stake": 0.1, "multiplier": 5.0,
               "trials": 20000}),
    _analysis("timeweight-v03-saturated", "timeweight",
              {"version": "v0.3", "stake": 0.1, "multiplier": 5.0,
               "trials": 20000, "saturated": True}),
    _analysis("bribe-underfunded", "bribe",
              {"v": 100, "epsilon": 10, "rho": 0.7, "k": 20, "delta": 19,
               "rho_prime": 0.7, "s": 42, "mu": 5.0, "p_success": 0.5}),
    _analysis("mu-concat", "mu",
              {"comb": "concat", "kappa": 8, "p": 0.05, "trials": 50000}),
    _analysis("kz-bounds", "kz-bounds",
              {"ell": 459, "kappa": 51, "epsilon": 0.1}),
    _analysis("issuance-equilibrium", "issuance",
              {"cost": 1.0, "demand": 10 ** 6, "difficulty": 2e-6,
               "steps": 800}),
]

SCENARIOS: Dict[str, ScenarioConfig] = {
    raw["name"]: config_from_dict(raw) for raw in _RAW_SCENARIOS
}


def scenario_names() -> List[str]:
    return list(SCENARIOS)


def get_scenario(name: str) -> ScenarioConfig:
    if name not in SCENARIOS:
        raise KeyError("unknown scenario %r (see list-scenarios)" % name)
    return SCENARIOS[name]


# ---------------------------------------------------------------------------
# reproductions
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ReproResult:
    repro_id: str
    expected: str
    computed: str
    tolerance: str
    passed: bool

    def row(self) -> list:
        return [self.repro_id, self.expected, self.computed, self.tolerance,
                "pass" if self.passed else "FAIL"]


def _repro_claim1(seed: int) -> ReproResult:
    # delta = K reproduces the density-assumption instance exactly
    s = attacks.min_safe_confirmations_observed(100, 10, 0.7, 20)
    return ReproResult("claim1", "S=42", "S=%d" % s, "exact", s == 42)


def _repro_claim2(seed: int) -> ReproResult:
    s = attacks.min_safe_confirmations_density(100, 10, 0.7, 20)
    wait_h = attacks.confirmation_wait_seconds(s, 300) / 3600.0
    ok = s == 42 and abs(wait_h - 3.5) < 1e-9
    return ReproResult("claim2", "S=42, 3.5 h",
                       "S=%d, %.2f h" % (s, wait_h), "exact", ok)


def _repro_takeover(seed: int) -> ReproResult:
    e = attacks.takeover_log_bound(459, 0.1, 0.2)
    return ReproResult("takeover", "exponent 371", "%.2f" % e, "±1",
                       abs(e - 371) <= 1.0)


def _repro_dense_dos(seed: int) -> ReproResult:
    mean_min = attacks.simulate_withholding_dos(23, 0.1, 300.0, 4000,
                                                seed) / 60.0
    ok = 40.0 <= mean_min <= 56.4
    return ReproResult("dense-dos", "below 56.4 min (forks pull it under 56)",
                       "%.1f min" % mean_min, "[40, 56.4] min", ok)


def _repro_ppcoin_mk(seed: int) -> ReproResult:
    out = attacks.simulate_streak_interval(0.25, 6, 4_000_000, seed)
    gap = out["mean_gap"]
    ok = abs(gap - 4096) / 4096 <= 0.15
    return ReproResult("ppcoin-mk", "4096 blocks", "%.0f" % gap, "±15%", ok)


def _repro_fork_rate(seed: int) -> ReproResult:
    out = attacks.fork_rate_study(4 * 10 ** 8, seed=seed)
    pw, ms = out["pairwise_interval"], out["multi_solve_interval"]
    ok = abs(pw - 360000) / 360000 <= 0.2 and abs(ms - 720000) / 720000 <= 0.2
    return ReproResult("fork-rate", "360000 s pairwise / 720000 s multi-solve",
                       "%.0f / %.0f s" % (pw, ms), "±20%", ok)


def _repro_mu_concat(seed: int) -> ReproResult:
    rows = []
    ok = True
    for p in (0.02, 0.05, 0.1):
        spec = comb.CombSpec("concat", 8, 1)
        mu, stderr = comb.last_player_advantage(spec, p, 10 ** 5, seed)
        want = 2 * p - p * p
        ok = ok and abs(mu - want) <= 3 * stderr
        rows.append("p=%.2f: %.4f~%.4f" % (p, mu, want))
    return ReproResult("mu-concat", "2p-p^2", "; ".join(rows), "3σ", ok)


def _repro_mu_majority(seed: int) -> ReproResult:
    tie = comb.undetermined_fraction(comb.CombSpec("majority", 1, 9))
    want = 70 / 256
    return ReproResult("mu-majority", "tie 70/256", "%.6f" % tie, "exact",
                       tie == want)


def _repro_kz_bounds(seed: int) -> ReproResult:
    eps = 0.1
    lo, hi = comb.coalition_bounds(459, 51, eps)
    ok = abs(lo - 2 * eps) < 1e-9 and abs(hi - 91.8 * eps) < 1e-9
    return ReproResult("kz-bounds", "achievable 2ε, upper 91.8ε",
                       "%.3f, %.3f (ε=%.1f)" % (lo, hi, eps), "exact", ok)


def _repro_issuance(seed: int) -> ReproResult:
    params = issuance.IssuanceParams(
        production_cost_per_coin=1.0,
        demand_value_fn=issuance.constant_demand(10 ** 6),
        fixed_difficulty=2e-6)
    out = issuance.simulate_issuance(params, 800, seed)
    value = out["value"][400:]
    rel = float(abs(value - 1.0).max())
    return ReproResult("issuance", "value converges to cost",
                       "max |value-cost|/cost = %.3f" % rel, "< 0.1", rel < 0.1)


REPRODUCTIONS: Dict[str, Callable[[int], ReproResult]] = {
    "claim1": _repro_claim1,
    "claim2": _repro_claim2,
    "takeover": _repro_takeover,
    "dense-dos": _repro_dense_dos,
    "ppcoin-mk": _repro_ppcoin_mk,
    "fork-rate": _repro_fork_rate,
    "mu-concat": _repro_mu_concat,
    "mu-majority": _repro_mu_majority,
    "kz-bounds": _repro_kz_bounds,
    "issuance": _repro_issuance,
}


def run_reproduction(repro_id: str, seed: int = 0) -> ReproResult:
    if repro_id not in REPRODUCTIONS:
        raise KeyError("unknown reproduction id %r" % repro_id)
    return REPRODUCTIONS[repro_id](seed)
