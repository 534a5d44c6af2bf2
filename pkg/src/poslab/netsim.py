"""Deterministic discrete-event network simulator.

One scenario = one single-threaded event loop. All randomness flows from the
scenario seed through labeled substreams, and queue ties at equal timestamps
are broken by (sender rank, sequence number), so a (config, seed) pair fully
determines the trace. Strategies are looked up in a registry by id; a
behavior is instantiated per node from the config.
"""

from __future__ import annotations

import csv
import hashlib
import heapq
import io
import json
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Tuple

from . import attacks, dense, issuance, ppcoin
from .coa import ACCEPT, CoaNode, CoaParams, make_genesis, min_timestamp
from .ledger import Block, canonical_block_digest
from .rng import make_rng

PROTOCOLS = ("coa", "dense_coa", "ppcoin")


class ConfigError(ValueError):
    def __init__(self, fieldname: str, message: str):
        super().__init__("%s: %s" % (fieldname, message))
        self.fieldname = fieldname


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DelayModel:
    min_seconds: float = 0.2
    max_seconds: float = 2.0
    distribution: str = "uniform"

    @property
    def mean_seconds(self) -> float:
        return (self.min_seconds + self.max_seconds) / 2.0

    def sample(self, rng) -> float:
        if self.distribution == "uniform":
            return float(rng.uniform(self.min_seconds, self.max_seconds))
        raise ConfigError("delays.distribution",
                          "unknown distribution %r" % self.distribution)


@dataclass(frozen=True)
class ScenarioConfig:
    name: str
    protocol: str
    params: dict                       # kappa, w, comb, g0_seconds, c0, c1, t0...
    stake: Tuple[Tuple[str, int], ...]
    behaviors: dict = field(default_factory=dict)   # stakeholder -> {strategy, params}
    delays: DelayModel = DelayModel()
    clock_drift_max: float = 2.0
    duration: dict = field(default_factory=lambda: {"slots": 50})
    seed: int = 0
    attack: Optional[dict] = None      # analysis scenarios: {kind, params}

    def to_dict(self) -> dict:
        return {
            "name": self.name, "protocol": self.protocol,
            "params": dict(self.params),
            "stake": [[s, int(a)] for s, a in self.stake],
            "behaviors": self.behaviors,
            "delays": {"min": self.delays.min_seconds,
                       "max": self.delays.max_seconds,
                       "distribution": self.delays.distribution},
            "clock_drift_max": self.clock_drift_max,
            "duration": self.duration, "seed": self.seed,
            "attack": self.attack,
        }


def config_from_dict(raw: dict, name: str = "scenario") -> ScenarioConfig:
    """Validate a parsed config; raises ConfigError naming the bad field."""
    if not isinstance(raw, dict):
        raise ConfigError("<root>", "config must be an object")
    protocol = raw.get("protocol")
    if protocol not in PROTOCOLS:
        raise ConfigError("protocol", "must be one of %s, got %r"
                          % ("/".join(PROTOCOLS), protocol))
    params = raw.get("params", {})
    if not isinstance(params, dict):
        raise ConfigError("params", "must be an object")
    kappa = params.get("kappa")
    if not isinstance(kappa, int) or not 1 <= kappa <= 64:
        raise ConfigError("params.kappa", "must be an integer in [1, 64]")
    stake_raw = raw.get("stake")
    if not isinstance(stake_raw, list) or not stake_raw:
        raise ConfigError("stake", "must be a non-empty list of [name, satoshis]")
    stake = []
    for pos, entry in enumerate(stake_raw):
        if (not isinstance(entry, (list, tuple)) or len(entry) != 2
                or not isinstance(entry[0], str)
                or not isinstance(entry[1], int) or entry[1] <= 0):
            raise ConfigError("stake[%d]" % pos,
                              "expected [name, positive satoshi count], got %r"
                              % (entry,))
        stake.append((entry[0], entry[1]))
    total = sum(a for _s, a in stake)
    if total != 1 << kappa:
        raise ConfigError("stake", "allocation sums to %d, must equal 2^kappa = %d"
                          % (total, 1 << kappa))
    behaviors = raw.get("behaviors", {})
    if not isinstance(behaviors, dict):
        raise ConfigError("behaviors", "must map stakeholder to strategy")
    names = {s for s, _a in stake}
    for who, spec in behaviors.items():
        if who not in names:
            raise ConfigError("behaviors.%s" % who, "unknown stakeholder")
        sid = spec.get("strategy") if isinstance(spec, dict) else None
        if sid not in STRATEGIES:
            raise ConfigError("behaviors.%s.strategy" % who,
                              "unknown strategy %r" % sid)
    d = raw.get("delays", {})
    delays = DelayModel(d.get("min", 0.2), d.get("max", 2.0),
                        d.get("distribution", "uniform"))
    if delays.min_seconds < 0 or delays.max_seconds < delays.min_seconds:
        raise ConfigError("delays", "require 0 <= min <= max")
    duration = raw.get("duration", {"slots": 50})
    if not isinstance(duration, dict) or \
            not ({"slots", "seconds"} & set(duration)):
        raise ConfigError("duration", "must contain 'slots' or 'seconds'")
    seed = raw.get("seed", 0)
    if not isinstance(seed, int):
        raise ConfigError("seed", "must be an integer")
    return ScenarioConfig(
        name=raw.get("name", name), protocol=protocol, params=params,
        stake=tuple(stake), behaviors=behaviors, delays=delays,
        clock_drift_max=float(raw.get("clock_drift_max", 2.0)),
        duration=duration, seed=seed, attack=raw.get("attack"))


def load_config(path: str) -> ScenarioConfig:
    with open(path) as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError("<file>", "not valid JSON: %s" % exc)
    return config_from_dict(raw, name=path)


# ---------------------------------------------------------------------------
# strategies
# ---------------------------------------------------------------------------

STRATEGIES: Dict[str, Callable] = {}


def register_strategy(strategy_id: str, factory: Callable):
    if strategy_id in STRATEGIES:
        raise ValueError("strategy id %r already registered" % strategy_id)
    STRATEGIES[strategy_id] = factory


@dataclass
class Behavior:
    strategy: str
    params: dict

    @property
    def creates_blocks(self) -> bool:
        return self.strategy not in ("offline", "withhold")

    @property
    def forks_all_tips(self) -> bool:
        return self.strategy == "ppcoin-multifork"


def _behavior_factory(strategy_id: str):
    return lambda params: Behavior(strategy_id, params or {})


for _sid in ("honest", "offline", "withhold", "ppcoin-multifork",
             "bribe-acceptor"):
    register_strategy(_sid, _behavior_factory(_sid))


def behavior_for(config: ScenarioConfig, stakeholder: str) -> Behavior:
    spec = config.behaviors.get(stakeholder)
    if spec is None:
        return STRATEGIES["honest"]({})
    return STRATEGIES[spec["strategy"]](spec.get("params"))


# ---------------------------------------------------------------------------
# trace
# ---------------------------------------------------------------------------

@dataclass
class SimTrace:
    config: ScenarioConfig
    events: List[dict]
    metrics: Dict[str, object]
    final_chains: Dict[str, list] = field(default_factory=dict)

    def digest(self) -> str:
        payload = json.dumps({"events": self.events, "metrics": self.metrics,
                              "chains": self.final_chains},
                             sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(payload.encode()).hexdigest()

    def events_jsonl(self) -> str:
        return "\n".join(json.dumps(e, sort_keys=True) for e in self.events) + "\n"

    def metrics_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf)
        keys = sorted(self.metrics)
        writer.writerow(keys)
        writer.writerow([self.metrics[k] for k in keys])
        return buf.getvalue()


# ---------------------------------------------------------------------------
# CoA event loop
# ---------------------------------------------------------------------------

def _coa_params(config: ScenarioConfig) -> CoaParams:
    p = config.params
    return CoaParams(
        kappa=p["kappa"], w=p.get("w", 1), comb_kind=p.get("comb", "concat"),
        g0=p.get("g0_seconds", 300), c0=p.get("c0", 0), c1=p.get("c1", 0),
        t0=p.get("t0", 8),
        timestamp_leniency=p.get("timestamp_leniency", 120))


def _run_coa(config: ScenarioConfig) -> SimTrace:
    params = _coa_params(config)
    genesis, ledger0 = make_genesis(params, list(config.stake))
    rng_delay = make_rng(config.seed, "delay")
    events: List[dict] = []
    rank = {name: i for i, (name, _a) in enumerate(config.stake)}

    def observer_for(name):
        def observe(kind, payload):
            if kind in ("confiscation", "blacklist", "solidification",
                        "block-rejected"):
                events.append(dict(payload, event=kind, node=name))
        return observe

    nodes = {}
    drifts = {}
    behaviors = {}
    for i, (name, _amount) in enumerate(config.stake):
        nodes[name] = CoaNode(params, genesis, ledger0, node_id=name,
                              observer=observer_for(name))
        drift_rng = make_rng(config.seed, "drift", name)
        drifts[name] = float(drift_rng.uniform(-config.clock_drift_max,
                                               config.clock_drift_max))
        behaviors[name] = behavior_for(config, name)

    target_blocks = config.duration.get("slots", 50)
    time_limit = config.duration.get(
        "seconds", (target_blocks + 2) * params.g0 * 20)
    queue: list = []
    seq = [0]
    scheduled = set()
    reorgs = {name: 0 for name in nodes}
    accepted_total = [0]

    def push(when, sender, kind, payload):
        heapq.heappush(queue, (when, rank.get(sender, -1), seq[0], kind, payload))
        seq[0] += 1

    def schedule_creations(name, now):
        node = nodes[name]
        if not behaviors[name].creates_blocks:
            return
        view = node.best_view
        lookahead = view.slot_candidates(10)
        for index, _z, owner, _uid in lookahead:
            if owner != name or (name, index) in scheduled:
                continue
            local_min = min_timestamp(view.last_timestamp, index,
                                      view.last_index, params.g0)
            when = max(now, local_min - drifts[name])
            scheduled.add((name, index))
            push(when, name, "create", {"node": name, "index": index})

    for name in nodes:
        schedule_creations(name, 0.0)

    best_height = 0
    while queue:
        when, _rank, _seq, kind, payload = heapq.heappop(queue)
        if when > time_limit or best_height >= target_blocks:
            break
        if kind == "create":
            name = payload["node"]
            scheduled.discard((name, payload["index"]))
            node = nodes[name]
            view = node.best_view
            index = payload["index"]
            gap = index - view.last_index
            if gap < 1:
                continue
            cands = view.slot_candidates(gap)
            if cands[-1][2] != name:
                continue
            local_now = when + drifts[name]
            ts = max(int(local_now),
                     min_timestamp(view.last_timestamp, index,
                                   view.last_index, params.g0))
            block = Block(index=index, prev_digest=view.last_digest,
                          timestamp=ts, creator=name).signed_by()
            push(when, name, "deliver", {"dst": name, "block": block,
                                         "src": name})
            for other in nodes:
                if other != name:
                    push(when + config.delays.sample(rng_delay), name,
                         "deliver", {"dst": other, "block": block, "src": name})
            events.append({"event": "send", "time": round(when, 6),
                           "node": name, "index": index})
        elif kind == "deliver":
            name = payload["dst"]
            node = nodes[name]
            before = node.best_tip
            ok, reason = node.receive_block(payload["block"],
                                            int(when + drifts[name]) + 1)
            if ok and reason == ACCEPT:
                accepted_total[0] += 1
                after = node.best_tip
                if after != before and not node.tree.is_ancestor(before, after):
                    reorgs[name] += 1
                    events.append({"event": "reorg", "time": round(when, 6),
                                   "node": name})
                events.append({"event": "block-accept", "time": round(when, 6),
                               "node": name, "index": payload["block"].index,
                               "creator": payload["block"].creator})
                best_height = max(best_height,
                                  node.tree.height[node.best_tip])
                schedule_creations(name, when)

    # metrics off an arbitrary (deterministic) reference node
    ref = nodes[config.stake[0][0]]
    chain = [ref.tree.blocks[d] for d in ref.tree.path(ref.best_tip)]
    timestamps = [b.timestamp for b in chain]
    intervals = [b - a for a, b in zip(timestamps, timestamps[1:])]
    total_supply = 1 << config.params["kappa"]
    conservation_ok = all(
        n.best_view.ledger.live_total + n.best_view.ledger.destroyed
        == total_supply for n in nodes.values())
    per_creator: Dict[str, int] = {}
    for b in chain[1:]:
        per_creator[b.creator] = per_creator.get(b.creator, 0) + 1
    metrics = {
        "protocol": "coa",
        "blocks": len(chain) - 1,
        "mean_interval": (sum(intervals) / len(intervals)) if intervals else 0.0,
        "reorgs": sum(reorgs.values()),
        "fork_blocks": len(ref.tree.blocks) - len(chain),
        "conservation_ok": conservation_ok,
        "solidified_height": ref.solidified_height,
    }
    for who, n in sorted(per_creator.items()):
        metrics["blocks_by_%s" % who] = n
    chains = {name: [d.hex()[:16] for d in n.tree.path(n.best_tip)]
              for name, n in nodes.items()}
    return SimTrace(config, events, metrics, chains)


# ---------------------------------------------------------------------------
# PPCoin per-second lottery
# ---------------------------------------------------------------------------

def _run_ppcoin(config: ScenarioConfig) -> SimTrace:
    total = 1 << config.params["kappa"]
    target = config.params.get("target_interval", 600)
    seconds = config.duration.get("seconds", 60_000)
    max_tips = config.params.get("max_tips", 6)
    rng = make_rng(config.seed, "ppcoin-run")
    events: List[dict] = []
    # per-stakeholder solve probability per second per tip, calibrated so the
    # whole network solves at 1/target when everyone works a single tip
    probs = {}
    for name, amount in config.stake:
        probs[name] = (amount / total) / target
    behaviors = {name: behavior_for(config, name) for name, _a in config.stake}

    tips = [0]          # heights of the live tips
    blocks = 0
    fork_blocks = 0
    tip_count_sum = 0
    for t in range(seconds):
        tip_count_sum += len(tips)
        best = max(tips)
        solves = []   # (tip position, stakeholder)
        for name, _amount in config.stake:
            if behaviors[name].forks_all_tips:
                work_on = range(len(tips))
            else:
                work_on = [tips.index(best)]
            for tip_idx in work_on:
                if rng.random() < probs[name]:
                    solves.append((tip_idx, name))
        base = list(tips)
        for tip_idx, name in solves:
            h = base[tip_idx] + 1
            if h > max(tips):
                tips[tip_idx] = h
                blocks += 1
                events.append({"event": "block-accept", "time": t,
                               "node": name, "height": h})
            else:
                # a second solve at the same height: the network diverges
                fork_blocks += 1
                events.append({"event": "fork", "time": t, "node": name,
                               "height": h})
                if len(tips) < max_tips:
                    tips.append(h)
        best = max(tips)
        tips = sorted((h for h in tips if h >= best - 2),
                      reverse=True)[:max_tips]
    metrics = {
        "protocol": "ppcoin",
        "blocks": blocks + fork_blocks,
        "canonical_blocks": blocks,
        "fork_blocks": fork_blocks,
        "divergence": tip_count_sum / seconds,
        "mean_interval": seconds / max(1, blocks + fork_blocks),
    }
    return SimTrace(config, events[:2000], metrics, {"tips": [max(tips)]})


# ---------------------------------------------------------------------------
# Dense-CoA committee rounds
# ---------------------------------------------------------------------------

def _run_dense(config: ScenarioConfig) -> SimTrace:
    from .ledger import LedgerState
    p = config.params
    kappa, ell = p["kappa"], p.get("ell", 7)
    g0 = p.get("g0_seconds", 300)
    ledger = LedgerState.from_allocation(list(config.stake))
    behaviors = {name: behavior_for(config, name) for name, _a in config.stake}
    rng = make_rng(config.seed, "dense-run")
    seed_val = int(make_rng(config.seed, "dense-seed").integers(0, 1 << kappa))
    blocks = config.duration.get("slots", 30)
    events: List[dict] = []
    now = 0.0
    fallbacks = 0
    intervals = []
    for i in range(1, blocks + 1):
        t = 0
        start = now
        while True:
            members = dense.derive_committee(seed_val, i, t, ledger, ell, kappa)
            withholds = any(not behaviors[owner].creates_blocks
                            for owner, _uid in members)
            round_time = config.delays.sample(rng) * 2
            if not withholds:
                committee = dense.CommitteeRound(i, t, members)
                secrets = {}
                for j in range(ell):
                    secret, commitment = dense.round1_commit(rng)
                    committee.add_commit(j, commitment)
                    secrets[j] = secret
                sigs = {j: dense.member_sign(members[j][0], committee)
                        for j in range(ell)}
                agg = dense.round2_sign_and_aggregate(committee, sigs)
                for j in range(ell):
                    committee.add_reveal(j, secrets[j])
                now = start + t * g0 + round_time
                seed_val = dense.next_seed(
                    [committee.reveals[j] for j in range(ell)], kappa)
                events.append({"event": "block-accept", "time": round(now, 3),
                               "index": i, "fallback": t,
                               "aggregate": agg.tag.hex()[:16]})
                intervals.append(now - start)
                break
            t += 1
            fallbacks += 1
            events.append({"event": "fallback-advanced", "index": i, "t": t})
            if t > 10_000:
                raise RuntimeError("no clean committee found")
    metrics = {
        "protocol": "dense_coa",
        "blocks": blocks,
        "fallbacks": fallbacks,
        "mean_interval": sum(intervals) / len(intervals),
    }
    return SimTrace(config, events[:2000], metrics, {})


# ---------------------------------------------------------------------------
# analysis scenarios (attack calculators behind the same trace interface)
# ---------------------------------------------------------------------------

def _run_attack(config: ScenarioConfig) -> SimTrace:
    kind = config.attack["kind"]
    p = dict(config.attack.get("params", {}))
    seed = config.seed
    if kind == "claim1":
        s = attacks.min_safe_confirmations_observed(
            p["v"], p["epsilon"], p["rho_prime"], p["delta"])
        metrics = {"kind": kind, "s": s}
    elif kind == "claim2":
        s = attacks.min_safe_confirmations_density(
            p["v"], p["epsilon"], p["rho"], p["k"])
        metrics = {"kind": kind, "s": s,
                   "wait_minutes": attacks.confirmation_wait_seconds(
                       s, p.get("g0_seconds", 300)) / 60.0}
    elif kind == "takeover":
        metrics = {"kind": kind,
                   "exponent": attacks.takeover_log_bound(p["ell"], p["p"], p["q"])}
    elif kind == "dense-dos":
        mean = attacks.simulate_withholding_dos(
            p["ell"], p["f"], p["g0_seconds"], p.get("blocks", 1000), seed)
        metrics = {"kind": kind, "mean_interval_minutes": mean / 60.0}
    elif kind == "ppcoin-mk":
        out = attacks.simulate_streak_interval(
            p.get("stake", 0.25), p.get("k", 6), p.get("blocks", 10 ** 6), seed)
        metrics = {"kind": kind, "mean_gap": out["mean_gap"],
                   "expected": out["expected"]}
    elif kind == "fork-rate":
        out = attacks.fork_rate_study(p.get("seconds", 10 ** 7), seed=seed)
        metrics = {"kind": kind,
                   "pairwise_interval": out["pairwise_interval"],
                   "multi_solve_interval": out["multi_solve_interval"]}
    elif kind == "timeweight":
        win = attacks.simulate_timeweight_attack(
            p["version"], p["stake"], p["multiplier"],
            p.get("trials", 10 ** 4), seed, saturated=p.get("saturated", False))
        metrics = {"kind": kind, "win_probability": win}
    elif kind == "bribe":
        scenario = attacks.BribeScenario(
            p["v"], p["epsilon"], p["rho"], p["k"], p["delta"],
            p["rho_prime"], p["s"])
        out = attacks.simulate_bribe_attack(
            scenario, p["mu"], p["p_success"], seed=seed)
        metrics = dict(out, kind=kind)
    elif kind == "mu":
        from .comb import CombSpec, last_player_advantage
        spec = CombSpec(p["comb"], p["kappa"], p.get("w", 1))
        mu, stderr = last_player_advantage(spec, p["p"],
                                           p.get("trials", 10 ** 4), seed)
        metrics = {"kind": kind, "mu": mu, "stderr": stderr,
                   "closed_form_concat": 2 * p["p"] - p["p"] ** 2}
    elif kind == "kz-bounds":
        from .comb import coalition_bounds
        lo, hi = coalition_bounds(p["ell"], p["kappa"], p["epsilon"])
        metrics = {"kind": kind, "achievable": lo, "upper": hi}
    elif kind == "issuance":
        ip = issuance.IssuanceParams(
            production_cost_per_coin=p.get("cost", 1.0),
            demand_value_fn=issuance.constant_demand(p.get("demand", 10 ** 6)),
            fixed_difficulty=p.get("difficulty", 2e-6),
            min_gap_seconds=p.get("min_gap", 60.0))
        out = issuance.simulate_issuance(ip, p.get("steps", 400), seed)
        burn = p.get("steps", 400) // 2
        value = out["value"][burn:]
        metrics = {"kind": kind,
                   "final_value": float(out["value"][-1]),
                   "mean_value": float(value.mean()),
                   "cost": p.get("cost", 1.0)}
    else:
        raise ConfigError("attack.kind", "unknown attack id %r" % kind)
    events = [{"event": "analysis", "kind": kind, "params": p}]
    return SimTrace(config, events, metrics, {})


def run_scenario(config: ScenarioConfig) -> SimTrace:
    if config.attack is not None:
        return _run_attack(config)
    if config.protocol == "coa":
        return _run_coa(config)
    if config.protocol == "ppcoin":
        return _run_ppcoin(config)
    if config.protocol == "dense_coa":
        return _run_dense(config)
    raise ConfigError("protocol", "unknown protocol %r" % config.protocol)
