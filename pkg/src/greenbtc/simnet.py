"""Discrete-event network simulation of the energy-gated consensus.

Every node tosses the verifiable coin once per parent block; only
passing nodes attempt the puzzle, as a Poisson process at their attempt
rate.  Concrete fidelity runs the real signatures, decoder, and block
validation on small networks; abstract fidelity replaces one attempt
with a Bernoulli draw at the level's calibrated solve probability while
charging identical energy units, which scales to hundreds of nodes.

Determinism: all randomness flows from the scenario seed through one
generator drawn in event order, and the event queue breaks time ties by
insertion sequence, so a scenario always replays the same trajectory.

Energy accounting charges one unit per coin toss and one per solve
attempt; efficiency compares solve energy per unit of simulated time
against a twin run with pass probability 1, the regime where both runs
hold the same block cadence per target interval.

Liveness caveat: a parent whose toss committee is empty can never be
extended, which is the protocol's own behavior at pass probability 0.
The chance per block is (1 - pp)^node_count, so scenarios should keep
node_count * pp comfortably above ~15 unless a stall is the point.
"""
from __future__ import annotations

import heapq
from dataclasses import dataclass, field, replace
from fractions import Fraction

import numpy as np

from . import chain, crypto, eccpow, vct
from .blocks import Block, BlockHeader, Transaction, block_hash, merkle_root, serialize_header
from .calibration import Calibration, default_calibration
from .crypto import sha256

# ---------------------------------------------------------------- config


@dataclass(frozen=True)
class LatencyModel:
    kind: str = "constant"  # constant | uniform | matrix
    constant_ms: float = 50.0
    low_ms: float = 10.0
    high_ms: float = 100.0
    matrix_ms: tuple[tuple[float, ...], ...] | None = None

    def validate(self, node_count: int) -> None:
        if self.kind not in ("constant", "uniform", "matrix"):
            raise ValueError(f"unknown latency kind: {self.kind!r}")
        if self.kind == "constant" and self.constant_ms < 0:
            raise ValueError("constant latency must be non-negative")
        if self.kind == "uniform" and not 0 <= self.low_ms <= self.high_ms:
            raise ValueError("uniform latency bounds must satisfy 0 <= low <= high")
        if self.kind == "matrix":
            m = self.matrix_ms
            if m is None or len(m) != node_count or any(len(row) != node_count for row in m):
                raise ValueError("latency matrix must be node_count x node_count")


@dataclass(frozen=True)
class Partition:
    start_s: float
    end_s: float
    group_a: tuple[int, ...]


@dataclass(frozen=True)
class AdversarySpec:
    fraction: float
    strategy: str = "honest"  # honest | double-spend
    confirmations: int = 6


@dataclass(frozen=True)
class PowerStep:
    at_s: float
    factor: float


@dataclass(frozen=True)
class ScenarioConfig:
    node_count: int
    attempt_rate_hz: float
    pass_probability: Fraction
    duration_s: float
    seed: int
    fidelity: str = "abstract"  # abstract | concrete
    level: int = 0
    auto_difficulty: bool = False
    target_interval_s: float = 600.0
    retarget_window: int = 12
    latency: LatencyModel = field(default_factory=LatencyModel)
    partitions: tuple[Partition, ...] = ()
    adversary: AdversarySpec | None = None
    stakes: tuple[int, ...] | None = None
    power_step: PowerStep | None = None

    def validate(self) -> None:
        if self.node_count < 1:
            raise ValueError("node_count must be at least 1")
        if self.attempt_rate_hz <= 0:
            raise ValueError("attempt_rate_hz must be positive")
        if not 0 <= self.pass_probability <= 1:
            raise ValueError("pass_probability must be in [0, 1]")
        if self.duration_s <= 0:
            raise ValueError("duration_s must be positive")
        if self.fidelity not in ("abstract", "concrete"):
            raise ValueError(f"unknown fidelity: {self.fidelity!r}")
        if self.fidelity == "concrete" and self.node_count > 10:
            raise ValueError("concrete fidelity supports at most 10 nodes")
        if self.fidelity == "concrete" and self.level > 3:
            raise ValueError("concrete fidelity supports levels 0..3 only")
        if not 0 <= self.level < len(eccpow.DIFFICULTY_TABLE):
            raise ValueError("level outside difficulty table")
        if self.retarget_window < 1:
            raise ValueError("retarget_window must be at least 1")
        if self.target_interval_s <= 0:
            raise ValueError("target_interval_s must be positive")
        self.latency.validate(self.node_count)
        for part in self.partitions:
            if not 0 <= part.start_s < part.end_s:
                raise ValueError("partition window must satisfy 0 <= start < end")
            if any(not 0 <= i < self.node_count for i in part.group_a):
                raise ValueError("partition group references unknown node")
        if self.adversary is not None:
            if not 0 <= self.adversary.fraction < 1:
                raise ValueError("adversary fraction must be in [0, 1)")
            if self.adversary.strategy not in ("honest", "double-spend"):
                raise ValueError(f"unknown adversary strategy: {self.adversary.strategy!r}")
            if self.adversary.confirmations < 1:
                raise ValueError("confirmations must be at least 1")
        if self.stakes is not None:
            if len(self.stakes) != self.node_count:
                raise ValueError("stakes length must equal node_count")
            if any(s < 0 for s in self.stakes) or sum(self.stakes) <= 0:
                raise ValueError("stakes must be non-negative with positive total")
        if self.power_step is not None:
            if self.power_step.at_s < 0 or self.power_step.factor <= 0:
                raise ValueError("power_step must have at_s >= 0 and factor > 0")


_SCENARIO_KEYS = {
    "node_count",
    "attempt_rate_hz",
    "pass_probability",
    "duration_s",
    "seed",
    "fidelity",
    "level",
    "auto_difficulty",
    "target_interval_s",
    "retarget_window",
    "latency",
    "partitions",
    "adversary",
    "stakes",
    "power_step",
}


def _reject_unknown(d: dict, allowed: set[str], where: str) -> None:
    unknown = sorted(set(d) - allowed)
    if unknown:
        raise ValueError(f"unknown field {unknown[0]!r} in {where}")


def scenario_from_dict(d: dict) -> ScenarioConfig:
    """Strict parse: any unrecognized field anywhere is an error."""
    if not isinstance(d, dict):
        raise ValueError("scenario must be a JSON object")
    _reject_unknown(d, _SCENARIO_KEYS, "scenario")
    for key in ("node_count", "attempt_rate_hz", "pass_probability", "duration_s", "seed"):
        if key not in d:
            raise ValueError(f"missing required field {key!r} in scenario")
    kwargs: dict = {
        "node_count": int(d["node_count"]),
        "attempt_rate_hz": float(d["attempt_rate_hz"]),
        "pass_probability": vct.parse_pass_probability(str(d["pass_probability"])),
        "duration_s": float(d["duration_s"]),
        "seed": int(d["seed"]),
    }
    if "fidelity" in d:
        kwargs["fidelity"] = str(d["fidelity"])
    if "level" in d:
        kwargs["level"] = int(d["level"])
    if "auto_difficulty" in d:
        kwargs["auto_difficulty"] = bool(d["auto_difficulty"])
    if "target_interval_s" in d:
        kwargs["target_interval_s"] = float(d["target_interval_s"])
    if "retarget_window" in d:
        kwargs["retarget_window"] = int(d["retarget_window"])
    if "latency" in d:
        lat = d["latency"]
        _reject_unknown(lat, {"kind", "constant_ms", "low_ms", "high_ms", "matrix_ms"}, "latency")
        matrix = lat.get("matrix_ms")
        kwargs["latency"] = LatencyModel(
            kind=str(lat.get("kind", "constant")),
            constant_ms=float(lat.get("constant_ms", 50.0)),
            low_ms=float(lat.get("low_ms", 10.0)),
            high_ms=float(lat.get("high_ms", 100.0)),
            matrix_ms=tuple(tuple(float(x) for x in row) for row in matrix) if matrix else None,
        )
    if "partitions" in d:
        parts = []
        for p in d["partitions"]:
            _reject_unknown(p, {"start_s", "end_s", "group_a"}, "partition")
            parts.append(
                Partition(
                    start_s=float(p["start_s"]),
                    end_s=float(p["end_s"]),
                    group_a=tuple(int(i) for i in p["group_a"]),
                )
            )
        kwargs["partitions"] = tuple(parts)
    if "adversary" in d and d["adversary"] is not None:
        adv = d["adversary"]
        _reject_unknown(adv, {"fraction", "strategy", "confirmations"}, "adversary")
        kwargs["adversary"] = AdversarySpec(
            fraction=float(adv["fraction"]),
            strategy=str(adv.get("strategy", "honest")),
            confirmations=int(adv.get("confirmations", 6)),
        )
    if "stakes" in d and d["stakes"] is not None:
        kwargs["stakes"] = tuple(int(s) for s in d["stakes"])
    if "power_step" in d and d["power_step"] is not None:
        ps = d["power_step"]
        _reject_unknown(ps, {"at_s", "factor"}, "power_step")
        kwargs["power_step"] = PowerStep(at_s=float(ps["at_s"]), factor=float(ps["factor"]))
    config = ScenarioConfig(**kwargs)
    config.validate()
    return config


def scenario_to_dict(config: ScenarioConfig) -> dict:
    d: dict = {
        "node_count": config.node_count,
        "attempt_rate_hz": config.attempt_rate_hz,
        "pass_probability": str(config.pass_probability),
        "duration_s": config.duration_s,
        "seed": config.seed,
        "fidelity": config.fidelity,
        "level": config.level,
        "auto_difficulty": config.auto_difficulty,
        "target_interval_s": config.target_interval_s,
        "retarget_window": config.retarget_window,
        "latency": {
            "kind": config.latency.kind,
            "constant_ms": config.latency.constant_ms,
            "low_ms": config.latency.low_ms,
            "high_ms": config.latency.high_ms,
            "matrix_ms": [list(r) for r in config.latency.matrix_ms]
            if config.latency.matrix_ms
            else None,
        },
        "partitions": [
            {"start_s": p.start_s, "end_s": p.end_s, "group_a": list(p.group_a)}
            for p in config.partitions
        ],
        "adversary": None
        if config.adversary is None
        else {
            "fraction": config.adversary.fraction,
            "strategy": config.adversary.strategy,
            "confirmations": config.adversary.confirmations,
        },
        "stakes": list(config.stakes) if config.stakes is not None else None,
        "power_step": None
        if config.power_step is None
        else {"at_s": config.power_step.at_s, "factor": config.power_step.factor},
    }
    return d


# ---------------------------------------------------------------- metrics


@dataclass
class EnergyLedger:
    vct_tosses: int = 0
    solve_attempts: int = 0
    decode_iterations: int = 0
    verify_count: int = 0


@dataclass
class BlockRow:
    block_id: str
    parent_id: str
    height: int
    level: int
    timestamp: float
    miner: int
    adversary: bool


@dataclass
class Metrics:
    scenario: ScenarioConfig
    blocks_mined: list[BlockRow]
    canonical_ids: list[str]
    intervals: list[float]
    mean_interval: float | None
    fork_count: int
    energy_total: EnergyLedger
    energy_per_node: list[EnergyLedger]
    committee_per_height: list[tuple[int, int, int]]  # height, honest, adversary
    toss_log: dict[tuple[int, str], bool]
    attempt_log: dict[tuple[int, str], int]
    gating_violations: int
    honest_height: int
    adversary_height: int
    attack_published: bool
    attack_success: bool | None
    events: list[tuple[float, str, int, str]]  # time, kind, node, block id

    def canonical_rows(self) -> list[BlockRow]:
        by_id = {row.block_id: row for row in self.blocks_mined}
        return [by_id[i] for i in self.canonical_ids if i in by_id]


# ---------------------------------------------------------------- engine

_ARRIVAL = 0
_ATTEMPT = 1


class _Node:
    __slots__ = (
        "index",
        "adversary",
        "pp",
        "store",
        "generation",
        "current_parent",
        "keypair",
        "next_nonce",
        "toss_outputs",
    )

    def __init__(self, index: int, adversary: bool, pp: Fraction, store: chain.ChainStore):
        self.index = index
        self.adversary = adversary
        self.pp = pp
        self.store = store
        self.generation = 0
        self.current_parent: bytes | None = None
        self.keypair = None
        self.next_nonce: dict[bytes, int] = {}
        self.toss_outputs: dict[bytes, vct.VrfOutput] = {}


class _Engine:
    def __init__(self, config: ScenarioConfig, calibration: Calibration, record_events: bool = False):
        config.validate()
        self.config = config
        self.cal = calibration
        self.record_events = record_events
        self.event_log: list[tuple[float, str, int, str]] = []
        self.rng = np.random.default_rng(np.random.SeedSequence([config.seed, 0]))
        self.params = chain.ConsensusParams(
            pass_probability=config.pass_probability,
            target_interval_s=config.target_interval_s,
            retarget_window=config.retarget_window if config.auto_difficulty else 0,
            initial_level=config.level,
        )
        self.events: list[tuple[float, int, int, tuple]] = []
        self.seq = 0
        self.now = 0.0
        self.block_counter = 0
        self.records: dict[bytes, BlockRow] = {}
        self.full_blocks: dict[bytes, Block] = {}
        self.committee: dict[bytes, list[int]] = {}
        self.toss_memo: dict[tuple[int, bytes], bool] = {}
        self.attempt_log: dict[tuple[int, bytes], int] = {}
        self.energy: list[EnergyLedger] = [EnergyLedger() for _ in range(config.node_count)]
        self.gating_violations = 0
        self.attack_published = False
        self.attack_fork_parent: bytes | None = None
        self.orphans: dict[tuple[int, bytes], list[bytes]] = {}

        n_adv = 0
        adv = config.adversary
        if adv is not None and adv.fraction > 0:
            n_adv = min(int(round(adv.fraction * config.node_count)), config.node_count - 1)
        self.n_adv = n_adv
        cartel_store = chain.new_store(self.params) if n_adv else None
        private = adv is not None and adv.strategy == "double-spend" and n_adv > 0
        self.private_attack = private
        self.cartel_store = cartel_store

        pps = self._node_pass_probs()
        self.nodes: list[_Node] = []
        for i in range(config.node_count):
            is_adv = i < n_adv
            store = cartel_store if (is_adv and cartel_store is not None) else chain.new_store(self.params)
            self.nodes.append(_Node(i, is_adv, pps[i], store))
        if config.fidelity == "concrete":
            from . import crypto

            for node in self.nodes:
                seed = sha256(config.seed.to_bytes(8, "big") + node.index.to_bytes(4, "big"))
                node.keypair = crypto.keygen(seed)
        genesis_store = self.nodes[0].store
        self.genesis_id = genesis_store.genesis_hash
        if config.fidelity == "concrete":
            self.full_blocks[self.genesis_id] = chain.make_genesis(self.params)
        self.level_cache: dict[bytes, int] = {self.genesis_id: config.level}

    # -- helpers

    def _node_pass_probs(self) -> list[Fraction]:
        cfg = self.config
        if cfg.stakes is None:
            return [cfg.pass_probability] * cfg.node_count
        total = sum(cfg.stakes)
        return [
            vct.weighted_pass_probability(cfg.pass_probability, s, total, cfg.node_count)
            for s in cfg.stakes
        ]

    def _rate(self, t: float) -> float:
        rate = self.config.attempt_rate_hz
        step = self.config.power_step
        if step is not None and t >= step.at_s:
            rate *= step.factor
        return rate

    def _latency_s(self, src: int, dst: int) -> float:
        lat = self.config.latency
        if lat.kind == "constant":
            return lat.constant_ms / 1000.0
        if lat.kind == "uniform":
            return float(self.rng.uniform(lat.low_ms, lat.high_ms)) / 1000.0
        return lat.matrix_ms[src][dst] / 1000.0

    def _partition_release(self, t: float, src: int, dst: int) -> float | None:
        """If (src, dst) straddle an active partition at t, the heal time."""
        for part in self.config.partitions:
            if part.start_s <= t < part.end_s:
                in_a_src = src in part.group_a
                in_a_dst = dst in part.group_a
                if in_a_src != in_a_dst:
                    return part.end_s
        return None

    def _push(self, time_s: float, kind: int, payload: tuple) -> None:
        heapq.heappush(self.events, (time_s, self.seq, kind, payload))
        self.seq += 1

    def _log(self, t: float, kind: str, node: int, block_id: bytes) -> None:
        if self.record_events:
            self.event_log.append((t, kind, node, block_id.hex()))

    def _level_for_child(self, store: chain.ChainStore, parent_id: bytes) -> int:
        if not self.config.auto_difficulty:
            return self.config.level
        if parent_id in self.level_cache:
            return self.level_cache[parent_id]
        level = chain.expected_level(store, parent_id, self.params)
        self.level_cache[parent_id] = level
        return level

    # -- event handlers

    def _on_new_tip(self, node: _Node, t: float) -> None:
        tip = node.store.tip_hash
        if tip == node.current_parent:
            return
        node.current_parent = tip
        node.generation += 1
        key = (node.index, tip)
        if key not in self.toss_memo:
            self.energy[node.index].vct_tosses += 1
            self.committee.setdefault(tip, [0, 0])
            if self.config.fidelity == "concrete":
                parent_block = self.full_blocks[tip]
                parent_bytes = serialize_header(parent_block.header, include_poc=True)
                passed, output = vct.toss(node.keypair.secret_key, parent_bytes, node.pp)
                node.toss_outputs[tip] = output
            else:
                passed = bool(self.rng.random() < float(node.pp))
            self.toss_memo[key] = passed
            if passed:
                self.committee[tip][1 if node.adversary else 0] += 1
        if self.toss_memo[key]:
            delay = float(self.rng.exponential(1.0 / self._rate(t)))
            self._push(t + delay, _ATTEMPT, (node.index, node.generation))

    def _handle_attempt(self, t: float, node_index: int, generation: int) -> None:
        node = self.nodes[node_index]
        if generation != node.generation:
            return  # tip changed; this attempt stream was cancelled
        parent_id = node.current_parent
        key = (node_index, parent_id)
        if not self.toss_memo.get(key, False):
            self.gating_violations += 1
            return
        self.energy[node_index].solve_attempts += 1
        self.attempt_log[key] = self.attempt_log.get(key, 0) + 1
        level = self._level_for_child(node.store, parent_id)
        if self.config.fidelity == "concrete":
            success, block = self._concrete_attempt(node, parent_id, level, t)
        else:
            success = bool(self.rng.random() < self.cal.p_hat(level))
            block = None
        if success:
            self._mine_block(node, parent_id, level, t, block)
        else:
            delay = float(self.rng.exponential(1.0 / self._rate(t)))
            self._push(t + delay, _ATTEMPT, (node.index, node.generation))

    def _concrete_attempt(
        self, node: _Node, parent_id: bytes, level: int, t: float
    ) -> tuple[bool, Block | None]:
        parent = node.store.get(parent_id)
        height = parent.height + 1
        coinbase = Transaction(value=chain.emission(height), payload=node.keypair.public_key)
        txs = (coinbase,)
        output = node.toss_outputs[parent_id]
        timestamp = max(int(t), parent.timestamp + 1)
        template = BlockHeader(
            version=1,
            prev_hash=parent_id,
            merkle_root=merkle_root([tx.txid for tx in txs]),
            timestamp=timestamp,
            level=level,
            nonce=0,
            coinbase_pubkey_hash=sha256(node.keypair.public_key),
            vct_value=output.value,
            vct_proof=output.proof,
        )
        nonce = node.next_nonce.get(parent_id, 0)
        node.next_nonce[parent_id] = nonce + 1
        params = eccpow.DIFFICULTY_TABLE[level]
        proof = eccpow.solve(template, node.keypair.secret_key, params, nonce, nonce + 1)
        # count decoder work for the attempt whether or not it converged
        preimage = serialize_header(replace(template, nonce=nonce), include_poc=False)
        signature = crypto.sign(node.keypair.secret_key, preimage)
        word = eccpow.expand_hash(sha256(signature), params.n)
        h_mat = eccpow.gen_matrix(parent_id, params)
        self.energy[node.index].decode_iterations += eccpow.decode(
            h_mat, word, params.max_iter
        ).iterations
        if proof is None:
            return False, None
        header = replace(
            template,
            nonce=proof.nonce,
            poc_signature=proof.header_signature,
            poc_codeword=proof.codeword,
        )
        return True, Block(header=header, transactions=txs)

    def _mine_block(
        self, node: _Node, parent_id: bytes, level: int, t: float, block: Block | None
    ) -> None:
        parent = node.store.get(parent_id)
        if block is not None:
            block_id = block_hash(block.header)
            timestamp: float = block.header.timestamp
            self.full_blocks[block_id] = block
        else:
            self.block_counter += 1
            block_id = sha256(
                parent_id + node.index.to_bytes(4, "big") + self.block_counter.to_bytes(8, "big")
            )
            timestamp = t
        row = BlockRow(
            block_id=block_id.hex(),
            parent_id=parent_id.hex(),
            height=parent.height + 1,
            level=level,
            timestamp=timestamp,
            miner=node.index,
            adversary=node.adversary,
        )
        self.records[block_id] = row
        node.store.insert(block_id, parent_id, level, timestamp, self.cal.work(level), block=block)
        self._log(t, "mined", node.index, block_id)
        if self.private_attack and node.adversary and not self.attack_published:
            if self.attack_fork_parent is None:
                self.attack_fork_parent = parent_id
            for member in self.nodes:
                if member.adversary:
                    self._on_new_tip(member, t)
            self._maybe_publish(t)
            return
        self._broadcast(node, block_id, t)
        if node.adversary and self.cartel_store is not None:
            for member in self.nodes:
                if member.adversary:
                    self._on_new_tip(member, t)
        else:
            self._on_new_tip(node, t)

    def _broadcast(self, src: _Node, block_id: bytes, t: float) -> None:
        for dst in self.nodes:
            if dst.index == src.index:
                continue
            if src.adversary and dst.adversary:
                continue  # cartel shares one store
            release = self._partition_release(t, src.index, dst.index)
            base = t + self._latency_s(src.index, dst.index)
            when = base if release is None else release + self._latency_s(src.index, dst.index)
            self._push(when, _ARRIVAL, (dst.index, block_id))

    def _maybe_publish(self, t: float) -> None:
        """Publish the private chain once it leads and the target is buried."""
        cartel = self.cartel_store
        fork_parent = self.attack_fork_parent
        if cartel is None or fork_parent is None:
            return
        honest_view = self._reference_store()
        fork_height = cartel.get(fork_parent).height
        z = self.config.adversary.confirmations
        honest_tip = honest_view.get(honest_view.tip_hash)
        cartel_tip = cartel.get(cartel.tip_hash)
        if honest_tip.height < fork_height + z:
            return
        if cartel_tip.total_work <= honest_tip.total_work:
            return
        self.attack_published = True
        chain_entries = cartel.lineage(cartel.tip_hash, len(cartel.blocks) + 1)
        adv_nodes = [n for n in self.nodes if n.adversary]
        publisher = adv_nodes[0]
        for entry in chain_entries:
            if entry.hash == cartel.genesis_hash:
                continue
            if entry.hash in self.records and self.records[entry.hash].adversary:
                self._broadcast(publisher, entry.hash, t)

    def _reference_store(self) -> chain.ChainStore:
        for node in self.nodes:
            if not node.adversary:
                return node.store
        return self.nodes[0].store

    def _handle_arrival(self, t: float, node_index: int, block_id: bytes) -> None:
        node = self.nodes[node_index]
        store = node.store
        if block_id in store:
            return
        row = self.records.get(block_id)
        if row is None:
            return
        parent_id = bytes.fromhex(row.parent_id)
        if parent_id not in store:
            self.orphans.setdefault((id(store), parent_id), []).append(block_id)
            return
        self._validate_and_insert(node, block_id, row, t)
        # orphans waiting on this block can now be processed, oldest first
        pending = self.orphans.pop((id(store), block_id), [])
        for child_id in pending:
            self._handle_arrival(t, node_index, child_id)
        self._on_new_tip(node, t)
        if self.private_attack and not self.attack_published and node.adversary:
            self._maybe_publish(t)

    def _validate_and_insert(self, node: _Node, block_id: bytes, row: BlockRow, t: float) -> None:
        store = node.store
        self.energy[node.index].verify_count += 1
        self._log(t, "received", node.index, block_id)
        if self.config.fidelity == "concrete":
            block = self.full_blocks[block_id]
            result = chain.accept_block(block, store, self.params, local_time=t, calibration=self.cal)
            if not result.ok:
                return
        else:
            parent = store.get(bytes.fromhex(row.parent_id))
            if parent is None or row.timestamp <= parent.timestamp:
                return
            expected = self._level_for_child(store, bytes.fromhex(row.parent_id))
            if row.level != expected:
                return
            store.insert(
                block_id,
                bytes.fromhex(row.parent_id),
                row.level,
                row.timestamp,
                self.cal.work(row.level),
            )

    # -- main loop

    def run(self) -> Metrics:
        for node in self.nodes:
            self._on_new_tip(node, 0.0)
        duration = self.config.duration_s
        while self.events:
            t, _, kind, payload = heapq.heappop(self.events)
            if t > duration:
                break
            self.now = t
            if kind == _ATTEMPT:
                self._handle_attempt(t, *payload)
            else:
                self._handle_arrival(t, *payload)
        return self._collect()

    def _collect(self) -> Metrics:
        reference = self._reference_store()
        canonical = reference.lineage(reference.tip_hash, len(reference.blocks) + 1)
        canonical_ids = [e.hash.hex() for e in canonical if e.hash != self.genesis_id]
        stamps = [reference.get(self.genesis_id).timestamp] + [
            e.timestamp for e in canonical if e.hash != self.genesis_id
        ]
        intervals = [float(b - a) for a, b in zip(stamps, stamps[1:])]
        mean_interval = sum(intervals) / len(intervals) if intervals else None
        total = EnergyLedger(
            vct_tosses=sum(e.vct_tosses for e in self.energy),
            solve_attempts=sum(e.solve_attempts for e in self.energy),
            decode_iterations=sum(e.decode_iterations for e in self.energy),
            verify_count=sum(e.verify_count for e in self.energy),
        )
        committee_rows = []
        for entry in canonical:
            counts = self.committee.get(entry.hash)
            if counts is not None:
                committee_rows.append((entry.height + 1, counts[0], counts[1]))
        toss_log = {
            (idx, parent.hex()): passed for (idx, parent), passed in self.toss_memo.items()
        }
        attempt_log = {
            (idx, parent.hex()): count for (idx, parent), count in self.attempt_log.items()
        }
        honest_height = reference.get(reference.tip_hash).height
        adv_height = 0
        attack_success: bool | None = None
        if self.cartel_store is not None:
            adv_height = self.cartel_store.get(self.cartel_store.tip_hash).height
            if self.private_attack:
                # the double spend lands iff the honest view's canonical
                # chain takes the adversary's side of the fork; later
                # honest blocks on top do not undo the displaced prefix
                attack_success = False
                fork_parent = self.attack_fork_parent
                if self.attack_published and fork_parent is not None:
                    for entry in canonical:
                        if entry.parent_hash == fork_parent:
                            row = self.records.get(entry.hash)
                            attack_success = row is not None and row.adversary
                            break
        return Metrics(
            scenario=self.config,
            blocks_mined=sorted(self.records.values(), key=lambda r: (r.height, r.block_id)),
            canonical_ids=canonical_ids,
            intervals=intervals,
            mean_interval=mean_interval,
            fork_count=len(self.records) - len(canonical_ids),
            energy_total=total,
            energy_per_node=self.energy,
            committee_per_height=committee_rows,
            toss_log=toss_log,
            attempt_log=attempt_log,
            gating_violations=self.gating_violations,
            honest_height=honest_height,
            adversary_height=adv_height,
            attack_published=self.attack_published,
            attack_success=attack_success,
            events=self.event_log,
        )


def run(
    config: ScenarioConfig,
    calibration: Calibration | None = None,
    record_events: bool = False,
) -> Metrics:
    """Simulate one scenario to completion and collect metrics."""
    cal = calibration if calibration is not None else default_calibration()
    return _Engine(config, cal, record_events=record_events).run()


def run_with_store(
    config: ScenarioConfig, calibration: Calibration | None = None
) -> tuple[Metrics, chain.ChainStore]:
    """Like run(), also returning the reference honest node's store."""
    cal = calibration if calibration is not None else default_calibration()
    engine = _Engine(config, cal)
    metrics = engine.run()
    return metrics, engine._reference_store()


# ------------------------------------------------------------ experiments


@dataclass(frozen=True)
class EceReport:
    pass_probability: Fraction
    ece: float
    attempts_at_pp: int
    attempts_at_one: int
    blocks_at_pp: int
    blocks_at_one: int


def measure_ece(
    config: ScenarioConfig,
    pp: Fraction | None = None,
    calibration: Calibration | None = None,
) -> EceReport:
    """Energy consumption efficiency against a pass-probability-1 twin.

    Both runs cover the same simulated duration, so the ratio of solve
    energy per unit time is the ratio of network power draw; with the
    block cadence pinned to the target interval by difficulty, that
    equals energy per produced block.  ECE = 1 - ratio.
    """
    cal = calibration if calibration is not None else default_calibration()
    if pp is not None:
        config = replace(config, pass_probability=pp)
    run_pp = run(config, cal)
    twin = replace(config, pass_probability=Fraction(1))
    run_one = run(twin, cal)
    if not run_pp.canonical_ids or not run_one.canonical_ids:
        raise ValueError("a run produced zero blocks; efficiency is undefined")
    a_pp = run_pp.energy_total.solve_attempts
    a_one = run_one.energy_total.solve_attempts
    return EceReport(
        pass_probability=config.pass_probability,
        ece=1.0 - (a_pp / a_one),
        attempts_at_pp=a_pp,
        attempts_at_one=a_one,
        blocks_at_pp=len(run_pp.canonical_ids),
        blocks_at_one=len(run_one.canonical_ids),
    )


@dataclass(frozen=True)
class CommitteeReport:
    rounds: int
    nonempty_rounds: int
    shares: tuple[float, ...]  # per nonempty round, in round order
    mean_share: float
    ci_low: float
    ci_high: float
    adversary_passes: int
    total_passes: int


def committee_proportion(
    config: ScenarioConfig, adversary_fraction: float, rounds: int
) -> CommitteeReport:
    """Per-round adversary share of the toss committee.

    Each round draws every node's toss for a fresh parent; the share is
    adversary passes over total passes, skipping empty committees.  The
    toss has no memory of who a key belongs to, so the expected share
    equals the adversary's node share.  The confidence interval is the
    95% normal interval on the mean share.
    """
    if rounds < 1:
        raise ValueError("rounds must be at least 1")
    n = config.node_count
    n_adv = int(round(adversary_fraction * n))
    pp = float(config.pass_probability)
    rng = np.random.default_rng(np.random.SeedSequence([config.seed, 1]))
    adv = rng.binomial(n_adv, pp, size=rounds)
    hon = rng.binomial(n - n_adv, pp, size=rounds)
    total = adv + hon
    mask = total > 0
    shares = adv[mask] / total[mask]
    mean = float(shares.mean()) if mask.any() else 0.0
    half = (
        1.96 * float(shares.std(ddof=1)) / float(np.sqrt(shares.size))
        if shares.size > 1
        else 0.0
    )
    return CommitteeReport(
        rounds=rounds,
        nonempty_rounds=int(mask.sum()),
        shares=tuple(float(s) for s in shares),
        mean_share=mean,
        ci_low=mean - half,
        ci_high=mean + half,
        adversary_passes=int(adv.sum()),
        total_passes=int(total.sum()),
    )


@dataclass(frozen=True)
class AttackOutcome:
    trials: int
    successes: int
    success_rate: float
    ci_low: float
    ci_high: float


def attack_experiment(
    config: ScenarioConfig,
    fraction: float,
    confirmations: int,
    trials: int,
    horizon_blocks: int = 400,
) -> AttackOutcome:
    """Empirical private-chain double-spend race.

    Per trial the adversary pre-mines while the honest chain buries the
    target transaction under ``confirmations`` blocks (the pre-mined
    count is Poisson with the chain cadence pinned by difficulty), then
    the race proceeds block by block, each block going to the adversary
    with probability equal to its share of that round's toss committee;
    the adversary wins on drawing level with the honest chain and gives
    up after ``horizon_blocks`` race blocks.
    """
    if not 0 <= fraction < 1:
        raise ValueError("fraction must be in [0, 1)")
    if confirmations < 0:
        raise ValueError("confirmations must be non-negative")
    z = confirmations
    q = fraction
    n = config.node_count
    n_adv = int(round(fraction * n))
    pp = float(config.pass_probability)
    if pp <= 0:
        raise ValueError("pass probability must be positive for the race")
    rng = np.random.default_rng(np.random.SeedSequence([config.seed, 2]))
    if q <= 0 or n_adv == 0:
        return AttackOutcome(trials, 0, 0.0, 0.0, _ci_high(0, trials))

    premined = rng.poisson(z * q / (1.0 - q), size=trials)
    deficit = z - premined
    active = deficit > 0
    blocks_used = np.zeros(trials, dtype=np.int64)
    # round-by-round race over the active trials
    safety = 0
    while active.any() and safety < 40 * horizon_blocks:
        safety += 1
        idx = np.flatnonzero(active)
        adv_c = rng.binomial(n_adv, pp, size=idx.size)
        hon_c = rng.binomial(n - n_adv, pp, size=idx.size)
        total = adv_c + hon_c
        produced = total > 0
        p_adv = np.zeros(idx.size)
        p_adv[produced] = adv_c[produced] / total[produced]
        adv_block = rng.random(idx.size) < p_adv
        step = np.where(produced, np.where(adv_block, -1, 1), 0)
        deficit[idx] += step
        blocks_used[idx] += produced.astype(np.int64)
        caught = deficit[idx] <= 0
        exhausted = blocks_used[idx] >= horizon_blocks
        active[idx] = ~(caught | exhausted)
    successes = int((deficit <= 0).sum())
    rate = successes / trials
    return AttackOutcome(
        trials=trials,
        successes=successes,
        success_rate=rate,
        ci_low=_ci_low(successes, trials),
        ci_high=_ci_high(successes, trials),
    )


def _ci_low(successes: int, trials: int) -> float:
    p = successes / trials
    half = 1.96 * (p * (1 - p) / trials) ** 0.5
    return max(0.0, p - half)


def _ci_high(successes: int, trials: int) -> float:
    p = successes / trials
    half = 1.96 * (p * (1 - p) / trials) ** 0.5
    return min(1.0, p + half)
