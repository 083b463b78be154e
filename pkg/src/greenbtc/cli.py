"""Batch command line: scenario runs, calibration, efficiency and
attack experiments, double-spend verdicts, and chain export.

Every command confines its writes to the --out directory and records a
sha256 digest of each output file in summary.json.  All randomness
descends from one seed (GREENBTC_SEED overrides --seed, which overrides
the config), and nothing reads the wall clock, so a rerun with the same
manifest reproduces every output byte for byte.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import os
import sys
from dataclasses import replace

from . import chain, doublespend, report, simnet
from .calibration import calibrate
from .eccpow import DIFFICULTY_TABLE
from .vct import parse_pass_probability


def _resolve_seed(cli_seed: int | None, config_seed: int | None) -> int:
    env = os.environ.get("GREENBTC_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise ValueError(f"GREENBTC_SEED must be an integer, got {env!r}")
    if cli_seed is not None:
        return cli_seed
    if config_seed is not None:
        return config_seed
    return 0


def _load_scenario(args) -> simnet.ScenarioConfig:
    try:
        with open(args.config, "r", encoding="utf-8") as f:
            raw = json.load(f)
    except FileNotFoundError:
        raise ValueError(f"config file not found: {args.config}")
    except json.JSONDecodeError as e:
        raise ValueError(f"config is not valid JSON: {e}")
    config = simnet.scenario_from_dict(raw)
    seed = _resolve_seed(args.seed, config.seed)
    config = replace(config, seed=seed)
    mode = getattr(args, "mode", None)
    if mode is not None:
        config = replace(config, fidelity=mode)
    config.validate()
    return config


class _OutDir:
    """Staged output directory: files land atomically, digests recorded."""

    def __init__(self, path: str):
        self.path = path
        self.digests: dict[str, str] = {}
        os.makedirs(path, exist_ok=True)
        os.makedirs(os.path.join(path, "figures"), exist_ok=True)

    def file(self, name: str) -> str:
        return os.path.join(self.path, name)

    def write_bytes(self, name: str, data: bytes) -> None:
        final = self.file(name)
        tmp = final + ".tmp"
        with open(tmp, "wb") as f:
            f.write(data)
        os.replace(tmp, final)
        self.digests[name] = hashlib.sha256(data).hexdigest()

    def write_text(self, name: str, text: str) -> None:
        self.write_bytes(name, text.encode("utf-8"))

    def adopt(self, name: str) -> None:
        """Record a file written in place (figures go straight to disk)."""
        with open(self.file(name), "rb") as f:
            self.digests[name] = hashlib.sha256(f.read()).hexdigest()

    def write_summary(self, payload: dict) -> None:
        payload = dict(payload)
        payload["outputs"] = dict(sorted(self.digests.items()))
        text = json.dumps(payload, indent=2, sort_keys=True) + "\n"
        final = self.file("summary.json")
        tmp = final + ".tmp"
        with open(tmp, "w", encoding="utf-8") as f:
            f.write(text)
        os.replace(tmp, final)


def _csv_text(header: list[str], rows: list[list]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


def _energy_dict(ledger: simnet.EnergyLedger) -> dict:
    return {
        "vct_tosses": ledger.vct_tosses,
        "solve_attempts": ledger.solve_attempts,
        "decode_iterations": ledger.decode_iterations,
        "verify_count": ledger.verify_count,
    }


# ---------------------------------------------------------------- commands


def cmd_run(args) -> int:
    config = _load_scenario(args)
    metrics = simnet.run(config, record_events=args.verbose)
    out = _OutDir(args.out)

    rows = []
    canonical = metrics.canonical_rows()
    prev_ts = 0.0
    for row in canonical:
        rows.append(
            [
                row.height,
                row.block_id,
                row.parent_id,
                row.level,
                row.timestamp,
                row.miner,
                int(row.adversary),
                row.timestamp - prev_ts,
            ]
        )
        prev_ts = row.timestamp
    out.write_text(
        "metrics.csv",
        _csv_text(
            ["height", "block_id", "parent_id", "level", "timestamp", "miner",
             "adversary", "interval_s"],
            rows,
        ),
    )
    node_rows = [
        [i, e.vct_tosses, e.solve_attempts, e.decode_iterations, e.verify_count]
        for i, e in enumerate(metrics.energy_per_node)
    ]
    out.write_text(
        "nodes.csv",
        _csv_text(
            ["node", "vct_tosses", "solve_attempts", "decode_iterations", "verify_count"],
            node_rows,
        ),
    )
    out.write_text(
        "config.json",
        json.dumps(simnet.scenario_to_dict(config), indent=2, sort_keys=True) + "\n",
    )
    if args.verbose:
        out.write_text(
            "events.csv",
            _csv_text(
                ["time_s", "kind", "node", "block_id"],
                [list(e) for e in metrics.events],
            ),
        )
    report.interval_timeline(
        [r.height for r in canonical],
        metrics.intervals,
        [r.level for r in canonical],
        config.target_interval_s,
        out.file("figures/intervals.png"),
    )
    out.adopt("figures/intervals.png")
    out.write_summary(
        {
            "command": "run",
            "effective_config": simnet.scenario_to_dict(config),
            "blocks_canonical": len(metrics.canonical_ids),
            "blocks_mined": len(metrics.blocks_mined),
            "fork_count": metrics.fork_count,
            "mean_interval_s": metrics.mean_interval,
            "honest_height": metrics.honest_height,
            "adversary_height": metrics.adversary_height,
            "attack_published": metrics.attack_published,
            "attack_success": metrics.attack_success,
            "gating_violations": metrics.gating_violations,
            "energy_total": _energy_dict(metrics.energy_total),
        }
    )
    if args.verbose:
        print(f"{len(metrics.canonical_ids)} canonical blocks -> {args.out}", file=sys.stderr)
    return 0


def cmd_calibrate(args) -> int:
    seed = _resolve_seed(args.seed, None)
    cal = calibrate(DIFFICULTY_TABLE, samples=args.samples, seed=seed, jobs=args.jobs)
    out = _OutDir(args.out)
    out.write_text("calibration.json", cal.to_json())
    rows = [
        [e.level, e.n, e.wc, e.wr, e.max_iter, e.p_hat, e.std_err, e.samples,
         int(e.extrapolated)]
        for e in cal.levels
    ]
    out.write_text(
        "calibration.csv",
        _csv_text(
            ["level", "n", "wc", "wr", "max_iter", "p_hat", "std_err", "samples",
             "extrapolated"],
            rows,
        ),
    )
    report.calibration_curve(
        [e.n for e in cal.levels],
        [e.p_hat for e in cal.levels],
        [e.extrapolated for e in cal.levels],
        out.file("figures/calibration.png"),
    )
    out.adopt("figures/calibration.png")
    out.write_summary(
        {
            "command": "calibrate",
            "seed": seed,
            "samples": args.samples,
            "levels": len(cal.levels),
            "works": [cal.work(e.level) for e in cal.levels],
        }
    )
    return 0


def cmd_ece(args) -> int:
    config = _load_scenario(args)
    pps = [parse_pass_probability(tok) for tok in args.pp.split(",")]
    if not pps:
        raise ValueError("at least one pass probability is required")
    out = _OutDir(args.out)
    rows = []
    for tok, pp in zip(args.pp.split(","), pps):
        rep = simnet.measure_ece(config, pp=pp)
        ratio = rep.attempts_at_pp / rep.attempts_at_one
        ci_half = 1.96 * ratio * (1 / rep.attempts_at_pp + 1 / rep.attempts_at_one) ** 0.5
        rows.append(
            [tok, rep.ece, ci_half, rep.attempts_at_pp, rep.attempts_at_one,
             rep.blocks_at_pp, rep.blocks_at_one]
        )
    out.write_text(
        "ece.csv",
        _csv_text(
            ["pp", "ece", "ci_half", "attempts_pp", "attempts_ref", "blocks_pp",
             "blocks_ref"],
            rows,
        ),
    )
    report.ece_curve(
        [float(pp) for pp in pps],
        [r[1] for r in rows],
        [r[2] for r in rows],
        out.file("figures/ece_vs_pp.png"),
    )
    out.adopt("figures/ece_vs_pp.png")
    out.write_summary(
        {
            "command": "ece",
            "effective_config": simnet.scenario_to_dict(config),
            "pp_list": args.pp.split(","),
            "ece": {tok: r[1] for tok, r in zip(args.pp.split(","), rows)},
        }
    )
    return 0


def cmd_attack(args) -> int:
    config = _load_scenario(args)
    fractions = [float(tok) for tok in args.fractions.split(",")]
    for q in fractions:
        if not 0 <= q < 1:
            raise ValueError(f"fraction out of range [0, 1): {q}")
    z = args.confirmations
    out = _OutDir(args.out)
    rows = []
    for q in fractions:
        outcome = simnet.attack_experiment(
            config, q, z, trials=args.trials, horizon_blocks=args.horizon
        )
        n_adv = round(q * config.node_count)
        q_eff = n_adv / config.node_count
        analytic = doublespend.double_spend_success_prob(q_eff, z)
        rows.append(
            [q, z, outcome.trials, outcome.successes, outcome.success_rate,
             outcome.ci_low, outcome.ci_high, analytic]
        )
    out.write_text(
        "attack.csv",
        _csv_text(
            ["fraction", "confirmations", "trials", "successes", "success_rate",
             "ci_low", "ci_high", "analytic_prob"],
            rows,
        ),
    )
    report.attack_curves(
        fractions,
        [r[4] for r in rows],
        [r[5] for r in rows],
        [r[6] for r in rows],
        [r[7] for r in rows],
        z,
        out.file("figures/attack_success.png"),
    )
    out.adopt("figures/attack_success.png")
    out.write_summary(
        {
            "command": "attack",
            "effective_config": simnet.scenario_to_dict(config),
            "confirmations": z,
            "trials": args.trials,
            "success_rates": {str(q): r[4] for q, r in zip(fractions, rows)},
        }
    )
    return 0


def cmd_pds(args) -> int:
    params = doublespend.PdsParams(
        tx_value=args.tx_value,
        attacker_share=args.share,
        rental_cost_per_block=args.rental_cost,
        block_reward=args.reward,
        max_z=args.max_z,
        horizon_blocks=args.horizon,
    )
    curve = [doublespend.attack_profit(params, z) for z in range(params.max_z + 1)]
    required = doublespend.required_confirmations(params)
    out = _OutDir(args.out)
    verdict = {
        "params": {
            "tx_value": params.tx_value,
            "attacker_share": params.attacker_share,
            "rental_cost_per_block": params.rental_cost_per_block,
            "block_reward": params.block_reward,
            "max_z": params.max_z,
            "horizon_blocks": params.horizon_blocks,
        },
        "success_prob": [p.success_prob for p in curve],
        "profit_curve": [p.profit for p in curve],
        "required_z": required,
    }
    out.write_text("pds.json", json.dumps(verdict, indent=2, sort_keys=True) + "\n")
    out.write_text(
        "pds.csv",
        _csv_text(
            ["z", "success_prob", "expected_duration_blocks", "revenue", "cost",
             "profit"],
            [[p.z, p.success_prob, p.expected_duration_blocks, p.revenue, p.cost,
              p.profit] for p in curve],
        ),
    )
    report.profit_curve(
        [p.z for p in curve],
        [p.profit for p in curve],
        required,
        out.file("figures/profit_curve.png"),
    )
    out.adopt("figures/profit_curve.png")
    out.write_summary({"command": "pds", "required_z": required})
    print(json.dumps({"required_z": required}))
    return 0


def cmd_export_chain(args) -> int:
    config = _load_scenario(args)
    if config.fidelity != "concrete":
        raise ValueError("export-chain needs fidelity: concrete blocks carry full headers")
    metrics, store = simnet.run_with_store(config)
    lines = chain.export_chain(store)
    params = chain.ConsensusParams(
        pass_probability=config.pass_probability,
        target_interval_s=config.target_interval_s,
        retarget_window=config.retarget_window if config.auto_difficulty else 0,
        initial_level=config.level,
    )
    chain.import_chain(lines, params)  # exported chains must replay cleanly
    out = _OutDir(args.out)
    out.write_text("chain.txt", "\n".join(lines) + "\n")
    out.write_summary(
        {
            "command": "export-chain",
            "effective_config": simnet.scenario_to_dict(config),
            "blocks": len(lines),
            "canonical_height": metrics.honest_height,
        }
    )
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="greenbtc",
        description="Energy-gated consensus simulator and analysis tool",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config_required=True):
        if config_required:
            p.add_argument("--config", required=True, help="scenario JSON path")
        p.add_argument("--seed", type=int, default=None,
                       help="override the config seed (GREENBTC_SEED wins over both)")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--verbose", action="store_true")

    p_run = sub.add_parser("run", help="execute one scenario")
    common(p_run)
    p_run.add_argument("--mode", choices=["concrete", "abstract"], default=None,
                       help="override the scenario fidelity")
    p_run.set_defaults(func=cmd_run)

    p_cal = sub.add_parser("calibrate", help="measure solve probability per level")
    common(p_cal, config_required=False)
    p_cal.add_argument("--samples", type=int, default=5000,
                       help="decoder samples per level")
    p_cal.add_argument("--jobs", type=int, default=1, help="parallel workers")
    p_cal.set_defaults(func=cmd_calibrate)

    p_ece = sub.add_parser("ece", help="energy efficiency over pass probabilities")
    common(p_ece)
    p_ece.add_argument("--pp", required=True,
                       help="comma list of pass probabilities, e.g. 0.1,0.5,1")
    p_ece.set_defaults(func=cmd_ece)

    p_atk = sub.add_parser("attack", help="double-spend race experiments")
    common(p_atk)
    p_atk.add_argument("--fractions", required=True,
                       help="comma list of adversary shares, e.g. 0.1,0.3")
    p_atk.add_argument("--confirmations", type=int, default=6)
    p_atk.add_argument("--trials", type=int, default=10000)
    p_atk.add_argument("--horizon", type=int, default=400,
                       help="race gives up after this many blocks")
    p_atk.set_defaults(func=cmd_attack)

    p_pds = sub.add_parser("pds", help="double-spend profitability verdict")
    p_pds.add_argument("--out", required=True)
    p_pds.add_argument("--tx-value", type=float, required=True)
    p_pds.add_argument("--share", type=float, required=True)
    p_pds.add_argument("--rental-cost", type=float, required=True)
    p_pds.add_argument("--reward", type=float, required=True)
    p_pds.add_argument("--max-z", type=int, default=100)
    p_pds.add_argument("--horizon", type=int, default=100)
    p_pds.set_defaults(func=cmd_pds)

    p_exp = sub.add_parser("export-chain", help="write the canonical chain as hex lines")
    common(p_exp)
    p_exp.add_argument("--mode", choices=["concrete", "abstract"], default=None)
    p_exp.set_defaults(func=cmd_export_chain)

    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
