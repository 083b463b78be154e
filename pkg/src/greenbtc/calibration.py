"""Empirical solve-probability table and the work weights built on it.

Every difficulty level's solve probability is measured by Monte Carlo
(`estimate_solve_prob`); a level too hard to resolve at desk scale gets
a log-linear extrapolation in n from the measured levels and is marked
as such.  Work per block is the expected attempt count 1/p, rounded,
then forced strictly increasing so fork choice never treats a harder
level as lighter.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from importlib import resources

import numpy as np

from . import eccpow


@dataclass(frozen=True)
class LevelEstimate:
    level: int
    n: int
    wc: int
    wr: int
    max_iter: int
    p_hat: float
    std_err: float
    samples: int
    extrapolated: bool


@dataclass(frozen=True)
class Calibration:
    levels: tuple[LevelEstimate, ...]

    def __post_init__(self) -> None:
        for i, est in enumerate(self.levels):
            if est.level != i:
                raise ValueError("calibration levels must be 0..k in order")
            if not 0 < est.p_hat <= 1:
                raise ValueError(f"level {i}: p_hat must be in (0, 1]")

    def p_hat(self, level: int) -> float:
        return self.levels[level].p_hat

    def work(self, level: int) -> int:
        return self._works()[level]

    def _works(self) -> tuple[int, ...]:
        works: list[int] = []
        for est in self.levels:
            w = max(1, round(1.0 / est.p_hat))
            if works and w <= works[-1]:
                w = works[-1] + 1
            works.append(w)
        return tuple(works)

    def to_json(self) -> str:
        return json.dumps(
            {"levels": [asdict(est) for est in self.levels]},
            indent=2,
            sort_keys=True,
        )

    @staticmethod
    def from_json(text: str) -> "Calibration":
        data = json.loads(text)
        return Calibration(
            levels=tuple(LevelEstimate(**row) for row in data["levels"])
        )


_DEFAULT: Calibration | None = None


def default_calibration() -> Calibration:
    """The table shipped with the package (regenerate via the CLI)."""
    global _DEFAULT
    if _DEFAULT is None:
        text = resources.files("greenbtc.data").joinpath("calibration.json").read_text()
        _DEFAULT = Calibration.from_json(text)
    return _DEFAULT


def _measure_level(
    params: eccpow.CodeParams, samples: int, seed: int
) -> eccpow.SolveEstimate:
    rng = np.random.default_rng(np.random.SeedSequence([seed, params.level]))
    return eccpow.estimate_solve_prob(params, samples, rng)


def calibrate(
    table: tuple[eccpow.CodeParams, ...],
    samples: int,
    seed: int,
    min_hits: int = 20,
    jobs: int = 1,
) -> Calibration:
    """Measure the table; extrapolate levels with too few hits.

    Levels whose hit count falls below ``min_hits`` cannot be resolved
    at the given sample budget, so their probability comes from a
    log-linear fit of ln(p) against n over the well-measured levels.
    Each level draws from its own seed stream, so the result does not
    depend on ``jobs``.
    """
    if jobs > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=jobs) as pool:
            estimates = list(
                pool.map(_measure_level, table, [samples] * len(table), [seed] * len(table))
            )
    else:
        estimates = [_measure_level(params, samples, seed) for params in table]
    measured = list(zip(table, estimates))

    anchors = [
        (p.n, est.p_hat)
        for p, est in measured
        if est.p_hat * est.samples >= min_hits
    ]
    if len(anchors) < 2:
        raise ValueError("not enough resolvable levels to calibrate")
    xs = np.array([a[0] for a in anchors], dtype=float)
    ys = np.log(np.array([a[1] for a in anchors], dtype=float))
    slope, intercept = np.polyfit(xs, ys, 1)

    levels = []
    for params, est in measured:
        hits = est.p_hat * est.samples
        if hits >= min_hits:
            levels.append(
                LevelEstimate(
                    level=params.level,
                    n=params.n,
                    wc=params.wc,
                    wr=params.wr,
                    max_iter=params.max_iter,
                    p_hat=est.p_hat,
                    std_err=est.std_err,
                    samples=est.samples,
                    extrapolated=False,
                )
            )
        else:
            p_fit = float(math.exp(intercept + slope * params.n))
            levels.append(
                LevelEstimate(
                    level=params.level,
                    n=params.n,
                    wc=params.wc,
                    wr=params.wr,
                    max_iter=params.max_iter,
                    p_hat=min(p_fit, 1.0),
                    std_err=0.0,
                    samples=est.samples,
                    extrapolated=True,
                )
            )
    return Calibration(levels=tuple(levels))
