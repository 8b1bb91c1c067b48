"""
The Bell game: each trial is won when the outcomes agree and at least one setting
is 1, or when they disagree and both settings are 2. Under local realism with
uniformly random settings no strategy wins more than 3/4 of the trials, whatever
happened before, so the win count is stochastically smaller than Bin(N, 3/4).
"""

from __future__ import annotations

from dataclasses import dataclass

from bell_data import DegenerateDataError
from config import LOCAL_WIN_BOUND, SETTING_PAIRS, TSIRELSON_WIN_RATE
from stat_dist import TailProb, binom_sf


@dataclass(frozen=True)
class GameResult:
    wins: int
    trials: int
    win_rate: float
    p: TailProb
    block_trials: tuple = ()
    lr_bound: float = LOCAL_WIN_BOUND
    tsirelson_rate: float = TSIRELSON_WIN_RATE


def _block_wins(a, b, table):
    (pp, pm), (mp, mm) = table.counts
    if (a, b) == (2, 2):
        return pm + mp
    return pp + mm


def count_wins(ds):
    """Return (wins, trials) for a canonical dataset."""
    wins = sum(_block_wins(a, b, ds.table(a, b)) for a, b in SETTING_PAIRS)
    return wins, sum(ds.trials)


def bell_game_test(ds):
    wins, trials = count_wins(ds)
    if trials == 0:
        raise DegenerateDataError(f"{ds.name}: no trials to score")
    return GameResult(
        wins=wins,
        trials=trials,
        win_rate=wins / trials,
        p=binom_sf(trials, LOCAL_WIN_BOUND, wins),
        block_trials=tuple(ds.trials),
    )
