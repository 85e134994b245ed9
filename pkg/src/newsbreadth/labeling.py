"""Weekly returns and the twelve U/D movement labels."""

from __future__ import annotations

import bisect
import math
import re
from dataclasses import dataclass
from datetime import date
from enum import Enum

from .market_data import DailyBar

# Upper (exclusive) bounds of bands 1..5 as fractions; |r| >= 0.05 is band 5+.
BAND_EDGES = (0.01, 0.02, 0.03, 0.04, 0.05)
BANDS = ("1", "2", "3", "4", "5", "5+")

LABEL_PATTERN = re.compile(r"(?<![A-Za-z0-9])([UD])([1-5])(\+?)(?![0-9])", re.IGNORECASE)


class Direction(str, Enum):
    UP = "Up"
    DOWN = "Down"


@dataclass(frozen=True, order=True)
class MovementLabel:
    direction: Direction
    band: str

    def __post_init__(self):
        if self.band not in BANDS:
            raise ValueError(f"invalid band {self.band!r}")
        if not isinstance(self.direction, Direction):
            object.__setattr__(self, "direction", Direction(self.direction))

    def __str__(self) -> str:
        return ("U" if self.direction is Direction.UP else "D") + self.band

    @classmethod
    def parse(cls, token: str) -> MovementLabel:
        """Parse ``"U3"``, ``"d5+"`` and so on. Surrounding whitespace is ignored."""
        token = token.strip().upper()
        m = re.fullmatch(r"([UD])([1-5])(\+?)", token)
        if not m or (m.group(3) and m.group(2) != "5"):
            raise ValueError(f"not a movement label: {token!r}")
        return cls(Direction.UP if m.group(1) == "U" else Direction.DOWN, m.group(2) + m.group(3))


ALL_LABELS = tuple(MovementLabel(d, b) for d in Direction for b in BANDS)


def find_label(text: str) -> MovementLabel | None:
    """First valid label token in ``text``, or None."""
    for m in LABEL_PATTERN.finditer(text):
        digit, plus = m.group(2), m.group(3)
        if plus and digit != "5":
            continue
        return MovementLabel.parse(m.group(0))
    return None


@dataclass(frozen=True)
class ReturnSeries:
    dates: tuple[date, ...]
    closes: tuple[float, ...]
    returns: tuple[float, ...]
    prior_close: float

    def __len__(self):
        return len(self.dates)


def _check_price(value: float, what: str) -> None:
    if not (math.isfinite(value) and value > 0):
        raise ValueError(f"{what} must be a positive finite price, got {value!r}")


def daily_returns(bars: list[DailyBar], prior_close: float) -> ReturnSeries:
    """Simple day-over-day returns; the first is measured against ``prior_close``."""
    if not bars:
        raise ValueError("no bars")
    _check_price(prior_close, "prior close")
    prev = prior_close
    rets = []
    for bar in bars:
        _check_price(bar.close, f"close on {bar.date}")
        rets.append(bar.close / prev - 1.0)
        prev = bar.close
    dates = tuple(b.date for b in bars)
    if any(b >= a for a, b in zip(dates[1:], dates)):
        raise ValueError("bars must be in ascending date order")
    return ReturnSeries(dates, tuple(b.close for b in bars), tuple(rets), prior_close)


def weekly_return(prior_close: float, final_close: float) -> float:
    _check_price(prior_close, "prior close")
    _check_price(final_close, "final close")
    return final_close / prior_close - 1.0


def movement_label(weekly_ret: float) -> MovementLabel:
    """Map a weekly return to its band: ``[(k-1)%, k%)`` is band k, ``>= 5%`` is 5+.

    Zero maps to U1.
    """
    if not math.isfinite(weekly_ret):
        raise ValueError(f"non-finite return {weekly_ret!r}")
    direction = Direction.UP if weekly_ret >= 0 else Direction.DOWN
    band = BANDS[bisect.bisect_right(BAND_EDGES, abs(weekly_ret))]
    return MovementLabel(direction, band)


def direction(label: MovementLabel) -> Direction:
    return label.direction
