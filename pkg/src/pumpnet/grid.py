"""Integer channel arithmetic on the 100-GHz ITU DWDM grid.

Channels are identified by integer index n (written "Cn"), with the absolute
frequency fixed by the grid anchor: f(n) = anchor + n * spacing. All physics
comparisons downstream work on integer indices, never on floating-point
frequencies, so energy-conservation checks are exact.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator

GRID_SPACING_THZ = 0.1
DEFAULT_ANCHOR_THZ = 190.0
DEFAULT_MIN_INDEX = 1
DEFAULT_MAX_INDEX = 72


class ChannelError(ValueError):
    """Malformed channel or out-of-bounds channel arithmetic."""


@dataclass(frozen=True, order=True)
class Channel:
    """A single 100-GHz grid channel, e.g. Channel(40) is C40."""

    index: int

    def __post_init__(self):
        if isinstance(self.index, bool) or not isinstance(self.index, int):
            raise ChannelError(f"channel index must be an integer, got {self.index!r}")

    def __str__(self):
        return f"C{self.index}"


def as_channel(value) -> Channel:
    """Coerce a Channel, bare integer index, or 'C<n>' string to a Channel."""
    if isinstance(value, Channel):
        return value
    if isinstance(value, int) and not isinstance(value, bool):
        return Channel(value)
    if isinstance(value, str):
        text = value.strip()
        body = text[1:] if text[:1] in ("C", "c") else text
        try:
            return Channel(int(body))
        except ValueError:
            raise ChannelError(f"cannot parse channel from {value!r}") from None
    raise ChannelError(f"cannot parse channel from {value!r}")


@dataclass(frozen=True)
class ChannelGrid:
    """Inclusive channel-index bounds plus the index-to-frequency convention."""

    min_index: int = DEFAULT_MIN_INDEX
    max_index: int = DEFAULT_MAX_INDEX
    spacing_thz: float = GRID_SPACING_THZ
    anchor_thz: float = DEFAULT_ANCHOR_THZ

    def __post_init__(self):
        if self.min_index >= self.max_index:
            raise ChannelError(
                f"grid bounds must satisfy min < max, got [{self.min_index}, {self.max_index}]"
            )
        if self.spacing_thz <= 0:
            raise ChannelError(f"grid spacing must be positive, got {self.spacing_thz}")

    def contains(self, channel) -> bool:
        idx = as_channel(channel).index
        return self.min_index <= idx <= self.max_index

    def validate(self, channel) -> Channel:
        """Return the channel if it lies in the grid, else raise ChannelError."""
        ch = as_channel(channel)
        if not self.contains(ch):
            raise ChannelError(
                f"{ch} outside grid C{self.min_index}..C{self.max_index}"
            )
        return ch

    def channels(self) -> Iterator[Channel]:
        for idx in range(self.min_index, self.max_index + 1):
            yield Channel(idx)

    def to_json_dict(self) -> dict:
        return {
            "min": self.min_index,
            "max": self.max_index,
            "spacing_thz": self.spacing_thz,
            "anchor_thz": self.anchor_thz,
        }

    @classmethod
    def from_json_dict(cls, data: dict) -> "ChannelGrid":
        return cls(
            min_index=int(data.get("min", DEFAULT_MIN_INDEX)),
            max_index=int(data.get("max", DEFAULT_MAX_INDEX)),
            spacing_thz=float(data.get("spacing_thz", GRID_SPACING_THZ)),
            anchor_thz=float(data.get("anchor_thz", DEFAULT_ANCHOR_THZ)),
        )


def channel_frequency(grid: ChannelGrid, channel) -> float:
    """Absolute frequency in THz of a channel on the grid.

    The index arithmetic is exact; only the final product/sum is floating point.
    """
    ch = grid.validate(channel)
    return grid.anchor_thz + ch.index * grid.spacing_thz


def index_sum(a, b) -> int:
    """Sum of two channel indices.

    On a uniform grid, two channel pairs carry the same total frequency
    exactly when their index sums are equal, so pair-generation energy
    conservation reduces to integer equality on this value.
    """
    return as_channel(a).index + as_channel(b).index
