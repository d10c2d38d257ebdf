"""Inclusive frame intervals and their plain-text file format.

Shot lists and transition lists are sorted lists of 0-based inclusive
``(start, end)`` pairs. Files carry one interval per line as
``start<TAB>end``; predictions and ground truth use the same format.
"""

from __future__ import annotations

from pathlib import Path

from .errors import FormatError

Interval = tuple[int, int]
IntervalList = list[Interval]


def validate_intervals(intervals: IntervalList, what: str = "interval list") -> None:
    """Reject unsorted, overlapping, inverted or negative intervals."""
    prev_end = -1
    for start, end in intervals:
        if start < 0 or end < start:
            raise ValueError(f"{what} contains invalid interval [{start}, {end}]")
        if start <= prev_end:
            raise ValueError(
                f"{what} must be sorted and disjoint; [{start}, {end}] follows end {prev_end}"
            )
        prev_end = end


def complement_intervals(intervals: IntervalList, length: int) -> IntervalList:
    """Gaps of a sorted disjoint interval list within [0, length-1]."""
    validate_intervals(intervals)
    gaps: IntervalList = []
    cursor = 0
    for start, end in intervals:
        if start > cursor:
            gaps.append((cursor, start - 1))
        cursor = end + 1
    if cursor <= length - 1:
        gaps.append((cursor, length - 1))
    return gaps


def write_intervals(path: str | Path, intervals: IntervalList) -> None:
    validate_intervals(intervals)
    lines = [f"{start}\t{end}\n" for start, end in intervals]
    Path(path).write_text("".join(lines))


def read_intervals(path: str | Path) -> IntervalList:
    intervals: IntervalList = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        fields = line.split("\t")
        if len(fields) != 2:
            raise FormatError(f"{path}:{lineno}: expected 'start<TAB>end', got {line!r}")
        try:
            start, end = int(fields[0]), int(fields[1])
        except ValueError as exc:
            raise FormatError(f"{path}:{lineno}: non-integer interval {line!r}") from exc
        intervals.append((start, end))
    try:
        validate_intervals(intervals)
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from exc
    return intervals
