"""Prefix-count reference for bounded prefix partitioning.

Written without the bucket recursion: the subset of a word ``w`` is the set
of labels sharing the shortest prefix ``w[:L]`` (``L >= 1``) that at most
``T`` labels share.  A word whose every prefix, itself included, is shared by
more than ``T`` labels ends up alone.
"""

from __future__ import annotations

from bisect import bisect_left


def _prefix_range(sorted_labels: list[str], prefix: str) -> tuple[int, int]:
    lo = bisect_left(sorted_labels, prefix)
    hi = bisect_left(sorted_labels, prefix[:-1] + chr(ord(prefix[-1]) + 1))
    return lo, hi


def oracle_partition(labels, max_size: int) -> list[list[str]]:
    words = sorted(set(labels))
    subsets: dict[tuple[int, int] | str, list[str]] = {}
    for w in words:
        for length in range(1, len(w) + 1):
            lo, hi = _prefix_range(words, w[:length])
            if hi - lo <= max_size:
                subsets[(lo, hi)] = words[lo:hi]
                break
        else:
            subsets[w] = [w]
    return sorted(subsets.values(), key=lambda s: s[0])
