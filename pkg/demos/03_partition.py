"""Prefix partitioning of candidate words into bounded subsets."""

from __future__ import annotations

from topickg.refine import topic_partition

words = ["apple", "apricot", "ap", "banana", "blueberry", "blackberry", "cherry"]
for t in (1, 2, 3, 50):
    print(f"T={t:<3d}", topic_partition(words, t))

# A word that is the whole shared prefix of an oversized bucket stays, alone.
print(topic_partition({"ap", "apple", "apricot"}, 1))
