import json
import os
from collections import defaultdict


DEFAULT_LIMIT = 128


class LRUCache:
    def __init__(self, capacity=DEFAULT_LIMIT):
        self.capacity = capacity
        self.entries = {}
        self.order = []

    def get(self, key):
        if key not in self.entries:
            return None
        self.order.remove(key)
        self.order.append(key)
        return self.entries[key]

    def put(self, key, value):
        if key in self.entries:
            self.order.remove(key)
        elif len(self.entries) >= self.capacity:
            oldest = self.order.pop(0)
            del self.entries[oldest]
        self.entries[key] = value
        self.order.append(key)


def load_config(path):
    with open(path, "r", encoding="utf-8") as handle:
        data = json.load(handle)
    data.setdefault("limit", DEFAULT_LIMIT)
    return data


def walk_sources(root, suffix=".py"):
    for dirpath, _dirs, files in os.walk(root):
        for name in sorted(files):
            if name.endswith(suffix):
                yield os.path.join(dirpath, name)


def count_tokens(text):
    count = 0
    in_word = False
    for ch in text:
        if ch.isalnum() or ch == "_":
            if not in_word:
                count += 1
                in_word = True
        else:
            in_word = False
            if not ch.isspace():
                count += 1
    return count


def group_by_extension(paths):
    groups = defaultdict(list)
    for path in paths:
        _, ext = os.path.splitext(path)
        groups[ext or "<none>"].append(path)
    return dict(groups)


@staticmethod
def clamp(value, low, high):
    if value < low:
        return low
    if value > high:
        return high
    return value


def merge_intervals(intervals):
    merged = []
    for start, end in sorted(intervals):
        if merged and start <= merged[-1][1]:
            merged[-1] = (merged[-1][0], max(merged[-1][1], end))
        else:
            merged.append((start, end))
    return merged


def levenshtein(a, b):
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, 1):
        cur = [i]
        for j, cb in enumerate(b, 1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (ca != cb)))
        prev = cur
    return prev[-1]


class Tokenizer:
    def __init__(self, vocab):
        self.vocab = sorted(vocab, key=len, reverse=True)

    def encode(self, text):
        pieces = []
        pos = 0
        while pos < len(text):
            for piece in self.vocab:
                if text.startswith(piece, pos):
                    pieces.append(piece)
                    pos += len(piece)
                    break
            else:
                pieces.append(text[pos])
                pos += 1
        return pieces


def knapsack(items, budget):
    best = [0] * (budget + 1)
    for score, cost in items:
        for c in range(budget, cost - 1, -1):
            best[c] = max(best[c], best[c - cost] + score)
    return best[budget]


async def fetch_all(client, urls):
    results = []
    for url in urls:
        response = await client.get(url)
        results.append(response.status)
    return results


def summarize(records, key="latency"):
    values = [r[key] for r in records if key in r]
    if not values:
        return {"count": 0}
    values.sort()
    mid = len(values) // 2
    return {
        "count": len(values),
        "min": values[0],
        "max": values[-1],
        "median": values[mid],
        "mean": sum(values) / len(values),
    }
