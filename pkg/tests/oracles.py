"""Independent brute-force reimplementations used as test oracles.

Everything here is written with plain Python loops and math.fsum, on
purpose: these functions must stay independent of the numpy-vectorized
production paths they check. The tie-break law (seeded uniform choice
keyed by (seed, query index)) is part of the contract and is replicated
here so classifications can be compared exactly.
"""
import math

from embedlens.seeding import derive_rng


def unit(v):
    norm = math.sqrt(math.fsum(x * x for x in v))
    return [x / norm for x in v]


def dot(a, b):
    return math.fsum(x * y for x, y in zip(a, b))


def spherical_centroid(rows):
    units = [unit(r) for r in rows]
    summed = [math.fsum(u[j] for u in units) for j in range(len(units[0]))]
    return unit(summed)


def codiff(a, b):
    return 1.0 - min(1.0, max(-1.0, dot(unit(a), unit(b))))


def class_centroid_distance(rows):
    centroid = spherical_centroid(rows)
    return math.fsum(codiff(r, centroid) ** 2 for r in rows) / len(rows)


def centroid_shift(a_rows, b_rows):
    return codiff(spherical_centroid(a_rows), spherical_centroid(b_rows))


def _pick_max(sims, seed, query_index):
    best = max(sims)
    tied = [i for i, s in enumerate(sims) if s == best]
    if len(tied) == 1:
        return tied[0]
    return tied[derive_rng(seed, query_index).integers(len(tied))]


def centroid_predictions(ref_classes, query_classes, seed):
    """Predicted class per query, scanning every (query, centroid) pair."""
    class_ids = list(ref_classes)
    centroids = [spherical_centroid(ref_classes[cid]) for cid in class_ids]
    predictions = []
    qi = 0
    for cid in query_classes:
        for row in query_classes[cid]:
            q = unit(row)
            sims = [dot(q, c) for c in centroids]
            predictions.append(class_ids[_pick_max(sims, seed, qi)])
            qi += 1
    return predictions


def knn_predictions(ref_classes, query_classes, k, seed):
    """Predicted class per query via a full O(|Q|*|R|) scan and majority
    vote; top-k selection breaks similarity ties by entry index, vote ties
    by nearest member then seeded choice."""
    entries = []
    for cid in ref_classes:
        for row in ref_classes[cid]:
            entries.append((cid, unit(row)))
    predictions = []
    qi = 0
    for cid in query_classes:
        for row in query_classes[cid]:
            q = unit(row)
            sims = [(dot(q, vec), -i) for i, (_, vec) in enumerate(entries)]
            order = sorted(range(len(entries)), key=lambda i: sims[i], reverse=True)
            chosen = order[:k]
            votes = {}
            for i in chosen:
                votes[entries[i][0]] = votes.get(entries[i][0], 0) + 1
            top = max(votes.values())
            leaders = [c for c, n in votes.items() if n == top]
            if len(leaders) > 1:
                best_sim = {
                    c: max(sims[i][0] for i in chosen if entries[i][0] == c)
                    for c in leaders
                }
                peak = max(best_sim.values())
                leaders = [c for c in leaders if best_sim[c] == peak]
            if len(leaders) > 1:
                leaders.sort()
                pick = leaders[derive_rng(seed, qi).integers(len(leaders))]
            else:
                pick = leaders[0]
            predictions.append(pick)
            qi += 1
    return predictions
