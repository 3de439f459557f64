"""Independent pure-python reference implementations used by the tests.

Deliberately written with scalar loops and the textbook definitions, no numpy,
so they share no code path with the package implementations they check.
"""

import math


def dist(p, q):
    return math.sqrt(sum((a - b) ** 2 for a, b in zip(p, q)))


def _groups(points, labels):
    out = {}
    for point, label in zip(points, labels):
        out.setdefault(label, []).append(point)
    return out


def oracle_silhouette(points, labels):
    groups = _groups(points, labels)
    scores = []
    for point, label in zip(points, labels):
        own = groups[label]
        if len(own) == 1:
            scores.append(0.0)
            continue
        a = sum(dist(point, other) for other in own if other is not point) / (len(own) - 1)
        b = min(
            sum(dist(point, other) for other in members) / len(members)
            for lab, members in groups.items() if lab != label
        )
        denom = max(a, b)
        scores.append(0.0 if denom == 0.0 else (b - a) / denom)
    return sum(scores) / len(scores)


def _centroid(members):
    dim = len(members[0])
    return [sum(p[j] for p in members) / len(members) for j in range(dim)]


def oracle_davies_bouldin(points, labels):
    groups = _groups(points, labels)
    names = list(groups)
    centroids = {lab: _centroid(groups[lab]) for lab in names}
    spreads = {
        lab: sum(dist(p, centroids[lab]) for p in groups[lab]) / len(groups[lab])
        for lab in names
    }
    total = 0.0
    for i in names:
        worst = 0.0
        for j in names:
            if i == j:
                continue
            gap = dist(centroids[i], centroids[j])
            worst = max(worst, (spreads[i] + spreads[j]) / gap)
        total += worst
    return total / len(names)


def oracle_calinski_harabasz(points, labels):
    groups = _groups(points, labels)
    n, k = len(points), len(groups)
    overall = _centroid(points)
    bgss = 0.0
    wgss = 0.0
    for members in groups.values():
        c = _centroid(members)
        bgss += len(members) * sum((a - b) ** 2 for a, b in zip(c, overall))
        for p in members:
            wgss += sum((a - b) ** 2 for a, b in zip(p, c))
    return (bgss / (k - 1)) / (wgss / (n - k))


def oracle_dunn(points, labels):
    groups = _groups(points, labels)
    diameter = 0.0
    for members in groups.values():
        for i in range(len(members)):
            for j in range(i + 1, len(members)):
                diameter = max(diameter, dist(members[i], members[j]))
    names = list(groups)
    gap = math.inf
    for a in range(len(names)):
        for b in range(a + 1, len(names)):
            for p in groups[names[a]]:
                for q in groups[names[b]]:
                    gap = min(gap, dist(p, q))
    return gap / diameter


def oracle_retrieve(chunks, query, tau, k, disease=None):
    """Linear-scan cosine retrieval: list of (chunk_id, score), best first.

    chunks: iterable of (chunk_id, disease, vector-as-list). Scores are
    clamped to [-1, 1]; ties broken by ascending chunk id.
    """
    qnorm = math.sqrt(sum(x * x for x in query))
    scored = []
    for chunk_id, chunk_disease, vector in chunks:
        if disease is not None and chunk_disease != disease:
            continue
        dot = sum(a * b for a, b in zip(vector, query))
        norm = math.sqrt(sum(x * x for x in vector))
        score = dot / (norm * qnorm)
        score = max(-1.0, min(1.0, score))
        if score >= tau:
            scored.append((chunk_id, score))
    scored.sort(key=lambda item: (-item[1], item[0]))
    return scored[:k]
