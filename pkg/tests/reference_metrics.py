"""Slow, loop-based reference implementations of every metric.

Written independently of the package (plain Python lists, math.fsum, no
numpy reductions) so the vectorized versions have something honest to be
checked against. Bin rule: value v in [lo, hi] lands in
floor((v - lo) / (hi - lo) * m), capped at m - 1.
"""

import math


def _bin_of(v, lo, hi, m):
    if hi <= lo:
        return 0
    b = int(math.floor((v - lo) / (hi - lo) * m))
    if b < 0:
        b = 0
    if b > m - 1:
        b = m - 1
    return b


def ref_accuracy(probs, labels):
    hits = [1.0 if max(range(len(p)), key=p.__getitem__) == y else 0.0
            for p, y in zip(probs, labels)]
    return math.fsum(hits) / len(hits)


def ref_ece(probs, labels, m):
    n = len(labels)
    bins = [[] for _ in range(m)]
    for p, y in zip(probs, labels):
        pred = max(range(len(p)), key=p.__getitem__)
        conf = p[pred]
        bins[_bin_of(conf, 0.0, 1.0, m)].append((conf, 1.0 if pred == y else 0.0))
    total = 0.0
    for members in bins:
        if not members:
            continue
        acc = math.fsum(hit for _, hit in members) / len(members)
        avg_conf = math.fsum(conf for conf, _ in members) / len(members)
        total += len(members) / n * abs(acc - avg_conf)
    return total


def ref_brier(probs, labels):
    per_sample = []
    for p, y in zip(probs, labels):
        terms = [(pj - (1.0 if j == y else 0.0)) ** 2 for j, pj in enumerate(p)]
        per_sample.append(math.fsum(terms))
    return math.fsum(per_sample) / len(per_sample)


def ref_nll(probs, labels, floor=1e-12):
    logs = [-math.log(max(p[y], floor)) for p, y in zip(probs, labels)]
    return math.fsum(logs) / len(logs)


def ref_uce(means, variances, targets, m):
    n = len(means)
    lo, hi = min(variances), max(variances)
    bins = [[] for _ in range(m)]
    for mu, var, y in zip(means, variances, targets):
        bins[_bin_of(var, lo, hi, m)].append(((mu - y) ** 2, var))
    total = 0.0
    for members in bins:
        if not members:
            continue
        mse = math.fsum(se for se, _ in members) / len(members)
        mv = math.fsum(var for _, var in members) / len(members)
        total += len(members) / n * abs(mse - mv)
    return total


def ref_ence(means, variances, targets, m):
    lo, hi = min(variances), max(variances)
    bins = [[] for _ in range(m)]
    for mu, var, y in zip(means, variances, targets):
        bins[_bin_of(var, lo, hi, m)].append(((mu - y) ** 2, var))
    total = 0.0
    occupied = 0
    for members in bins:
        if not members:
            continue
        occupied += 1
        rmse = math.sqrt(math.fsum(se for se, _ in members) / len(members))
        rmv = math.sqrt(math.fsum(var for _, var in members) / len(members))
        if rmv == 0.0:
            if rmse == 0.0:
                continue
            return math.inf
        total += abs(rmse - rmv) / rmv
    return total / occupied


def ref_rmse(means, targets):
    return math.sqrt(math.fsum((mu - y) ** 2 for mu, y in zip(means, targets)) / len(means))


def ref_mape(means, targets):
    if any(y == 0.0 for y in targets):
        return None
    ratios = [abs(mu - y) / abs(y) for mu, y in zip(means, targets)]
    return 100.0 * math.fsum(ratios) / len(ratios)


def ref_weighted_ce(probs, labels_a, labels_b, coeffs, floor=1e-12):
    """Convex-combination cross-entropy, one term per pair member."""
    terms = []
    for p, ya, yb, c in zip(probs, labels_a, labels_b, coeffs):
        terms.append(-c * math.log(max(p[ya], floor))
                     - (1.0 - c) * math.log(max(p[yb], floor)))
    return math.fsum(terms) / len(terms)
