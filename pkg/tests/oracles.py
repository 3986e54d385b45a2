"""Naive reference implementations used to cross-check the package.

Everything here is written with plain Python loops and the ``math`` module,
without numpy or the package under test, so that agreement is meaningful.
"""

import math


def mean(xs):
    return sum(xs) / len(xs)


def pop_var(xs):
    m = mean(xs)
    return sum((x - m) ** 2 for x in xs) / len(xs)


def pop_cov(xs, ys):
    mx, my = mean(xs), mean(ys)
    return sum((x - mx) * (y - my) for x, y in zip(xs, ys)) / len(xs)


def ccc(t, p):
    num = 2 * pop_cov(t, p)
    den = pop_var(t) + pop_var(p) + (mean(t) - mean(p)) ** 2
    if den == 0:
        return 1.0
    return num / den


def pcc(t, p):
    return pop_cov(t, p) / math.sqrt(pop_var(t) * pop_var(p))


def mae(t, p):
    return sum(abs(a - b) for a, b in zip(t, p)) / len(t)


def average_ranks(xs):
    """1-based ranks with ties sharing the mean rank."""
    order = sorted(range(len(xs)), key=lambda i: xs[i])
    ranks = [0.0] * len(xs)
    i = 0
    while i < len(order):
        j = i
        while j + 1 < len(order) and xs[order[j + 1]] == xs[order[i]]:
            j += 1
        shared = (i + j) / 2 + 1
        for k in range(i, j + 1):
            ranks[order[k]] = shared
        i = j + 1
    return ranks


def spearman(a, b):
    return pcc(average_ranks(a), average_ranks(b))


def per_class_recall_precision(truth, pred, classes):
    recall, precision = {}, {}
    for c in classes:
        tp = sum(1 for t, p in zip(truth, pred) if t == c and p == c)
        n_true = sum(1 for t in truth if t == c)
        n_pred = sum(1 for p in pred if p == c)
        if n_true:
            recall[c] = tp / n_true
        if n_pred:
            precision[c] = tp / n_pred
    return recall, precision


def uar(truth, pred, classes):
    recall, _ = per_class_recall_precision(truth, pred, classes)
    return sum(recall.values()) / len(recall)


def uap(truth, pred, classes):
    _, precision = per_class_recall_precision(truth, pred, classes)
    return sum(precision.values()) / len(precision) if precision else 0.0


def bin_index(x, n_bins):
    """Bin of a value in [0, 1] with equal-width bins; 1.0 goes to the top bin."""
    for b in range(n_bins):
        upper = (b + 1) / n_bins
        if x < upper:
            return b
    return n_bins - 1


def histogram(xs, n_bins):
    counts = [0] * n_bins
    for x in xs:
        counts[bin_index(x, n_bins)] += 1
    return [c / len(xs) for c in counts]


def js_distance(t, p, n_bins=10):
    ht, hp = histogram(t, n_bins), histogram(p, n_bins)
    div = 0.0
    for a, b in zip(ht, hp):
        m = (a + b) / 2
        if a > 0:
            div += 0.5 * a * math.log2(a / m)
        if b > 0:
            div += 0.5 * b * math.log2(b / m)
    return math.sqrt(max(div, 0.0))


def per_bin_recall_precision(t, p, n_bins=4, n_min=0):
    tb = [bin_index(x, n_bins) for x in t]
    pb = [bin_index(x, n_bins) for x in p]
    recall, precision = {}, {}
    for b in range(n_bins):
        n_true = tb.count(b)
        if n_true == 0 or n_true < n_min:
            continue
        hits = sum(1 for x, y in zip(tb, pb) if x == b and y == b)
        n_pred = pb.count(b)
        recall[b] = hits / n_true
        precision[b] = hits / n_pred if n_pred else None
    return recall, precision


def normal_cdf(z):
    return 0.5 * (1 + math.erf(z / math.sqrt(2)))


def snr_db(signal, noise):
    ps = sum(x * x for x in signal) / len(signal)
    pn = sum(x * x for x in noise) / len(noise)
    return 10 * math.log10(ps / pn)
