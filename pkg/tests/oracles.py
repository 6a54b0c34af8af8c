"""Independent reference implementations used as test oracles.

Nothing here imports the package's solver or numerics code; these are slow,
obvious versions written from the definitions.
"""

import itertools
import math

import numpy as np


def within_matrix(points, radius):
    P = np.asarray(points, dtype=float)
    n = len(P)
    return [[math.dist(P[i], P[j]) <= radius for j in range(n)] for i in range(n)]


def assignment_exists(within, targets, alpha, kappa):
    """Exhaustive backtracking over every target -> selected-candidate map."""
    sel = [j for j in range(len(within)) if j in alpha]
    cap = {j: (len(targets) if math.isinf(kappa) else int(kappa)) for j in sel}
    order = list(targets)

    def rec(k):
        if k == len(order):
            return True
        i = order[k]
        for j in sel:
            if within[i][j] and cap[j] > 0:
                cap[j] -= 1
                if rec(k + 1):
                    return True
                cap[j] += 1
        return False

    return rec(0)


def optimum_by_enumeration(within, targets, kappa):
    """Smallest |alpha| over all 2^n selections admitting a valid assignment."""
    n = len(within)
    best = None
    for mask in range(1 << n):
        alpha = {j for j in range(n) if mask >> j & 1}
        if best is not None and len(alpha) >= best:
            continue
        if assignment_exists(within, targets, alpha, kappa):
            best = len(alpha)
    return best


def optimum_by_milp(points, targets, radius, kappa):
    """Integer program for the capacitated cover, solved with scipy's MILP."""
    from scipy.optimize import LinearConstraint, milp

    within = within_matrix(points, radius)
    n, Q = len(within), list(targets)
    if not Q:
        return 0
    pairs = [(i, j) for i in Q for j in range(n) if within[i][j]]
    nv = n + len(pairs)
    c = np.zeros(nv)
    c[:n] = 1
    rows, lo, hi = [], [], []
    for i in Q:
        r = np.zeros(nv)
        for k, (a, _) in enumerate(pairs):
            if a == i:
                r[n + k] = 1
        rows.append(r), lo.append(1), hi.append(1)
    cap = len(Q) if math.isinf(kappa) else kappa
    for j in range(n):
        r = np.zeros(nv)
        for k, (_, b) in enumerate(pairs):
            if b == j:
                r[n + k] = 1
        r[j] = -cap
        rows.append(r), lo.append(-np.inf), hi.append(0)
    res = milp(c, constraints=LinearConstraint(np.array(rows), lo, hi), integrality=np.ones(nv),
               bounds=(0, 1))
    assert res.success
    return int(round(res.fun))


def kcenter_radius(points, centres):
    P = np.asarray(points, dtype=float)
    return max(min(math.dist(p, P[c]) for c in centres) for p in P)


def optimal_kcenter_radius(points, k):
    n = len(points)
    return min(kcenter_radius(points, c) for c in itertools.combinations(range(n), k))


def chi2_cdf_quad(x, d):
    """CDF by adaptive quadrature of the density."""
    from scipy.integrate import quad

    if x <= 0:
        return 0.0
    logc = -(d / 2) * math.log(2) - math.lgamma(d / 2)

    def pdf(t):
        return math.exp(logc + (d / 2 - 1) * math.log(t) - t / 2) if t > 0 else 0.0

    # split at the mode region so the integrable singularity at 0 (d=1) is handled
    a = min(x, 1.0)
    v1 = quad(pdf, 0, a, limit=200, epsabs=1e-14, epsrel=1e-13)[0]
    v2 = quad(pdf, a, x, limit=200, epsabs=1e-14, epsrel=1e-13)[0] if x > a else 0.0
    return v1 + v2
