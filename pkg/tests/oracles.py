"""Independent reference computations used by the tests."""
import math

import numpy as np
from scipy.stats import poisson


def embedded_chain_pgf(kind, lam, tau, z, param=0.0, size=400):
    """Departure-epoch queue-length p.g.f. from the stationary vector of the
    truncated embedded Markov chain.

    kind: "md1", "mv" (param = vacation length) or "st" (param = threshold).
    """
    a = poisson.pmf(np.arange(size), lam * tau)
    P = np.zeros((size, size))
    for i in range(1, size):
        P[i, i - 1:] = a[: size - i + 1]
    if kind == "md1":
        start = np.zeros(size)
        start[1] = 1.0
    elif kind == "mv":
        v = poisson.pmf(np.arange(size), lam * param)
        v[0] = 0.0
        start = v / v.sum()
    elif kind == "st":
        start = np.zeros(size)
        start[int(param)] = 1.0
    else:
        raise ValueError(kind)
    # from 0: begin service with k present, k-1 remain plus arrivals in service
    row0 = np.zeros(size)
    for k in range(1, size):
        if start[k]:
            row0[k - 1:] += start[k] * a[: size - k + 1]
    P[0] = row0
    P /= P.sum(axis=1, keepdims=True)
    w, vecs = np.linalg.eig(P.T)
    pi = np.real(vecs[:, np.argmin(np.abs(w - 1.0))])
    pi /= pi.sum()
    return float(np.polyval(pi[::-1], z)), pi


def poisson_conditioned_pgf(a, z, terms=200):
    k = np.arange(1, terms)
    logp = -a + k * math.log(a) - np.array([math.lgamma(x + 1) for x in k])
    return float(np.sum(np.exp(logp) * z ** k) / -math.expm1(-a))


def richardson_left_derivative(f, x, h=1e-4):
    def d(step):
        return (f(x) - f(x - step)) / step
    return 2.0 * d(h / 2) - d(h)
