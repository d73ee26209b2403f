"""Independent reference computations shared by the tests.

None of these reuse the package's own formulas; they re-derive values from
first principles (quadrature, brute-force enumeration, closed-form
posteriors).  The enumeration helpers read a scheme's channels and estimator
but never its expectation code.
Values that were computed once at high precision are frozen here.
"""

import itertools
import math

import mpmath as mp
import numpy as np
from numpy.polynomial.hermite_e import hermegauss
from scipy import integrate

from fisherbench.channels import FiniteChannel

# 30-digit mpmath evaluations of 2 e^(1/q) Gamma(1/q) q^(1/q-1) and kappa
FROZEN_C_ME = {
    1.0: 5.43656365691809047072057494271,
    1.5: 4.60806987137793942123343543237,
    2.0: 4.1327313541224929384693918843,
    3.0: 3.59481657772285075002826661847,
    4.0: 3.29184742461384202448942036061,
}
FROZEN_KAPPA = {
    1.0: 0.760173450533140402805970073377,
    1.5: 0.849331397924068412912197117657,
    2.0: 1.0,
    3.0: 1.51943217272415457778574920682,
    4.0: 2.48421917565930776741281186953,
}


def c_me_mpmath(q, dps=30):
    with mp.workdps(dps):
        q = mp.mpf(q)
        return float(2 * mp.e ** (1 / q) * mp.gamma(1 / q) * q ** (1 / q - 1))


def max_entropy_by_quadrature(q, moment):
    """Entropy and q-th moment of ``exp(-|x|^q/beta)/Z`` with ``beta = q*moment``, by numerical integration."""
    beta = q * moment
    f = lambda x: math.exp(-abs(x) ** q / beta)
    z = 2 * integrate.quad(f, 0, np.inf, epsabs=1e-14, epsrel=1e-13)[0]
    m = 2 * integrate.quad(lambda x: x**q * f(x), 0, np.inf, epsabs=1e-14, epsrel=1e-13)[0] / z
    # h = E[-log density] = log z + E|X|^q / beta
    return math.log(z) + m / beta, m


def cosine_fisher_by_quadrature(B=1.0, points=200001):
    """``int (mu')^2 / mu`` for ``mu(t) = cos^2(pi t / 2B)/B`` on ``[-B, B]``."""
    t = np.linspace(-B, B, points)[1:-1]
    mu = np.cos(math.pi * t / (2 * B)) ** 2 / B
    dmu = -math.pi / (2 * B**2) * np.sin(math.pi * t / B)
    return float(integrate.trapezoid(dmu**2 / mu, t))


def gaussian_posterior_variance(sigma, tau):
    return 1.0 / (1.0 / sigma**2 + 1.0 / tau**2)


def brute_hhp(p, q):
    """``max_h h^(1+q/2) p_(h)^(q/2)`` by a plain Python loop over sorted values."""
    ps = sorted(p, reverse=True)
    best, arg = -1.0, 0
    for h, v in enumerate(ps, start=1):
        val = h ** (1 + q / 2) * v ** (q / 2)
        if val > best:
            best, arg = val, h
    return best, arg


def exact_submodel_fisher(p, h):
    """Fisher matrix of the frozen-tail sub-model by summing over symbols with direct derivatives."""
    p = np.asarray(p, dtype=float)
    order = sorted(range(len(p)), key=lambda i: -p[i])
    head = order[0]
    free = order[1:h]
    m = np.zeros((h - 1, h - 1))
    for x in range(len(p)):
        g = np.zeros(h - 1)
        if x == head:
            g[:] = -1.0
        elif x in free:
            g[free.index(x)] = 1.0
        if p[x] > 0:
            m += np.outer(g, g) / p[x]
    return m


def exact_output_fisher(kernel, pmf, grad):
    """``sum_y (dP(y))(dP(y))' / P(y)`` with explicit loops."""
    kernel = np.asarray(kernel)
    k = grad.shape[1]
    out = np.zeros((k, k))
    for y in range(kernel.shape[0]):
        py = sum(kernel[y, x] * pmf[x] for x in range(len(pmf)))
        dp = sum(kernel[y, x] * grad[x] for x in range(len(pmf)))
        if py > 0:
            out += np.outer(dp, dp) / py
    return out


def bernoulli_law(theta):
    """Enumerated pmf and gradient of a product Bernoulli law, symbols ordered by bit index."""
    d = len(theta)
    pmf, grad = [], []
    for s in range(2**d):
        bits = [(s >> j) & 1 for j in range(d)]
        probs = [theta[j] if bits[j] else 1 - theta[j] for j in range(d)]
        pmf.append(math.prod(probs))
        g = []
        for j in range(d):
            rest = math.prod(probs[:j] + probs[j + 1 :])
            g.append(rest if bits[j] else -rest)
        grad.append(g)
    return np.array(pmf), np.array(grad)


def binomial_band(p, n, k=4.0):
    return k * math.sqrt(p * (1 - p) / n)


def all_bit_vectors(d):
    return list(itertools.product((0, 1), repeat=d))


def client_kernel(scheme, i, n):
    ch = scheme.channel_for(i, n, None, 0)
    return ch.kernel if isinstance(ch, FiniteChannel) else ch.to_finite().kernel


def enumerate_expectation(scheme, p, n):
    """Exact E[estimate] by summing over every input tuple and message tuple."""
    d = len(p)
    kernels = [client_kernel(scheme, i, n) for i in range(n)]
    total = np.zeros(d)
    for xs in itertools.product(range(d), repeat=n):
        px = math.prod(p[x] for x in xs)
        if px == 0:
            continue
        outs = [np.nonzero(kernels[i][:, x])[0] for i, x in enumerate(xs)]
        for ys in itertools.product(*outs):
            w = px * math.prod(kernels[i][y, x] for i, (y, x) in enumerate(zip(ys, xs)))
            total += w * scheme.estimate(np.array(ys, dtype=np.int64))
    return total


def enumerate_onebit(scheme, points, weights, n):
    """Exact E[estimate] of the one-bit scheme over a finite-support input law."""
    d = scheme.d
    total = np.zeros(d)
    q = scheme.quantizer
    for idx in itertools.product(range(len(points)), repeat=n):
        w_in = math.prod(weights[k] for k in idx)
        coords = [scheme.coords_of(i) for i in range(n)]
        p1 = [q.prob_one(points[k][coords[i]] ** 2 if scheme.square else points[k][coords[i]]) for i, k in enumerate(idx)]
        for msgs in itertools.product(range(2**scheme.k), repeat=n):
            w = w_in
            for i, m in enumerate(msgs):
                bits = [(m >> j) & 1 for j in range(scheme.k)]
                w *= math.prod(p1[i][j] if bits[j] else 1 - p1[i][j] for j in range(scheme.k))
            if w:
                total += w * scheme.estimate(np.array(msgs, dtype=np.int64))
    return total


def hermite_law(theta, sigma=1.0, nodes=10):
    """Finite law with the Gaussian's first moments: Gauss-Hermite nodes per coordinate (independent)."""
    x, w = hermegauss(nodes)
    w = w / w.sum()
    pts = np.array(list(itertools.product(x, repeat=len(theta)))) * sigma + theta
    wts = np.array([math.prod(c) for c in itertools.product(w, repeat=len(theta))])
    return pts, wts
