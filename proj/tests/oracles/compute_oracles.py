"""Independent reference values for the C++ test suite.

Run with: python3 tests/oracles/compute_oracles.py
Every number printed here is frozen in tests/frozen_oracles.hpp.
Only numpy/mpmath are used; nothing is shared with the C++ code.
"""
import itertools

import mpmath as mp
import numpy as np

mp.mp.dps = 40


def ate_canonical():
    xs = [0.0, 1.0, 2.0]
    px = [0.3, 0.45, 0.25]
    pi = [0.3, 0.55, 0.7]
    tau1 = [1.0, 2.0, 2.5]
    tau0 = [0.2, 0.5, 1.1]
    shocks = [(-1.0, 1.0 / 3.0), (0.5, 2.0 / 3.0)]
    pts = []
    for k, x in enumerate(xs):
        for t in (0, 1):
            sigma = 0.5 + 0.25 * x + 0.5 * t
            for e, pe in shocks:
                mu = tau1[k] if t == 1 else tau0[k]
                pt = pi[k] if t == 1 else 1.0 - pi[k]
                pts.append((x, t, mu + sigma * e, px[k] * pt * pe, k))
    tau = sum(px[k] * (tau1[k] - tau0[k]) for k in range(3))
    ifv = []
    for x, t, y, p, k in pts:
        h = t * (y - tau1[k]) / pi[k] - (1 - t) * (y - tau0[k]) / (1 - pi[k]) \
            + tau1[k] - tau0[k]
        ifv.append(h - tau)
    ifv = np.array(ifv)
    w = np.array([p[3] for p in pts])
    var = float(np.sum(w * ifv ** 2))
    print("ATE canonical tau =", repr(tau))
    print("ATE canonical Var(h_AIPW - tau) =", repr(var))
    print("ATE canonical IF at first point =", repr(float(ifv[0])))
    # IPW non-robustness: P[dh_IPW/dpi] per x cell, weighted by p(x)
    g = [px[k] * (-tau1[k] / pi[k] - tau0[k] / (1 - pi[k])) for k in range(3)]
    print("ATE IPW <d_gamma m_beta> =", [repr(v) for v in g])


def kernel_values():
    phi1 = float(mp.npdf(1))
    print("gaussian b=0.5 offset 0.5 ->", repr(2 * phi1))
    print("phi(0) =", repr(float(mp.npdf(0))))
    print("int K^2 gaussian d=1 =", repr(float(1 / (2 * mp.sqrt(mp.pi)))))
    f0 = mp.npdf(0, 0, 3)
    print("NW target sigma2/f(0)*intK2 (X~N(0,9), sigma=1) =",
          repr(float(1 / f0 / (2 * mp.sqrt(mp.pi)))))


def discretized_normal():
    lo, width, cells = -6.0, 0.05, 240
    edges = [lo + width * i for i in range(cells + 1)]
    mass = [mp.ncdf(edges[i + 1]) - mp.ncdf(edges[i]) for i in range(cells)]
    total = sum(mass)
    mass = [m / total for m in mass]
    dens0 = mass[cells // 2] / width
    print("discretized normal grid density at 0 =", repr(float(dens0)))


def small_linear_algebra():
    # Schur complement example
    vbb = np.array([[2.0]])
    vbg = np.array([[1.0, 1.0]])
    vgg = np.ones((2, 2))
    s = vbb - vbg @ np.linalg.pinv(vgg) @ vbg.T
    print("schur example =", repr(float(s[0, 0])))
    # projection on a 3-point uniform law
    f = np.array([2.0, -1.0, -1.0])
    g = np.array([1.0, 0.0, -1.0])
    c = np.mean(f * g) / np.mean(g * g)
    print("projection coefficient =", repr(float(c)), "->", (c * g).tolist())


def iv_canonical(hetero=True):
    # u and e2 share the scale s(w) and are drawn independently.
    ws = [-1.0, 0.0, 1.0, 2.0]
    pw = [0.2, 0.3, 0.3, 0.2]
    gamma = np.array([0.5, 1.0])
    beta = 2.0
    rows = []
    for w, p in zip(ws, pw):
        s = 0.5 + 0.5 * abs(w) if hetero else 1.0
        W = np.array([1.0, w])
        for e2, u in itertools.product((-s, s), (-0.8 * s, 0.8 * s)):
            y2 = W @ gamma + e2
            y1 = y2 * beta + u
            rows.append((W, y1, y2, p / 4.0, s ** 2))
    EWW = sum(p * np.outer(W, W) for W, _, _, p, _ in rows)
    tag = "hetero" if hetero else "homo"
    print(tag, "IV E[WW'] =", EWW.tolist())
    print(tag, "IV G_bb =", (-EWW @ gamma).tolist())
    print(tag, "IV G_bg =", (-beta * EWW).tolist())
    print(tag, "IV G_gg =", (-EWW).tolist())

    def bound(gls):
        G = np.zeros((4, 3))
        V = np.zeros((4, 4))
        for W, y1, y2, p, v22 in rows:
            a = 1.0 / v22 if gls else 1.0
            e1 = y1 - W @ gamma * beta
            e2 = y2 - W @ gamma
            m = np.concatenate([a * W * e1, a * W * e2])
            V += p * np.outer(m, m)
            J = np.zeros((4, 3))
            J[0:2, 0] = -a * W * (W @ gamma)
            J[0:2, 1:3] = -a * beta * np.outer(W, W)
            J[2:4, 1:3] = -a * np.outer(W, W)
            G += p * J
        return np.linalg.inv(G.T @ np.linalg.pinv(V) @ G)
    print(tag, "IV m-bound beta unconditional =", repr(float(bound(False)[0, 0])),
          "gls =", repr(float(bound(True)[0, 0])))


def tilted_mean():
    z = np.array([0.0, 1.0, 3.0])
    p = np.array([0.5, 0.3, 0.2])
    t = z ** 2
    mu = p @ z
    var_z = p @ (z - mu) ** 2
    cov_zt = p @ ((z - mu) * (t - p @ t))
    var_t = p @ (t - p @ t) ** 2
    print("tilted mean m-bound =", repr(float(var_z)),
          "cramer-rao =", repr(float(cov_zt ** 2 / var_t)))


def avg_density():
    p = np.array([0.5, 0.3, 0.2])
    pf = float(p @ p)
    print("avg density P[f] =", repr(pf), "IF first =", repr(2 * (0.5 - pf)))


if __name__ == "__main__":
    ate_canonical()
    kernel_values()
    discretized_normal()
    small_linear_algebra()
    iv_canonical(True)
    iv_canonical(False)
    tilted_mean()
    avg_density()
