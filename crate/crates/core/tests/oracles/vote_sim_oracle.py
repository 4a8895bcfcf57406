"""Independent reference for the voting simulation success rates.

Straightforward numpy pipeline: Gaussian losses -> stable top-k ballots ->
plain sum -> one aggregate Gaussian draw per coordinate -> first argmax.
No fixed-point encoding, no masking, no per-client noise shares.

Usage: python3 vote_sim_oracle.py > ../data/vote_sim_reference.csv
"""
import sys

import numpy as np
from scipy.optimize import brentq

DELTA = 1e-5
P = 100
N = 250
REPS = 5000


def dp_eps(sigma, k, delta=DELTA):
    alpha = np.exp(np.linspace(np.log(1 + 2**-10), np.log(4096), 400000))
    eps = alpha * k / sigma**2 + np.log((alpha - 1) / alpha) - (np.log(delta) + np.log(alpha)) / (alpha - 1)
    return eps.min()


def calibrate(eps, k):
    if np.isinf(eps):
        return 0.0
    return brentq(lambda s: dp_eps(s, k) - eps, 1e-2, 1e6, xtol=1e-10)


def success_rate(k, eps, good, sigma_loss, seed):
    rng = np.random.default_rng(seed)
    sigma = calibrate(eps, k)
    means = np.ones(P)
    means[:good] = 0.0
    hits = 0
    for _ in range(REPS):
        losses = rng.normal(means, sigma_loss, size=(N, P))
        order = np.argsort(losses, axis=1, kind="stable")[:, :k]
        votes = np.zeros(P)
        np.add.at(votes, order.ravel(), 1.0)
        noisy = votes + rng.normal(0.0, sigma, size=P) if sigma > 0 else votes
        if int(np.argmax(noisy)) < good:
            hits += 1
    return hits / REPS


CONFIGS = []
for sl in (0.01, 0.2):
    for eps in (0.25, 1.0):
        for k in (1, 5, 10, 20, 50, 100):
            CONFIGS.append((k, eps, 5, sl))
for g in (1, 2, 4, 8, 16, 32, 64):
    CONFIGS.append((1, 0.25, g, 0.2))

print("k,epsilon,good_count,sigma_loss,success_rate")
for i, (k, eps, g, sl) in enumerate(CONFIGS):
    r = success_rate(k, eps, g, sl, 1000 + i)
    print(f"{k},{eps},{g},{sl},{r:.4f}")
    sys.stdout.flush()
