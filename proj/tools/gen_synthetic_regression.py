#!/usr/bin/env python3
"""Generates data/diamonds.csv, a synthetic stand-in for the 26-parameter
regression benchmark: 5000 rows, 24 predictors (a mix of correlated
continuous columns and dummy-coded factors), Gaussian response around a
linear predictor with intercept 8.

Deterministic: python3 tools/gen_synthetic_regression.py > data/diamonds.csv
"""
import math


class Lcg:
    def __init__(self, seed):
        self.state = seed

    def next_u64(self):
        self.state = (self.state * 6364136223846793005 + 1442695040888963407) % (1 << 64)
        return self.state

    def uniform(self):
        return (self.next_u64() >> 11) / float(1 << 53)

    def normal(self):
        u1 = max(self.uniform(), 1e-300)
        u2 = self.uniform()
        return math.sqrt(-2.0 * math.log(u1)) * math.cos(2.0 * math.pi * u2)


def main():
    rng = Lcg(20240817)
    n, k_cont, k_dummy = 5000, 10, 14
    betas = [0.7, -0.4, 0.25, 0.1, -0.15, 0.05, 0.3, -0.2, 0.12, -0.08,
             0.35, 0.2, 0.1, -0.1, -0.25, 0.15, 0.05, -0.05, 0.22, -0.12,
             0.08, 0.18, -0.3, 0.02]
    sigma = 0.3
    names = [f"c{i+1}" for i in range(k_cont)] + [f"d{i+1}" for i in range(k_dummy)]
    print("y," + ",".join(names))
    for _ in range(n):
        base = rng.normal()
        cont = []
        for j in range(k_cont):
            cont.append(0.6 * base + 0.8 * rng.normal() + 0.1 * j)
        dummy = [1.0 if rng.uniform() < (0.15 + 0.04 * j) else 0.0
                 for j in range(k_dummy)]
        x = cont + dummy
        mu = 8.0 + sum(b * (v - (0.1 * j if j < k_cont else 0.0))
                       for j, (b, v) in enumerate(zip(betas, x)))
        y = mu + sigma * rng.normal()
        print(",".join(f"{v:.9g}" for v in [y] + x))


if __name__ == "__main__":
    main()
