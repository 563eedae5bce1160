"""Regenerate the blinded-recalculation conformance fixtures.

Each case is a CSV of pooled interim data (no arm column) plus the value the
reference R function `n.ancova.recal` returns on it. R is not needed: the
function is transliterated below statement by statement.
"""

import json
import math
from pathlib import Path

import numpy as np
from scipy.stats import norm

OUT = Path(__file__).resolve().parents[1] / "crates" / "core" / "tests" / "fixtures" / "recalc"


def n_ancova_recal(y, w, delta, sigma, alpha=0.025, power=0.8):
    z_a = norm.ppf(1 - alpha)
    z_b = norm.ppf(power)
    x = np.column_stack([np.ones(len(y)), w])
    coef, *_ = np.linalg.lstsq(x, y, rcond=None)
    resid = y - x @ coef
    sigma_hat2 = resid @ resid / (len(y) - x.shape[1])  # summary(lm)$sigma^2
    num = sigma_hat2 - delta**2 / 4
    den = min(sigma, np.var(y, ddof=1) - delta**2 / 4)
    n_unadj = math.ceil(2**2 * ((z_a + z_b) ** 2) * sigma / (delta**2))
    n_unadj = n_unadj + n_unadj % 2
    raw = n_unadj * num / den + z_a**2 / 2
    n = math.ceil(raw)
    return n + n % 2, raw, num, den


def main():
    rng = np.random.default_rng(20240517)
    OUT.mkdir(parents=True, exist_ok=True)
    cases = []
    attempts = 0
    while len(cases) < 24:
        attempts += 1
        n = int(rng.integers(24, 140))
        k = int(rng.integers(1, 5))
        scale = float(rng.choice([1.0, 10.0, 150.0]))
        delta = float(rng.choice([0.3, 0.4, 0.5, 0.6, 0.7])) * scale
        sigma = float(rng.choice([0.8, 1.0, 1.2])) * scale**2
        alpha = float(rng.choice([0.025, 0.05, 0.01]))
        power = float(rng.choice([0.8, 0.9]))
        w = rng.normal(size=(n, k))
        if k > 1:
            w[:, 1] = (w[:, 1] > 0.3).astype(float)
        b = rng.normal(scale=0.4, size=k)
        a = rng.integers(0, 2, size=n)
        y = scale * (0.5 * a * delta / scale + w @ b + rng.normal(size=n))
        y = np.round(y, 6)
        w = np.round(w, 6)
        n_rec, raw, num, den = n_ancova_recal(y, w, delta, sigma, alpha, power)
        # Stay clear of the floored-numerator regime and of ties at integers.
        if num <= 0 or den <= 0 or abs(raw - round(raw)) < 1e-6:
            continue
        name = f"case{len(cases) + 1:02d}.csv"
        cov = [f"w{j + 1}" for j in range(k)]
        with open(OUT / name, "w") as f:
            f.write(",".join(["y"] + cov) + "\n")
            for i in range(n):
                f.write(",".join(repr(float(v)) for v in [y[i], *w[i]]) + "\n")
        cases.append(
            {
                "file": name,
                "outcome": "y",
                "covariates": cov,
                "delta": delta,
                "sigma2": sigma,
                "alpha": alpha,
                "power": power,
                "expected_n": n_rec,
                "raw": raw,
            }
        )
    with open(OUT / "expected.json", "w") as f:
        json.dump({"generator": "scripts/gen_recalc_fixtures.py", "cases": cases}, f, indent=2)
        f.write("\n")
    print(f"wrote {len(cases)} cases after {attempts} attempts")


if __name__ == "__main__":
    main()
