"""Write a synthetic randomized-trial CSV for trying out the CLI.

Columns: Age, Sex, BMI, Baseline (serostatus), Country (6 levels), A, Y.
The treatment effect grows with Age and is larger for baseline-negative
participants; Country shifts the outcome level only.

    python scripts/make_demo_data.py --n 800 --out demo_trial.csv
    kernvim test --input demo_trial.csv --outcome Y --treatment A --measure koi
"""

import argparse
import csv

import numpy as np

COUNTRIES = ["COL", "HND", "IND", "KEN", "NPL", "UGA"]


def make(n: int, seed: int):
    rng = np.random.default_rng(seed)
    age = rng.uniform(18, 80, n)
    sex = rng.integers(0, 2, n)
    bmi = np.clip(rng.normal(26, 4, n), 16, 45)
    baseline = rng.binomial(1, 0.6, n)
    country = rng.integers(0, len(COUNTRIES), n)
    a = rng.binomial(1, 0.5, n)
    shift = np.linspace(-0.5, 0.5, len(COUNTRIES))[country]
    effect = 0.5 + 1.5 * (age - 18) / 62 + 0.8 * (1 - baseline)
    y = 1.0 + 0.02 * (bmi - 26) + 0.3 * sex + shift + a * effect + rng.normal(size=n)
    return age, sex, bmi, baseline, country, a, y


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=800)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", default="demo_trial.csv")
    args = ap.parse_args()
    age, sex, bmi, baseline, country, a, y = make(args.n, args.seed)
    with open(args.out, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["Age", "Sex", "BMI", "Baseline", "Country", "A", "Y"])
        for i in range(args.n):
            w.writerow([f"{age[i]:.1f}", sex[i], f"{bmi[i]:.2f}", baseline[i],
                        COUNTRIES[country[i]], a[i], f"{y[i]:.4f}"])
    print(f"wrote {args.n} rows to {args.out}")


if __name__ == "__main__":
    main()
