#!/usr/bin/env python3
"""Regenerate the synthetic OHLC sample in data/sample/.

The series are illustrative only. Prices follow a seeded random walk whose
volatility and drift shift on 2020-01-01; STBL is a pegged asset.
"""
import csv
import datetime as dt
import pathlib

import numpy as np

OUT = pathlib.Path(__file__).resolve().parent.parent / "data" / "sample"
START = dt.date(2018, 6, 29)
END = dt.date(2020, 6, 24)
SHIFT = dt.date(2020, 1, 1)

# ticker: (start price, pre vol, post vol, pre drift, post drift)
TICKERS = {
    "AAA": (6400.0, 0.035, 0.055, 0.0005, -0.0010),
    "BBB": (450.0, 0.045, 0.070, -0.0005, -0.0015),
    "CCC": (0.45, 0.050, 0.065, 0.0000, -0.0012),
    "DDD": (80.0, 0.055, 0.080, -0.0010, 0.0005),
    "STBL": (1.0, 0.004, 0.006, 0.0, 0.0),
}


def main():
    rng = np.random.default_rng(20200624)
    days = (END - START).days + 1
    dates = [START + dt.timedelta(days=i) for i in range(days)]
    OUT.mkdir(parents=True, exist_ok=True)
    for ticker, (p0, vol_pre, vol_post, mu_pre, mu_post) in TICKERS.items():
        price = p0
        rows = []
        for d in dates:
            post = d >= SHIFT
            vol = vol_post if post else vol_pre
            mu = mu_post if post else mu_pre
            if ticker == "STBL":
                price = 1.0 + 0.5 * (price - 1.0) + vol * rng.standard_normal()
            else:
                price *= float(np.exp(mu + vol * rng.standard_t(4) / np.sqrt(2.0)))
            spread = abs(vol * rng.standard_normal()) + vol / 4
            high = price * np.exp(spread * rng.uniform(0.3, 1.0))
            low = price * np.exp(-spread * rng.uniform(0.3, 1.0))
            rows.append((d.isoformat(), f"{price:.6g}", f"{high:.6g}", f"{low:.6g}"))
        with open(OUT / f"{ticker}.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["date", "close", "high", "low"])
            w.writerows(rows)


if __name__ == "__main__":
    main()
