"""Regenerate the synthetic fixtures in this directory.

daily_5.csv   1000 business days (200 ISO weeks), 5 assets, decimal returns
weekly_5.csv  the same data scaled to weeks with the per-day geometric mean
"""
import datetime as dt

import numpy as np

rng = np.random.default_rng(20240601)
n_days, n_assets = 1000, 5
names = ["Food", "Tech", "Energy", "Health", "Banks"]

# GARCH(1,1) margins with a one-factor correlation structure
omega, alpha, beta = 2e-6, 0.06, 0.92
loadings = np.array([0.6, 0.9, 0.7, 0.5, 0.8])
drift = np.array([4e-4, 6e-4, 3e-4, 5e-4, 4e-4])
h = np.full(n_assets, omega / (1 - alpha - beta))
ret = np.empty((n_days, n_assets))
for t in range(n_days):
    f = rng.standard_normal()
    e = rng.standard_normal(n_assets)
    z = (loadings * f + np.sqrt(1 - loadings**2) * e)
    ret[t] = drift + np.sqrt(h) * z
    h = omega + alpha * (ret[t] - drift) ** 2 + beta * h

start = dt.date(2015, 1, 5)  # a Monday
dates = []
d = start
while len(dates) < n_days:
    if d.weekday() < 5:
        dates.append(d)
    d += dt.timedelta(days=1)

with open("daily_5.csv", "w") as fh:
    fh.write("date," + ",".join(names) + "\n")
    for d, r in zip(dates, ret):
        fh.write(d.isoformat() + "," + ",".join(repr(round(float(x), 8)) for x in r) + "\n")

with open("weekly_5.csv", "w") as fh:
    fh.write("date," + ",".join(names) + "\n")
    for w in range(n_days // 5):
        block = np.round(ret[5 * w : 5 * w + 5], 8)
        wk = np.prod(1 + block, axis=0) ** (1 / 5) - 1
        fh.write(dates[5 * w + 4].isoformat() + "," + ",".join(repr(float(x)) for x in wk) + "\n")
