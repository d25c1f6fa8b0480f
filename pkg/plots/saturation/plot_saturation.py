"""Reads `scripts/sweep_saturation.py` output (copy saturation_results.csv here)."""
import os

import matplotlib.pyplot as plt
import polars as pl
import seaborn as sns

os.chdir(os.path.dirname(__file__))

df = pl.read_csv("saturation_results.csv").sort("sat_pressure")

fig, axes = plt.subplots(1, 3, figsize=(12, 3.5))
for ax, y in zip(axes, ("test_mse", "rmse_kappa", "rmse_phi_identifiable")):
    sns.lineplot(data=df, x="sat_pressure", y=y, hue="noise_sigma", marker="o", ax=ax)
    ax.set_xlabel("saturation pressure [Pa]")
axes[0].set_yscale("log")
fig.tight_layout()
plt.savefig("accuracy_vs_saturation.png")

fig = plt.figure()
sns.lineplot(data=df.filter(pl.col("noise_sigma") == 0), x="sat_pressure", y="n_distinct_frames", marker="o")
plt.ylabel("distinct frames on the grid")
plt.savefig("distinct_frames.png")
