"""Counts of every sensing point along a curvature sweep.

Reads the output of `etexshape sweep --out response.csv [--phi ...]` from this folder.
"""
import os

import matplotlib.pyplot as plt
import polars as pl
import seaborn as sns

os.chdir(os.path.dirname(__file__))

df = pl.read_csv("response.csv").with_columns(
    point=pl.format("a{}{}", pl.col("row"), pl.col("col")),
)

fig, axes = plt.subplots(1, 4, figsize=(12, 3), sharey=True)
for col, ax in enumerate(axes):
    sns.lineplot(
        data=df.filter(pl.col("col") == col),
        x="kappa",
        y="count",
        hue="point",
        ax=ax,
    )
    ax.set_title(f"column {col}")
    ax.set_xlabel("curvature [1/m]")
axes[0].set_ylabel("ADC count")
fig.tight_layout()
plt.savefig("response_vs_kappa.png")
