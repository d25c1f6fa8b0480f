"""Loss curves and target-vs-estimate series for one trained model.

Expects in this folder:
    history.csv  from `etexshape train ... --history history.csv`
    report.csv   from `etexshape eval ... --out report.csv --first 100`
"""
import os

import matplotlib.pyplot as plt
import polars as pl
import seaborn as sns

os.chdir(os.path.dirname(__file__))

history = pl.read_csv("history.csv").unpivot(
    index="epoch", on=["train_mse", "val_mse"], variable_name="split", value_name="mse"
)
fig = plt.figure()
sns.lineplot(data=history, x="epoch", y="mse", hue="split")
plt.yscale("log")
plt.title("training and validation loss")
plt.savefig("loss_curves.png")


report = pl.read_csv("report.csv", comment_prefix="#").with_row_index("sample")
fig, axes = plt.subplots(2, 2, figsize=(12, 6), sharex=True)
for row, name in enumerate(("kappa", "phi")):
    ax = axes[row, 0]
    ax.plot(report["sample"], report[f"{name}_true"], label="target")
    ax.plot(report["sample"], report[f"{name}_pred"], label="estimate", linestyle="--")
    ax.set_ylabel(name)
    ax.legend()
    axes[row, 1].bar(report["sample"], report[f"abs_err_{name}"])
    axes[row, 1].set_ylabel(f"|error| {name}")
axes[1, 0].set_xlabel("test sample")
axes[1, 1].set_xlabel("test sample")
fig.tight_layout()
plt.savefig("target_vs_estimate.png")
