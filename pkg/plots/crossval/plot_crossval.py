"""Cross-validation scores and per-fold loss curves of the study models.

Expects in this folder:
    crossval.csv  from `etexshape crossval ... --out crossval.csv`
    curves.csv    from `etexshape crossval ... --curves curves.csv`
"""
import io
import os

import matplotlib.pyplot as plt
import polars as pl
import seaborn as sns

os.chdir(os.path.dirname(__file__))

with open("crossval.csv") as f:
    folds_block, summary_block = f.read().split("\n\n")
folds = pl.read_csv(io.StringIO(folds_block))
summary = pl.read_csv(io.StringIO(summary_block))
print(summary)

fig = plt.figure()
sns.barplot(data=folds, x="model", y="mse", errorbar="sd", color="lightgrey")
sns.stripplot(data=folds, x="model", y="mse", color="k", size=4)
plt.ylabel("held-out MSE")
plt.title(f"{folds['fold'].n_unique()}-fold cross-validation")
plt.savefig("crossval_mse.png")


curves = pl.read_csv("curves.csv")
g = sns.relplot(
    data=curves,
    x="epoch",
    y="val_mse",
    hue="model",
    units="fold",
    estimator=None,
    kind="line",
    alpha=0.5,
)
g.set(yscale="log")
plt.savefig("crossval_curves.png")
