"""Plot a study.csv produced by `netident study`.

Usage: python scripts/plot_study.py STUDY_CSV [OUT_PNG]
"""

import sys

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import pandas as pd


def main():
    if len(sys.argv) < 2:
        sys.exit(__doc__)
    out = sys.argv[2] if len(sys.argv) > 2 else "study.png"
    df = pd.read_csv(sys.argv[1])
    ok = df[df["error"].isna()] if "error" in df else df
    mean = ok.groupby(["beta", "D"], as_index=False).mean(numeric_only=True)

    fig, axes = plt.subplots(1, 2, figsize=(11, 4))
    for beta, g in mean.groupby("beta"):
        axes[0].semilogy(g["D"], g["E_inf"], "o-", label=f"beta = {beta}")
        axes[1].semilogy(g["D"], g["delta_W1"], "o--", label=f"delta_W1, beta = {beta}")
        axes[1].semilogy(g["D"], g["delta_WS"], "s-", label=f"delta_WS, beta = {beta}")
    axes[0].set(xlabel="D", ylabel="E_inf", title="uniform error")
    axes[1].set(xlabel="D", ylabel="error", title="shift error terms")
    for ax in axes:
        ax.grid(True, which="both", alpha=0.3)
        ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(out, dpi=120)
    print(f"wrote {out}")


if __name__ == "__main__":
    main()
