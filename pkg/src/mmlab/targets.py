"""Reference numbers and pass/fail tolerances for the synthetic reports.

Every tolerance used by ``mmlab report`` and by the acceptance tests lives
here so the two can never drift apart. Accuracies are in percent.
"""

from __future__ import annotations

# run budget for the synthetic accuracy table
ACCURACY_SEEDS = (0, 1, 2)
ACCURACY_UNI_ITERS = 500
ACCURACY_FUSION_ITERS = 1000
ACCURACY_TIME_LIMIT_S = 300.0

# probing experiments on gamma
PROBE_SEEDS = (0, 1, 2, 3, 4)
PROBE_TRAIN_ITERS = 500
PROBE_ITERS = 500

# reference accuracies: (modality-1, modality-2, multi-modal)
ACCURACY_REFERENCE = {
    "alpha": (100.0, 100.0, 100.0),
    "beta": (51.4, 51.8, 92.0),
    "gamma": (70.9, 70.1, 94.4),
}

# (low, high) bands on the median over seeds
ACCURACY_BANDS = {
    "alpha": {"uni1": (98.0, 100.0), "uni2": (98.0, 100.0), "multi": (98.0, 100.0)},
    "beta": {"uni1": (47.0, 53.0), "uni2": (47.0, 53.0), "multi": (85.0, 100.0)},
    "gamma": {"uni1": (66.0, 74.0), "uni2": (66.0, 74.0), "multi": (90.0, 100.0)},
}

# which trained strategy fills the multi-modal column
ACCURACY_MULTI_STRATEGY = "early"

# gamma uni-modal confusion, row-normalized percent (rows actual, cols predicted)
CONFUSION_REFERENCE = (
    (100.0, 0.0, 0.0),
    (0.0, 57.0, 43.0),
    (0.0, 45.4, 54.6),
)
CONFUSION_DIAG0_MIN = 95.0
CONFUSION_COL0_MAX = 2.0
CONFUSION_PAIR_MASS_MIN = 80.0
CONFUSION_CELL_TOL = 10.0

# theory checks
PRIORITY_BOOSTED = ("f1", "g1", "h", "f2", "g2", "f3", "g3")
THEOREM_REL_TOL = 1e-12
LEMMA_TRIALS = 10**6
LEMMA_REL_TOL = 0.05

# property suite
GRAD_CHECK_TOL = 1e-4
GRAD_CHECK_INSTANCES = 50
SPLIT_IDENTITY_TOL = 1e-5


def in_band(value: float, band: tuple[float, float]) -> bool:
    low, high = band
    return low <= value <= high


def confusion_checks(row_percent) -> dict[str, bool]:
    """Named pass/fail flags for a 3x3 row-normalized confusion matrix."""
    pct = [[float(v) for v in row] for row in row_percent]
    out = {
        "class0_diagonal": pct[0][0] >= CONFUSION_DIAG0_MIN,
        "rows12_col0": max(pct[1][0], pct[2][0]) <= CONFUSION_COL0_MAX,
    }
    for r in (1, 2):
        out[f"row{r}_pair_mass"] = pct[r][1] + pct[r][2] >= CONFUSION_PAIR_MASS_MIN
        out[f"row{r}_split"] = all(
            abs(pct[r][c] - CONFUSION_REFERENCE[r][c]) <= CONFUSION_CELL_TOL for c in (1, 2)
        )
    return out
