"""Build a subject-level stand-in for the ``biom`` example data set.

The original 100 responses (20 per arm) are not redistributed here. This
script draws normal data and rescales each arm so that its sample mean and
SD equal the published values exactly; arm means are the 5-decimal values
of the original analysis, SDs the 3-decimal reported ones.

    python scripts/make_biom_reconstruction.py > src/doseadapt/datasets/biom_reconstructed.csv
"""

import csv
import sys

import numpy as np

DOSES = (0.0, 0.05, 0.2, 0.6, 1.0)
MEANS = (0.34491, 0.45675, 0.81032, 0.93444, 0.94871)
SDS = (0.517, 0.490, 0.740, 0.765, 0.947)
N_PER_ARM = 20
SEED = 20050101


def main() -> None:
    rng = np.random.default_rng(SEED)
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(["dose", "resp"])
    for dose, mean, sd in zip(DOSES, MEANS, SDS):
        z = rng.standard_normal(N_PER_ARM)
        z = (z - z.mean()) / z.std(ddof=1)
        for v in mean + sd * z:
            w.writerow([dose, f"{v:.12f}"])


if __name__ == "__main__":
    main()
