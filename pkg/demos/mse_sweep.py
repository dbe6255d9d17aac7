"""Print mean VIND and BBVI mse per epsilon on the Gamma-Normal ascent path.

    python demos/mse_sweep.py [output_dir]
"""

import csv
import sys
from collections import defaultdict

from vind.config import parse_config
from vind.experiments import run_experiment

out = sys.argv[1] if len(sys.argv) > 1 else "runs/mse-demo"
cfg = parse_config(f'output_dir = "{out}"\nseed = 0\n[sweep]\niterations = 100\nn_reps = 500\n')
run_experiment(cfg)

mse = defaultdict(list)
with open(f"{out}/stats.csv", newline="") as fh:
    for row in csv.DictReader(fh):
        if int(row["iter"]) >= 50:
            mse[(row["estimator"], row["epsilon"])].append(float(row["mse"]))

print(f"{'estimator':<10}{'epsilon':>10}{'mean mse':>14}")
for (est, eps), values in sorted(mse.items()):
    print(f"{est:<10}{eps:>10}{sum(values) / len(values):>14.4g}")
