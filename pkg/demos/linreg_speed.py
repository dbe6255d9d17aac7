"""Compare how fast VIND and BBVI settle on the Bayesian linear regression model.

Reports the first iteration whose smoothed negative ELBO is within 1 nat of the
value each run settles at (mean of its last 500 smoothed points).
"""

import sys

import numpy as np

from vind.config import parse_config
from vind.diagnostics import smooth
from vind.experiments import linreg_setup, run_fit
from vind.streams import RandomStream

seed = int(sys.argv[1]) if len(sys.argv) > 1 else 0
for arm in ("vind", "bbvi"):
    cfg = parse_config(f'experiment = "linreg-fit"\nseed = {seed}\n[fit]\narm = "{arm}"\n')
    trace = run_fit(linreg_setup(cfg, RandomStream(seed).split(3)[0]), cfg)
    s = smooth(trace.neg_elbo, 100)
    settled = s[-500:].mean()
    print(f"{arm:<5} settles at {settled:9.2f} after {int(np.argmax(s <= settled + 1.0))} iterations")
