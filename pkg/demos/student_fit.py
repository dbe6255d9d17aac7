"""Fit the Student-Wishart model with VIND, full RB-BBVI and RB-BBVI with p frozen.

Prints the final smoothed negative ELBO of each arm. Takes about a minute per arm.
"""

import sys

from vind.config import parse_config
from vind.diagnostics import smooth
from vind.experiments import run_fit, student_wishart_setup
from vind.streams import RandomStream

seed = int(sys.argv[1]) if len(sys.argv) > 1 else 0
for arm in ("vind", "bbvi_rb", "bbvi_rb-frozen-p"):
    cfg = parse_config(f'experiment = "student-wishart-fit"\nseed = {seed}\n[data]\nn = 120\n[fit]\narm = "{arm}"\n')
    setup = student_wishart_setup(cfg, RandomStream(seed).split(3)[0])
    trace = run_fit(setup, cfg)
    p = trace.final_params
    print(f"{arm:<18} -ELBO {smooth(trace.neg_elbo, 100)[-1]:9.2f}   p = {p['prec.df']:.2f}")
