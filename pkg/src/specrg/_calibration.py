"""Frozen calibration constants.

Produced by calibration.calibrate_constants(seed=0, n_random=8, n_steps=4,
rho=1/2, mu=1/2); see that module for what the constants mean.  The
regression test recomputes the sweep and asserts agreement within ten
percent, so drift in the step implementation shows up as a failure here.
The stored values are the measured maxima rounded up in the last digit kept,
so membership checks against them are not equality tests at zero margin.
"""

C_RG = 0.94658
C_INIT = 4.22289
CALIBRATION_SEED = 0
CALIBRATION_N_RANDOM = 8
CALIBRATION_N_STEPS = 4
