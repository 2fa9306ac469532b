"""Checks applied to every recorded solver history."""

import math

import numpy as np

from cavispec.solver import GRADIENT, QUASI_NEWTON, REGULARIZED


def check_history(report, config):
    """Assert monotonicity, the step protocol and the tolerance cascade on ``report.history``."""
    hist = report.history
    last_E = math.inf
    last_f = math.inf
    block_key = None
    prev = None
    for trial in hist:
        # accepted states are orientation preserving
        if trial.accepted:
            assert trial.min_det > 0, trial
        key = (trial.phase, trial.tol)
        new_block = key != block_key
        # step protocol for the line-searched phases
        if trial.phase in (GRADIENT, QUASI_NEWTON):
            if new_block or prev.phase != trial.phase:
                assert trial.t == config.step_grow, trial
            elif prev.accepted:
                assert trial.t == config.step_grow * prev.t, (prev, trial)
            else:
                assert trial.t == prev.t / config.step_shrink, (prev, trial)
        if trial.accepted:
            if trial.phase in (GRADIENT, REGULARIZED):
                assert trial.energy < last_E, trial
            else:
                assert trial.fnorm < last_f, trial
            last_E, last_f = trial.energy, trial.fnorm
        block_key, prev = key, trial
    # cascade: tolerances are tol_start / shrink^k, non-increasing
    tols = np.array([t.tol for t in hist])
    if tols.size:
        assert np.all(np.diff(tols) <= 0)
        k = np.log(config.tol_start / tols) / np.log(config.tol_shrink)
        assert np.allclose(k, np.round(k), atol=1e-9)
        assert tols.min() >= config.tol_final * (1 - 1e-9)
    if report.success:
        assert report.fnorm < config.tol_final
        assert report.min_det > 0
