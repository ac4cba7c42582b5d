"""Finite-horizon stochastic optimal control via successive approximation.

The heavy lifting lives in the compiled extension; this package re-exports
its public surface. Quick start::

    import msaflow

    spec = msaflow.make_problem("lq_modified")
    grid = msaflow.make_time_grid(1.0, 50)
    shape = msaflow.EnsembleShape(2000)
    w = msaflow.sample_brownian(shape, grid, seed=42)
    alpha0 = msaflow.constant_control(shape, grid, 0.0)
    report = msaflow.run_msa(spec, alpha0, w)
    print(report.final_J, report.termination)
"""

from msaflow._core import *  # noqa: F401,F403
from msaflow._core import __doc__  # noqa: F401
