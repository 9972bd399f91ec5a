"""Desktop-grid parameter-sweep toolkit.

Subsystems:

* :mod:`gridsweep.hosts` -- synthetic volunteer-host populations
* :mod:`gridsweep.gridsim` -- deterministic desktop-grid scheduling simulator
* :mod:`gridsweep.md` / :mod:`gridsweep.cna` -- desk-scale tensile MD payload
  and common-neighbor structure classification
* :mod:`gridsweep.stats` -- ensemble statistics (fits, KS tests, moments,
  bootstrap)
* :mod:`gridsweep.sweep` -- local worker-pool sweep runner and ensemble
  analysis
* :mod:`gridsweep.cli` -- the ``gridsweep`` command line tool
"""

__version__ = "0.1.0"
