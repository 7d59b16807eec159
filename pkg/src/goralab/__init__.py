"""Goal-oriented active learning for L2-regularized multinomial logistic regression.

The package provides:

* ``datasets``   -- data containers, file loaders, splitters and synthetic generators
* ``model``      -- the regularized multinomial logistic regression core
* ``goals``      -- scalar goal functionals (dev-set log-likelihood, negative
                    prediction entropy, negative mean Fisher-information trace)
* ``operators``  -- label-resolution operators turning per-label values into scalars
* ``influence``  -- influence-function approximation of sample utilities plus
                    exact retraining oracles
* ``strategies`` -- pool-based active-learning strategies and the query loop
* ``harness``    -- experiment harness with CSV/JSON outputs (CLI: ``goralab``)
"""

__version__ = "0.1.0"

from . import datasets, goals, harness, influence, model, operators, strategies  # noqa: F401,E402
