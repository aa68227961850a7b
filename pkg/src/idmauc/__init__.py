"""Illness-death models with interval-censored disease onset and time-specific AUC.

Submodules: ``core`` (records), ``hazards``, ``transprob`` (transition
probabilities), ``simulate``, ``fit``, ``auc``, ``study``, ``io`` and ``cli``.
"""

__version__ = "0.1.0"
