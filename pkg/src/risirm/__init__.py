"""RIS phase-configuration prediction with invariant risk minimisation.

Channel synthesis for a TX-RIS-RX link, exhaustive-search labelling,
ERM/IRM predictors trained with a from-scratch autodiff engine,
out-of-distribution evaluation and do-calculus interventions.
"""

__version__ = "0.1.0"
