"""Proximal stochastic-gradient lab.

One driver (``driver.run``) minimizes ``f + R`` with any pluggable
stochastic-gradient estimator; every estimator certifies six constants
(``theory.ParamSet``) from which stepsizes, contraction factors, and noise
floors follow (``theory``); the certification harness (``certify``) measures
the claimed moment inequalities empirically, by exact enumeration where the
randomness is finite and by replayable Monte Carlo everywhere else.
"""

from . import certify, data, quantize, sampling, theory
from .driver import (DivergenceError, EnsembleTrace, NumericalError,
                     RunConfig, Trace, ensemble, run)
from .estimators import (DIANA, LSVRG, NSAGA, NSEGA, QSGDSR, REGISTRY, SAGA,
                         SEGA, SGD, SGDMB, SGDInd, SGDStar, SVRG, VRDIANA,
                         ConvexCombination, RandomSwitch, tau_l_svrg)
from .problems import (NoisyOracle, Problem, Regularizer, ball_reg, l2_reg,
                       make_least_squares, make_logistic, zero_reg)
from .reference import ReferenceError, ReferenceSolution, solve_reference
from .rng import Streams, uniform_index
from .sampling import (IndexDistribution, importance_probs, inclusion_probs,
                       uniform_dist)
from .theory import ParamSet, RateReport, method_constants

__version__ = "0.1.0"

__all__ = [
    "DIANA", "ConvexCombination", "DivergenceError", "EnsembleTrace",
    "IndexDistribution", "LSVRG", "NSAGA", "NSEGA", "NoisyOracle",
    "NumericalError", "ParamSet", "Problem", "QSGDSR", "REGISTRY",
    "RandomSwitch", "RateReport", "ReferenceError", "ReferenceSolution",
    "Regularizer", "RunConfig", "SAGA", "SEGA", "SGD", "SGDInd", "SGDMB",
    "SGDStar", "SVRG", "Streams", "Trace", "VRDIANA", "ball_reg", "certify",
    "data", "ensemble", "importance_probs", "inclusion_probs", "l2_reg",
    "make_least_squares", "make_logistic", "method_constants", "quantize",
    "run", "sampling", "solve_reference", "tau_l_svrg", "theory",
    "uniform_dist", "uniform_index", "zero_reg", "__version__",
]
