"""Stochastic-gradient estimators sharing one driver contract."""

from .base import Estimator
from .combinators import ConvexCombination, RandomSwitch, tau_l_svrg
from .diana import DIANA, VRDIANA
from .saga import NSAGA, SAGA
from .sega import NSEGA, SEGA
from .sgd import QSGDSR, SGD, SGDMB, SGDInd, SGDStar
from .svrg import LSVRG, SVRG

# method_id -> class, for config-driven construction and reporting
REGISTRY = {
    cls.method_id: cls
    for cls in (
        SGD, SGDMB, SGDInd, SGDStar, QSGDSR,
        SAGA, NSAGA, SEGA, NSEGA, SVRG, LSVRG,
        DIANA, VRDIANA, ConvexCombination, RandomSwitch,
    )
}

__all__ = [
    "Estimator", "REGISTRY",
    "SGD", "SGDMB", "SGDInd", "SGDStar", "QSGDSR",
    "SAGA", "NSAGA", "SEGA", "NSEGA", "SVRG", "LSVRG",
    "DIANA", "VRDIANA",
    "ConvexCombination", "RandomSwitch", "tau_l_svrg",
]
