"""Hidden nonlocality: local models, filtering and CHSH certification for
two-qubit and qutrit states."""

from .errors import HiddenNonlocalityError
from .qcore import BipartiteState, Povm

__all__ = ["BipartiteState", "Povm", "HiddenNonlocalityError"]
__version__ = "0.1.0"
