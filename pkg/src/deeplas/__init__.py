"""Deep convolutional and recurrent encoders for attention-based speech recognition."""
from ._kernels import BACKEND
from .arch import ElabConfig, InputSpec, elaborate, parse, render
from .model import LAS, Vocabulary

__version__ = "0.1.0"

__all__ = ["BACKEND", "ElabConfig", "InputSpec", "LAS", "Vocabulary", "elaborate", "parse", "render", "__version__"]
