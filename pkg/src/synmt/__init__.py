"""Attention-based neural machine translation with source-syntax encoders.

Built on a small numpy autodiff engine.  Four source encoders share one
attention decoder: ``baseline`` (words only), ``parallel`` and
``hierarchical`` (a second RNN over the linearized parse tree), and
``mixed`` (one RNN over interleaved labels and words).
"""

from .corpus import VARIANTS
from .model import ModelConfig, count_params, init_params

__version__ = "0.1.0"

__all__ = ["VARIANTS", "ModelConfig", "count_params", "init_params", "__version__"]
