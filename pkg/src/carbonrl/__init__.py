"""Carbon-minimal wireless LLM serving: carbon model, outage channel, SNN-RL optimizer."""

__version__ = "0.1.0"

from . import _backend as backend  # noqa: F401
