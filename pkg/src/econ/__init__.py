"""Belief-network-driven multi-agent coordination toolkit.

Agents learn belief states from local trajectories, act through prompt
embeddings, and are trained toward equilibrium behaviour with local TD
losses, an attention-based group encoder and a monotonic centralized
mixing network. Pluggable generation backends (mock, scripted game,
OpenAI-compatible HTTP) and a finite-game lab for equilibrium and regret
experiments round out the package.
"""

from .config import MetricsRow, RunConfig, __version__, load_config, save_config

__all__ = ["MetricsRow", "RunConfig", "__version__", "load_config", "save_config"]
