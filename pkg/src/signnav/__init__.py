"""Sign-guided indoor navigation: scenes, simulator, episode pipeline, policy and training."""

__version__ = "0.1.0"
