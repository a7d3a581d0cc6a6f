"""Token-agnostic universal adversarial perturbations in embedding space."""

__version__ = "0.1.0"
