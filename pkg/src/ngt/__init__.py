"""Neuromodulation gated transformer encoder on a small numpy autodiff."""
