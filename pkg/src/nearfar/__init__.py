"""Semi-supervised auto-labeling of sparsely labeled video by near-to-far track-back,
with loss-weighted importance sampling of the generated labels."""

__version__ = "0.1.0"
