"""Edge detection with thin-stripe topological gradients and higher-order smoothing."""
__version__ = "0.1.0"
