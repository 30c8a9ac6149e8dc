"""gibbsflow: pseudospectral Gibbs-measure experiments for dispersive models."""

__version__ = "0.1.0"
