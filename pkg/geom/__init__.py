"""Numerical core: tensors, pullback spectra, certificates, integrability, charts."""
