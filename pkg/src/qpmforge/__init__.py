"""Custom-poled SPDC source design and frequency-bin Gaussian-state analysis."""
