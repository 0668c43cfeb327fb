"""SAMBA: bidirectional selective state-space blocks combined with adaptive
Chebyshev graph convolution, for one-step-ahead stock-return forecasting.

Submodules are imported explicitly (``samba.model``, ``samba.training``, ...);
this package root stays import-light so the CLI can pin thread-count
environment variables before numpy is loaded.
"""

__version__ = "0.1.0"
