"""Constellation shaping for AWGN + Wiener phase-noise channels, trained
end to end through a differentiable blind phase search.

Subpackage map:
  autodiff / optim  - tape-based reverse-mode gradients, Adam, FD checking
  channel           - AWGN + Wiener phase noise, seeded substreams
  bps               - regular and differentiable blind phase search
  shaping           - mapper, probabilistic shaper, normalization, sampling
  demapper          - neural demapper and Gaussian reference demapper
  metrics           - entropy, BMI, losses, exponential-fit of a pmf
  models / trainer  - architectures, training loops, evaluation
  checkpoint / config / cli - persistence, experiment files, command line
"""

__version__ = "0.1.0"
