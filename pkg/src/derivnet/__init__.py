"""derivnet: perceptron training on values and high-order derivatives.

Subpackages:
    jets       truncated Taylor-jet arithmetic (the derivative carrier)
    network    fully connected perceptron, jet propagation, exact gradients
    cost       extended cost terms for direct approximation and the Poisson residual
    optimizer  resilient backpropagation with weight clamping and step resurrection
    geometry   rotated, jittered training/test grids and surface point sets
    targets    analytic targets and the manufactured Poisson solution
    harness    training runs, sweeps, diagnostics, result tables
    cli        command-line interface
"""

__version__ = "0.1.0"
