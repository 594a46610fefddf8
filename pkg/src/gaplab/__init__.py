"""gaplab: numerical laboratory for spectral-gap asymptotics of
Ornstein-Uhlenbeck type operators on Riemannian path spaces."""

__version__ = "0.1.0"
