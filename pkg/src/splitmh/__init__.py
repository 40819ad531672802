"""Metropolis-Hastings samplers with AR(1) proposals expressed as matrix splittings.

The package is organized around one idea: a Gaussian-noise AR(1) proposal
``y = gain @ x + shift + noise`` is equivalent to a matrix splitting of an SPD
matrix, and for proposals that are functions of the target precision matrix
every quantity of interest (acceptance rate, expected squared jump size,
optimal tuning) has a closed form that can be checked by Monte Carlo.

Modules
-------
model      targets, spectra, test-problem generators, exact Gaussian sampling
splitting  AR(1) <-> matrix-splitting conversions and the proposal limit
proposals  Langevin, pCN, L-step and HMC proposal families
sampler    Metropolis-Hastings / unadjusted chain driver and diagnostics
theory     closed-form acceptance and jump-size predictions, tuning constants
cli        config-driven prediction/simulation runs and verification suites
"""

from splitmh import model, proposals, sampler, splitting, theory

__all__ = ["model", "splitting", "proposals", "sampler", "theory"]

__version__ = "0.1.0"
