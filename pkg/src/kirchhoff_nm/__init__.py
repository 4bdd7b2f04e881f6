"""Time-periodic solutions of the forced Kirchhoff equation by Nash-Moser iteration."""

from .basis import DomainSpec, ModeTable, enumerate_modes, weyl_envelope
from .errors import (AliasingBudgetExceeded, CapacityExceeded, ConfigError,
                     DiscretizationTooCoarse, DomainError, InsufficientData, KirchhoffError,
                     MeanNotZero, NeumannDiverging, NonResonanceViolated, SpectrumTooShort,
                     WeightNotPositive)
from .field import K_ALG, Field, NormParams, TimeProfile, h1_norm, multiply_profiles, sigma_s_norm
from .hill import HillSpectrum, liouville_oracle, solve_hill, sup_norm_estimate
from .kirchhoff import ProblemData, convert_scaling, residual
from .linsolve import (LinearizedContext, ResonanceReport, check_nonresonance, invert_D,
                       invert_linearized)
from .nashmoser import (IterationTrace, SolveOutcome, SolverParams, solve, solve_dirichlet,
                        solve_periodic, uniqueness_probe, verify_solution)
from .sweep import SweepConfig, SweepRecord, measure_curve, sweep_omega

__version__ = "0.1.0"
