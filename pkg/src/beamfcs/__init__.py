"""Full counting statistics of quasi-free particle beams.

Window statistics of Bose, Fermi, Boltzmann and para-statistics beams are
computed from finite-dimensional generating determinants on a discretized
energy grid.  Modules, bottom up:

* :mod:`~beamfcs.linalg`: PSD matrices, determinant powers, ``sigma <-> hatsigma``
* :mod:`~beamfcs.pointproc`: number laws, void probabilities, waiting times
* :mod:`~beamfcs.arrival`: energy grids and time-of-arrival effects
* :mod:`~beamfcs.quasifree`: quasi-free and coherent sources
* :mod:`~beamfcs.beam`: stationary beams, ``S(t)``, ``g2``
* :mod:`~beamfcs.source`: master-equation source model
* :mod:`~beamfcs.sampler`: Monte Carlo click trains and estimators
"""
from .arrival import (
    DilationData,
    DirectIntegralSpace,
    TimeBandEffect,
    assemble_effect,
    effect_matrix,
    fourier_indicator,
    kijowski_free_1d,
)
from .beam import (
    SKernel,
    StationaryBeam,
    StationaryState,
    detector_rate,
    finite_beam_truncation,
    g2_xy,
    gaussian_line,
    local_trace_bound_check,
    plane_wave,
    plane_wave_coherent,
    s_kernel,
)
from .errors import *  # noqa: F401,F403
from .linalg import (
    HermitianPSD,
    Statistics,
    as_statistics,
    det_power,
    hatsigma_sqrt,
    hatsigma_to_sigma,
    log_det_power,
    sigma_to_hatsigma,
)
from .pointproc import (
    CountDistribution,
    GeneratorHandle,
    OutcomeGrid,
    PoissonGenerator,
    joint_count_cf,
    number_distribution,
    stationary_waiting_time_density,
    void_probability,
    waiting_time_density,
)
from .quasifree import (
    CoherentSource,
    QuasiFreeGenerator,
    QuasiFreeSource,
    WindowKernel,
    chaotic_consistency,
    characteristic_function,
    coherent_characteristic,
    coherent_generator,
    factorial_generator,
    factorial_moment_2,
    factorial_moment_3,
    g_n,
    mu_ell,
    weak_beam_gap,
)
from .sampler import BinnedKernel, ClickTrain, TrainBatch, estimate, sample, sample_bose, sample_fermi
from .source import (
    SourceSpec,
    chi_tau,
    finite_time_sigma,
    gamma_check,
    lambda_for_rate,
    stationary_sigma,
)

__version__ = "0.1.0"
