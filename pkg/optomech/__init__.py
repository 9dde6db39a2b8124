"""Optomech - quantum measurement and state estimation for soft-clamped membranes.

Modules:
    model_core: Linearized Langevin susceptibilities, spectra and rates
    membrane: Soft-clamped membrane design helpers
    tin: Thermal intermodulation noise and single-detector homodyne geometry
    simulator: Multimode quadrature trajectories and photocurrent records
    records: Raw record files and CSV tables
    estimator: Kalman prediction, retrodiction and covariance reconstruction
    symplectic: Williamson decomposition into collective modes
    cooling: Sideband cooling with spurious modes and feedback cancellation
    dsp: Filtering, demodulation, PSDs and calibrations
    fitting: Spectral and Lorentzian least-squares fits
    cli: Command-line front end
"""

from config.constants import APP_VERSION

__version__ = APP_VERSION
