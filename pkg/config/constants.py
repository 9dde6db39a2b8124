"""Non-sensitive configuration constants for the optomech toolkit.

This module centralizes the physical constants, the reference operating point
of the membrane-in-the-middle cavity, and the numerical defaults of every
processing stage:

- Physical constants: hbar, k_B, unit conversions
- Reference parameters: mechanical mode, cavity, coupling, detection chain
- Calibration: phase-modulation tones, efficiency budget, frequency-noise bound
- Signal processing: sample rates, filter cascade, Welch settings
- Estimation: covariance oversampling, slice geometry, convergence criteria
- Fitting: optimizer tolerances, finite-difference steps, mode caps
- Output: log format, manifest and run-registry file names

UNIT CONVENTION:
================
Every constant whose name ends in _HZ is an ordinary frequency in Hz. Inside
the package all rates are angular (rad/s); conversion happens exactly once,
in config.loader, or explicitly through TWO_PI. Angles in configuration files
are degrees; angles in code are radians.

REFERENCE OPERATING POINT:
==========================
The 819 nm optical mode is the operating point for squeezing and conditional
state preparation (kappa/2pi = 34.2 MHz, kappa/Omega_m ~ 30, bad-cavity
regime). The 862.2 nm mode (kappa/2pi = 13.5 MHz) is used for the sideband
cooling study. Both are shipped as presets in config/presets/.

Detection efficiency budget (multiplicative):
  cavity output 0.948 x electronics 0.861 x passive optics 0.665
  x detector QE 0.90 x homodyne 0.75 x fitted extra loss 0.835 = 0.306
"""

import math
from pathlib import Path

# Configuration file paths
CONFIG_DIR = Path(__file__).parent
PRESETS_DIR = CONFIG_DIR / "presets"

# ============================================================================
# APPLICATION
# ============================================================================

APP_NAME = "optomech"
APP_VERSION = "0.1.0"
SCHEMA_VERSION = 1

# ============================================================================
# PHYSICAL CONSTANTS (SI)
# ============================================================================

HBAR = 1.054571817e-34  # J s
K_B = 1.380649e-23  # J/K
TWO_PI = 2.0 * math.pi

# ============================================================================
# REFERENCE PARAMETERS (819 nm operating point)
# ============================================================================

OMEGA_M_HZ = 1.167e6  # defect mode frequency
GAMMA_M_HZ = 6.41e-3  # energy decay rate
G0_HZ = 159.0  # vacuum optomechanical coupling
KAPPA_HZ = 34.2e6  # total cavity linewidth
SINGLE_PHOTON_COOPERATIVITY = 0.461  # C_0
N_TH = 5.3e6  # room-temperature bath occupancy
GAMMA_TH_HZ = 34.0e3  # n_th * Gamma_m, rounded
OPERATING_COOPERATIVITY = 0.93  # fitted C_q
OPERATING_ETA_D = 0.31  # fitted total detection efficiency
KAPPA_OUT_FRACTION = 0.948  # ideal cavity output coupling kappa_a / kappa
X_ZPF_M = 1.0e-15  # metadata only
EFFECTIVE_MASS_KG = 7.0e-12  # 7 ng, metadata only

# Occupancy quoted for the laser-cooled defect mode at the operating point
COOLED_OCCUPANCY = 20.0

# ============================================================================
# COOLING STUDY (862.2 nm optical mode)
# ============================================================================

COOLING_KAPPA_HZ = 13.5e6
COOLING_IDEAL_OCCUPANCY = 2.9

# ============================================================================
# DETECTION EFFICIENCY BUDGET
# ============================================================================

EFFICIENCY_BUDGET = {
    "cavity_output": 0.948,
    "detector_electronics": 0.861,
    "passive_optics": 0.665,
    "detector_quantum_efficiency": 0.90,
    "homodyne": 0.75,
    "fitted_additional_loss": 0.835,
}
TOTAL_EFFICIENCY = 0.306

# Single-detector homodyne
HOMODYNE_VISIBILITY = 0.95
HOMODYNE_REFLECTIVITY = 0.01  # amplitude reflectivity r of the LO injection splitter
LOCKED_I_HOM_OVER_I_SIG = 0.481
LOCKED_I_LO_OVER_I_SIG = 0.150

# ============================================================================
# CALIBRATION TONES AND LASER NOISE
# ============================================================================

# (frequency Hz, phase-modulation depth)
CALIBRATION_TONES = [
    (1.1457e6, 0.1275),
    (1.19e6, 0.152),
]

BEAT_FREQUENCY_HZ = 9.0e6
BEAT_SAMPLE_RATE_HZ = 56.0e6
FREQUENCY_NOISE_BOUND = 3.0e-2  # Hz^2/Hz at 1 MHz
MIN_BEAT_SAMPLES = 100_000
UNWRAP_AMPLITUDE_FRACTION = 0.2  # minimum |IQ| relative to its median

# ============================================================================
# SIGNAL PROCESSING
# ============================================================================

SAMPLE_RATE_HZ = 14.0e6
BANDPASS_HZ = (1.05e6, 1.22e6)
BANDPASS_ORDER = 7
BANDPASS_PASSES = 2
NOTCH_Q = 50.0
NOTCH_THRESHOLD = 1.5  # peak level relative to shot noise that gets a notch

WELCH_SEGMENT = 2**20
WELCH_OVERLAP = 0.5
WELCH_WINDOW = "hann"

DEMOD_LOWPASS_ORDER = 6
DEMOD_LOWPASS_FRACTION = 0.8  # cutoff as a fraction of the output Nyquist
DEMOD_OUTPUT_RATE_HZ = 3.5e6  # IQ rate when the estimate command demodulates a carrier

SHOT_NOISE_MIN_POINTS = 4
SHOT_NOISE_MIN_SPAN = 2.0

# Spurious in-band modes of the 10-mode estimation (offset from Omega_m, Hz)
SPURIOUS_OFFSETS_HZ = [15.1e3, 13.9e3, -17.4e3, -19.3e3, -33.3e3, -34.4e3, -36.6e3, -42.1e3, -43.0e3]

# ============================================================================
# ESTIMATION
# ============================================================================

COV_OVERSAMPLE = 10  # 140 MHz covariance updates at 14 MHz sampling
STEADY_STATE_RTOL = 1e-10
DIVERGENCE_FACTOR = 10.0
SLICE_PREDICT_S = 10e-3
SLICE_RETRODICT_S = 10e-3
SLICE_GUARD_S = 5e-3
MIN_SLICES = 100
EIGEN_CONDITION_LIMIT = 1e8  # above this the stationary filter is run step by step
WILLIAMSON_TOL = 1e-11

# ============================================================================
# SIMULATION
# ============================================================================

MAX_ROTATION_STEP = 0.1  # dt * max|Omega_i - Omega_m|
MAX_CAVITY_STEP = 0.1  # dt * kappa for the classical cavity integrator
MEMORY_FRACTION = 0.25  # share of available memory a record may use
DEFAULT_MAX_SAMPLES = 50_000_000  # used when psutil is unavailable
BYTES_PER_SAMPLE = 16 * 2  # two complex128 channels

# ============================================================================
# THERMAL INTERMODULATION NOISE
# ============================================================================

ZERO_PAD_FACTOR = 2
ALIAS_BAND_FRACTION = 0.4

# ============================================================================
# FITTING
# ============================================================================

FIT_FTOL = 1e-10
FIT_XTOL = 1e-12
FIT_MAX_NFEV = 2000
FD_REL_STEP = 1e-6
FD_ABS_STEP = 1e-9
MIN_POINTS_PER_PARAMETER = 10
MAX_SPURIOUS_MODES = 12
INITIAL_ETA_D = 0.3
SINGULAR_CONDITION = 1e14

# ============================================================================
# OUTPUT
# ============================================================================

LOG_FILE_NAME = "optomech.log"
LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(funcName)s:%(lineno)d - %(message)s"
MANIFEST_NAME = "manifest.json"
RUN_REGISTRY_FILE = ".run_registry.json"

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_IO = 4
