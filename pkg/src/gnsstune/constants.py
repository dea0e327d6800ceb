"""Physical and signal constants shared across the package."""

import math

# WGS-84 Earth model
MU_EARTH = 3.986004418e14        # gravitational parameter [m^3/s^2]
R_EARTH = 6378137.0              # equatorial radius [m]
J2_EARTH = 1.08263e-3            # second zonal harmonic
OMEGA_EARTH = 7.2921150e-5       # rotation rate [rad/s]
FLATTENING = 1.0 / 298.257223563
ECC2 = FLATTENING * (2.0 - FLATTENING)   # first eccentricity squared

G0 = 9.80665                     # standard gravity [m/s^2]
SPEED_OF_LIGHT = 299792458.0     # [m/s]

# GPS L1 C/A signal
L1_FREQ = 1575.42e6              # carrier frequency [Hz]
L1_WAVELENGTH = SPEED_OF_LIGHT / L1_FREQ   # [m]
CODE_RATE = 1.023e6              # chipping rate [chips/s]
CODE_LENGTH = 1023               # chips per code period
CARRIER_TO_CODE = L1_FREQ / CODE_RATE      # = 1540.0
METERS_PER_CHIP = SPEED_OF_LIGHT / CODE_RATE
BIT_PERIOD = 0.020               # navigation data bit period [s] (50 bps)

# Nominal GPS constellation geometry
GPS_SMA = 26559700.0             # semi-major axis [m]
GPS_INCLINATION = 55.0           # [deg]

TWO_PI = 2.0 * math.pi
