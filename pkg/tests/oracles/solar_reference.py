"""Reference sun positions from the NREL Solar Position Algorithm.

Values were produced once with an independent SPA implementation (apparent
elevation with standard refraction at 1013 hPa / 12 degC, azimuth clockwise
from north) and frozen here so the test suite needs no extra dependency.
Columns: latitude, longitude, ISO timestamp, elevation deg, azimuth deg.
"""

CASES = [
    (39.95, -75.16, "2020-08-15T13:00:00-04:00", 63.7812, 177.2599),
    (39.95, -75.16, "2020-08-15T07:00:00-04:00", 7.9882, 78.5351),
    (39.95, -75.16, "2020-08-15T18:00:00-04:00", 21.1485, 270.4225),
    (0.0, 0.0, "2021-03-20T12:00:00+00:00", 88.1477, 88.7879),
    (-33.87, 151.21, "2019-12-21T10:00:00+11:00", 50.9959, 86.1188),
    (64.84, -147.72, "2022-06-21T15:00:00-08:00", 47.1881, 202.9620),
    (51.48, 0.0, "2023-11-05T09:30:00+00:00", 16.8905, 146.3791),
]
