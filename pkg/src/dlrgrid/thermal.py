"""Steady-state conductor thermal ratings and a synthetic weather process.

Ratings come from a simplified heat balance at the conductor design
temperature: forced/natural convection and radiation against resistive
heating, with solar gain.  One forced-convection correlation, constant air
properties, no altitude or film-temperature refinements; the aim is monotone,
physically plausible ratings, not standard-grade fidelity.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .netgraph import BusNetwork

AIR_DENSITY = 1.029        # kg/m^3
AIR_VISCOSITY = 1.95e-5    # kg/(m s)
AIR_CONDUCTIVITY = 0.0272  # W/(m K)


@dataclass(frozen=True)
class ConductorSpec:
    resistance_ohm_per_km: float  # at max conductor temperature
    diameter_m: float
    emissivity: float
    absorptivity: float
    max_conductor_temp_c: float
    voltage_kv: float

    def __post_init__(self):
        if min(self.resistance_ohm_per_km, self.diameter_m, self.emissivity,
               self.absorptivity, self.max_conductor_temp_c, self.voltage_kv) <= 0:
            raise ValueError("conductor parameters must be positive")
        if self.emissivity > 1 or self.absorptivity > 1:
            raise ValueError("emissivity and absorptivity must not exceed 1")

    @classmethod
    def from_dict(cls, d):
        return cls(**{k: float(v) for k, v in d.items()})


@dataclass(frozen=True)
class SlrAssumptions:
    """Conservative weather behind the static rating."""

    ambient_c: float = 40.0
    wind_mps: float = 0.6
    solar_wm2: float = 1000.0
    attack_angle_deg: float = 0.0  # wind along the conductor: least cooling


@dataclass(frozen=True)
class LineWeather:
    """Weather seen by one line; fields may be scalars or aligned arrays."""

    temp_c: np.ndarray
    wind_mps: np.ndarray
    attack_angle_deg: np.ndarray
    solar_wm2: np.ndarray


@dataclass
class WeatherSeries:
    bus_ids: tuple[str, ...]
    times: np.ndarray              # datetime64[h], shape (T,)
    temperature_c: np.ndarray      # (n_bus, T)
    wind_mps: np.ndarray
    wind_dir_deg: np.ndarray
    solar_wm2: np.ndarray

    def index(self, bus_id: str) -> int:
        return self.bus_ids.index(bus_id)

    @property
    def hours(self) -> int:
        return len(self.times)


@dataclass
class RatingSeries:
    line_ids: tuple[str, ...]
    times: np.ndarray           # datetime64[h]
    rating_mw: np.ndarray       # (n_line, T)
    slr_mw: np.ndarray          # (n_line,)
    floored: np.ndarray         # (n_line, T) bool, rating clamped at the floor

    def index(self, line_id: str) -> int:
        return self.line_ids.index(line_id)


def wind_attack_factor(angle_deg):
    """Cooling efficiency of the wind attack angle (0 = parallel, 90 = normal)."""
    phi = np.radians(angle_deg)
    return 1.194 - np.cos(phi) + 0.194 * np.cos(2 * phi) + 0.368 * np.sin(2 * phi)


def _heat_loss_wm(temp_c, wind_mps, attack_angle_deg, solar_wm2, c: ConductorSpec):
    """Net cooling (W/m) at the design temperature; can go negative in extreme heat."""
    dt = c.max_conductor_temp_c - np.asarray(temp_c, dtype=float)
    dt = np.maximum(dt, 0.0)
    re = AIR_DENSITY * np.asarray(wind_mps, dtype=float) * c.diameter_m / AIR_VISCOSITY
    forced = (wind_attack_factor(attack_angle_deg)
              * (1.01 + 1.35 * re**0.52) * AIR_CONDUCTIVITY * dt)
    natural = 3.645 * AIR_DENSITY**0.5 * c.diameter_m**0.75 * dt**1.25
    convection = np.maximum(forced, natural)
    tk = (c.max_conductor_temp_c + 273.15) / 100.0
    ta = (np.asarray(temp_c, dtype=float) + 273.15) / 100.0
    radiation = 17.8 * c.diameter_m * c.emissivity * (tk**4 - ta**4)
    solar = c.absorptivity * c.diameter_m * np.asarray(solar_wm2, dtype=float)
    return convection + radiation - solar


def ampacity(weather: LineWeather, conductor: ConductorSpec, floor_mw: float = 0.0):
    """Thermal rating in MW (three-phase at nominal voltage).

    Solves convection + radiation - solar = I^2 R for the current at the
    design temperature.  When net cooling is non-positive the rating is
    clamped to floor_mw rather than raised as an error; rating_series flags
    those hours.
    """
    net = _heat_loss_wm(weather.temp_c, weather.wind_mps,
                        weather.attack_angle_deg, weather.solar_wm2, conductor)
    r_per_m = conductor.resistance_ohm_per_km / 1000.0
    amps = np.sqrt(np.maximum(net, 0.0) / r_per_m)
    mw = np.sqrt(3.0) * conductor.voltage_kv * amps / 1000.0
    return np.maximum(mw, floor_mw)


def heat_balance_residual(weather: LineWeather, conductor: ConductorSpec, rating_mw):
    """Relative residual of the heat balance at a rating; ~0 for unclamped ratings."""
    net = _heat_loss_wm(weather.temp_c, weather.wind_mps,
                        weather.attack_angle_deg, weather.solar_wm2, conductor)
    amps = np.asarray(rating_mw, dtype=float) * 1000.0 / (np.sqrt(3.0) * conductor.voltage_kv)
    heating = amps**2 * conductor.resistance_ohm_per_km / 1000.0
    return np.abs(net - heating) / np.maximum(np.abs(heating), 1e-12)


def static_rating(conductor: ConductorSpec, assumptions: SlrAssumptions | None = None) -> float:
    """SLR: ampacity at fixed conservative weather."""
    a = assumptions or SlrAssumptions()
    weather = LineWeather(np.asarray(a.ambient_c), np.asarray(a.wind_mps),
                          np.asarray(a.attack_angle_deg), np.asarray(a.solar_wm2))
    return float(ampacity(weather, conductor))


# -- geometry -----------------------------------------------------------------

EARTH_RADIUS_KM = 6371.0


def great_circle_km(lat1, lon1, lat2, lon2):
    p1, p2 = np.radians(lat1), np.radians(lat2)
    dphi = p2 - p1
    dlam = np.radians(lon2) - np.radians(lon1)
    a = np.sin(dphi / 2) ** 2 + np.cos(p1) * np.cos(p2) * np.sin(dlam / 2) ** 2
    return 2 * EARTH_RADIUS_KM * np.arcsin(np.sqrt(a))


def line_bearing_deg(lat1, lon1, lat2, lon2) -> float:
    """Initial great-circle bearing from point 1 to point 2, degrees from north."""
    p1, p2 = np.radians(lat1), np.radians(lat2)
    dlam = np.radians(lon2 - lon1)
    x = np.sin(dlam) * np.cos(p2)
    y = np.cos(p1) * np.sin(p2) - np.sin(p1) * np.cos(p2) * np.cos(dlam)
    return float(np.degrees(np.arctan2(x, y)) % 360.0)


def attack_angle_deg(wind_dir_deg, bearing_deg):
    """Acute angle between the wind vector and the line axis, in [0, 90]."""
    diff = np.abs(np.mod(np.asarray(wind_dir_deg, dtype=float) - bearing_deg, 180.0))
    return np.minimum(diff, 180.0 - diff)


def line_weather(network: BusNetwork, weather: WeatherSeries, line) -> LineWeather:
    """Weather at a line: endpoint-bus averages plus wind attack angle."""
    buses = {b.bus_id: b for b in network.buses}
    a, b = buses[line.from_bus], buses[line.to_bus]
    ia, ib = weather.index(a.bus_id), weather.index(b.bus_id)
    temp = 0.5 * (weather.temperature_c[ia] + weather.temperature_c[ib])
    wind = 0.5 * (weather.wind_mps[ia] + weather.wind_mps[ib])
    solar = 0.5 * (weather.solar_wm2[ia] + weather.solar_wm2[ib])
    # circular mean of the endpoint wind directions
    rad_a = np.radians(weather.wind_dir_deg[ia])
    rad_b = np.radians(weather.wind_dir_deg[ib])
    dir_deg = np.degrees(np.arctan2(np.sin(rad_a) + np.sin(rad_b),
                                    np.cos(rad_a) + np.cos(rad_b))) % 360.0
    bearing = line_bearing_deg(a.latitude_deg, a.longitude_deg, b.latitude_deg, b.longitude_deg)
    return LineWeather(temp, wind, attack_angle_deg(dir_deg, bearing), solar)


def rating_series(network: BusNetwork, weather: WeatherSeries,
                  conductors: dict[str, ConductorSpec],
                  slr_assumptions: SlrAssumptions | None = None,
                  floor_fraction: float = 0.1) -> RatingSeries:
    """True DLR per line and hour, with SLR and floor flags."""
    ratings = np.zeros((network.n_lines, weather.hours))
    floored = np.zeros_like(ratings, dtype=bool)
    slr = np.zeros(network.n_lines)
    for i, ln in enumerate(network.lines):
        cond = conductors[ln.conductor_ref]
        slr[i] = static_rating(cond, slr_assumptions)
        lw = line_weather(network, weather, ln)
        raw = ampacity(lw, cond)
        floor = floor_fraction * slr[i]
        floored[i] = raw < floor
        ratings[i] = np.maximum(raw, floor)
    return RatingSeries(tuple(ln.line_id for ln in network.lines),
                        weather.times.copy(), ratings, slr, floored)


# -- synthetic weather ------------------------------------------------------------

@dataclass(frozen=True)
class WeatherModel:
    """Template amplitudes and residual dynamics of the synthetic process."""

    temp_mean_c: float = 19.0
    temp_season_amp_c: float = 9.0
    temp_diurnal_amp_c: float = 6.0
    temp_sigma_c: float = 2.5
    temp_phi: float = 0.95
    wind_mean_mps: float = 4.5
    wind_diurnal_amp_mps: float = 1.2
    wind_sigma_mps: float = 1.6
    wind_phi: float = 0.85
    dir_base_deg: float = 170.0
    dir_swing_deg: float = 55.0
    dir_phi: float = 0.98
    solar_peak_wm2: float = 950.0
    solar_phi: float = 0.8
    length_scale_km: float = 200.0


def _correlated_ar1(rng, chol, phi, n_bus, hours):
    eps = np.empty((n_bus, hours))
    innov = chol @ rng.standard_normal((n_bus, hours))
    eps[:, 0] = innov[:, 0]
    scale = np.sqrt(1.0 - phi * phi)
    for t in range(1, hours):
        eps[:, t] = phi * eps[:, t - 1] + scale * innov[:, t]
    return eps


def simulate_weather(network: BusNetwork, start_date: str, hours: int, seed: int,
                     model: WeatherModel | None = None) -> WeatherSeries:
    """Diurnal/seasonal templates plus spatially correlated AR(1) residuals.

    Cross-bus residual correlation decays as exp(-distance / length_scale);
    the series is deterministic per seed.
    """
    if hours < 24:
        raise ValueError("need at least 24 hours")
    m = model or WeatherModel()
    rng = np.random.default_rng(seed)
    times = np.datetime64(f"{start_date}T00", "h") + np.arange(hours)

    lat = np.array([b.latitude_deg for b in network.buses])
    lon = np.array([b.longitude_deg for b in network.buses])
    dist = great_circle_km(lat[:, None], lon[:, None], lat[None, :], lon[None, :])
    cov = np.exp(-dist / m.length_scale_km)
    chol = np.linalg.cholesky(cov + 1e-10 * np.eye(len(lat)))

    hour_of_day = (times - times.astype("datetime64[D]")).astype(int)
    day_of_year = ((times.astype("datetime64[D]") -
                    times.astype("datetime64[Y]")).astype(int))
    season_phase = np.cos(2 * np.pi * (day_of_year - 200) / 365.0)
    diurnal_phase = np.cos(2 * np.pi * (hour_of_day - 15) / 24.0)

    n = network.n_buses
    temp = (m.temp_mean_c + m.temp_season_amp_c * season_phase
            + m.temp_diurnal_amp_c * diurnal_phase
            + m.temp_sigma_c * _correlated_ar1(rng, chol, m.temp_phi, n, hours))

    wind = (m.wind_mean_mps + m.wind_diurnal_amp_mps * diurnal_phase
            + m.wind_sigma_mps * _correlated_ar1(rng, chol, m.wind_phi, n, hours))
    wind = np.maximum(wind, 0.0)

    direction = np.mod(m.dir_base_deg
                       + m.dir_swing_deg * _correlated_ar1(rng, chol, m.dir_phi, n, hours),
                       360.0)

    elevation = np.sin(np.pi * (hour_of_day - 6) / 12.0)
    elevation = np.where(elevation > 1e-9, elevation, 0.0)  # exact zero at night
    clear_sky = m.solar_peak_wm2 * elevation * (0.78 + 0.22 * season_phase)
    cloud = np.clip(1.0 - 0.45 * np.abs(_correlated_ar1(rng, chol, m.solar_phi, n, hours)),
                    0.15, 1.0)
    solar = clear_sky[None, :] * cloud

    return WeatherSeries(tuple(b.bus_id for b in network.buses), times,
                         temp, wind, direction, solar)


# -- file formats --------------------------------------------------------------------

def _fmt_time(t) -> str:
    return np.datetime_as_string(t, unit="h")


def write_weather_csv(path, weather: WeatherSeries) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["bus_id", "timestamp", "temp_c", "wind_mps", "wind_dir_deg", "solar_wm2"])
        for i, bus in enumerate(weather.bus_ids):
            for t in range(weather.hours):
                w.writerow([bus, _fmt_time(weather.times[t]),
                            repr(float(weather.temperature_c[i, t])),
                            repr(float(weather.wind_mps[i, t])),
                            repr(float(weather.wind_dir_deg[i, t])),
                            repr(float(weather.solar_wm2[i, t]))])


def read_weather_csv(path) -> WeatherSeries:
    by_bus: dict[str, list] = {}
    with open(path, newline="") as fh:
        for r in csv.DictReader(fh):
            by_bus.setdefault(r["bus_id"], []).append(
                (np.datetime64(r["timestamp"], "h"), float(r["temp_c"]),
                 float(r["wind_mps"]), float(r["wind_dir_deg"]), float(r["solar_wm2"])))
    bus_ids = tuple(sorted(by_bus))
    rows = [sorted(by_bus[b]) for b in bus_ids]
    times = np.array([t for t, *_ in rows[0]], dtype="datetime64[h]")
    for b, r in zip(bus_ids, rows):
        if len(r) != len(times) or any(t != times[k] for k, (t, *_) in enumerate(r)):
            raise ValueError(f"weather series for bus {b} does not align with the first bus")
    stack = lambda j: np.array([[row[j] for row in r] for r in rows])  # noqa: E731
    return WeatherSeries(bus_ids, times, stack(1), stack(2), stack(3), stack(4))


def write_ratings_csv(path, ratings: RatingSeries) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["line_id", "timestamp", "rating_mw"])
        for i, line in enumerate(ratings.line_ids):
            for t in range(len(ratings.times)):
                w.writerow([line, _fmt_time(ratings.times[t]),
                            repr(float(ratings.rating_mw[i, t]))])


def read_ratings_csv(path, slr_mw=None) -> RatingSeries:
    by_line: dict[str, list] = {}
    with open(path, newline="") as fh:
        for r in csv.DictReader(fh):
            by_line.setdefault(r["line_id"], []).append(
                (np.datetime64(r["timestamp"], "h"), float(r["rating_mw"])))
    line_ids = tuple(sorted(by_line))
    rows = [sorted(by_line[ln]) for ln in line_ids]
    times = np.array([t for t, _ in rows[0]], dtype="datetime64[h]")
    rating = np.array([[v for _, v in r] for r in rows])
    slr = np.asarray(slr_mw, dtype=float) if slr_mw is not None else np.full(len(line_ids), np.nan)
    return RatingSeries(line_ids, times, rating, slr, np.zeros_like(rating, dtype=bool))
