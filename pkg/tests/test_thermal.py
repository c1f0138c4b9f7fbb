import numpy as np
import pytest

from dlrgrid import netgraph, thermal

ACSR = thermal.ConductorSpec(
    resistance_ohm_per_km=0.09,
    diameter_m=0.0281,
    emissivity=0.8,
    absorptivity=0.8,
    max_conductor_temp_c=90.0,
    voltage_kv=138.0,
)


def weather_point(temp=25.0, wind=2.0, attack=90.0, solar=800.0):
    return thermal.LineWeather(np.asarray(temp), np.asarray(wind),
                               np.asarray(attack), np.asarray(solar))


def bisection_oracle(weather, conductor, hi_amps=20000.0, iters=200):
    """Independent root find: bisect the scalar heat-balance residual in current."""
    r_per_m = conductor.resistance_ohm_per_km / 1000.0

    def residual(amps):
        net = thermal._heat_loss_wm(weather.temp_c, weather.wind_mps,
                                    weather.attack_angle_deg, weather.solar_wm2, conductor)
        return float(net - amps**2 * r_per_m)

    lo, hi = 0.0, hi_amps
    assert residual(lo) > 0
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if residual(mid) > 0:
            lo = mid
        else:
            hi = mid
    amps = 0.5 * (lo + hi)
    return np.sqrt(3.0) * conductor.voltage_kv * amps / 1000.0


def test_reference_point_matches_bisection_oracle():
    w = weather_point()
    got = float(thermal.ampacity(w, ACSR))
    want = bisection_oracle(w, ACSR)
    assert abs(got - want) / want < 1e-3


def test_heat_balance_residual_small():
    rng = np.random.default_rng(1)
    w = thermal.LineWeather(rng.uniform(-5, 42, 500), rng.uniform(0, 12, 500),
                            rng.uniform(0, 90, 500), rng.uniform(0, 1000, 500))
    mw = thermal.ampacity(w, ACSR)
    res = thermal.heat_balance_residual(w, ACSR, mw)
    assert np.max(res) < 1e-6


def test_monotone_in_wind_ambient_solar():
    rng = np.random.default_rng(2)
    for _ in range(300):
        t = rng.uniform(-5, 42)
        v = rng.uniform(0, 11)
        a = rng.uniform(0, 90)
        s = rng.uniform(0, 1000)
        base = float(thermal.ampacity(weather_point(t, v, a, s), ACSR))
        assert float(thermal.ampacity(weather_point(t, v + rng.uniform(0.1, 3), a, s), ACSR)) >= base
        assert float(thermal.ampacity(weather_point(t + rng.uniform(0.5, 5), v, a, s), ACSR)) <= base
        assert float(thermal.ampacity(weather_point(t, v, a, s + rng.uniform(10, 200)), ACSR)) <= base
    # strictly increasing in wind once forced convection dominates
    lo = float(thermal.ampacity(weather_point(wind=2.0), ACSR))
    hi = float(thermal.ampacity(weather_point(wind=2.5), ACSR))
    assert hi > lo


def test_slr_dominated_by_kinder_weather():
    slr = thermal.static_rating(ACSR)
    kind = weather_point(temp=30.0, wind=3.0, attack=45.0, solar=400.0)
    assert float(thermal.ampacity(kind, ACSR)) >= slr


def test_slr_not_always_conservative():
    # hotter and stiller than the SLR assumptions -> true rating below SLR
    slr = thermal.static_rating(ACSR)
    harsh = weather_point(temp=46.0, wind=0.1, attack=0.0, solar=1000.0)
    assert float(thermal.ampacity(harsh, ACSR)) < slr


def test_slr_decreases_with_hotter_assumptions():
    base = thermal.static_rating(ACSR)
    hotter = thermal.static_rating(ACSR, thermal.SlrAssumptions(ambient_c=45.0))
    assert hotter < base


def sixbus_network():
    buses = [
        {"bus_id": f"B{i}", "latitude_deg": 30.0 + 0.8 * i, "longitude_deg": -97.0 + 0.5 * i}
        for i in range(1, 7)
    ]
    lines = [
        {"line_id": f"L{k}", "from_bus": f"B{a}", "to_bus": f"B{b}",
         "susceptance_pu": 5.0, "length_km": 60.0, "conductor_ref": "acsr"}
        for k, (a, b) in enumerate([(1, 2), (2, 3), (1, 4), (4, 5), (5, 6), (2, 5), (3, 6)])
    ]
    return netgraph.build_network(buses, lines)


def test_simulate_weather_deterministic_and_bounded():
    net = sixbus_network()
    w1 = thermal.simulate_weather(net, "2021-01-01", 72, seed=4)
    w2 = thermal.simulate_weather(net, "2021-01-01", 72, seed=4)
    w3 = thermal.simulate_weather(net, "2021-01-01", 72, seed=5)
    np.testing.assert_array_equal(w1.temperature_c, w2.temperature_c)
    assert not np.array_equal(w1.temperature_c, w3.temperature_c)
    assert np.all(w1.wind_mps >= 0)
    assert np.all(w1.solar_wm2 >= 0)
    hour = (w1.times - w1.times.astype("datetime64[D]")).astype(int)
    night = (hour < 7) | (hour > 17)
    assert np.all(w1.solar_wm2[:, night] == 0.0)


def test_colocated_buses_fully_correlated():
    buses = [
        {"bus_id": "A", "latitude_deg": 31.0, "longitude_deg": -97.0},
        {"bus_id": "B", "latitude_deg": 31.0, "longitude_deg": -97.0},
    ]
    lines = [{"line_id": "L0", "from_bus": "A", "to_bus": "B",
              "susceptance_pu": 1.0, "length_km": 1.0, "conductor_ref": "acsr"}]
    net = netgraph.build_network(buses, lines)
    w = thermal.simulate_weather(net, "2021-06-01", 200, seed=8)
    corr = np.corrcoef(w.temperature_c[0], w.temperature_c[1])[0, 1]
    assert corr > 1.0 - 1e-8
    np.testing.assert_allclose(w.temperature_c[0], w.temperature_c[1], atol=1e-2)


def test_residual_correlation_matches_kernel_at_length_scale():
    model = thermal.WeatherModel(length_scale_km=200.0)
    # place two buses ~200 km apart (pure latitude offset: 1 deg ~ 111.19 km)
    buses = [
        {"bus_id": "A", "latitude_deg": 30.0, "longitude_deg": -97.0},
        {"bus_id": "B", "latitude_deg": 30.0 + 200.0 / 111.19, "longitude_deg": -97.0},
    ]
    lines = [{"line_id": "L0", "from_bus": "A", "to_bus": "B",
              "susceptance_pu": 1.0, "length_km": 200.0, "conductor_ref": "acsr"}]
    net = netgraph.build_network(buses, lines)
    w = thermal.simulate_weather(net, "2021-01-01", 10_000, seed=13, model=model)
    # subtract the shared deterministic template to expose the AR(1) residuals
    hour = (w.times - w.times.astype("datetime64[D]")).astype(int)
    doy = (w.times.astype("datetime64[D]") - w.times.astype("datetime64[Y]")).astype(int)
    template = (model.temp_mean_c
                + model.temp_season_amp_c * np.cos(2 * np.pi * (doy - 200) / 365.0)
                + model.temp_diurnal_amp_c * np.cos(2 * np.pi * (hour - 15) / 24.0))
    eps0 = w.temperature_c[0] - template
    eps1 = w.temperature_c[1] - template
    corr = np.corrcoef(eps0, eps1)[0, 1]
    assert abs(corr - np.exp(-1.0)) < 0.1


def test_rating_series_and_csv_round_trip(tmp_path):
    net = sixbus_network()
    w = thermal.simulate_weather(net, "2021-03-01", 48, seed=3)
    ratings = thermal.rating_series(net, w, {"acsr": ACSR})
    assert ratings.rating_mw.shape == (7, 48)
    assert np.all(ratings.rating_mw > 0)
    assert np.all(ratings.slr_mw > 0)

    thermal.write_weather_csv(tmp_path / "weather.csv", w)
    w2 = thermal.read_weather_csv(tmp_path / "weather.csv")
    np.testing.assert_array_equal(w.temperature_c, w2.temperature_c)
    np.testing.assert_array_equal(w.times, w2.times)

    thermal.write_ratings_csv(tmp_path / "dlr.csv", ratings)
    r2 = thermal.read_ratings_csv(tmp_path / "dlr.csv", slr_mw=ratings.slr_mw)
    np.testing.assert_array_equal(ratings.rating_mw, r2.rating_mw)
