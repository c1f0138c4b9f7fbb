"""Network-wide probabilistic rating forecasts with a line-graph conv LSTM.

Each line carries the features of its two endpoint buses plus its own edge
features, giving every line-graph node the same input dimension.  A
bidirectional LSTM whose input pathway is premultiplied by the k-hop
normalized line-graph adjacency encodes a trailing week of hourly history;
per-quantile affine heads map the final hidden pair to the next day's 24
hourly ratings, trained with pinball loss.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from . import autodiff as ad
from .errors import MissingData
from .metrics import pinball_values
from .netgraph import BusNetwork, identity_adjacency, khop_adjacency, line_graph
from .thermal import RatingSeries, WeatherSeries

N_BUS_FEATURES = 6   # temperature, wind speed, wind dir sin/cos, latitude, longitude
N_LINE_FEATURES = 6  # rating, length, season one-hot (4)
FEATURE_DIM = 2 * N_BUS_FEATURES + N_LINE_FEATURES
T_IN_DEFAULT = 168
T_OUT = 24

_SEASON_OF_MONTH = np.array([0, 0, 1, 1, 1, 2, 2, 2, 3, 3, 3, 0])  # Jan..Dec


def season_indices(times) -> np.ndarray:
    months = (times.astype("datetime64[M]") - times.astype("datetime64[Y]")).astype(int)
    return _SEASON_OF_MONTH[months]


@dataclass
class FeatureScaler:
    mean: np.ndarray  # (FEATURE_DIM,)
    std: np.ndarray

    @classmethod
    def fit(cls, raw) -> "FeatureScaler":
        flat = np.asarray(raw, dtype=float).reshape(-1, FEATURE_DIM)
        return cls(flat.mean(axis=0), np.maximum(flat.std(axis=0), 1e-8))

    def transform(self, raw) -> np.ndarray:
        return (np.asarray(raw, dtype=float) - self.mean) / self.std


@dataclass
class TargetScaler:
    """Per-line affine normalization of the rating targets (training aid only)."""

    mean: np.ndarray  # (E,)
    std: np.ndarray

    @classmethod
    def fit(cls, targets) -> "TargetScaler":
        t = np.asarray(targets, dtype=float)  # (N, E, 24)
        return cls(t.mean(axis=(0, 2)), np.maximum(t.std(axis=(0, 2)), 1e-6))

    def _shaped(self, arr):
        extra = (1,) * (arr.ndim - 1)
        return self.mean.reshape((-1,) + extra), self.std.reshape((-1,) + extra)

    def transform(self, per_line) -> np.ndarray:
        per_line = np.asarray(per_line, dtype=float)
        m, s = self._shaped(per_line)
        return (per_line - m) / s

    def inverse(self, per_line) -> np.ndarray:
        per_line = np.asarray(per_line, dtype=float)
        m, s = self._shaped(per_line)
        return per_line * s + m


@dataclass
class FeatureWindow:
    line_ids: tuple[str, ...]
    times: np.ndarray          # (T_in,)
    values: np.ndarray         # (T_in, E, FEATURE_DIM)
    standardized: bool = False


def _hour_index(times, when) -> int:
    idx = int(np.searchsorted(times, when))
    if idx >= len(times) or times[idx] != when:
        raise MissingData(f"hour {when} not present in the series")
    return idx


def assemble_features(network: BusNetwork, weather: WeatherSeries, ratings: RatingSeries,
                      date, t_in: int = T_IN_DEFAULT,
                      scaler: FeatureScaler | None = None) -> FeatureWindow:
    """Feature window for the t_in hours strictly before midnight of `date`.

    Row for a line is [bus features of the lower-id endpoint || higher-id
    endpoint || line features], identical dimension for every line.
    """
    day = np.datetime64(date, "D")
    start = np.datetime64(day, "h") - np.timedelta64(t_in, "h")
    s_w = _hour_index(weather.times, start)
    s_r = _hour_index(ratings.times, start)
    if s_w + t_in > weather.hours:
        raise MissingData(f"weather series ends before {day} (needs {t_in} trailing hours)")
    if s_r + t_in > len(ratings.times):
        raise MissingData(f"rating series ends before {day} (needs {t_in} trailing hours)")

    times = weather.times[s_w:s_w + t_in]
    season = np.zeros((t_in, 4))
    season[np.arange(t_in), season_indices(times)] = 1.0

    buses = {b.bus_id: b for b in network.buses}
    values = np.empty((t_in, network.n_lines, FEATURE_DIM))
    for e, ln in enumerate(network.lines):
        row = e  # ratings follow netgraph line order
        if ratings.line_ids[row] != ln.line_id:
            row = ratings.index(ln.line_id)
        dlr = ratings.rating_mw[row, s_r:s_r + t_in]
        col = 0
        for bus_id in ln.endpoints():
            bus = buses[bus_id]
            bi = weather.index(bus_id)
            sl = slice(s_w, s_w + t_in)
            wd = np.radians(weather.wind_dir_deg[bi, sl])
            values[:, e, col + 0] = weather.temperature_c[bi, sl]
            values[:, e, col + 1] = weather.wind_mps[bi, sl]
            values[:, e, col + 2] = np.sin(wd)
            values[:, e, col + 3] = np.cos(wd)
            values[:, e, col + 4] = bus.latitude_deg
            values[:, e, col + 5] = bus.longitude_deg
            col += N_BUS_FEATURES
        values[:, e, col + 0] = dlr
        values[:, e, col + 1] = ln.length_km
        values[:, e, col + 2:col + 6] = season

    if scaler is not None:
        values = scaler.transform(values)
    return FeatureWindow(tuple(ln.line_id for ln in network.lines), times, values,
                         standardized=scaler is not None)


@dataclass
class EpisodeDataset:
    """Chronological (history window, next-day target) pairs with a 4:1 time split."""

    line_ids: tuple[str, ...]
    dates: np.ndarray            # (N,) datetime64[D]
    features: np.ndarray         # (N, T_in, E, FEATURE_DIM), standardized
    targets: np.ndarray          # (N, E, 24) in MW
    n_train: int
    feature_scaler: FeatureScaler
    target_scaler: TargetScaler
    t_in: int = T_IN_DEFAULT

    @property
    def train_indices(self):
        return np.arange(self.n_train)

    @property
    def test_indices(self):
        return np.arange(self.n_train, len(self.dates))


def build_dataset(network: BusNetwork, weather: WeatherSeries, ratings: RatingSeries,
                  t_in: int = T_IN_DEFAULT, split_ratio=(4, 1)) -> EpisodeDataset:
    if len(weather.times) != len(ratings.times) or weather.times[0] != ratings.times[0]:
        raise MissingData("weather and rating series are not aligned")
    first = weather.times[0]
    if (first - first.astype("datetime64[D]")).astype(int) != 0:
        raise MissingData("series must start at midnight")

    hours = weather.hours
    first_day = int(np.ceil(t_in / 24.0))
    last_day = hours // 24 - 1
    if last_day < first_day:
        raise MissingData("series too short for one (window, target) pair")
    days = np.arange(first_day, last_day + 1)
    dates = (first.astype("datetime64[D]") + days).astype("datetime64[D]")

    raw = np.empty((len(days), t_in, network.n_lines, FEATURE_DIM))
    targets = np.empty((len(days), network.n_lines, T_OUT))
    order = [ratings.index(ln.line_id) for ln in network.lines]
    for i, d in enumerate(days):
        win = assemble_features(network, weather, ratings, dates[i], t_in=t_in)
        raw[i] = win.values
        targets[i] = ratings.rating_mw[order, d * 24:(d + 1) * 24]

    r_train, r_test = split_ratio
    n = len(days)
    n_train = max(1, min(n - 1, int(round(n * r_train / (r_train + r_test)))))
    scaler = FeatureScaler.fit(raw[:n_train])
    t_scaler = TargetScaler.fit(targets[:n_train])
    return EpisodeDataset(tuple(ln.line_id for ln in network.lines), dates,
                          scaler.transform(raw), targets, n_train, scaler, t_scaler,
                          t_in=t_in)


# -- model ------------------------------------------------------------------------

@dataclass
class TrainConfig:
    epochs: int = 60
    batch_size: int = 64
    lr: float = 1e-3
    weight_decay: float = 1e-4
    d_h: int = 128
    k: int = 5
    quantile_levels: tuple = (0.01, 0.05, 0.10, 0.50, 0.90, 0.95, 0.99)
    per_line_heads: bool = False
    graph_mode: str = "lgc"      # "identity" disables spatial aggregation (QLSTM ablation)
    seed: int = 0

    def __post_init__(self):
        levels = tuple(float(q) for q in self.quantile_levels)
        if list(levels) != sorted(levels) or not all(0 < q < 1 for q in levels):
            raise ValueError("quantile levels must be ascending and inside (0, 1)")
        self.quantile_levels = levels
        if self.graph_mode not in ("lgc", "identity"):
            raise ValueError(f"unknown graph_mode {self.graph_mode!r}")


_GATES = ("f", "i", "o", "g")


def init_params(rng, d_in, d_h, levels, per_line_heads, n_lines) -> dict:
    """Glorot-scaled parameter store for both directions plus quantile heads."""
    params = {}

    def make(name, shape, scale):
        params[name] = ad.Param(name, rng.normal(0.0, scale, shape))

    for direction in ("fwd", "bwd"):
        for gate in _GATES:
            make(f"{direction}.W_{gate}", (d_in, d_h), np.sqrt(2.0 / (d_in + d_h)))
            make(f"{direction}.U_{gate}", (d_h, d_h), np.sqrt(1.0 / d_h))
            params[f"{direction}.b_{gate}"] = ad.Param(f"{direction}.b_{gate}", np.zeros(d_h))
    head_scale = np.sqrt(1.0 / (2 * d_h))
    for q in levels:
        if per_line_heads:
            for i in range(n_lines):
                make(f"head.q{q:g}.line{i}.W", (2 * d_h, T_OUT), head_scale)
                params[f"head.q{q:g}.line{i}.b"] = ad.Param(f"head.q{q:g}.line{i}.b", np.zeros(T_OUT))
        else:
            make(f"head.q{q:g}.W", (2 * d_h, T_OUT), head_scale)
            params[f"head.q{q:g}.b"] = ad.Param(f"head.q{q:g}.b", np.zeros(T_OUT))
    return params


def lgclstm_cell(tape, x_t, h_prev, c_prev, a_hat, params, direction):
    """One recurrent step; the graph operator touches only the input pathway."""
    p = ad.sparse_dense_matmul(a_hat, x_t)

    def gate(name, act):
        w = tape.param(params[f"{direction}.W_{name}"])
        u = tape.param(params[f"{direction}.U_{name}"])
        b = tape.param(params[f"{direction}.b_{name}"])
        return act(ad.row_broadcast_add(ad.add(ad.matmul(p, w), ad.matmul(h_prev, u)), b))

    f = gate("f", ad.sigmoid)
    i = gate("i", ad.sigmoid)
    o = gate("o", ad.sigmoid)
    g = gate("g", ad.tanh)
    c = ad.add(ad.hadamard(f, c_prev), ad.hadamard(i, g))
    h = ad.hadamard(o, ad.tanh(c))
    return h, c


def encode_bidirectional(tape, x_steps, a_hat, params, d_h):
    """Run both directions over the step list; returns rows x 2*d_h hidden pairs.

    The backward direction consumes the reversed sequence; initial hidden and
    cell states are zero.
    """
    rows = x_steps[0].shape[0]
    finals = {}
    for direction, order in (("fwd", range(len(x_steps))),
                             ("bwd", range(len(x_steps) - 1, -1, -1))):
        h = tape.constant(np.zeros((rows, d_h)))
        c = tape.constant(np.zeros((rows, d_h)))
        for t in order:
            h, c = lgclstm_cell(tape, x_steps[t], h, c, a_hat, params, direction)
        finals[direction] = h
    return ad.concat_columns(finals["fwd"], finals["bwd"])


def head_outputs(tape, hidden, params, levels, per_line_heads, n_lines, batch):
    """Raw per-quantile head outputs (rows x T_OUT), line-major row order."""
    outs = {}
    for q in levels:
        if per_line_heads:
            parts = []
            for i in range(n_lines):
                w = tape.param(params[f"head.q{q:g}.line{i}.W"])
                b = tape.param(params[f"head.q{q:g}.line{i}.b"])
                rows = ad.slice_rows(hidden, i * batch, (i + 1) * batch)
                parts.append(ad.row_broadcast_add(ad.matmul(rows, w), b))
            out = parts[0]
            for p in parts[1:]:
                out = _stack_rows(tape, out, p)
            outs[q] = out
        else:
            w = tape.param(params[f"head.q{q:g}.W"])
            b = tape.param(params[f"head.q{q:g}.b"])
            outs[q] = ad.row_broadcast_add(ad.matmul(hidden, w), b)
    return outs


def _stack_rows(tape, a, b):
    """Row concatenation expressed with the existing primitive set."""
    ra, rb = a.shape[0], b.shape[0]
    cols = a.shape[1]
    pad_a = sp.csr_matrix((np.ones(ra), (np.arange(ra), np.arange(ra))), shape=(ra + rb, ra))
    pad_b = sp.csr_matrix((np.ones(rb), (np.arange(ra, ra + rb), np.arange(rb))), shape=(ra + rb, rb))
    return ad.add(ad.sparse_dense_matmul(pad_a, a), ad.sparse_dense_matmul(pad_b, b))


def pinball_loss(tape, preds_by_level, target_block) -> "ad.Var":
    """Mean pinball over (level, line, hour); target_block matches pred rows."""
    total = None
    for q, pred in preds_by_level.items():
        term = ad.amean(ad.pinball_elem(pred, target_block, q))
        total = term if total is None else ad.add(total, term)
    return ad.scalar_scale(total, 1.0 / len(preds_by_level))


@dataclass
class QuantileForecast:
    """Per-line, per-hour, per-quantile ratings; nonnegative, non-crossing."""

    line_ids: tuple[str, ...]
    levels: tuple[float, ...]
    values: np.ndarray  # (E, T_OUT, n_levels)

    def level_index(self, q: float) -> int:
        for i, lvl in enumerate(self.levels):
            if abs(lvl - q) < 1e-12:
                return i
        raise KeyError(f"level {q} not among {self.levels}")

    def limits_at(self, q: float) -> np.ndarray:
        return self.values[:, :, self.level_index(q)]

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["line_id", "hour", "quantile_level", "value_mw"])
            for i, ln in enumerate(self.line_ids):
                for h in range(self.values.shape[1]):
                    for j, q in enumerate(self.levels):
                        w.writerow([ln, h, repr(q), repr(float(self.values[i, h, j]))])

    @classmethod
    def from_csv(cls, path) -> "QuantileForecast":
        rows = {}
        levels = set()
        with open(path, newline="") as fh:
            for r in csv.DictReader(fh):
                q = float(r["quantile_level"])
                levels.add(q)
                rows[(r["line_id"], int(r["hour"]), q)] = float(r["value_mw"])
        line_ids = tuple(sorted({k[0] for k in rows}))
        hours = 1 + max(k[1] for k in rows)
        levels = tuple(sorted(levels))
        values = np.empty((len(line_ids), hours, len(levels)))
        for i, ln in enumerate(line_ids):
            for h in range(hours):
                for j, q in enumerate(levels):
                    values[i, h, j] = rows[(ln, h, q)]
        return cls(line_ids, levels, values)


def repair_quantiles(values) -> np.ndarray:
    """Clamp at zero and sort along the quantile axis (non-crossing repair)."""
    return np.sort(np.maximum(values, 0.0), axis=2)


@dataclass
class TrainedModel:
    params: dict
    feature_scaler: FeatureScaler
    target_scaler: TargetScaler
    config: TrainConfig
    line_ids: tuple[str, ...]
    d_in: int = FEATURE_DIM
    t_in: int = T_IN_DEFAULT

    def adjacency(self, network: BusNetwork):
        topo = line_graph(network)
        if topo.line_ids != self.line_ids:
            raise MissingData("network lines do not match the trained model")
        if self.config.graph_mode == "identity":
            return identity_adjacency(topo).matrix
        return khop_adjacency(topo, self.config.k).matrix

    def save(self, path) -> None:
        meta = {
            "levels": list(self.config.quantile_levels),
            "d_h": self.config.d_h,
            "k": self.config.k,
            "graph_mode": self.config.graph_mode,
            "per_line_heads": self.config.per_line_heads,
            "line_ids": list(self.line_ids),
            "t_in": self.t_in,
        }
        extras = {
            "feature_mean": self.feature_scaler.mean,
            "feature_std": self.feature_scaler.std,
            "target_mean": self.target_scaler.mean,
            "target_std": self.target_scaler.std,
            "meta_json": np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8),
        }
        ad.save_params(path, list(self.params.values()), extra_arrays=extras)

    @classmethod
    def load(cls, path) -> "TrainedModel":
        params, extras = ad.load_params(path)
        meta = json.loads(bytes(extras["meta_json"].tobytes()).decode())
        config = TrainConfig(
            d_h=meta["d_h"], k=meta["k"], graph_mode=meta["graph_mode"],
            per_line_heads=meta["per_line_heads"],
            quantile_levels=tuple(meta["levels"]),
        )
        return cls({p.name: p for p in params},
                   FeatureScaler(extras["feature_mean"], extras["feature_std"]),
                   TargetScaler(extras["target_mean"], extras["target_std"]),
                   config, tuple(meta["line_ids"]), t_in=meta["t_in"])


def _batch_blocks(features, targets, idx, t_scaler):
    """Line-major stacking: row = line * batch + window."""
    batch = len(idx)
    t_in, n_lines = features.shape[1], features.shape[2]
    feats = features[idx]  # (B, T, E, F)
    steps = [np.ascontiguousarray(feats[:, t].transpose(1, 0, 2).reshape(n_lines * batch, -1))
             for t in range(t_in)]
    t_block = targets[idx].transpose(1, 0, 2)  # (E, B, 24)
    scaled = t_scaler.transform(t_block).reshape(n_lines * batch, T_OUT)
    return steps, scaled


def _block_adjacency(a_hat, batch):
    if batch == 1:
        return a_hat
    return sp.kron(a_hat, sp.identity(batch, format="csr"), format="csr")


def train(dataset: EpisodeDataset, network: BusNetwork, config: TrainConfig):
    """Mini-batch AdamW on the mean pinball loss; deterministic under the seed.

    Returns (TrainedModel, per-epoch mean train loss).
    """
    rng = np.random.default_rng(config.seed)
    topo = line_graph(network)
    if topo.line_ids != dataset.line_ids:
        raise MissingData("dataset lines do not match the network")
    if config.graph_mode == "identity":
        a_hat = identity_adjacency(topo).matrix
    else:
        a_hat = khop_adjacency(topo, config.k).matrix

    n_lines = len(dataset.line_ids)
    params = init_params(rng, FEATURE_DIM, config.d_h, config.quantile_levels,
                         config.per_line_heads, n_lines)
    plist = list(params.values())
    state = ad.adamw_init(plist)

    history = []
    train_idx = dataset.train_indices
    block_cache: dict[int, sp.csr_matrix] = {}
    for _ in range(config.epochs):
        order = rng.permutation(train_idx)
        epoch_loss = 0.0
        seen = 0
        for start in range(0, len(order), config.batch_size):
            idx = order[start:start + config.batch_size]
            steps_np, target_block = _batch_blocks(dataset.features, dataset.targets,
                                                   idx, dataset.target_scaler)
            a_block = block_cache.setdefault(len(idx), _block_adjacency(a_hat, len(idx)))
            tape = ad.Tape()
            x_steps = [tape.constant(s) for s in steps_np]
            hidden = encode_bidirectional(tape, x_steps, a_block, params, config.d_h)
            preds = head_outputs(tape, hidden, params, config.quantile_levels,
                                 config.per_line_heads, n_lines, len(idx))
            loss = pinball_loss(tape, preds, target_block)
            grads = ad.backward(tape, loss, plist)
            if config.lr > 0:
                ad.adamw_step(plist, grads, state, lr=config.lr,
                              weight_decay=config.weight_decay)
            epoch_loss += loss.value.item() * len(idx)
            seen += len(idx)
        history.append(epoch_loss / seen)

    model = TrainedModel(params, dataset.feature_scaler, dataset.target_scaler,
                         config, dataset.line_ids, t_in=dataset.t_in)
    return model, history


def predict_quantiles(model: TrainedModel, hidden_value: np.ndarray) -> QuantileForecast:
    """Apply the heads to encoded hidden pairs; clamp and repair crossings."""
    levels = model.config.quantile_levels
    n_lines = len(model.line_ids)
    out = np.empty((n_lines, T_OUT, len(levels)))
    for j, q in enumerate(levels):
        if model.config.per_line_heads:
            for i in range(n_lines):
                w = model.params[f"head.q{q:g}.line{i}.W"].values
                b = model.params[f"head.q{q:g}.line{i}.b"].values
                out[i, :, j] = hidden_value[i] @ w + b
        else:
            w = model.params[f"head.q{q:g}.W"].values
            b = model.params[f"head.q{q:g}.b"].values
            out[:, :, j] = hidden_value @ w + b
    for j in range(len(levels)):
        out[:, :, j] = model.target_scaler.inverse(out[:, :, j])
    return QuantileForecast(model.line_ids, levels, repair_quantiles(out))


def encode_window(model: TrainedModel, network: BusNetwork, window: FeatureWindow) -> np.ndarray:
    """Hidden pair matrix (E x 2 d_h) for one standardized feature window."""
    a_hat = model.adjacency(network)
    tape = ad.Tape()
    x_steps = [tape.constant(window.values[t]) for t in range(window.values.shape[0])]
    hidden = encode_bidirectional(tape, x_steps, a_hat, model.params, model.config.d_h)
    return hidden.value


def forecast_day_ahead(model: TrainedModel, network: BusNetwork,
                       weather: WeatherSeries, ratings: RatingSeries,
                       date) -> QuantileForecast:
    """Quantile forecast of the next day's ratings from the trailing history."""
    window = assemble_features(network, weather, ratings, date,
                               t_in=model.t_in, scaler=model.feature_scaler)
    hidden = encode_window(model, network, window)
    return predict_quantiles(model, hidden)


def evaluate_pinball(forecast: QuantileForecast, truth) -> float:
    """Plain mean pinball of a repaired forecast against true ratings (MW units)."""
    truth = np.asarray(truth, dtype=float)
    total = 0.0
    for j, q in enumerate(forecast.levels):
        total += float(pinball_values(forecast.values[:, :, j], truth, q).mean())
    return total / len(forecast.levels)
