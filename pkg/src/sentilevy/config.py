"""Run configuration: flat ``key=value`` file, overridden by ``--set key=value`` flags."""

from __future__ import annotations

from dataclasses import dataclass, fields
from datetime import date
from pathlib import Path

from .io import DataError, read_keyvalue


def _opt_float(text):
    return None if text in ("", "none", "None") else float(text)


def _opt_date(text):
    return None if text in ("", "none", "None") else date.fromisoformat(text)


def _opt_str(text):
    return None if text in ("", "none", "None") else text


PATH_KEYS = frozenset({"prices", "sentiment", "market", "riskfree", "output_dir",
                       "params_file", "predictions_file"})


@dataclass
class RunConfig:
    # data files
    prices: str | None = None
    sentiment: str | None = None
    sentiment_mode: str = "aggregated"
    market: str | None = None
    riskfree: str | None = None
    # windows, inclusive ISO dates
    history_start: date | None = None
    train_start: date | None = None
    train_end: date | None = None
    test_start: date | None = None
    test_end: date | None = None
    output_dir: str = "out"
    params_file: str | None = None
    predictions_file: str | None = None
    seed: int = 0
    # model and filter
    g: float = 1.0
    kappa0: float = 0.0
    rf_daily: float = 0.0
    beta_window: int = 60
    weights: str = "fixed"
    c_idio: float = 0.5
    sigma_z: float | None = None
    sigma_eps: float = 0.1
    q_eta: float = 1e-4
    r_floor: float = 1e-8
    eps_eta: float = 1e-4
    alpha_s: float = 0.5
    beta_s: float = 2.0
    kappa_s: float = 0.0
    gate: float | None = None
    # grid search
    coef_err: float = 0.1
    p_idio_min: float = 0.0
    p_idio_max: float = 1.0
    p_macro_min: float = 0.0
    p_macro_max: float = 1.0
    phi_min: float = 0.0
    phi_max: float = 1.0
    workers: int = 1
    # simulation
    sim_model: str = "modified"
    sim_days: int = 1002
    sim_start: date = date(2013, 2, 4)
    sim_mu: float = 0.0005
    sim_sigma: float = 0.005
    sim_p_idio: float = 0.3
    sim_p_macro: float = 0.7
    sim_phi: float = 0.6
    sim_kappa0: float | None = None
    sim_sigma_eps: float = 0.1
    sim_c_idio: float = 0.5
    sim_spike_prob: float = 0.03
    sim_spike_scale: float = 0.1
    sim_e_idio: float = 0.3
    sim_e_macro: float = 0.3
    sim_lambda: float = 0.0
    sim_kappa_j: float = 0.0
    sim_sigma_j: float = 0.01

    @classmethod
    def from_mapping(cls, values: dict) -> RunConfig:
        types = {f.name: f.type for f in fields(cls)}
        kwargs = {}
        for key, text in values.items():
            if key not in types:
                raise DataError(f"unknown config key {key!r}")
            kwargs[key] = _convert(key, types[key], str(text).strip())
        cfg = cls(**kwargs)
        cfg.validate_windows()
        return cfg

    @classmethod
    def load(cls, path=None, overrides: dict | None = None) -> RunConfig:
        values = read_keyvalue(path) if path else {}
        from_file = set(values)
        values.update(overrides or {})
        cfg = cls.from_mapping(values)
        if path:
            cfg.resolve_paths(Path(path).parent, from_file - set(overrides or {}))
        return cfg

    def resolve_paths(self, base: Path, keys) -> None:
        """Relative paths read from a config file are relative to that file."""
        for name in PATH_KEYS & set(keys):
            v = getattr(self, name)
            if v is not None and not Path(v).is_absolute():
                setattr(self, name, str(base / v))

    def validate_windows(self) -> None:
        pairs = [("history_start", "train_start"), ("train_start", "train_end"),
                 ("train_end", "test_start"), ("test_start", "test_end")]
        for a, b in pairs:
            va, vb = getattr(self, a), getattr(self, b)
            if va is not None and vb is not None:
                if b == "test_start" and not va < vb:
                    raise DataError(f"train and test windows overlap ({a}={va}, {b}={vb})")
                if va > vb:
                    raise DataError(f"{a}={va} is after {b}={vb}")

    def require_files(self, *names: str) -> None:
        for name in names:
            v = getattr(self, name)
            if v is None:
                raise DataError(f"config key {name} is required")
            if not Path(v).is_file():
                raise DataError(f"{name}: file not found: {v}")

    @property
    def out(self) -> Path:
        return Path(self.output_dir)

    @property
    def params_path(self) -> Path:
        return Path(self.params_file) if self.params_file else self.out / "params.txt"

    @property
    def predictions_path(self) -> Path:
        return Path(self.predictions_file) if self.predictions_file else self.out / "predictions.csv"


def _convert(key, typ, text):
    try:
        if typ in ("str | None",):
            return _opt_str(text)
        if typ in ("float | None",):
            return _opt_float(text)
        if typ in ("date | None",):
            return _opt_date(text)
        if typ == "date":
            return date.fromisoformat(text)
        if typ == "int":
            return int(text)
        if typ == "float":
            return float(text)
        return text
    except ValueError:
        raise DataError(f"bad value for config key {key}: {text!r}") from None
