"""Trial-record files, result tables, fit records and run configuration.

Trial file: one trial per line, ``#`` lines are header/comments::

    # atomreadout trial records v1
    # columns: trial_id,prep_state,retained_before,retained_after,n_photons,t_us...
    # readout_duration_us=200.000
    0,bright,1,1,3,0.500,0.500,150.200

Tables are comma separated with a ``#`` header block (config hash, seed)
and unit-suffixed column names. All writes go through a temporary file
and a rename.
"""
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import config_hash, load_keyvalue, parse_keyvalue
from .counting import BrightModel
from .exceptions import ConfigError, DataError
from .fitting import DEFAULT_ETA, FitResult
from .simulation import PrepState, SimConfig, TrialRecord

TRIAL_MAGIC = "# atomreadout trial records v1"
TRIAL_COLUMNS = "trial_id,prep_state,retained_before,retained_after,n_photons,t_us..."


def atomic_write(path, text):
    """Write ``text`` to ``path`` via a temporary file in the same directory."""
    path = Path(path)
    try:
        fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=f".{path.name}.")
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror or exc}") from exc


def _trial_line(rec):
    head = (f"{rec.trial_id},{rec.prep_state.value},{int(rec.retained_before)},"
            f"{int(rec.retained_after)},{rec.n_photons}")
    return head + "".join(f",{t:.3f}" for t in rec.timestamps)


def _trial_header(readout_duration, meta):
    lines = [TRIAL_MAGIC, f"# columns: {TRIAL_COLUMNS}"]
    if readout_duration is not None:
        lines.append(f"# readout_duration_us={readout_duration:.3f}")
    for key in sorted(meta or {}):
        lines.append(f"# {key}={meta[key]}")
    return lines


def save_trials(records, path, readout_duration=None, meta=None):
    """Serialise trial records; identical input gives byte-identical files."""
    lines = _trial_header(readout_duration, meta)
    lines.extend(_trial_line(rec) for rec in records)
    atomic_write(path, "\n".join(lines) + "\n")


def read_trial_header(path):
    """``#`` key=value lines at the top of a trial file."""
    meta = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if not line.startswith("#"):
                break
            body = line[1:].strip()
            if "=" in body and not body.startswith("columns:"):
                key, value = body.split("=", 1)
                meta[key.strip()] = value.strip()
    return meta


def _parse_flag(text, where):
    if text not in ("0", "1"):
        raise DataError(f"{where}: retention flag must be 0 or 1, got {text!r}")
    return text == "1"


def iter_trials(path):
    """Stream validated :class:`TrialRecord` objects from a trial file."""
    duration = None
    try:
        fh = open(path, encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read trials {path}: {exc.strerror}") from exc
    with fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                if line.startswith("# readout_duration_us="):
                    duration = float(line.split("=", 1)[1])
                continue
            where = f"{path}:{lineno}"
            parts = line.split(",")
            if len(parts) < 5:
                raise DataError(f"{where}: expected at least 5 fields, got {len(parts)}")
            try:
                trial_id = int(parts[0])
                k = int(parts[4])
                times = np.array(parts[5:], dtype=float)
            except ValueError as exc:
                raise DataError(f"{where}: {exc}") from None
            try:
                state = PrepState(parts[1])
            except ValueError:
                raise DataError(f"{where}: unknown prep_state {parts[1]!r}") from None
            if k != times.size:
                raise DataError(f"{where}: n_photons={k} but {times.size} timestamps")
            rec = TrialRecord(trial_id, state, times, _parse_flag(parts[2], where),
                              _parse_flag(parts[3], where))
            if duration is not None:
                rec.validate(duration)
            yield rec


def load_trials(path):
    return list(iter_trials(path))


def format_number(x):
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return f"{float(x):.12g}"


def write_table(path, columns, meta=None):
    """Write ``{name: values}`` columns as CSV with a ``#`` provenance block."""
    names = list(columns)
    data = [np.asarray(columns[n]) for n in names]
    lines = [f"# {key}={meta[key]}" for key in sorted(meta or {})]
    lines.append(",".join(names))
    for row in zip(*data):
        lines.append(",".join(format_number(v) for v in row))
    atomic_write(path, "\n".join(lines) + "\n")


def read_table(path):
    """Inverse of :func:`write_table`: ``(meta, {name: float array})``."""
    meta, header, rows = {}, None, []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                if "=" in line:
                    key, value = line[1:].split("=", 1)
                    meta[key.strip()] = value.strip()
                continue
            if header is None:
                header = line.split(",")
                continue
            try:
                rows.append([float(x) for x in line.split(",")])
            except ValueError:
                raise DataError(f"{path}:{lineno}: non-numeric table entry") from None
            if len(rows[-1]) != len(header):
                raise DataError(f"{path}:{lineno}: expected {len(header)} columns")
    if header is None:
        raise DataError(f"{path}: no table header")
    arr = np.array(rows).reshape(-1, len(header))
    return meta, {name: arr[:, i] for i, name in enumerate(header)}


def curve_columns(curve):
    cols = {"time_us": curve.times}
    lo, hi = curve.fidelity_ci
    for i, k in enumerate(curve.thresholds):
        cols[f"eps_bright_n{k}_prob"] = curve.eps_bright[i]
        cols[f"eps_dark_n{k}_prob"] = curve.eps_dark[i]
        cols[f"fidelity_n{k}_prob"] = curve.fidelity[i]
        cols[f"fidelity_n{k}_ci_low_prob"] = lo[i]
        cols[f"fidelity_n{k}_ci_high_prob"] = hi[i]
    cols["n_bright_count"] = np.full(curve.times.size, curve.n_bright)
    cols["n_dark_count"] = np.full(curve.times.size, curve.n_dark)
    return cols


FIT_KEYS = ("label", "eta_r0_kcps", "eta_r0_se_kcps", "r_loss_kcps", "r_loss_se_kcps",
            "r_bg_kcps", "eta", "n_thresh", "cov_eta_r0_eta_r0_kcps2",
            "cov_eta_r0_r_loss_kcps2", "cov_r_loss_r_loss_kcps2", "objective",
            "n_trials_count", "se_method", "ratio")


def fit_record(fit, label):
    cov = fit.covariance
    values = (label, fit.eta_r0, fit.eta_r0_se, fit.r_loss, fit.r_loss_se, fit.r_bg, fit.eta,
              fit.n_thresh, cov[0, 0], cov[0, 1], cov[1, 1], fit.objective_value,
              fit.n_trials, fit.se_method, fit.ratio)
    return {f"fit.{k}": v for k, v in zip(FIT_KEYS, values)}


def save_fit(fit, path, label):
    rec = fit_record(fit, label)
    lines = [f"{k} = {format_number(v) if not isinstance(v, str) else v}" for k, v in rec.items()]
    atomic_write(path, "\n".join(lines) + "\n")


def load_fit(path):
    """Read a fit record written by :func:`save_fit`; returns ``(FitResult, label)``."""
    values = load_keyvalue(path)
    missing = [k for k in FIT_KEYS if f"fit.{k}" not in values]
    if missing:
        raise ConfigError(f"{path}: fit record lacks {', '.join(missing)}")
    v = {k: values[f"fit.{k}"] for k in FIT_KEYS}
    cov = np.array([[v["cov_eta_r0_eta_r0_kcps2"], v["cov_eta_r0_r_loss_kcps2"]],
                    [v["cov_eta_r0_r_loss_kcps2"], v["cov_r_loss_r_loss_kcps2"]]], dtype=float)
    fit = FitResult(float(v["eta_r0_kcps"]), float(v["eta_r0_se_kcps"]),
                    float(v["r_loss_kcps"]), float(v["r_loss_se_kcps"]), float(v["r_bg_kcps"]),
                    float(v["eta"]), int(v["n_thresh"]), cov, float(v["objective"]),
                    n_trials=int(v["n_trials_count"]), se_method=str(v["se_method"]))
    return fit, str(v["label"])


# --- run configuration -------------------------------------------------------

_DEFAULTS = {
    "sim.seed": 2019,
    "sim.eta": DEFAULT_ETA,
    "sim.eta_r0_kcps": 39.4,
    "sim.r_bg_kcps": 1.05,
    "sim.r_loss_kcps": 1.31,
    "sim.dark_r_bg_kcps": 1.05,
    "sim.readout_duration_us": 200.0,
    "sim.n_bright_trials": 3583,
    "sim.n_dark_trials": 3550,
    "sim.retention_probability": 0.971,
    "sim.prep_error_bright": 0.0,
    "sim.prep_error_dark": 0.0,
    "sim.workers": 1,
    "analysis.bin_width_us": 1.0,
    "analysis.thresholds": [1, 2, 3],
    "analysis.post_select": True,
    "analysis.histogram_time_us": 200.0,
    "fit.eta": DEFAULT_ETA,
    "fit.n_thresh": 1,
    "fit.se_method": "sandwich",
    "probe.detuning_mhz": 46.0,
    "probe.saturation": 3.0,
    "scheme.delta_g_mhz": -27.0,
    "scheme.delta_e0_mhz": 21.0,
    "scheme.delta_e1_mhz": 19.0,
    "scheme.delta_e2_mhz": 13.0,
    "scheme.delta_e3_mhz": 3.0,
    "scheme.ground_splitting_mhz": 6800.0,
    "spectrum.start_mhz": 20.0,
    "spectrum.stop_mhz": 80.0,
    "spectrum.points": 100,
    "spectrum.duration_us": 200.0,
    "output.directory": ".",
}
# keys that are valid but have no default
_OPTIONAL = ("sim.r0_kcps", "fit.r_bg_kcps", "scheme.constants_file")
# keys that change how a run executes but not what it computes
_RUNTIME = ("sim.workers", "output.directory")


@dataclass
class RunConfig:
    """Validated run configuration (flat dotted keys, units in the key names)."""

    values: dict = field(default_factory=lambda: dict(_DEFAULTS))
    source: str = "<defaults>"
    given: frozenset = frozenset()

    @classmethod
    def from_dict(cls, given, source="<dict>"):
        unknown = sorted(set(given) - set(_DEFAULTS) - set(_OPTIONAL))
        if unknown:
            raise ConfigError(f"{source}: unknown key(s) {', '.join(unknown)}")
        if "sim.r0_kcps" in given and "sim.eta_r0_kcps" in given:
            raise ConfigError(f"{source}: sim.r0_kcps and sim.eta_r0_kcps conflict; give one")
        values = dict(_DEFAULTS)
        values.update(given)
        if "sim.r0_kcps" in given:
            values["sim.eta_r0_kcps"] = float(given["sim.r0_kcps"]) * float(values["sim.eta"])
            del values["sim.r0_kcps"]
        for key, default in _DEFAULTS.items():
            if isinstance(default, (int, float)) and not isinstance(default, bool):
                if isinstance(values[key], bool) or not isinstance(values[key], (int, float)):
                    raise ConfigError(f"{source}: {key} must be a number, got {values[key]!r}")
        if not isinstance(values["analysis.thresholds"], list):
            values["analysis.thresholds"] = [values["analysis.thresholds"]]
        return cls(values, source, frozenset(given))

    @classmethod
    def load(cls, path):
        return cls.from_dict(load_keyvalue(path), source=str(path))

    @classmethod
    def parse(cls, text, source="<string>"):
        return cls.from_dict(parse_keyvalue(text, source), source)

    def __getitem__(self, key):
        return self.values[key]

    def get(self, key, default=None):
        return self.values.get(key, default)

    def override(self, key, value):
        """Copy with ``key`` set from the command line; clashes with the file are errors."""
        if key in self.given and self.values[key] != value:
            raise ConfigError(f"conflicting values for {key}: {self.source} has "
                              f"{self.values[key]!r}, command line gives {value!r}")
        return RunConfig({**self.values, key: value}, self.source, self.given | {key})

    @property
    def hash(self):
        """Hash of the settings that determine results (runtime keys excluded)."""
        return config_hash({k: v for k, v in self.values.items() if k not in _RUNTIME})

    def sim_config(self):
        v = self.values
        model = BrightModel.from_detected(v["sim.eta_r0_kcps"] * 1e3, v["sim.r_bg_kcps"] * 1e3,
                                          v["sim.r_loss_kcps"] * 1e3, eta=v["sim.eta"])
        try:
            return SimConfig(model, v["sim.dark_r_bg_kcps"] * 1e3, float(v["sim.readout_duration_us"]),
                             int(v["sim.n_bright_trials"]), int(v["sim.n_dark_trials"]),
                             float(v["sim.retention_probability"]), int(v["sim.seed"]),
                             float(v["sim.prep_error_bright"]), float(v["sim.prep_error_dark"]))
        except ValueError as exc:
            raise ConfigError(f"{self.source}: {exc}") from exc

    def probe(self):
        from .atomic import ProbeSpec
        return ProbeSpec(float(self["probe.detuning_mhz"]), float(self["probe.saturation"]))

    def scheme(self):
        from .atomic import LevelScheme
        v = self.values
        return LevelScheme.from_constants(
            v.get("scheme.constants_file"),
            delta_g=float(v["scheme.delta_g_mhz"]),
            delta_e=tuple(float(v[f"scheme.delta_e{i}_mhz"]) for i in range(4)),
            ground_hyperfine_splitting=float(v["scheme.ground_splitting_mhz"]))
