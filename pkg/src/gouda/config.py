"""INI run configuration shared by every CLI subcommand."""

from __future__ import annotations

import configparser
import hashlib
import json
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

from .adaptation import AdamState
from .geometry import AngleMode
from .mining import CurriculumSchedule, MiningConfig
from .synthetic import SynthConfig


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    synth: SynthConfig = field(default_factory=SynthConfig)
    mining: MiningConfig = field(default_factory=MiningConfig)
    schedule: CurriculumSchedule = field(default_factory=CurriculumSchedule)
    lr: float = 1e-5
    weight_decay: float = 5e-4
    K: int = 5
    checkpoint_every: int = 200
    loss_margin: float = 0.2
    w_gouda: float = 1.0
    w_ssl: float = 1.0
    aug_min_fraction: float = 0.5
    test_fraction: float = 0.5
    val_fraction: float = 0.1
    bin_width: float = 45.0
    supervised_iterations: int = 2000
    triplet_oracle: bool = False
    seed: int = 7
    out_dir: str = "out"

    def adam(self) -> AdamState:
        return AdamState(lr=self.lr, weight_decay=self.weight_decay)

    def to_dict(self) -> dict:
        d = {f.name: getattr(self, f.name) for f in fields(self)}
        d["synth"] = self.synth.to_dict()
        d["mining"] = asdict(self.mining)
        d["mining"]["angle_mode"] = self.mining.angle_mode.value
        d["schedule"] = {
            "stage_q_percent": list(self.schedule.stage_q_percent),
            "replay_factor": self.schedule.replay_factor,
            "batch_triplets": self.schedule.batch_triplets,
        }
        return d

    def digest(self) -> str:
        """SHA-256 of the resolved configuration, excluding the output directory."""
        d = self.to_dict()
        d.pop("out_dir")
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()


def _floats(text):
    return tuple(float(x) for x in text.replace(";", ",").split(",") if x.strip())


def _bool(text):
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


# section -> {ini key: (target, field, parser)}
_KEYS = {
    "synth": {
        "n_identities": ("synth", "n_identities", int),
        "views": ("synth", "views", _floats),
        "seqs_per_id_view": ("synth", "seqs_per_id_view", int),
        "frames_per_seq": ("synth", "frames_per_seq", int),
        "dim": ("synth", "dim", int),
        "id_strength": ("synth", "id_strength", float),
        "view_bias": ("synth", "view_bias", float),
        "gait_phase_amp": ("synth", "gait_phase_amp", float),
        "noise": ("synth", "noise", float),
    },
    "mining": {
        "t_s": ("mining", "T_s", float),
        "t_c": ("mining", "T_c", float),
        "margin": ("mining", "margin", float),
        "angle_mode": ("mining", "angle_mode", AngleMode.parse),
    },
    "schedule": {
        "q": ("schedule", "stage_q_percent", _floats),
        "replay": ("schedule", "replay_factor", int),
        "batch": ("schedule", "batch_triplets", int),
    },
    "optim": {
        "lr": ("run", "lr", float),
        "weight_decay": ("run", "weight_decay", float),
    },
    "loss": {
        "margin": ("run", "loss_margin", float),
        "w_gouda": ("run", "w_gouda", float),
        "w_ssl": ("run", "w_ssl", float),
        "aug_min_fraction": ("run", "aug_min_fraction", float),
    },
    "sc": {
        "k": ("run", "K", int),
        "checkpoint_every": ("run", "checkpoint_every", int),
    },
    "split": {
        "test_fraction": ("run", "test_fraction", float),
        "val_fraction": ("run", "val_fraction", float),
    },
    "eval": {
        "bin_width": ("run", "bin_width", float),
        "supervised_iterations": ("run", "supervised_iterations", int),
        "triplet_oracle": ("run", "triplet_oracle", _bool),
    },
    "run": {
        "seed": ("run", "seed", int),
        "out_dir": ("run", "out_dir", str),
    },
}


def parse_config(text="", seed: int | None = None, out_dir: str | None = None) -> RunConfig:
    """Build a :class:`RunConfig` from INI text (or a list of layered texts).

    Unknown sections or keys are errors so that typos in ablation files do
    not silently fall back to defaults.
    """
    parser = configparser.ConfigParser(inline_comment_prefixes=("#",))
    try:
        for chunk in [text] if isinstance(text, str) else text:
            parser.read_string(chunk)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from None

    updates = {"synth": {}, "mining": {}, "schedule": {}, "run": {}}
    for section in parser.sections():
        if section not in _KEYS:
            raise ConfigError(f"unknown config section [{section}]")
        for key, raw in parser.items(section):
            spec = _KEYS[section].get(key)
            if spec is None:
                raise ConfigError(f"unknown config field {section}.{key}")
            target, name, conv = spec
            try:
                updates[target][name] = conv(raw)
            except ValueError as exc:
                raise ConfigError(f"invalid config field {section}.{key} = {raw!r}: {exc}") from None

    if seed is not None:
        updates["run"]["seed"] = seed
    if out_dir is not None:
        updates["run"]["out_dir"] = out_dir

    run_seed = updates["run"].get("seed", RunConfig.seed)
    try:
        synth = SynthConfig(**{**updates["synth"], "seed": run_seed})
    except ValueError as exc:
        raise ConfigError(f"invalid [synth] config: {exc}") from None
    try:
        mining = MiningConfig(**updates["mining"])
    except ValueError as exc:
        raise ConfigError(f"invalid [mining] config: {exc}") from None
    try:
        schedule = CurriculumSchedule(**updates["schedule"])
    except ValueError as exc:
        raise ConfigError(f"invalid [schedule] config: {exc}") from None

    cfg = replace(RunConfig(), synth=synth, mining=mining, schedule=schedule, **updates["run"])
    _check_run(cfg)
    return cfg


def _check_run(cfg: RunConfig) -> None:
    checks = [
        (cfg.lr >= 0, "optim.lr must be >= 0"),
        (cfg.weight_decay >= 0, "optim.weight_decay must be >= 0"),
        (cfg.K >= 1, "sc.k must be >= 1"),
        (cfg.checkpoint_every >= 1, "sc.checkpoint_every must be >= 1"),
        (cfg.loss_margin >= 0, "loss.margin must be >= 0"),
        (0 < cfg.aug_min_fraction <= 1, "loss.aug_min_fraction must be in (0, 1]"),
        (0 <= cfg.test_fraction < 1, "split.test_fraction must be in [0, 1)"),
        (0 < cfg.val_fraction < 1, "split.val_fraction must be in (0, 1)"),
        (cfg.bin_width > 0, "eval.bin_width must be > 0"),
        (cfg.supervised_iterations >= 0, "eval.supervised_iterations must be >= 0"),
    ]
    for ok, message in checks:
        if not ok:
            raise ConfigError(message)


def load_config(paths=None, seed: int | None = None, out_dir: str | None = None) -> RunConfig:
    """Load one or more INI files; later files override earlier ones key by key."""
    if paths is None:
        paths = []
    elif isinstance(paths, (str, Path)):
        paths = [paths]
    texts = []
    for path in map(Path, paths):
        if not path.exists():
            raise ConfigError(f"config file not found: {path}")
        texts.append(path.read_text())
    return parse_config(texts, seed=seed, out_dir=out_dir)
