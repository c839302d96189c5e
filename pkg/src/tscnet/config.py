"""Configuration types for the network and the training harness.

Configs can be loaded from plain key=value text files ('#' starts a
comment) and overridden with key=value strings from the command line.
"""
from __future__ import annotations

from dataclasses import dataclass, field, fields, replace

from .errors import ConfigError


@dataclass
class NetworkConfig:
    """Structural knobs of the detector.

    input_size S must be divisible by 16; the five encoder levels sit at
    S / 2^(i-1). feature_channels is the common width c every level is
    compressed to. The interaction grid defaults to S / 8.
    """
    input_size: int = 256
    block_widths: tuple[int, ...] = (64, 128, 256, 512, 512)
    convs_per_block: tuple[int, ...] = (2, 2, 3, 3, 3)
    feature_channels: int = 32
    use_pau: bool = True
    use_tru: bool = True
    use_riu: bool = True
    grid_size: int = 0          # 0 -> input_size // 8
    vit_layers: int = 2
    vit_heads: int = 4
    vit_mlp_ratio: int = 2
    dropout_rate: float = 0.1

    def __post_init__(self):
        if self.input_size % 16:
            raise ConfigError(f"input_size must be divisible by 16, got {self.input_size}")
        if len(self.block_widths) != 5 or len(self.convs_per_block) != 5:
            raise ConfigError("exactly five encoder blocks are required")
        if self.grid_size == 0:
            self.grid_size = self.input_size // 8
        if self.grid_size > self.input_size // 8:
            raise ConfigError(
                f"grid_size {self.grid_size} exceeds the coarsest modulated level "
                f"({self.input_size // 8}); pooling must not upsample")
        if self.use_riu and self.feature_channels % self.vit_heads:
            raise ConfigError(
                f"feature_channels {self.feature_channels} not divisible by vit_heads {self.vit_heads}")

    @property
    def tscm_enabled(self) -> bool:
        return self.use_pau or self.use_tru or self.use_riu

    def level_size(self, level: int) -> int:
        return self.input_size // (2 ** (level - 1))


def full_network_config(**overrides) -> NetworkConfig:
    return NetworkConfig(**overrides)


def desk_network_config(**overrides) -> NetworkConfig:
    base = dict(
        input_size=64,
        block_widths=(8, 16, 32, 64, 64),
        convs_per_block=(1, 1, 1, 1, 1),
        feature_channels=16,
        grid_size=8,
        vit_layers=2,
        vit_heads=4,
    )
    base.update(overrides)
    return NetworkConfig(**base)


def micro_network_config(**overrides) -> NetworkConfig:
    base = dict(
        input_size=32,
        block_widths=(4, 4, 4, 4, 4),
        convs_per_block=(1, 1, 1, 1, 1),
        feature_channels=4,
        grid_size=4,
        vit_layers=1,
        vit_heads=2,
    )
    base.update(overrides)
    return NetworkConfig(**base)


@dataclass
class RunConfig:
    """Everything a training or evaluation run needs."""
    network: NetworkConfig = field(default_factory=NetworkConfig)
    base_lr: float = 1e-4
    batch: int = 4
    epochs: int = 70
    max_steps: int = 0          # 0 -> no cap
    lr_decay_every: int = 30
    lr_decay_factor: float = 0.1
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 7
    augment: bool = True
    checkpoint_every: int = 0   # epochs; 0 -> final checkpoint only
    manifest: str = ""
    out_dir: str = "runs/default"

    def __post_init__(self):
        if self.base_lr <= 0:
            raise ConfigError(f"base_lr must be positive, got {self.base_lr}")
        if self.batch < 1:
            raise ConfigError(f"batch must be >= 1, got {self.batch}")


def lr_at_epoch(cfg: RunConfig, epoch: int) -> float:
    """Step schedule: the rate is divided by 10 every lr_decay_every epochs."""
    return cfg.base_lr * (cfg.lr_decay_factor ** (epoch // cfg.lr_decay_every))


_BOOL_STRINGS = {"true": True, "1": True, "yes": True, "false": False, "0": False, "no": False}

# key -> (section, field, parser)
def _parse_bool(s: str) -> bool:
    try:
        return _BOOL_STRINGS[s.strip().lower()]
    except KeyError:
        raise ConfigError(f"expected a boolean, got '{s}'") from None


def _parse_int_tuple(s: str) -> tuple[int, ...]:
    return tuple(int(p) for p in s.split(",") if p.strip())


_NETWORK_KEYS = {
    "input_size": int,
    "block_widths": _parse_int_tuple,
    "convs_per_block": _parse_int_tuple,
    "feature_channels": int,
    "use_pau": _parse_bool,
    "use_tru": _parse_bool,
    "use_riu": _parse_bool,
    "grid_size": int,
    "vit_layers": int,
    "vit_heads": int,
    "vit_mlp_ratio": int,
    "dropout_rate": float,
}

_RUN_KEYS = {
    "base_lr": float,
    "batch": int,
    "epochs": int,
    "max_steps": int,
    "lr_decay_every": int,
    "lr_decay_factor": float,
    "adam_beta1": float,
    "adam_beta2": float,
    "adam_eps": float,
    "seed": int,
    "augment": _parse_bool,
    "checkpoint_every": int,
    "manifest": str,
    "out_dir": str,
}


_PRESETS = {
    "full": full_network_config,
    "desk": desk_network_config,
    "micro": micro_network_config,
}


def apply_overrides(cfg: RunConfig, pairs: list[str]) -> RunConfig:
    """Apply 'key=value' strings on top of a RunConfig.

    A 'preset=full|desk|micro' pair replaces the whole network section
    before the remaining keys are applied, regardless of its position.
    """
    net_updates: dict = {}
    run_updates: dict = {}
    for pair in pairs:
        if "=" not in pair:
            raise ConfigError(f"override '{pair}' is not of the form key=value")
        key, _, raw = pair.partition("=")
        key = key.strip()
        raw = raw.strip()
        if key == "preset":
            if raw not in _PRESETS:
                raise ConfigError(f"unknown preset '{raw}' (expected full, desk or micro)")
            cfg = replace(cfg, network=_PRESETS[raw]())
        elif key in _NETWORK_KEYS:
            try:
                net_updates[key] = _NETWORK_KEYS[key](raw)
            except ValueError as e:
                raise ConfigError(f"bad value for {key}: {raw}") from e
        elif key in _RUN_KEYS:
            try:
                run_updates[key] = _RUN_KEYS[key](raw)
            except ValueError as e:
                raise ConfigError(f"bad value for {key}: {raw}") from e
        else:
            raise ConfigError(f"unknown config key '{key}'")
    network = cfg.network
    if net_updates:
        current = {f.name: getattr(network, f.name) for f in fields(NetworkConfig)}
        # grid_size 0 means "derive"; re-derive when input_size changes alone.
        if "input_size" in net_updates and "grid_size" not in net_updates:
            current["grid_size"] = 0
        current.update(net_updates)
        network = NetworkConfig(**current)
    if run_updates or net_updates:
        cfg = replace(cfg, network=network, **run_updates)
    return cfg


def load_run_config(path: str | None, overrides: list[str] | None = None) -> RunConfig:
    """Read a key=value config file, then apply command line overrides."""
    pairs: list[str] = []
    if path is not None:
        try:
            with open(path, "r", encoding="utf-8") as fh:
                for lineno, line in enumerate(fh, 1):
                    line = line.split("#", 1)[0].strip()
                    if not line:
                        continue
                    if "=" not in line:
                        raise ConfigError(f"{path}:{lineno}: expected key=value, got '{line}'")
                    pairs.append(line)
        except OSError as e:
            raise ConfigError(f"cannot read config file {path}: {e}") from e
    pairs.extend(overrides or [])
    return apply_overrides(RunConfig(), pairs)
