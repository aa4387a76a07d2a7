"""Training configuration and its flat ``key=value`` file form."""
from __future__ import annotations

from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    arch: str = "(L + P/2 + B + R) x 2 + L"
    lr: float = 1e-3
    lr_decayed: float = 1e-4
    clip_norm: float = 1.0
    weight_noise: float = 0.075
    l2: float = 1e-5
    batch_size: int = 8
    eval_every: int = 100
    patience: int = 3
    max_steps: int = 5000
    vocab: str = "abcdefghij"
    train_data: str = ""
    dev_data: str = ""
    seed: int = 0
    # model size, not part of the optimisation recipe
    hidden: int = 256
    channels: int = 32
    dec_hidden: int = 256
    input_channels: int = 3
    baseline_subsample: bool = False
    stride_front_convs: bool = False
    # stop once the decayed rate has also gone `patience` evals without improvement
    early_stop: bool = True
    # evals before this step never count toward patience; dev CER is noise during the early plateau
    decay_warmup: int = 1000
    max_decode_len: int = 64
    eval_batch_size: int = 50

    def __post_init__(self):
        for k in ("lr", "lr_decayed", "clip_norm"):
            if not getattr(self, k) > 0:
                raise ConfigError(f"{k} must be positive")
        if self.lr_decayed >= self.lr:
            raise ConfigError("lr_decayed must be smaller than lr")
        if self.weight_noise < 0 or self.l2 < 0 or self.decay_warmup < 0:
            raise ConfigError("weight_noise, l2 and decay_warmup must be non-negative")
        for k in ("batch_size", "eval_every", "patience", "max_steps", "hidden", "channels", "dec_hidden",
                  "input_channels", "max_decode_len", "eval_batch_size"):
            if getattr(self, k) < 1:
                raise ConfigError(f"{k} must be >= 1")

    def with_(self, **kw) -> "TrainConfig":
        return replace(self, **kw)

    def to_dict(self) -> dict:
        return asdict(self)


_TYPES = {f.name: type(f.default) for f in fields(TrainConfig)}


def _convert(key: str, raw: str):
    t = _TYPES[key]
    try:
        if t is bool:
            low = raw.strip().lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(raw)
            return low in ("true", "1", "yes")
        if t is int:
            return int(raw)
        if t is float:
            return float(raw)
    except ValueError:
        raise ConfigError(f"bad value for {key}: {raw!r}") from None
    return raw


def config_from_dict(d: dict) -> TrainConfig:
    for k in d:
        if k not in _TYPES:
            raise ConfigError(f"unknown config key: {k}")
    return TrainConfig(**{k: _convert(k, v) if isinstance(v, str) else v for k, v in d.items()})


def parse_kv(text: str, where: str = "<config>") -> dict[str, str]:
    """``key=value`` lines; ``#`` starts a comment line; values keep inner spaces."""
    out = {}
    for n, line in enumerate(text.splitlines(), 1):
        s = line.strip()
        if not s or s.startswith("#"):
            continue
        if "=" not in s:
            raise ConfigError(f"{where}:{n}: expected key=value")
        k, v = s.split("=", 1)
        k = k.strip()
        if k in out:
            raise ConfigError(f"{where}:{n}: duplicate key {k}")
        out[k] = v.strip()
    return out


def load_config(path) -> TrainConfig:
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(f"config file not found: {p}")
    return config_from_dict(parse_kv(p.read_text(encoding="utf-8"), str(p)))


def dump_config(cfg: TrainConfig) -> str:
    return "".join(f"{k}={v}\n" for k, v in cfg.to_dict().items())


def build_model(cfg: TrainConfig, input_dims: int):
    """A freshly initialised LAS model for ``cfg``; parameters depend only on ``cfg.seed``."""
    from ..arch import ElabConfig, InputSpec
    from ..model import LAS, Vocabulary

    spec = InputSpec(input_dims, cfg.input_channels)
    elab = ElabConfig(hidden=cfg.hidden, channels=cfg.channels, baseline_subsample=cfg.baseline_subsample,
                      stride_front_convs=cfg.stride_front_convs)
    return LAS(cfg.arch, Vocabulary(cfg.vocab), spec, elab, dec_hidden=cfg.dec_hidden, seed=cfg.seed)
