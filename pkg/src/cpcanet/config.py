"""Line-based ``key = value`` run configuration.

Every key has a documented default; unknown keys are a hard error so
typos never pass silently.  ``dump_config`` emits the fully resolved
configuration, and parsing that dump reproduces the same configuration
(the resolution is a fixed point).
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .attention import VARIANTS
from .errors import ConfigError
from .inference import SlidingWindowConfig
from .losses import LossWeights
from .network import NetworkConfig
from .train import TrainConfig


@dataclass
class RunConfig:
    network: NetworkConfig = field(default_factory=NetworkConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    infer: SlidingWindowConfig = field(default_factory=SlidingWindowConfig)
    loss: LossWeights = field(default_factory=LossWeights)
    loss_include_background: bool = True
    variant: str = "cpca_sequential"

    def validate(self) -> "RunConfig":
        self.network.validate()
        self.train.validate()
        self.infer.validate()
        self.loss.validate()
        if self.variant not in VARIANTS:
            raise ConfigError(
                f"unknown variant {self.variant!r}; expected one of {VARIANTS}"
            )
        return self


def _fmt_bool(v: bool) -> str:
    return "true" if v else "false"


def _parse_bool(s: str) -> bool:
    if s.lower() in ("true", "1", "yes"):
        return True
    if s.lower() in ("false", "0", "no"):
        return False
    raise ConfigError(f"expected a boolean, got {s!r}")


def _parse_int_list(s: str) -> tuple:
    try:
        return tuple(int(p.strip()) for p in s.split(","))
    except ValueError:
        raise ConfigError(f"expected a comma-separated integer list, got {s!r}") from None


def _fmt_int_list(v) -> str:
    return ",".join(str(i) for i in v)


# key -> (getter, setter, formatter, parser); order defines dump order
def _schema():
    def f(attr, sub=None):
        def get(cfg):
            obj = getattr(cfg, sub) if sub else cfg
            return getattr(obj, attr)

        def put(cfg, value):
            obj = getattr(cfg, sub) if sub else cfg
            setattr(obj, attr, value)

        return get, put

    entries = {}

    def add(key, accessors, fmt, parse):
        entries[key] = (*accessors, fmt, parse)

    add("network.embed_dim", f("embed_dim", "network"), str, int)
    add("network.m", f("m", "network"), str, int)
    add("network.stage_depths", f("stage_depths", "network"), _fmt_int_list, _parse_int_list)
    add("network.stage_widths", f("stage_widths", "network"), _fmt_int_list, _parse_int_list)
    add("network.decoder_blocks", f("decoder_blocks", "network"), _fmt_int_list, _parse_int_list)
    add("network.num_classes", f("num_classes", "network"), str, int)
    add("network.branch_kernels", f("branch_kernels", "network"), _fmt_int_list, _parse_int_list)
    add("network.reduction", f("reduction", "network"), str, int)
    add("network.in_channels", f("in_channels", "network"), str, int)
    add("network.conv_block_bn_first", f("conv_block_bn_first", "network"), _fmt_bool, _parse_bool)
    add("train.epochs", f("epochs", "train"), str, int)
    add("train.batch_size", f("batch_size", "train"), str, int)
    add("train.learning_rate", f("learning_rate", "train"), repr, float)
    add("train.seed", f("seed", "train"), str, int)
    add("train.optimizer", f("optimizer", "train"), str, str)
    add("train.momentum", f("momentum", "train"), repr, float)
    add("train.val_fraction", f("val_fraction", "train"), repr, float)
    add("train.save_every", f("save_every", "train"), str, int)
    add("train.flip", f("flip", "train"), _fmt_bool, _parse_bool)
    add("train.rot90", f("rot90", "train"), _fmt_bool, _parse_bool)
    add("train.intensity", f("intensity", "train"), _fmt_bool, _parse_bool)
    add("infer.crop_h", f("crop_h", "infer"), str, int)
    add("infer.crop_w", f("crop_w", "infer"), str, int)
    add("infer.stride_factor", f("stride_factor", "infer"), repr, float)
    add("infer.sigma_factor", f("sigma_factor", "infer"), repr, float)
    add("loss.lambda_dc", f("lambda_dc", "loss"), repr, float)
    add("loss.lambda_ce", f("lambda_ce", "loss"), repr, float)
    add("loss.include_background", f("loss_include_background"), _fmt_bool, _parse_bool)
    add("variant", f("variant"), str, str)
    return entries


SCHEMA = _schema()


def default_run_config() -> RunConfig:
    return RunConfig()


def parse_config_text(text: str, base: RunConfig | None = None) -> RunConfig:
    """Apply ``key = value`` lines over the defaults (or ``base``).

    Blank lines and ``#`` comments are allowed; unknown and duplicate keys
    are hard errors.
    """
    cfg = base if base is not None else RunConfig()
    seen = set()
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if key not in SCHEMA:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in seen:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        seen.add(key)
        _, put, _, parse = SCHEMA[key]
        try:
            put(cfg, parse(value))
        except ConfigError:
            raise
        except ValueError as e:
            raise ConfigError(f"line {lineno}: bad value for {key}: {e}") from None
    return cfg


def load_config_file(path) -> RunConfig:
    import sys

    if str(path) == "-":
        return parse_config_text(sys.stdin.read())
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config_text(fh.read())


def dump_config(cfg: RunConfig) -> str:
    lines = []
    for key, (get, _, fmt, _) in SCHEMA.items():
        lines.append(f"{key} = {fmt(get(cfg))}")
    return "\n".join(lines) + "\n"
