"""
DRACO - Run Configuration.

Typed configuration for every subcommand, loaded from JSON or YAML files,
validated against the published JSON schemas in ``draco/schemas`` and
hashed so that every artifact can embed the exact settings it came from.

Config kinds:
    synth    - dataset synthesis from plain fingerprints
    plains   - synthetic plain-fingerprint generation
    train    - training, teacher pretraining and fine-tuning
    predict  - batch or single-sample inference
    eval     - pose metrics and pose-gated verification/indexing
    bench    - parameter count and inference latency

Usage:
    cfg = load_config('train', Path('train.yaml'), overrides=['loss.tau=4'])
    print(config_hash(cfg))
"""

import hashlib
import json
import logging
import typing
from dataclasses import dataclass, field, fields, is_dataclass
from enum import Enum
from pathlib import Path
from typing import Any, Dict, Optional, Sequence, Tuple

import jsonschema
import yaml

from .errors import ConfigError
from .resources import load_schema

logger = logging.getLogger(__name__)


class SchemaValidationError(ConfigError):
    """Config document does not satisfy its published schema."""
    pass


# =========================================================================
# Enumerations
# =========================================================================

class FusionStrategy(str, Enum):
    """How expert distributions are weighted into the final set."""
    EQUAL = "equal"
    FIXED = "fixed"
    ADAPTIVE = "adaptive"


class KTMode(str, Enum):
    """Knowledge-transfer supervision from the frozen teacher."""
    RELATION = "relation"
    FEATURE = "feature"
    RESPONSE = "response"
    OFF = "off"


class Distance(str, Enum):
    """Distribution distance used by the pose loss."""
    CE = "ce"
    JS = "js"


class DecodeMode(str, Enum):
    """Distribution to scalar decoding."""
    SUM = "sum"
    MAX = "max"


class Modality(str, Enum):
    """Inputs a model consumes."""
    DUAL = "dual"
    FP = "fp"
    CAP = "cap"
    PLAIN = "plain"


# =========================================================================
# Model configuration
# =========================================================================

@dataclass
class CodecConfig:
    """Frozen bin tables for the decoupled pose representation."""
    pos_lo: float = -256.0
    pos_hi: float = 256.0
    pos_bins: int = 256
    trig_lo: float = -1.0
    trig_hi: float = 1.0
    trig_bins: int = 120


@dataclass
class EncoderConfig:
    """One modality encoder (aggregated-residual layers with attention)."""
    block_counts: Tuple[int, ...] = (3, 4, 6, 3)
    stem_channels: Tuple[int, ...] = (32, 64)
    channels: Tuple[int, ...] = (64, 128, 256, 256)
    layer_strides: Tuple[int, ...] = (2, 2, 2, 2)
    cardinality: int = 8
    attention_reduction: int = 16
    feature_dim: int = 256


def _ridge_encoder() -> EncoderConfig:
    return EncoderConfig(layer_strides=(2, 2, 2, 2))


def _cap_encoder() -> EncoderConfig:
    return EncoderConfig(layer_strides=(1, 1, 1, 1))


@dataclass
class ModelConfig:
    """Full network layout."""
    modality: Modality = Modality.DUAL
    fusion_strategy: FusionStrategy = FusionStrategy.ADAPTIVE
    ridge_encoder: EncoderConfig = field(default_factory=_ridge_encoder)
    cap_encoder: EncoderConfig = field(default_factory=_cap_encoder)
    projector_hidden: int = 256
    projector_blocks: int = 4
    router_hidden: int = 128
    adapter_hidden: int = 256
    teacher_dim: int = 256
    patch_size: int = 132
    cap_grid: int = 12
    teacher_size: int = 512
    codec: CodecConfig = field(default_factory=CodecConfig)

    def to_dict(self) -> Dict[str, Any]:
        return to_plain(self)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'ModelConfig':
        return from_plain(cls, data)


# =========================================================================
# Training configuration
# =========================================================================

@dataclass
class LossConfig:
    """Loss weights, target widths and ablation switches."""
    lambda_components: Dict[str, float] = field(
        default_factory=lambda: {'x': 1.0, 'y': 1.0, 'cos': 1.0, 'sin': 1.0}
    )
    lambda_experts: Dict[str, float] = field(
        default_factory=lambda: {'P': 0.2, 'C': 0.2, 'F': 0.4, 'final': 1.0}
    )
    sigma_pos: float = 3.5      # bins
    sigma_trig: float = 2.5     # bins
    tau: float = 8.0
    lambda_kt: float = 1.0
    distance: Distance = Distance.CE
    kt_mode: KTMode = KTMode.OFF
    decode_mode: DecodeMode = DecodeMode.SUM

    def validate(self) -> None:
        weights = list(self.lambda_components.values()) + list(self.lambda_experts.values())
        if any(w < 0 for w in weights) or self.lambda_kt < 0:
            raise ConfigError("loss weights must be >= 0")
        if self.tau <= 0:
            raise ConfigError(f"tau must be > 0, got {self.tau}")
        if self.sigma_pos <= 0 or self.sigma_trig <= 0:
            raise ConfigError("sigma_pos and sigma_trig must be > 0")
        if set(self.lambda_components) != {'x', 'y', 'cos', 'sin'}:
            raise ConfigError("lambda_components needs exactly x, y, cos, sin")
        if set(self.lambda_experts) != {'P', 'C', 'F', 'final'}:
            raise ConfigError("lambda_experts needs exactly P, C, F, final")


SCHEDULE_PRESETS: Dict[str, Dict[str, Any]] = {
    'default': {'lr_start': 1e-3, 'lr_end': 1e-6, 'batch_size': 256, 'epochs': 80},
    'knowledge_transfer': {'lr_start': 4e-3, 'lr_end': 4e-6, 'batch_size': 512, 'epochs': 200},
    'finetune': {'lr_start': 1e-4, 'lr_end': 1e-5, 'batch_size': 256, 'epochs': 200},
}


@dataclass
class TrainSchedule:
    """AdamW with per-step cosine annealing."""
    lr_start: float = 1e-3
    lr_end: float = 1e-6
    batch_size: int = 256
    epochs: int = 80
    weight_decay: float = 1e-2
    grad_clip: float = 5.0
    rot_range: float = 180.0
    trans_range: float = 40.0
    seed: int = 0
    max_steps: Optional[int] = None
    val_fraction: float = 0.1
    val_every: int = 1
    log_every: int = 50

    @classmethod
    def preset(cls, name: str) -> 'TrainSchedule':
        if name not in SCHEDULE_PRESETS:
            raise ConfigError(
                f"unknown schedule preset '{name}' (choose from {sorted(SCHEDULE_PRESETS)})"
            )
        return cls(**SCHEDULE_PRESETS[name])

    def validate(self) -> None:
        if not (self.lr_start >= self.lr_end > 0):
            raise ConfigError(
                f"need lr_start >= lr_end > 0, got {self.lr_start} / {self.lr_end}"
            )
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.epochs < 0:
            raise ConfigError(f"epochs must be >= 0, got {self.epochs}")
        if not 0 <= self.rot_range <= 180:
            raise ConfigError(f"rot_range must be in [0, 180], got {self.rot_range}")
        if self.trans_range < 0:
            raise ConfigError(f"trans_range must be >= 0, got {self.trans_range}")
        if not 0 <= self.val_fraction < 1:
            raise ConfigError(f"val_fraction must be in [0, 1), got {self.val_fraction}")


@dataclass
class DataConfig:
    """
    Training data source.

    Either a written dataset directory (``dataset``) or a directory of plain
    fingerprints (``plains``) from which samples are synthesized on the fly,
    ``samples_per_epoch`` draws per epoch.
    """
    dataset: Optional[str] = None
    plains: Optional[str] = None
    samples_per_epoch: int = 1024
    fg_threshold: float = 0.4
    max_retries: int = 20


@dataclass
class TrainConfig:
    """Config document for train / teacher / finetune."""
    out: str = "runs/train"
    preset: str = "default"
    model: ModelConfig = field(default_factory=ModelConfig)
    loss: LossConfig = field(default_factory=LossConfig)
    schedule: TrainSchedule = field(default_factory=TrainSchedule)
    data: DataConfig = field(default_factory=DataConfig)
    teacher_checkpoint: Optional[str] = None
    init_checkpoint: Optional[str] = None
    resume: bool = False
    device: str = "cpu"

    def validate(self) -> None:
        self.loss.validate()
        self.schedule.validate()
        if not self.data.dataset and not self.data.plains:
            raise ConfigError("data.dataset or data.plains is required")
        if self.loss.kt_mode != KTMode.OFF and not self.teacher_checkpoint:
            raise ConfigError(
                f"kt_mode '{self.loss.kt_mode.value}' needs teacher_checkpoint"
            )


# =========================================================================
# Other subcommands
# =========================================================================

@dataclass
class SynthConfig:
    """Config document for dataset synthesis."""
    plains: str = "plains"
    out: str = "dataset"
    samples_per_plain: int = 4
    rot_range: float = 180.0
    trans_range: float = 40.0
    patch_size: int = 132
    cap_grid: int = 12
    fg_threshold: float = 0.4
    max_retries: int = 20
    max_rejection_rate: float = 0.1
    teacher_views: bool = False
    teacher_size: int = 512
    seed: int = 0

    def validate(self) -> None:
        if not 0 <= self.rot_range <= 180:
            raise ConfigError(f"rot_range must be in [0, 180], got {self.rot_range}")
        if self.samples_per_plain < 1:
            raise ConfigError("samples_per_plain must be >= 1")


@dataclass
class PlainsConfig:
    """Config document for synthetic plain-fingerprint generation."""
    out: str = "plains"
    fingers: int = 10
    impressions: int = 2
    size: int = 512
    trans_jitter: float = 16.0
    rot_jitter: float = 20.0
    seed: int = 0

    def validate(self) -> None:
        if self.size < 400:
            raise ConfigError(f"plain fingerprints need size >= 400, got {self.size}")
        if self.fingers < 1 or self.impressions < 1:
            raise ConfigError("fingers and impressions must be >= 1")


@dataclass
class PredictConfig:
    """Config document for inference."""
    checkpoint: str = "runs/train/best"
    dataset: Optional[str] = None
    patch: Optional[str] = None
    cap: Optional[str] = None
    out: str = "predictions"
    decode_mode: DecodeMode = DecodeMode.SUM
    batch_size: int = 64
    overlays: bool = False
    device: str = "cpu"

    def validate(self) -> None:
        if not self.dataset and not (self.patch or self.cap):
            raise ConfigError("predict needs a dataset or a single patch/cap input")


@dataclass
class EvalConfig:
    """Config document for evaluation."""
    predictions: str = "predictions/predictions.jsonl"
    ground_truth: str = "dataset"
    scores: Optional[str] = None
    out: str = "report"
    fmr_targets: Tuple[float, ...] = (1e-3, 1e-4)
    trans_grid: Tuple[float, ...] = tuple(float(t) for t in range(10, 201, 10)) + (float('inf'),)
    rot_grid: Tuple[float, ...] = tuple(float(r) for r in range(10, 181, 10))
    plots: bool = True


@dataclass
class BenchConfig:
    """Config document for the efficiency benchmark."""
    checkpoint: Optional[str] = None
    model: ModelConfig = field(default_factory=ModelConfig)
    runs: int = 20
    warmup: int = 3
    out: Optional[str] = None
    device: str = "cpu"
    seed: int = 0


CONFIG_KINDS: Dict[str, type] = {
    'synth': SynthConfig,
    'plains': PlainsConfig,
    'train': TrainConfig,
    'predict': PredictConfig,
    'eval': EvalConfig,
    'bench': BenchConfig,
}

# Dotted path that --seed writes to, per kind
SEED_KEYS: Dict[str, Optional[str]] = {
    'synth': 'seed',
    'plains': 'seed',
    'train': 'schedule.seed',
    'predict': None,
    'eval': None,
    'bench': 'seed',
}


# =========================================================================
# Dataclass <-> plain data
# =========================================================================

def to_plain(obj: Any) -> Any:
    """Convert dataclasses, enums and tuples into JSON-ready values."""
    if is_dataclass(obj):
        return {f.name: to_plain(getattr(obj, f.name)) for f in fields(obj)}
    if isinstance(obj, Enum):
        return obj.value
    if isinstance(obj, (list, tuple)):
        return [to_plain(v) for v in obj]
    if isinstance(obj, dict):
        return {str(k): to_plain(v) for k, v in obj.items()}
    if isinstance(obj, float) and obj == float('inf'):
        return "inf"
    return obj


def _coerce(hint: Any, value: Any, where: str) -> Any:
    origin = typing.get_origin(hint)
    args = typing.get_args(hint)

    if origin is typing.Union:
        if value is None:
            return None
        inner = [a for a in args if a is not type(None)]
        return _coerce(inner[0], value, where)
    if is_dataclass(hint):
        if isinstance(value, hint):
            return value
        if not isinstance(value, dict):
            raise ConfigError(f"{where}: expected a mapping")
        return from_plain(hint, value, where)
    if isinstance(hint, type) and issubclass(hint, Enum):
        try:
            return hint(value)
        except ValueError:
            choices = ', '.join(m.value for m in hint)
            raise ConfigError(f"{where}: '{value}' is not one of {choices}")
    if origin is tuple:
        item = args[0] if args else Any
        return tuple(_coerce(item, v, where) for v in value)
    if origin is dict:
        value_hint = args[1] if len(args) == 2 else Any
        return {k: _coerce(value_hint, v, f"{where}.{k}") for k, v in value.items()}
    if hint is float:
        try:
            return float(value)
        except (TypeError, ValueError):
            raise ConfigError(f"{where}: expected a number, got {value!r}")
    if hint is int and not isinstance(value, bool):
        if isinstance(value, float) and not value.is_integer():
            raise ConfigError(f"{where}: expected an integer, got {value!r}")
        return int(value)
    return value


def from_plain(cls: type, data: Dict[str, Any], where: str = "") -> Any:
    """Build a config dataclass from plain data, starting from its defaults."""
    hints = typing.get_type_hints(cls)
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"{where or cls.__name__}: unknown keys {unknown}")

    kwargs = {}
    for name, value in data.items():
        path = f"{where}.{name}" if where else name
        kwargs[name] = _coerce(hints[name], value, path)

    if cls is TrainConfig and 'schedule' in data:
        # Preset first, explicit schedule keys on top
        base = to_plain(TrainSchedule.preset(data.get('preset', 'default')))
        base.update(data['schedule'])
        kwargs['schedule'] = from_plain(TrainSchedule, base, 'schedule')
    elif cls is TrainConfig:
        kwargs['schedule'] = TrainSchedule.preset(data.get('preset', 'default'))

    return cls(**kwargs)


# =========================================================================
# Loading, overrides, hashing
# =========================================================================

def read_document(path: Path) -> Dict[str, Any]:
    """Read a JSON or YAML config document."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    text = path.read_text(encoding='utf-8')
    try:
        if path.suffix.lower() == '.json':
            doc = json.loads(text)
        else:
            doc = yaml.safe_load(text)
    except (json.JSONDecodeError, yaml.YAMLError) as e:
        raise ConfigError(f"cannot parse {path}: {e}")
    if doc is None:
        return {}
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return doc


def parse_override(text: str) -> Tuple[str, Any]:
    """Parse one ``dotted.key=value`` override; the value is read as JSON, then YAML."""
    if '=' not in text:
        raise ConfigError(f"override '{text}' is not key=value")
    key, raw = text.split('=', 1)
    key = key.strip()
    if not key:
        raise ConfigError(f"override '{text}' has an empty key")
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = yaml.safe_load(raw) if raw.strip() else ""
    return key, value


def apply_override(doc: Dict[str, Any], key: str, value: Any) -> None:
    """Set a dotted key in a nested document, creating mappings as needed."""
    parts = key.split('.')
    node = doc
    for part in parts[:-1]:
        child = node.get(part)
        if child is None:
            child = {}
            node[part] = child
        elif not isinstance(child, dict):
            raise ConfigError(f"override '{key}': '{part}' is not a mapping")
        node = child
    node[parts[-1]] = value


def validate_document(kind: str, doc: Dict[str, Any]) -> None:
    """Validate a raw document against the published schema for its kind."""
    schema = load_schema(kind)
    validator = jsonschema.Draft7Validator(schema)
    errors = sorted(validator.iter_errors(doc), key=lambda e: list(e.absolute_path))
    if errors:
        lines = []
        for err in errors:
            where = '.'.join(str(p) for p in err.absolute_path) or '<root>'
            lines.append(f"{where}: {err.message}")
        raise SchemaValidationError(f"{kind} config invalid:\n  " + "\n  ".join(lines))


def build_config(kind: str, doc: Dict[str, Any]) -> Any:
    """Schema-validate a document and turn it into the typed config."""
    if kind not in CONFIG_KINDS:
        raise ConfigError(f"unknown config kind '{kind}'")
    validate_document(kind, doc)
    cfg = from_plain(CONFIG_KINDS[kind], doc)
    if hasattr(cfg, 'validate'):
        cfg.validate()
    return cfg


def load_config(
    kind: str,
    path: Optional[Path] = None,
    overrides: Sequence[str] = (),
    seed: Optional[int] = None,
    out: Optional[str] = None,
    defaults: Optional[Dict[str, Any]] = None,
) -> Any:
    """
    Load, override and validate a config.

    Precedence (lowest first): ``defaults`` (subcommand-specific), the
    config file, ``--set`` overrides, then ``--seed`` / ``--out``.
    """
    doc: Dict[str, Any] = {}
    for key, value in (defaults or {}).items():
        apply_override(doc, key, value)
    if path is not None:
        _merge(doc, read_document(path))
    for item in overrides:
        key, value = parse_override(item)
        apply_override(doc, key, value)
    if seed is not None:
        seed_key = SEED_KEYS.get(kind)
        if seed_key is None:
            logger.warning(f"--seed has no effect for '{kind}'")
        else:
            apply_override(doc, seed_key, seed)
    if out is not None:
        doc['out'] = out
    logger.debug(f"resolved {kind} document: {doc}")
    return build_config(kind, doc)


def _merge(base: Dict[str, Any], extra: Dict[str, Any]) -> None:
    for key, value in extra.items():
        if isinstance(value, dict) and isinstance(base.get(key), dict):
            _merge(base[key], value)
        else:
            base[key] = value


def canonical_json(obj: Any) -> str:
    """Sorted-key compact JSON used for hashing and manifests."""
    return json.dumps(to_plain(obj), sort_keys=True, separators=(',', ':'), allow_nan=False)


def config_hash(cfg: Any) -> str:
    """sha256 of the canonical resolved config."""
    return hashlib.sha256(canonical_json(cfg).encode('utf-8')).hexdigest()


def file_sha256(path: Path) -> str:
    """Content hash of one file."""
    digest = hashlib.sha256()
    with open(path, 'rb') as f:
        for chunk in iter(lambda: f.read(1 << 20), b''):
            digest.update(chunk)
    return digest.hexdigest()


def tree_sha256(directory: Path, pattern: str = "*") -> str:
    """Hash over (relative name, content hash) of every matching file, sorted by name."""
    directory = Path(directory)
    digest = hashlib.sha256()
    for path in sorted(p for p in directory.rglob(pattern) if p.is_file()):
        digest.update(path.relative_to(directory).as_posix().encode('utf-8'))
        digest.update(file_sha256(path).encode('ascii'))
    return digest.hexdigest()


def write_resolved_config(cfg: Any, kind: str, path: Path) -> None:
    """Snapshot the resolved config next to a run's outputs."""
    payload = {
        'kind': kind,
        'config_hash': config_hash(cfg),
        'config': to_plain(cfg),
    }
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding='utf-8')
