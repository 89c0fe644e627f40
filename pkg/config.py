"""Configuration for state-tracking experiments and float profiles."""

from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Literal, Optional

import yaml
from loguru import logger

TASKS = ("group", "pre-index", "post-index")
TRAINABLE_FAMILIES = ("transformer", "rnn", "s4-const", "mamba-diag", "ids4")
EXACT_FAMILIES = ("ids4-exact", "rnn-ssm-exact")
MODEL_FAMILIES = TRAINABLE_FAMILIES + EXACT_FAMILIES


def _coerce(value):
    """YAML 1.1 reads ``1e-05`` as a string; turn such strings into floats."""
    if isinstance(value, list):
        return [_coerce(v) for v in value]
    if isinstance(value, str):
        try:
            return float(value)
        except ValueError:
            return value
    return value


@dataclass(frozen=True)
class FloatProfile:
    """Bit widths of the log-precision float datatype."""

    mantissa_bits: int = 12
    """Mantissa width p_m (normalized mantissas have exactly this many bits)"""

    exponent_bits: int = 8
    """Signed exponent width p_e"""

    headroom_bits: Optional[int] = None
    """Extra exponent bits intermediates may use before an operation saturates.
    None means 2 * (mantissa_bits + exponent_bits)."""

    def __post_init__(self):
        if self.mantissa_bits < 2:
            raise ValueError(f"mantissa_bits must be >= 2, got {self.mantissa_bits}")
        if self.exponent_bits < 2:
            raise ValueError(f"exponent_bits must be >= 2, got {self.exponent_bits}")
        if self.headroom_bits is not None and self.headroom_bits < 0:
            raise ValueError(f"headroom_bits must be >= 0, got {self.headroom_bits}")

    @property
    def headroom(self) -> int:
        if self.headroom_bits is None:
            return 2 * (self.mantissa_bits + self.exponent_bits)
        return self.headroom_bits

    @property
    def max_exponent(self) -> int:
        return (1 << (self.exponent_bits - 1)) - 1

    @property
    def min_exponent(self) -> int:
        return -(1 << (self.exponent_bits - 1))

    @property
    def intermediate_exponent_limit(self) -> int:
        return 1 << (self.exponent_bits - 1 + self.headroom)


@dataclass
class ExperimentConfig:
    """Configuration for dataset generation, training and depth or width sweeps."""

    group_id: str = "A5"
    """Registered group: Z60, A4xZ5, A5 or S5"""

    task: Literal["group", "pre-index", "post-index"] = "group"
    """Prefix products of group words, or recalling the data token an index run points at"""

    index_vocab_size: int = 5
    """Data tokens in the indexing tasks; the index token and BOS come on top"""

    lengths: list[int] = field(default_factory=lambda: [4, 8, 16])
    """Sequence lengths to train and evaluate on"""

    depths: list[int] = field(default_factory=lambda: [1, 2, 3, 4])
    """Candidate depths, tried in ascending order by the sweep"""

    families: list[str] = field(default_factory=lambda: ["ids4"])
    """Model families:
    - transformer: causal single-head attention blocks
    - rnn: tanh recurrence
    - s4-const: constant (input-independent) transition
    - mamba-diag: diagonal selective transition
    - ids4: input-dependent full transition
    - ids4-exact / rnn-ssm-exact: compiled automata, no training
    """

    d_model: int = 64
    """Width of embeddings and block outputs"""

    widths: list[int] = field(default_factory=lambda: [8, 16, 32, 64])
    """Candidate widths, tried in ascending order by the width sweep"""

    d_state: int = 16
    """State size of rnn, s4-const and ids4 mixers"""

    mamba_state_dim: int = 8
    """Per-channel state size of the mamba-diag mixer"""

    train_size: int = 2000
    """Sampled training words (all length-2 pairs are added on top)"""

    val_size: int = 500
    """Validation words, used for early stopping"""

    test_size: int = 500
    """Test words, used for reported accuracies"""

    max_steps: int = 20000
    """Optimizer step budget per run"""

    eval_interval: int = 200
    """Steps between validation checks"""

    threshold: float = 0.9
    """Full-sequence accuracy that counts as success"""

    seeds: list[int] = field(default_factory=lambda: [0, 1, 2])
    """Seeds per sweep cell"""

    learning_rate: float = 1e-3
    """Adam learning rate"""

    batch_size: int = 64
    """Words per optimizer step"""

    ids4_sigma: float = 0.1
    """Std of the noise around the identity in IDS4 transition init"""

    max_seconds: Optional[float] = None
    """Wall-clock budget per run; None disables it"""

    workers: int = 1
    """Processes used for sweep cells"""

    nonlinearity: Literal["relu", "tanh", "identity"] = "relu"
    """Pointwise nonlinearity after each block's projection"""

    norm_placement: Literal["pre", "post", "none"] = "pre"
    """Layer norm before the mixer (pre), after the block (post) or not at all"""

    residual: bool = True
    """Add a residual connection around each block"""

    output_dir: str = "runs"
    """Directory for datasets, results and figures"""

    def __post_init__(self):
        for name in ("lengths", "depths", "widths", "families", "seeds"):
            value = getattr(self, name)
            if not isinstance(value, list):
                value = [value]
                setattr(self, name, value)
            if not value:
                raise ValueError(f"{name} must not be empty")

        if not 0 < self.threshold < 1:
            raise ValueError(f"threshold must be in (0, 1), got {self.threshold}")

        unknown = [f for f in self.families if f not in MODEL_FAMILIES]
        if unknown:
            raise ValueError(f"Unknown model families: {unknown}; choose from {list(MODEL_FAMILIES)}")

        if any(n < 2 for n in self.lengths):
            raise ValueError(f"Sequence lengths must be >= 2, got {self.lengths}")
        if any(d < 1 for d in self.depths):
            raise ValueError(f"Depths must be >= 1, got {self.depths}")
        if any(w < 1 for w in self.widths):
            raise ValueError(f"Widths must be >= 1, got {self.widths}")
        if min(self.d_model, self.d_state, self.mamba_state_dim, self.batch_size) < 1:
            raise ValueError("Model widths and batch size must be positive")
        if self.norm_placement not in ("pre", "post", "none"):
            raise ValueError(f"Unknown norm placement: {self.norm_placement!r}")
        if self.nonlinearity not in ("relu", "tanh", "identity"):
            raise ValueError(f"Unknown nonlinearity: {self.nonlinearity!r}")

        if self.task not in TASKS:
            raise ValueError(f"Unknown task {self.task!r}; choose from {list(TASKS)}")
        if not 2 <= self.index_vocab_size <= 25:
            raise ValueError(f"index_vocab_size must be in [2, 25], got {self.index_vocab_size}")
        if self.task != "group":
            compiled = [f for f in self.families if f in EXACT_FAMILIES]
            if compiled:
                raise ValueError(f"Compiled families {compiled} only run on group tasks")

    @property
    def output_path(self) -> Path:
        return Path(self.output_dir)

    @property
    def task_id(self) -> str:
        """Group id for group tasks, ``<task>-v<vocab size>`` otherwise."""
        if self.task == "group":
            return self.group_id
        return f"{self.task}-v{self.index_vocab_size}"

    @classmethod
    def desk_scale(cls) -> "ExperimentConfig":
        """CPU-sized grid: lengths 4/8/16, depths 1-4, three seeds."""
        return cls()

    @classmethod
    def smoke(cls) -> "ExperimentConfig":
        """Seconds-scale settings for quick end-to-end checks."""
        return cls(
            group_id="Z60",
            lengths=[4],
            depths=[1, 2],
            families=["rnn"],
            d_model=16,
            d_state=8,
            mamba_state_dim=4,
            train_size=100,
            val_size=50,
            test_size=50,
            max_steps=20,
            eval_interval=10,
            seeds=[0],
            batch_size=16,
        )

    @classmethod
    def group_trend(cls) -> "ExperimentConfig":
        """A5 at lengths 4/8/16 for the trained ids4, rnn and mamba-diag families, three seeds."""
        return cls(
            group_id="A5",
            families=["ids4", "rnn", "mamba-diag"],
            max_steps=3000,
            eval_interval=100,
            learning_rate=3e-3,
        )

    @classmethod
    def indexing(cls) -> "ExperimentConfig":
        """Pre-indexing with five data tokens; width sweeps of a transformer and mamba-diag at depth 1."""
        return cls(
            task="pre-index",
            lengths=[4, 8, 16],
            depths=[1],
            widths=[4, 8, 16, 32],
            families=["transformer", "mamba-diag"],
            max_steps=3000,
            eval_interval=100,
        )

    @classmethod
    def from_text(cls, text: str) -> "ExperimentConfig":
        """
        Parse flat ``key = value`` text.

        Values are read with YAML scalars; ``a, b, c`` and ``[a, b, c]`` both
        give lists. ``#`` starts a comment.

        Args:
            text: Config file contents

        Returns:
            ExperimentConfig built on the defaults
        """
        known = {f.name for f in fields(cls)}
        values = {}

        for number, raw in enumerate(text.splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"Line {number}: expected 'key = value', got {raw!r}")

            key, value = (part.strip() for part in line.split("=", 1))
            if key not in known:
                raise ValueError(f"Line {number}: unknown config key {key!r}")

            if "," in value and not value.startswith("["):
                value = f"[{value}]"
            values[key] = _coerce(yaml.safe_load(value)) if value else None

        logger.debug(f"Parsed config keys: {sorted(values)}")
        return cls(**values)

    @classmethod
    def from_file(cls, path: str | Path) -> "ExperimentConfig":
        path = Path(path)
        logger.info(f"Loading experiment config from {path}")
        return cls.from_text(path.read_text(encoding="utf-8"))

    def to_text(self) -> str:
        """Write every field as ``key = value``; from_text reads it back."""
        lines = []
        for key, value in asdict(self).items():
            if value is None:
                lines.append(f"{key} =")
            elif isinstance(value, list):
                lines.append(f"{key} = [{', '.join(str(v) for v in value)}]")
            else:
                lines.append(f"{key} = {value}")
        return "\n".join(lines) + "\n"
