"""Configuration management for the auto-exploring policy mirror descent stack."""
import os
import sys
import logging
from pydantic import BaseModel, ConfigDict, Field
from dotenv import load_dotenv

# Load environment variables from .env file
load_dotenv()


class ColoredFormatter(logging.Formatter):
    """Custom formatter that adds colors to log output when in a terminal."""

    # ANSI color codes
    COLORS = {
        'DEBUG': '\033[36m',      # Cyan
        'INFO': '\033[32m',       # Green
        'WARNING': '\033[33m',    # Yellow
        'ERROR': '\033[31m',      # Red
        'CRITICAL': '\033[35m',   # Magenta
    }

    # Special colors for specific event markers
    SPECIAL_COLORS = {
        'certified': '\033[1;32m',   # Bold Green
        'epoch': '\033[1;36m',       # Bold Cyan
        'budget': '\033[1;31m',      # Bold Red
        'verify': '\033[1;35m',      # Bold Magenta
        'write': '\033[90m',         # Gray
    }

    RESET = '\033[0m'
    BOLD = '\033[1m'

    def __init__(self, *args, use_color=True, **kwargs):
        super().__init__(*args, **kwargs)
        self.use_color = use_color and sys.stdout.isatty()

    def format(self, record):
        if not self.use_color:
            return super().format(record)

        levelname_color = self.COLORS.get(record.levelname, '')

        message = record.getMessage()
        message_color = ''

        if '[CERTIFIED]' in message or '[PASS]' in message:
            message_color = self.SPECIAL_COLORS['certified']
        elif '[BUDGET]' in message or '[FAIL]' in message:
            message_color = self.SPECIAL_COLORS['budget']
        elif '[EPOCH]' in message or '[NOT_CERTIFIED]' in message:
            message_color = self.SPECIAL_COLORS['epoch']
        elif '[VERIFY]' in message:
            message_color = self.SPECIAL_COLORS['verify']
        elif '[WRITE]' in message:
            message_color = self.SPECIAL_COLORS['write']

        formatted = super().format(record)

        if message_color:
            return f"{message_color}{formatted}{self.RESET}"
        else:
            return f"{levelname_color}{formatted}{self.RESET}"


def setup_logging(level=None):
    """Configure logging with colors if terminal supports it."""
    use_color = os.getenv("NO_COLOR") is None  # Respect NO_COLOR env var

    formatter = ColoredFormatter(
        '%(asctime)s - %(levelname)s - %(name)s - %(message)s',
        use_color=use_color
    )

    handler = logging.StreamHandler(sys.stdout)
    handler.setFormatter(formatter)

    if level is None:
        level = os.getenv("LOG_LEVEL", "INFO").upper()

    # Configure root logger
    root_logger = logging.getLogger()
    root_logger.handlers.clear()
    root_logger.addHandler(handler)
    root_logger.setLevel(level)

    # Graph runtime chatter is not useful next to per-epoch logs
    logging.getLogger("langgraph").setLevel(logging.WARNING)


# Setup logging before anything else
setup_logging()


class RunConfig(BaseModel):
    """Process-wide run settings read from the environment."""
    model_config = ConfigDict(frozen=True)

    debug: bool = False  # If True, per-iteration diagnostics are logged at INFO
    seed: int | None = Field(default=None, ge=0)  # Overrides the seed of every experiment config
    sample_budget: int = Field(default=10**8, gt=0)  # Hard cap on environment transitions per stream


def _env_seed() -> int | None:
    raw = os.getenv("AUTOEXPLORE_SEED")
    return int(raw) if raw not in (None, "") else None


# Create config instance from environment or use defaults
RUN_CONFIG = RunConfig(
    debug=os.getenv("AUTOEXPLORE_DEBUG", "False").lower() == "true",
    seed=_env_seed(),
    sample_budget=int(os.getenv("AUTOEXPLORE_SAMPLE_BUDGET", str(10**8))),
)

# Numerical settings shared across modules
PROB_CLIP = 1e-12  # Floor applied before logs and Tsallis gradients
SIMPLEX_TOL = 1e-12  # Row-sum tolerance for kernels and policies
SIMPLEX_INPUT_TOL = 1e-9  # Row-sum tolerance for user-supplied distributions
EDGE_TOL = 1e-14  # Transition probabilities above this count as graph edges
MAX_STATE_ACTION_PAIRS = 10**4  # Desk-scale cap on |S|*|A| for dense oracles

# Benchmark presets file
BENCHMARKS_PATH = os.getenv("AUTOEXPLORE_BENCHMARKS", "benchmarks.yaml")
