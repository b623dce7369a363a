import os
from pathlib import Path
from typing import Optional

from dotenv import load_dotenv

load_dotenv()


class Config:
    """Configuration management class."""

    # Application Configuration
    APP_NAME: str = os.getenv("APP_NAME", "expcp")
    APP_VERSION: str = os.getenv("APP_VERSION", "1.0.0")
    LOG_LEVEL: str = os.getenv("LOG_LEVEL", "INFO")

    # Table Store Configuration
    TABLES_PATH: str = os.getenv("EXPCP_TABLES", "")

    # Simulation Configuration
    DEFAULT_SEED: int = int(os.getenv("EXPCP_SEED", "20110101"))
    DEFAULT_REPLICATIONS: int = int(os.getenv("EXPCP_REPLICATIONS", "5000"))
    THREADS: int = int(os.getenv("EXPCP_THREADS", "1"))
    CHUNK_SIZE: int = int(os.getenv("EXPCP_CHUNK_SIZE", "250"))

    # Statistic Defaults
    DEFAULT_EPSILON: float = float(os.getenv("EXPCP_EPSILON", "0.05"))

    # Segmentation Defaults
    MIN_SEGMENT: int = int(os.getenv("EXPCP_MIN_SEGMENT", "20"))
    MAX_DEPTH: int = int(os.getenv("EXPCP_MAX_DEPTH", "10"))

    @classmethod
    def tables_path(cls) -> Optional[Path]:
        """Default critical-value table path, if one is configured."""
        return Path(cls.TABLES_PATH) if cls.TABLES_PATH else None

    @classmethod
    def ensure_directories(cls, path: Path) -> None:
        """Ensure the parent directory of an output artifact exists."""
        path.parent.mkdir(parents=True, exist_ok=True)


config = Config()

DEFAULT_SEED = config.DEFAULT_SEED
DEFAULT_REPLICATIONS = config.DEFAULT_REPLICATIONS
DEFAULT_EPSILON = config.DEFAULT_EPSILON
