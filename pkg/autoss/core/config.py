from __future__ import annotations

import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from dotenv import load_dotenv
from loguru import logger as _loguru_logger
from pydantic_settings import BaseSettings, SettingsConfigDict

# .env at the repository root, if present
load_dotenv(dotenv_path=Path(__file__).parents[2] / ".env")


class Settings(BaseSettings):
    """
    Environment-driven settings. Every field can be overridden with AUTOSS_<NAME>,
    e.g. AUTOSS_SEED=7.
    """
    model_config = SettingsConfigDict(env_prefix="AUTOSS_", extra="ignore")

    seed: int = 0
    fanout: int = 16
    leaf_fanout: Optional[int] = None
    embed_dim: int = 5
    reference_cap: int = 16
    collinear_tolerance: float = 1e-9
    log_level: str = "INFO"
    db_path: str = "./autoss_results.db"


settings = Settings()


# === Logging ===

LOGGER_NAME = "autoss"
_configured = False


def get_logger():
    """
    Returns the application logger. The sink is installed once; modules import
    `logger` from here instead of creating their own.
    """
    global _configured
    if not _configured:
        _loguru_logger.remove()
        _loguru_logger.add(
            sys.stderr,
            level=settings.log_level.upper(),
            format="[{time:YYYY-MM-DD HH:mm:ss}] [{level}] [{name}] {message}",
        )
        _configured = True
    return _loguru_logger.bind(app=LOGGER_NAME)


logger = get_logger()


@dataclass(frozen=True)
class TreeConfig:
    """
    MB-tree packing. leaf_fanout=None means leaves use the same capacity as
    internal nodes.
    """
    fanout: int = 16
    leaf_fanout: Optional[int] = None

    @property
    def leaf_capacity(self) -> int:
        return self.leaf_fanout or self.fanout


@dataclass(frozen=True)
class EmbeddingConfig:
    dim: int = 5
    reference_cap: int = 16
    seed: int = 0


@dataclass(frozen=True)
class DBHConfig:
    collinear_tolerance: float = 1e-9


@dataclass(frozen=True)
class AppConfig:
    tree: TreeConfig
    embedding: EmbeddingConfig
    dbh: DBHConfig


def build_default_config(source: Settings | None = None) -> AppConfig:
    src = source or settings
    logger.debug("Building default AppConfig | seed={} fanout={}", src.seed, src.fanout)
    return AppConfig(
        tree=TreeConfig(fanout=src.fanout, leaf_fanout=src.leaf_fanout),
        embedding=EmbeddingConfig(
            dim=src.embed_dim,
            reference_cap=src.reference_cap,
            seed=src.seed,
        ),
        dbh=DBHConfig(collinear_tolerance=src.collinear_tolerance),
    )


app_config: AppConfig = build_default_config()
