from __future__ import annotations

from contextlib import contextmanager
from functools import lru_cache
from typing import Iterator, Optional

from sqlalchemy import Engine, create_engine
from sqlalchemy.orm import Session, sessionmaker
from sqlalchemy.pool import StaticPool

from autoss.core.config import logger, settings
from autoss.results.models import Base

# === Engine / sessions ===


@lru_cache(maxsize=None)
def get_engine(db_path: Optional[str] = None) -> Engine:
    """
    One engine per SQLite file. db_path defaults to settings.db_path
    (AUTOSS_DB_PATH); ":memory:" gives a throwaway database.
    """
    path = db_path or settings.db_path
    if path == ":memory:":
        # every session must see the same in-memory database
        return create_engine(
            "sqlite://",
            connect_args={"check_same_thread": False},
            poolclass=StaticPool,
        )
    return create_engine(
        f"sqlite:///{path}",
        connect_args={"check_same_thread": False},  # SQLite only
        echo=False,
    )


def init_db(db_path: Optional[str] = None) -> Engine:
    """Creates the tables if they do not exist yet."""
    engine = get_engine(db_path)
    logger.info("init_db | db_path={}", db_path or settings.db_path)
    Base.metadata.create_all(bind=engine)
    return engine


@contextmanager
def db_session_scope(db_path: Optional[str] = None) -> Iterator[Session]:
    """Commit on success, rollback (and log) on any error."""
    factory = sessionmaker(autocommit=False, autoflush=False, bind=init_db(db_path))
    db: Session = factory()
    try:
        yield db
        db.commit()
    except Exception as exc:
        logger.error("DB error, rolling back transaction | error={}", exc)
        db.rollback()
        raise
    finally:
        db.close()
