from __future__ import annotations

from datetime import datetime, timezone
from typing import List, Optional

from sqlalchemy import JSON, Boolean, DateTime, Float, ForeignKey, Integer, String
from sqlalchemy.orm import DeclarativeBase, Mapped, mapped_column, relationship


def _now() -> datetime:
    return datetime.now(timezone.utc)


class Base(DeclarativeBase):
    pass


class Run(Base):
    """One bench sweep or detection matrix."""
    __tablename__ = "runs"

    id: Mapped[int] = mapped_column(Integer, primary_key=True, index=True)
    kind: Mapped[str] = mapped_column(String(20), index=True)  # bench / matrix
    seed: Mapped[int] = mapped_column(Integer, default=0)
    params: Mapped[Optional[dict]] = mapped_column(JSON, nullable=True)
    created_at: Mapped[datetime] = mapped_column(DateTime, default=_now)

    bench_rows: Mapped[List["BenchRow"]] = relationship(
        back_populates="run",
        cascade="all, delete-orphan",
    )
    detection_rows: Mapped[List["DetectionRow"]] = relationship(
        back_populates="run",
        cascade="all, delete-orphan",
    )


class BenchRow(Base):
    __tablename__ = "bench_rows"

    id: Mapped[int] = mapped_column(Integer, primary_key=True, index=True)
    run_id: Mapped[int] = mapped_column(ForeignKey("runs.id"), index=True)

    query_id: Mapped[int] = mapped_column(Integer)
    query: Mapped[str] = mapped_column(String)
    mode: Mapped[str] = mapped_column(String(10), index=True)
    theta: Mapped[float] = mapped_column(Float)
    dim: Mapped[int] = mapped_column(Integer, default=0)
    fanout: Mapped[int] = mapped_column(Integer)

    n_R: Mapped[int] = mapped_column(Integer, default=0)
    n_C: Mapped[int] = mapped_column(Integer, default=0)
    n_F: Mapped[int] = mapped_column(Integer, default=0)
    n_MF: Mapped[int] = mapped_column(Integer, default=0)
    n_DBH: Mapped[int] = mapped_column(Integer, default=0)
    n_DS: Mapped[int] = mapped_column(Integer, default=0)
    sigma_S: Mapped[float] = mapped_column(Float, default=0.0)
    sigma_M: Mapped[float] = mapped_column(Float, default=0.0)
    sigma_D: Mapped[float] = mapped_column(Float, default=0.0)

    vo_bytes: Mapped[int] = mapped_column(Integer)
    edit_ops: Mapped[int] = mapped_column(Integer)
    euclid_ops: Mapped[int] = mapped_column(Integer, default=0)
    embed_ops: Mapped[int] = mapped_column(Integer, default=0)
    build_us: Mapped[int] = mapped_column(Integer)
    verify_us: Mapped[int] = mapped_column(Integer)
    passed: Mapped[bool] = mapped_column(Boolean)

    run: Mapped["Run"] = relationship(back_populates="bench_rows")


class DetectionRow(Base):
    __tablename__ = "detection_rows"

    id: Mapped[int] = mapped_column(Integer, primary_key=True, index=True)
    run_id: Mapped[int] = mapped_column(ForeignKey("runs.id"), index=True)

    query: Mapped[str] = mapped_column(String)
    mode: Mapped[str] = mapped_column(String(10), index=True)
    theta: Mapped[float] = mapped_column(Float)
    k: Mapped[int] = mapped_column(Integer, default=0)
    attack: Mapped[str] = mapped_column(String(40), index=True)
    victim: Mapped[str] = mapped_column(String(20), default="")
    seed: Mapped[int] = mapped_column(Integer, default=0)
    applicable: Mapped[bool] = mapped_column(Boolean, default=True)
    passed: Mapped[bool] = mapped_column(Boolean)
    failed_step: Mapped[str] = mapped_column(String(10))
    diagnosis: Mapped[str] = mapped_column(String(40))
    expected_step: Mapped[str] = mapped_column(String(10))
    expected_diagnosis: Mapped[str] = mapped_column(String(40))

    run: Mapped["Run"] = relationship(back_populates="detection_rows")
