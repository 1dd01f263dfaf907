from __future__ import annotations

from typing import Optional


class AutossError(Exception):
    """Base class for every error raised by the toolkit."""


class EmptyDatasetError(AutossError):
    def __init__(self) -> None:
        super().__init__("empty dataset")


class DuplicateStringError(AutossError):
    def __init__(self, text: str) -> None:
        super().__init__(f"duplicate corpus string {text!r}")
        self.text = text


class IndexBuildError(AutossError):
    """Tree parameters that cannot produce an index."""


class IndexFormatError(AutossError):
    """Corrupt or truncated index file. `node` is the post-order node index, if known."""

    def __init__(self, message: str, node: Optional[int] = None) -> None:
        where = f" (node {node})" if node is not None else ""
        super().__init__(f"{message}{where}")
        self.node = node


class DigestMismatchError(IndexFormatError):
    def __init__(self, node: int) -> None:
        super().__init__("digest mismatch", node=node)


class VOFormatError(AutossError):
    def __init__(self, message: str, offset: Optional[int] = None) -> None:
        where = f" at byte {offset}" if offset is not None else ""
        super().__init__(f"{message}{where}")
        self.offset = offset
        self.reason = message


class SignatureError(AutossError):
    pass


class EmbeddingError(AutossError):
    pass


class DBHConstructionError(AutossError):
    pass


class QueryError(AutossError):
    pass


class IngestError(AutossError):
    def __init__(self, message: str, line: Optional[int] = None) -> None:
        where = f" (line {line})" if line is not None else ""
        super().__init__(f"{message}{where}")
        self.line = line


class AttackNotApplicable(AutossError):
    pass


class BundleError(AutossError):
    pass
