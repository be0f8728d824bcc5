"""Chainable queries over observed-bias records."""

from typing import Any, Callable, Generic, List, Optional, Sequence, TypeVar

T = TypeVar("T")


class RecordQuery(Generic[T]):
    """Chainable query for filtering and sorting record lists.

    Example:
        >>> rows = (RecordQuery(records)
        ...     .where(lambda r: r.kind == 'covariate')
        ...     .sort(key=lambda r: r.oce, reverse=True)
        ...     .execute())
    """

    def __init__(self, records: Sequence[T]):
        self._records = list(records)
        self._filters: List[Callable[[T], bool]] = []
        self._sort_key: Optional[Callable[[T], Any]] = None
        self._sort_reverse: bool = False

    def where(self, predicate: Callable[[T], bool]) -> "RecordQuery[T]":
        """Add a filter condition.

        Args:
            predicate: Function(record) -> bool

        Returns:
            Self for chaining
        """
        self._filters.append(predicate)
        return self

    def sort(
        self, key: Optional[Callable[[T], Any]] = None, reverse: bool = False
    ) -> "RecordQuery[T]":
        """Sort the results. Python's sort is stable, so equal keys keep input order."""
        self._sort_key = key
        self._sort_reverse = reverse
        return self

    def _filtered(self) -> List[T]:
        result = self._records
        for predicate in self._filters:
            result = [record for record in result if predicate(record)]
        return result

    def execute(self) -> List[T]:
        """Run the query: filters, then sort."""
        result = self._filtered()
        if self._sort_key is not None:
            result = sorted(result, key=self._sort_key, reverse=self._sort_reverse)
        return result

    def count(self) -> int:
        """Number of records passing the filters."""
        return len(self._filtered())
