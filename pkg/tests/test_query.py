"""Tests for record queries."""

from obsbias.pipeline import KIND_COVARIATE, KIND_TIP
from obsbias.query import RecordQuery


class TestRecordQuery:
    """Test filtering and sorting of records."""

    def test_where(self, sample_records):
        """Test basic where filtering."""
        results = RecordQuery(sample_records).where(
            lambda r: r.kind == KIND_COVARIATE
        ).execute()
        assert [r.label for r in results] == ["dnr1", "age"]

    def test_where_chained(self, sample_records):
        """Test multiple filters must all pass."""
        results = (
            RecordQuery(sample_records)
            .where(lambda r: r.kind != KIND_TIP)
            .where(lambda r: r.oce > 1.1)
            .execute()
        )
        assert [r.label for r in results] == ["dnr1", "labs"]

    def test_sort(self, sample_records):
        """Test sorting results."""
        results = RecordQuery(sample_records).sort(key=lambda r: r.estimate).execute()
        assert [r.label for r in results] == [
            sample_records[0].label,
            "dnr1",
            "labs",
            "age",
        ]

    def test_sort_reverse(self, sample_records):
        """Test reverse sorting."""
        results = (
            RecordQuery(sample_records).sort(key=lambda r: r.ucl, reverse=True).execute()
        )
        assert results[0].label == "age"

    def test_sort_is_stable(self, sample_records):
        """Test equal keys keep their input order."""
        results = RecordQuery(sample_records).sort(key=lambda r: r.oce).execute()
        tied = [r.label for r in results if r.oce == 1.359]
        assert tied == [sample_records[0].label, "dnr1"]

    def test_count(self, sample_records):
        """Test count covers every record passing the filters."""
        query = RecordQuery(sample_records).where(lambda r: r.kind != KIND_TIP)
        assert query.count() == 3
        assert RecordQuery([]).count() == 0

    def test_source_unchanged(self, sample_records):
        """Test queries do not reorder the input list."""
        before = list(sample_records)
        RecordQuery(sample_records).sort(key=lambda r: r.label).execute()
        assert sample_records == before
