"""Tests for CSV ingestion, configuration files and result persistence."""

import json
import math

import pandas as pd
import pytest

from obsbias.exceptions import ConfigValidationError, ParseError, SchemaError
from obsbias.io_store import (
    Dataset,
    RunArtifact,
    file_digest,
    read_config,
    read_csv,
    read_records,
    read_results,
    records_path,
    write_csv,
    write_results,
)
from obsbias.pipeline import (
    AnalysisConfig,
    BalanceRecord,
    CoefficientRecord,
    KIND_COVARIATE,
    ObservedBiasRecord,
)


def artifact(full_record, records, **fields):
    config = AnalysisConfig(
        exposure="exposure", time="time", event="event", covariates=["dnr1", "age"]
    )
    return RunArtifact(
        config=config,
        full=full_record,
        records=list(records),
        balance=[BalanceRecord("dnr1", 0.41, 1e-12), BalanceRecord("age", -0.1, 0.0)],
        version="1.0.0",
        input_digest="ab" * 32,
        input_name="data.csv",
        n_rows=5735,
        **fields,
    )


class TestReadCsv:
    """Test CSV ingestion."""

    def test_numeric_columns(self, write_text):
        """Test numeric columns are typed as floats in row order."""
        path = write_text("d.csv", "a,b\n1,2.5\n3,-4e-1\n")
        dataset = read_csv(path)
        assert dataset.columns == ["a", "b"]
        assert dataset.column("a").tolist() == [1.0, 3.0]
        assert dataset.column("b").tolist() == [2.5, -0.4]

    def test_missing_tokens(self, write_text):
        """Test empty cells and NA are missing."""
        path = write_text("d.csv", "a,b\n1,NA\n,2\n")
        frame = read_csv(path).frame
        assert math.isnan(frame.loc[0, "b"])
        assert math.isnan(frame.loc[1, "a"])

    def test_text_column_indicators(self, write_text):
        """Test text columns expand to indicators without the first level."""
        path = write_text("d.csv", "sex,age\nMale,60\nFemale,70\nMale,NA\n")
        dataset = read_csv(path)
        assert dataset.columns == ["sex=Male", "age"]
        assert dataset.column("sex=Male").tolist() == [1.0, 0.0, 1.0]
        assert dataset.sources == {"sex": ["sex=Male"]}
        assert dataset.resolve("sex") == ["sex=Male"]

    def test_multi_level_text_column(self, write_text):
        """Test a three-level column gets two indicators in sorted order."""
        path = write_text("d.csv", "cat,x\nMOSF,1\nARF,2\nCHF,3\nNA,4\n")
        dataset = read_csv(path)
        assert dataset.columns == ["cat=CHF", "cat=MOSF", "x"]
        assert dataset.column("cat=MOSF").tolist()[:3] == [1.0, 0.0, 0.0]
        assert math.isnan(dataset.frame.loc[3, "cat=CHF"])

    def test_header_only(self, write_text):
        """Test a header-only file gives an empty dataset."""
        dataset = read_csv(write_text("d.csv", "a,b\n"))
        assert dataset.n_rows == 0
        assert dataset.columns == ["a", "b"]

    def test_blank_header_column_skipped(self, write_text):
        """Test row-name columns with a blank header are dropped."""
        dataset = read_csv(write_text("d.csv", ",a\n1,5\n2,6\n"))
        assert dataset.columns == ["a"]

    def test_ragged_row(self, write_text):
        """Test rows with the wrong field count report the row."""
        with pytest.raises(ParseError, match="row 2") as exc_info:
            read_csv(write_text("d.csv", "a,b\n1,2\n3\n"))
        assert exc_info.value.row == 2

    def test_blank_row_rejected(self, write_text):
        """Test a blank line between rows is reported at its own row number."""
        with pytest.raises(ParseError, match="Blank row") as exc_info:
            read_csv(write_text("d.csv", "a,b\n1,2\n\n3,4\n"))
        assert exc_info.value.row == 2

    def test_blank_row_keeps_later_row_numbers(self, write_text):
        """Test errors after a blank line keep the file's row numbering."""
        with pytest.raises(ParseError) as exc_info:
            read_csv(write_text("d.csv", "a\n1\n\nx\n"))
        assert exc_info.value.row == 3
        assert exc_info.value.column == "a"

    def test_single_column_blank_row_is_missing(self, write_text, tmp_path):
        """Test a blank line in a one-column file is a missing cell."""
        path = write_text("d.csv", "a\n1\n\n2\n")
        dataset = read_csv(path)
        assert dataset.n_rows == 3
        assert math.isnan(dataset.frame.loc[1, "a"])
        out = tmp_path / "copy.csv"
        write_csv(dataset, out)
        again = read_csv(out)
        assert again.n_rows == 3
        assert math.isnan(again.frame.loc[1, "a"])

    def test_blank_header_line(self, write_text):
        """Test a file starting with a blank line has no header."""
        with pytest.raises(ParseError, match="no header row"):
            read_csv(write_text("d.csv", "\na,b\n1,2\n"))

    def test_non_numeric_cell(self, write_text):
        """Test a text cell in a numeric column reports row and column."""
        with pytest.raises(ParseError, match="Non-numeric value 'x'") as exc_info:
            read_csv(write_text("d.csv", "a\n1\nx\n"))
        assert exc_info.value.row == 2
        assert exc_info.value.column == "a"

    def test_duplicate_header(self, write_text):
        """Test duplicate column names are rejected."""
        with pytest.raises(ParseError, match="Duplicate column header"):
            read_csv(write_text("d.csv", "a,a\n1,2\n"))

    def test_empty_file(self, write_text):
        """Test a file without a header is rejected."""
        with pytest.raises(ParseError, match="no header row"):
            read_csv(write_text("d.csv", ""))

    def test_missing_file(self, tmp_path):
        """Test a missing file raises FileNotFoundError."""
        with pytest.raises(FileNotFoundError):
            read_csv(tmp_path / "absent.csv")

    def test_max_size(self, write_text):
        """Test files above max_size are rejected."""
        with pytest.raises(ParseError, match="exceeds maximum"):
            read_csv(write_text("d.csv", "a\n1\n2\n"), max_size=3)

    def test_digest(self, write_text):
        """Test the dataset digest is the SHA-256 of the file bytes."""
        path = write_text("d.csv", "a\n1\n")
        assert read_csv(path).digest == file_digest(path)
        assert len(file_digest(path)) == 64

    def test_unknown_column(self, write_text):
        """Test resolving an unknown name lists the available columns."""
        dataset = read_csv(write_text("d.csv", "a\n1\n"))
        with pytest.raises(SchemaError, match="Unknown column 'b'"):
            dataset.resolve("b")


class TestRhcPreset:
    """Test the right heart catheterization recoding."""

    def test_recoding(self, write_text):
        """Test swang1, dth30 and t3d30 become exposure, event and time."""
        path = write_text(
            "rhc.csv",
            ',swang1,dth30,t3d30,age,sex\n'
            '1,RHC,Yes,5,70.2,Male\n'
            '2,No RHC,No,30,60.1,Female\n',
        )
        dataset = read_csv(path, preset="rhc")
        assert dataset.column("exposure").tolist() == [1.0, 0.0]
        assert dataset.column("event").tolist() == [1.0, 0.0]
        assert dataset.column("time").tolist() == [5.0, 30.0]
        assert "swang1" not in dataset.columns
        assert "sex=Male" in dataset.columns

    def test_missing_source_column(self, write_text):
        """Test the preset names the column it needs."""
        with pytest.raises(SchemaError, match="needs column 'dth30'"):
            read_csv(write_text("rhc.csv", "swang1,t3d30\nRHC,3\n"), preset="rhc")

    def test_unknown_preset(self, write_text):
        """Test unknown presets are rejected."""
        with pytest.raises(SchemaError, match="Unknown preset 'nhanes'"):
            read_csv(write_text("d.csv", "a\n1\n"), preset="nhanes")


class TestWriteCsv:
    """Test canonical dataset output."""

    def test_canonical_cells(self, tmp_path):
        """Test integers lose the decimal point and NaN becomes empty."""
        frame = pd.DataFrame({"a": [1.0, 2.5], "b": [math.nan, -3.0]})
        path = tmp_path / "out.csv"
        write_csv(Dataset(frame), path)
        assert path.read_text() == "a,b\n1,\n2.5,-3\n"

    def test_canonical_round_trip(self, write_text, tmp_path):
        """Test ingesting and emitting a canonical file reproduces it."""
        text = "exposure,time,event,x\n1,2.5,1,0.125\n0,30,0,\n"
        path = write_text("d.csv", text)
        out = tmp_path / "copy.csv"
        write_csv(read_csv(path), out)
        assert out.read_text() == text


class TestReadConfig:
    """Test analysis configuration files."""

    def test_valid_config(self, write_json):
        """Test a complete config loads."""
        path = write_json(
            "config.json",
            {
                "exposure": "exposure",
                "time": "time",
                "event": "event",
                "covariates": ["age", "sex"],
                "groups": {"demographics": ["age", "sex"]},
                "outcome_common": True,
            },
        )
        config = read_config(path)
        assert config.groups == {"demographics": ["age", "sex"]}
        assert config.outcome_common is True

    def test_invalid_json(self, write_text):
        """Test malformed JSON becomes a validation error."""
        with pytest.raises(ConfigValidationError, match="Invalid JSON"):
            read_config(write_text("config.json", "{not json"))

    def test_top_level_array(self, write_json):
        """Test a non-object config is rejected."""
        with pytest.raises(ValueError, match="JSON object"):
            read_config(write_json("config.json", ["exposure"]))

    def test_oversized_config(self, write_text):
        """Test configs above the size limit are rejected before parsing."""
        path = write_text("config.json", " " * (1024 * 1024 + 1))
        with pytest.raises(ValueError, match="exceeds maximum allowed size"):
            read_config(path)


class TestResults:
    """Test results JSON and records CSV."""

    def test_records_path(self, tmp_path):
        """Test the records CSV sits next to the JSON."""
        assert records_path(tmp_path / "run.json") == tmp_path / "run.records.csv"

    def test_write_twice_identical(self, tmp_path, full_record, sample_records):
        """Test repeated writes produce identical bytes."""
        run = artifact(full_record, sample_records, wall_time=1.5)
        write_results(run, tmp_path / "a.json")
        write_results(run, tmp_path / "b.json")
        assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()
        assert (tmp_path / "a.records.csv").read_bytes() == (
            tmp_path / "b.records.csv"
        ).read_bytes()

    def test_json_layout(self, tmp_path, full_record, sample_records):
        """Test the results JSON sections and canonical formatting."""
        path = tmp_path / "run.json"
        write_results(artifact(full_record, sample_records, wall_time=2.0), path)
        text = path.read_text()
        data = json.loads(text)
        assert list(data) == [
            "balance",
            "coefficients",
            "config",
            "full",
            "input",
            "records",
            "software",
        ]
        assert data["software"] == {"name": "obsbias", "version": "1.0.0"}
        assert data["input"]["n_rows"] == 5735
        assert data["full"]["oce"] is None
        assert data["records"][0]["ucl"] == pytest.approx(1.37 / 1.11, abs=1e-8)
        assert text.endswith("}\n")

    def test_timing_only_on_request(self, tmp_path, full_record, sample_records):
        """Test wall time is written only with include_timing."""
        run = artifact(full_record, sample_records, wall_time=2.0)
        write_results(run, tmp_path / "plain.json")
        write_results(run, tmp_path / "timed.json", include_timing=True)
        assert "wall_time_seconds" not in json.loads((tmp_path / "plain.json").read_text())
        timed = json.loads((tmp_path / "timed.json").read_text())
        assert timed["wall_time_seconds"] == 2.0

    def test_records_csv(self, tmp_path, full_record, sample_records):
        """Test the records CSV starts with the full row."""
        csv_path = write_results(artifact(full_record, sample_records), tmp_path / "r.json")
        lines = csv_path.read_text().splitlines()
        assert lines[0] == "label,kind,estimate,lcl,ucl,oce"
        assert lines[1] == "Full model,full,1.24,1.11,1.37,"
        assert lines[3] == "dnr1,covariate,1.12,1.0,1.23,1.359"
        assert len(lines) == len(sample_records) + 2

    def test_read_results_round_trip(self, tmp_path, full_record, sample_records):
        """Test a results file reads back into an equal artifact."""
        path = tmp_path / "run.json"
        write_results(artifact(full_record, sample_records), path)
        loaded = read_results(path)
        assert loaded.full == full_record
        assert [r.label for r in loaded.records] == [r.label for r in sample_records]
        assert loaded.records[1] == sample_records[1]
        assert loaded.balance[0].covariate == "dnr1"
        assert loaded.config.covariates == ["dnr1", "age"]
        assert loaded.input_digest == "ab" * 32

    def test_coefficients_round_trip(self, tmp_path, full_record, sample_records):
        """Test the outcome-model coefficient table is written and read back."""
        table = [
            CoefficientRecord("exposure", 1.24, 1.11, 1.37),
            CoefficientRecord("dnr1=Yes", 1.9, 1.7, 2.1),
        ]
        path = tmp_path / "run.json"
        write_results(artifact(full_record, sample_records, coefficients=table), path)
        assert json.loads(path.read_text())["coefficients"][1] == {
            "hr": 1.9,
            "lcl": 1.7,
            "term": "dnr1=Yes",
            "ucl": 2.1,
        }
        assert read_results(path).coefficients == table

    def test_coefficients_optional_on_read(self, tmp_path, full_record, write_json):
        """Test results without a coefficient table read back with an empty one."""
        data = artifact(full_record, []).to_dict()
        del data["coefficients"]
        assert read_results(write_json("old.json", data)).coefficients == []

    def test_read_records(self, tmp_path, full_record, sample_records):
        """Test the records CSV reads back, failed rows included."""
        failed = ObservedBiasRecord.failed("age", KIND_COVARIATE, "boom", ("age",))
        csv_path = write_results(
            artifact(full_record, sample_records[:2] + [failed]), tmp_path / "r.json"
        )
        records = read_records(csv_path)
        assert records[0] == full_record
        assert records[2].label == "dnr1"
        assert records[2].oce == 1.359
        assert not records[3].ok

    def test_failed_record_in_json(self, tmp_path, full_record):
        """Test failed records are written with null numbers and their error."""
        failed = ObservedBiasRecord.failed("age", KIND_COVARIATE, "[outcome] boom")
        path = tmp_path / "run.json"
        write_results(artifact(full_record, [failed]), path)
        record = json.loads(path.read_text())["records"][0]
        assert record["estimate"] is None
        assert record["error"] == "[outcome] boom"
        assert not read_results(path).records[0].ok

    def test_malformed_results(self, write_json):
        """Test a results file missing sections is rejected."""
        with pytest.raises(SchemaError, match="Malformed results document"):
            read_results(write_json("run.json", {"records": []}))

    def test_records_header_checked(self, write_text):
        """Test a CSV with the wrong header is rejected."""
        with pytest.raises(ParseError, match="Expected header"):
            read_records(write_text("r.csv", "a,b\n1,2\n"))

    def test_unwritable_path(self, tmp_path, full_record):
        """Test write failures name the path."""
        blocker = tmp_path / "file"
        blocker.write_text("x")
        with pytest.raises(OSError, match="Cannot write results"):
            write_results(artifact(full_record, []), blocker / "run.json")
