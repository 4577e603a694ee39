import numpy as np
import pytest

from actirep.errors import DuplicateParticipant, EmptyFile, MalformedRow, NonMonotoneTimestamp, OutOfRangeScore
from actirep.ingest import RawRecording, SurveyRecord, parse_raw_csv, parse_survey_csv, write_raw_csv, write_survey_csv
from actirep.simulate import CohortSpec, raw_recording, simulate_participant


def write(path, text):
    path.write_text(text, encoding="utf-8")
    return path


def test_minimal_raw_file(tmp_path):
    rec = parse_raw_csv(write(tmp_path / "p1.csv", "timestamp_ms,x,y,z\n0,0,0,0\n33,0,0,0\n"))
    assert len(rec) == 2
    assert rec.participant_id == "p1"
    assert rec.timestamps.tolist() == [0, 33]


def test_non_monotone_rejected(tmp_path):
    with pytest.raises(NonMonotoneTimestamp):
        parse_raw_csv(write(tmp_path / "p.csv", "timestamp_ms,x,y,z\n33,0,0,0\n0,0,0,0\n"))


def test_duplicate_timestamp_rejected(tmp_path):
    with pytest.raises(NonMonotoneTimestamp):
        parse_raw_csv(write(tmp_path / "p.csv", "timestamp_ms,x,y,z\n0,0,0,0\n0,0,0,1\n"))


@pytest.mark.parametrize(
    "body,line",
    [
        ("0,0,0\n", 2),
        ("0,0,0,0\n33,a,0,0\n", 3),
        ("0,0,0,nan\n", 2),
        ("1.5,0,0,0\n", 2),
    ],
)
def test_malformed_row_reports_line(tmp_path, body, line):
    with pytest.raises(MalformedRow) as info:
        parse_raw_csv(write(tmp_path / "p.csv", "timestamp_ms,x,y,z\n" + body))
    assert info.value.line == line


def test_bad_header(tmp_path):
    with pytest.raises(MalformedRow):
        parse_raw_csv(write(tmp_path / "p.csv", "t,x,y,z\n0,0,0,0\n"))


@pytest.mark.parametrize("text", ["", "timestamp_ms,x,y,z\n"])
def test_empty_file(tmp_path, text):
    with pytest.raises(EmptyFile):
        parse_raw_csv(write(tmp_path / "p.csv", text))


def test_simulator_output_round_trips(tmp_path):
    spec = CohortSpec(n_participants=2, days=1, seed=3)
    rec = raw_recording(spec, simulate_participant(spec, 0))
    rec = RawRecording(rec.participant_id, rec.timestamps[:1000], rec.xyz[:1000])
    path = tmp_path / f"{rec.participant_id}.csv"
    write_raw_csv(rec, path)
    assert parse_raw_csv(path) == rec


def test_random_recording_round_trips_exactly(tmp_path):
    rng = np.random.default_rng(0)
    ts = np.cumsum(rng.integers(1, 100, 500))
    rec = RawRecording("abc", ts, rng.standard_normal((500, 3)) * 10 ** rng.uniform(-8, 3, (500, 1)))
    path = tmp_path / "abc.csv"
    write_raw_csv(rec, path)
    back = parse_raw_csv(path)
    assert back == rec
    assert back.xyz.tobytes() == rec.xyz.tobytes()


SURVEY_HEADER = "participant_id,pcl5,prom_dep8b,panic_sleep,sf12\n"


def test_survey_rows(tmp_path):
    recs = parse_survey_csv(write(tmp_path / "s.csv", SURVEY_HEADER + "p1,29,61,1,48\np2,,,,\n"))
    assert recs[0] == SurveyRecord("p1", 29, 61.0, 1, 48.0)
    assert recs[1] == SurveyRecord("p2")


@pytest.mark.parametrize("row", ["p3,85,,,", "p3,,,4,", "p3,-1,,,"])
def test_survey_out_of_range(tmp_path, row):
    with pytest.raises(OutOfRangeScore):
        parse_survey_csv(write(tmp_path / "s.csv", SURVEY_HEADER + row + "\n"))


def test_survey_duplicate(tmp_path):
    with pytest.raises(DuplicateParticipant):
        parse_survey_csv(write(tmp_path / "s.csv", SURVEY_HEADER + "p1,1,,,\np1,2,,,\n"))


def test_survey_non_integer_score(tmp_path):
    with pytest.raises(MalformedRow):
        parse_survey_csv(write(tmp_path / "s.csv", SURVEY_HEADER + "p1,2.5,,,\n"))


def test_survey_round_trip(tmp_path):
    recs = [SurveyRecord("a", 0, 59.9, 0, 51.25), SurveyRecord("b", 80, None, 3, None), SurveyRecord("c")]
    write_survey_csv(recs, tmp_path / "s.csv")
    assert parse_survey_csv(tmp_path / "s.csv") == recs


def test_record_invariants():
    with pytest.raises(NonMonotoneTimestamp):
        RawRecording("p", [0, 0], np.zeros((2, 3)))
    with pytest.raises(ValueError):
        RawRecording("p", [0, 1], np.array([[0, 0, np.inf], [0, 0, 0]]))
    with pytest.raises(ValueError):
        RawRecording("p", [0], np.zeros((1, 3)), nominal_rate_hz=0)
