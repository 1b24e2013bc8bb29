import pytest

from gazecast.dataset import load_session, load_sessions
from gazecast.ehtask import import_ehtask
from gazecast.errors import DataError


def make_tree(root):
    d = root / "User_01"
    d.mkdir(parents=True)
    (d / "User_01_Video_03_Task_2.txt").write_text(
        "time hmd_x hmd_y eye_x eye_y\n"
        "0.00 10 5 12 4\n"
        "0.03 190 5 -170 4\n"
        "0.07 11 nan 12 4\n"
        "0.10 oops\n"
        "0.13 12 5 13 95\n"
        "0.17 12 6 13 6\n"
    )
    (d / "User_01_Video_04_Task_1.csv").write_text("0,1,2,3,4\n0,1,2,3,4\n")
    (d / "readme.txt").write_text("not a recording\n")


def test_import_tree(tmp_path):
    make_tree(tmp_path / "src")
    res = import_ehtask(tmp_path / "src", tmp_path / "out")
    assert sorted(res.sessions) == ["u01_v03_t2", "u01_v04_t1"]
    s = load_session(tmp_path / "out" / "u01_v03_t2.csv")
    assert s.T == 3
    assert s.hmd[1].tolist() == [-170.0, 5.0]
    assert s.gaze[2].tolist() == [13.0, 6.0]
    log = (tmp_path / "out" / "import.log").read_text()
    assert "rows_skipped\t3" in log
    assert ":4\tnon-finite" in log and ":5\t" in log and "elevation" in log
    assert len(load_sessions(tmp_path / "out")) == 2


def test_import_stride(tmp_path):
    make_tree(tmp_path / "src")
    import_ehtask(tmp_path / "src", tmp_path / "out", stride=2)
    assert load_session(tmp_path / "out" / "u01_v03_t2.csv").T == 2


def test_import_custom_columns(tmp_path):
    src = tmp_path / "src"
    src.mkdir()
    (src / "user1_video2_task3.txt").write_text("4 3 2 1 0\n5 3 2 1 0\n")
    import_ehtask(src, tmp_path / "out", columns={"hmd_az": 0, "hmd_el": 1, "gaze_az": 2, "gaze_el": 3})
    s = load_session(tmp_path / "out" / "u01_v02_t3.csv")
    assert s.hmd[1].tolist() == [5.0, 3.0] and s.gaze[0].tolist() == [2.0, 1.0]


def test_import_empty_dir(tmp_path):
    (tmp_path / "src").mkdir()
    with pytest.raises(DataError, match="User_01_Video_01_Task_1"):
        import_ehtask(tmp_path / "src", tmp_path / "out")


def test_import_missing_dir(tmp_path):
    with pytest.raises(DataError):
        import_ehtask(tmp_path / "nope", tmp_path / "out")
