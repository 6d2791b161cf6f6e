from report import format_number, render_summary, write_summary


def test_format_number():
    assert format_number(None) == "-"
    assert format_number("") == "-"
    assert format_number(0.123456789) == "0.1235"
    assert format_number(7) == "7"


def test_summary_table_uses_union_of_columns(tmp_path):
    rows = [{"method": "raw", "reward_mean": 0.5}, {"method": "lpdp", "reward_mean": 1.25, "jsd3": 0.01}]
    manifest = {"seed": 3, "cache_mode": "per-sample", "jsd_log_base": "e", "config_sha256": "ab", "tool_version": "x"}
    text = render_summary(rows, manifest, title="Demo")
    assert text.startswith("# Demo")
    assert "| method | reward_mean | jsd3 |" in text
    assert "| raw | 0.5 | - | " in text
    assert "JSD log base: e" in text

    path = write_summary(rows, {}, tmp_path)
    assert path.name == "summary.md"
    assert "seed" not in path.read_text()
