import pytest

from orchsim.stext import (Block, DuplicateKeyError, StextError, dump_stext,
                           parse_stext)


def test_nested_blocks_and_scalars():
    root = parse_stext("""\
# a comment
top: 3
block:
  child: hello
  flag: true
  ratio: 0.5
  deeper:
    leaf: -2
""")
    assert root.get("top") == 3
    block = root.get("block")
    assert block.get("child") == "hello"
    assert block.get("flag") is True
    assert block.get("ratio") == 0.5
    assert block.get("deeper").get("leaf") == -2


def test_inline_map_and_list():
    root = parse_stext("res: { cpus: 2, mem_mb: 4096 }\nnames: [a, b, c]\nempty: []\n")
    assert root.get("res").get("cpus") == 2
    assert root.get("names") == ["a", "b", "c"]
    assert root.get("empty") == []


def test_values_keep_colons_and_comments_are_stripped():
    root = parse_stext('image: repo/web:2.1  # trailing comment\n')
    assert root.get("image") == "repo/web:2.1"


def test_quoted_strings_protect_specials():
    root = parse_stext('name: "has # hash"\nlist: ["a, b", plain]\n')
    assert root.get("name") == "has # hash"
    assert root.get("list") == ["a, b", "plain"]


def test_duplicate_keys_rejected_with_parent():
    with pytest.raises(DuplicateKeyError) as err:
        parse_stext("nodes:\n  a: 1\n  a: 2\n")
    assert err.value.key == "a"
    assert err.value.parent == "nodes"


def test_tabs_and_odd_indentation_rejected():
    with pytest.raises(StextError):
        parse_stext("a:\n\tb: 1\n")
    with pytest.raises(StextError):
        parse_stext("a:\n   b: 1\n")
    with pytest.raises(StextError):
        parse_stext("a:\n    b: 1\n")  # jumps two levels


def test_key_with_no_body_is_empty_block():
    root = parse_stext("outputs:\nother: 1\n")
    assert isinstance(root.get("outputs"), Block)
    assert len(root.get("outputs")) == 0


def test_line_numbers_tracked():
    root = parse_stext("a: 1\nb:\n  c: 2\n")
    assert root.line_of("a") == 1
    assert root.get("b").line_of("c") == 3


def test_dump_round_trip_including_quoting():
    data = {
        "title": "needs, quoting",
        "count": 7,
        "ratio": 0.25,
        "flag": False,
        "inline": {"cpus": 2, "label": "web:1"},
        "block": {"list": ["x", "y, z"], "nested": {"leaf": 1}},
    }
    text = dump_stext(data) + "\n"
    root = parse_stext(text)
    assert root.get("title") == "needs, quoting"
    assert root.get("count") == 7
    assert root.get("flag") is False
    assert root.get("inline").get("label") == "web:1"
    assert root.get("block").get("list") == ["x", "y, z"]
    assert root.get("block").get("nested").get("leaf") == 1
