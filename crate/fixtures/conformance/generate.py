"""Regenerates the parser conformance corpus.

Expected values are computed here from Python's own literal evaluation,
independently of the Rust parsers.
"""
import ast
import json
import random

rng = random.Random(7)

LABELS = ["OK button", "Save", "search box at the top", "File menu", "It's here", "Téléchargements",
          'the "Submit" link', "row 3, column 2", "back arrow (left)", "Close tab"]
KEYS = [["ctrl", "c"], ["ctrl", "shift", "t"], ["alt", "tab"], ["enter"], ["cmd", "space"]]


def lit(v):
    return repr(v)


def click_case():
    d = rng.choice(LABELS)
    n = rng.choice([1, 1, 2, 3])
    b = rng.choice(["left", "right", "middle"])
    h = rng.choice([[], ["ctrl"], ["shift", "alt"]])
    style = rng.randrange(4)
    if style == 0:
        src = f"agent.click({lit(d)})"
        n, b, h = 1, "left", []
    elif style == 1:
        src = f"agent.click({lit(d)}, {n}, {lit(b)})"
        h = []
    elif style == 2:
        src = f"agent.click({lit(d)}, {n}, {lit(b)}, {lit(h)})"
    else:
        src = f"agent.click(instruction={lit(d)}, button_type={lit(b)}, num_clicks={n}, hold_keys={lit(h)})"
    return src, {"route": "grounded", "target": {"kind": "click", "description": d, "count": n, "button": b, "hold_keys": h}}


def type_case():
    text = rng.choice(["hello", "multi\nline", "quote ' mark", "", "42"])
    ow, en = rng.choice([True, False]), rng.choice([True, False])
    if rng.random() < 0.5:
        d = rng.choice(LABELS)
        src = f"agent.type({lit(d)}, {lit(text)}, {ow}, {en})"
        return src, {"route": "grounded", "target": {"kind": "type", "description": d, "text": text, "overwrite": ow, "enter": en}}
    src = f"agent.type(text={lit(text)}, enter={en}, overwrite={ow})"
    return src, {"route": "direct", "action": {"kind": "type", "at": None, "text": text, "overwrite": ow, "enter": en}}


def scroll_case():
    d, c, s = rng.choice(LABELS), rng.choice([-5, -1, 1, 3, 10]), rng.choice([True, False])
    src = f"agent.scroll({lit(d)}, {c}, {s})" if rng.random() < 0.5 else f"agent.scroll({lit(d)}, clicks={c}, shift={s})"
    return src, {"route": "grounded", "target": {"kind": "scroll", "description": d, "clicks": c, "shift": s}}


def drag_case():
    a, b = rng.sample(LABELS, 2)
    h = rng.choice([[], ["shift"]])
    return f"agent.drag_and_drop({lit(a)}, {lit(b)}, {lit(h)})", {
        "route": "grounded", "target": {"kind": "drag", "start": a, "end": b, "hold_keys": h}}


def hotkey_case():
    k = rng.choice(KEYS)
    return f"agent.hotkey({lit(k)})", {"route": "direct", "action": {"kind": "hotkey", "keys": k}}


def hold_case():
    h, p = rng.choice([["shift"], ["ctrl", "alt"]]), rng.choice([["a"], ["tab", "tab"]])
    return f"agent.hold_and_press({lit(h)}, {lit(p)})", {"route": "direct", "action": {"kind": "hotkey", "keys": h + p}}


def open_case():
    n = rng.choice(["Notes", "report.xlsx", "Firefox"])
    return f"agent.open({lit(n)})", {"route": "direct", "action": {"kind": "open", "name": n}}


def wait_case():
    t = rng.choice([0, 1, 2.5, 0.25, 10])
    return f"agent.wait({t})", {"route": "direct", "action": {"kind": "wait", "seconds": float(t)}}


def done_case():
    return rng.choice(["agent.done()", "agent.done('finished')"]), {"route": "direct", "action": {"kind": "done"}}


def fail_case():
    return "agent.fail()", {"route": "direct", "action": {"kind": "fail"}}


def value_json(v):
    if isinstance(v, dict):
        return [[value_json(k), value_json(x)] for k, x in v.items()]
    if isinstance(v, list):
        return [value_json(x) for x in v]
    return v


unsupported_seen = 0


def unsupported_case():
    global unsupported_seen
    kind = unsupported_seen % 3
    unsupported_seen += 1
    if kind == 0:
        args = [("starting_phrase", "Hello"), ("ending_phrase", "world")]
        name = "highlight_text_span"
    elif kind == 1:
        args = [("cell_values", {"A1": 3, "B2": "x", "C3": 1.5}), ("app_name", "Calc"), ("sheet_name", "Sheet1")]
        name = "set_cell_values"
    else:
        args = [("app_code", "Mail")]
        name = "switch_applications"
    src = f"agent.{name}({', '.join(lit(v) for _, v in args)})"
    return src, {"route": "unsupported", "name": name, "args": [[k, value_json(v)] for k, v in args]}


def wrap(src):
    style = rng.randrange(4)
    if style == 0:
        return src
    if style == 1:
        return f"```python\n{src}\n```"
    if style == 2:
        return f"Observation: the dialog is open.\nThought: proceed.\nAction:\n```python\n{src}\n```"
    return f"  {src}  "


makers = [click_case, type_case, scroll_case, drag_case, hotkey_case, hold_case, open_case, wait_case, done_case,
          fail_case, unsupported_case]
actions_ok = []
for i in range(66):
    src, expect = makers[i % len(makers)]()
    # the source must be a Python call whose arguments are plain literals
    call = ast.parse(src, mode="eval").body
    assert isinstance(call, ast.Call)
    for node in list(call.args) + [k.value for k in call.keywords]:
        ast.literal_eval(node)
    actions_ok.append({"input": wrap(src), "expect": expect})

actions_bad = [
    ("", "no_action_line"), ("I will click the button.", "no_action_line"), ("click('OK')", "no_action_line"),
    ("agent.done()\nagent.fail()", "multiple_action_lines"), ("```python\nagent.wait(1)\nagent.wait(2)\n```", "multiple_action_lines"),
    ("agent.tap('OK')", "unknown_action"), ("agent.click_twice('OK')", "unknown_action"), ("agent.Type('a')", "unknown_action"),
    ("agent.click(", "syntax"), ("agent.click('OK'", "syntax"), ("agent.click('OK)", "syntax"), ("agent.click('OK' 1)", "syntax"),
    ("agent.hotkey(['ctrl', 'c')", "syntax"), ("agent.click(OK)", "syntax"), ("agent.wait(1,,)", "syntax"),
    ("agent.done() extra", "syntax"), ("agent.click('a', x=)", "syntax"), ("agent.open(\"x')", "syntax"),
    ("agent.click()", "arguments"), ("agent.click('')", "arguments"), ("agent.click(1)", "arguments"),
    ("agent.click('a', 0)", "arguments"), ("agent.click('a', 1, 'top')", "arguments"), ("agent.click('a', 1, 'left', 'ctrl')", "arguments"),
    ("agent.click('a', 1, 'left', [], 5)", "arguments"), ("agent.click('a', instruction='b')", "arguments"),
    ("agent.click(x='a')", "arguments"), ("agent.scroll('a')", "arguments"), ("agent.scroll('a', 2.5)", "arguments"),
    ("agent.drag_and_drop('a')", "arguments"), ("agent.hotkey([])", "arguments"), ("agent.hotkey('ctrl')", "arguments"),
    ("agent.hotkey([1, 2])", "arguments"), ("agent.wait(-1)", "arguments"), ("agent.wait('soon')", "arguments"),
    ("agent.fail(1)", "arguments"), ("agent.open()", "arguments"), ("agent.type('a', text=None)", "arguments"),
    ("agent.type('a', 'b', 'yes')", "arguments"), ("agent.hold_and_press(['shift'])", "arguments"),
    ("agent.switch_applications()", "arguments"), ("agent.set_cell_values({'A1': 1}, 'Calc')", "arguments"),
    ("agent.highlight_text_span('a')", "arguments"), ("agent.click('a', num_clicks=True)", "arguments"),
    ("agent.click('a', 1, button_type=None)", "arguments"), ("agent.done(1, 2)", "arguments"),
    ("agent.scroll('a', 1, shift='no')", "arguments"), ("agent.drag_and_drop('a', 'b', 'shift')", "arguments"),
    ("agent.wait()", "arguments"), ("agent.open(['x'])", "arguments"),
]

coords_ok = []
for i in range(60):
    x, y = rng.choice([rng.randint(0, 1920), round(rng.uniform(0, 1920), rng.choice([1, 2]))]), \
        rng.choice([rng.randint(0, 1080), round(rng.uniform(0, 1080), 1)])
    fmt = rng.choice(["({},{})", "({}, {})", "( {} , {} )", "  ({},{})\n", "```\n({}, {})\n```"])
    if fmt.startswith("```"):
        fmt = "({}, {})"
    coords_ok.append({"input": fmt.format(x, y), "expect": [float(x), float(y)]})
coords_ok.append({"input": "(0,0)", "expect": [0.0, 0.0]})
coords_ok.append({"input": "(1920,1080)", "expect": [1920.0, 1080.0]})
coords_ok.append({"input": "(.5, 7.)".replace("7.", "7"), "expect": [0.5, 7.0]})

coords_bad = [
    ("", "no_pattern"), ("512, 384", "no_pattern"), ("x=512 y=384", "no_pattern"), ("[512, 384]", "no_pattern"),
    ("(512)", "no_pattern"), ("I cannot find that element.", "no_pattern"), ("{512, 384}", "no_pattern"),
    ("(512 384)", "no_pattern"), ("512;384", "no_pattern"), ("(512,384,1)", "no_pattern"),
    ("(1,2) (3,4)", "multiple_pairs"), ("(1,2)\n(3,4)", "multiple_pairs"), ("(1,2),(3,4),(5,6)", "multiple_pairs"),
    ("start (10,20) end (30,40)", "multiple_pairs"), ("(0,0)(0,0)", "multiple_pairs"),
    ("(a,b)", "non_numeric"), ("(512,)", "non_numeric"), ("(,384)", "non_numeric"), ("(1e3,2)", "non_numeric"),
    ("(512px,384px)", "non_numeric"), ("(0x10,5)", "non_numeric"), ("(5,NaN)", "non_numeric"), ("(inf,1)", "non_numeric"),
    ("(1.2.3,4)", "non_numeric"), ("(12 34,5)", "non_numeric"), ("(--1,2)", "non_numeric"), ("( , )", "non_numeric"),
    ("The point is (512,384)", "extraneous_text"), ("(512,384).", "extraneous_text"), ("Answer: (1, 2)", "extraneous_text"),
    ("(1,2) is the centre", "extraneous_text"), ("click at (3,4) please", "extraneous_text"),
    ("```(1,2)```", "extraneous_text"), ("-> (7,8)", "extraneous_text"), ("(7,8) <-", "extraneous_text"),
    ("(-1,5)", "out_of_bounds"), ("(5,-1)", "out_of_bounds"), ("(1921,5)", "out_of_bounds"), ("(5,1081)", "out_of_bounds"),
    ("(1920.5,0)", "out_of_bounds"), ("(99999,99999)", "out_of_bounds"), ("(-0.1,-0.1)", "out_of_bounds"),
    ("(0,1080.01)", "out_of_bounds"), ("(3000,10)", "out_of_bounds"), ("(10,3000)", "out_of_bounds"),
    ("(-5,-5)", "out_of_bounds"), ("(1920.001,1)", "out_of_bounds"), ("(2000.0, 2000.0)", "out_of_bounds"),
    ("(+1921,1)", "out_of_bounds"), ("(1,-0.5)", "out_of_bounds"),
]

EXPLAIN = ["Candidate 2 opens the menu directly.", "All are similar; the first is safest.", "Uses the \"Save\" button",
           "Ünïcode reasoning ✓", "line one\nline two", "", "Picks {braces} and [brackets]"]
verdicts_ok = []
for i in range(60):
    n = rng.randint(2, 8)
    idx = rng.randrange(n)
    ex = rng.choice(EXPLAIN)
    body = {"explaining": ex, "index": idx} if rng.random() < 0.5 else {"index": idx, "explaining": ex}
    text = json.dumps(body, ensure_ascii=rng.random() < 0.5, indent=rng.choice([None, 2]))
    style = rng.randrange(3)
    if style == 1:
        text = f"```json\n{text}\n```"
    elif style == 2:
        text = f"\n  {text}\n"
    verdicts_ok.append({"input": text, "candidates": n, "expect": {"explaining": ex, "index": idx}})

verdicts_bad = [
    ("", "not_json"), ("index 2", "not_json"), ("{'explaining': 'x', 'index': 1}", "not_json"),
    ('{"explaining": "x", "index": 1', "not_json"), ('I pick {"explaining": "x", "index": 1}', "not_json"),
    ('{"explaining": "x", "index": 1} done', "not_json"), ("```json\n{\"index\": \n```", "not_json"),
    ('{"explaining": "x", index: 1}', "not_json"), ("NaN", "not_json"), ('{"explaining": "x",, "index": 1}', "not_json"),
    ("[0]", "not_object"), ("1", "not_object"), ('"index"', "not_object"), ("null", "not_object"), ("true", "not_object"),
    ('[{"explaining": "x", "index": 0}]', "not_object"),
    ("{}", "missing_key"), ('{"index": 1}', "missing_key"), ('{"explaining": "x"}', "missing_key"),
    ('{"explanation": "x", "index": 1}', "missing_key"), ('{"explaining": "x", "idx": 1}', "missing_key"),
    ('{"Explaining": "x", "Index": 1}', "missing_key"),
    ('{"explaining": "x", "index": 1, "confidence": 0.9}', "extra_key"), ('{"explaining": "x", "index": 1, "": 0}', "extra_key"),
    ('{"explaining": "x", "index": 1, "index2": 1}', "extra_key"), ('{"explaining": "x", "index": 1, "note": null}', "extra_key"),
    ('{"explaining": 3, "index": 1}', "wrong_type"), ('{"explaining": "x", "index": "1"}', "wrong_type"),
    ('{"explaining": "x", "index": 1.0}', "wrong_type"), ('{"explaining": "x", "index": 1.5}', "wrong_type"),
    ('{"explaining": null, "index": 1}', "wrong_type"), ('{"explaining": "x", "index": null}', "wrong_type"),
    ('{"explaining": "x", "index": true}', "wrong_type"), ('{"explaining": ["x"], "index": 1}', "wrong_type"),
    ('{"explaining": "x", "index": [1]}', "wrong_type"), ('{"explaining": {"a": 1}, "index": 0}', "wrong_type"),
    ('{"explaining": "x", "index": 1e0}', "wrong_type"),
    ('{"explaining": "x", "index": 3}', "out_of_range"), ('{"explaining": "x", "index": -1}', "out_of_range"),
    ('{"explaining": "x", "index": 99}', "out_of_range"), ('{"explaining": "x", "index": 4}', "out_of_range"),
    ('{"explaining": "x", "index": -100}', "out_of_range"), ('{"explaining": "x", "index": 1000000}', "out_of_range"),
    ('```json\n{"explaining": "x", "index": 5}\n```', "out_of_range"), ('{"index": 7, "explaining": "x"}', "out_of_range"),
    ('{"explaining": "x", "index": 3}', "out_of_range"), ('{"explaining": "", "index": -3}', "out_of_range"),
    ('{"explaining": "x", "index": 10}', "out_of_range"), ('{"explaining": "x", "index": 6}', "out_of_range"),
    ('{"explaining": "x", "index": 8}', "out_of_range"),
]


def write(name, ok, bad, extra=None):
    with open(name, "w") as f:
        for case in ok:
            f.write(json.dumps({"valid": True, **case}, ensure_ascii=False) + "\n")
        for text, err in bad:
            case = {"valid": False, "input": text, "error": err}
            if extra:
                case.update(extra)
            f.write(json.dumps(case, ensure_ascii=False) + "\n")


write("actions.jsonl", actions_ok, actions_bad)
write("coords.jsonl", coords_ok, coords_bad, {"resolution": {"width": 1920, "height": 1080}})
write("verdicts.jsonl", verdicts_ok, verdicts_bad, {"candidates": 3})
