#!/usr/bin/env python3
"""Regenerate tests/golden/judge_prompt.txt from the judge template and fixture values."""
import json
import pathlib
import re

root = pathlib.Path(__file__).resolve().parent.parent
template = (root / "templates" / "research_judge_prompt.txt").read_text(encoding="utf-8")
values = json.loads((root / "tests" / "golden" / "judge_fixture.json").read_text(encoding="utf-8"))

# One pass; substituted text is not rescanned.
rendered = re.sub(r"\{(instruction|checklist|report)\}", lambda m: values[m.group(1)], template)
(root / "tests" / "golden" / "judge_prompt.txt").write_text(rendered, encoding="utf-8", newline="")
